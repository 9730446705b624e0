//! Matrix-free Krylov routines: restarted Arnoldi for the dominant eigenpair
//! and restarted GMRES for linear solves.

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(y: &mut [C64], alpha: C64, x: &[C64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Orthogonalize `w` against `basis` twice (classical Gram-Schmidt with
/// reorthogonalization); returns the accumulated projection coefficients.
fn orthogonalize(w: &mut [C64], basis: &[Vec<C64>]) -> Vec<C64> {
    let mut h = vec![C64::new(0.0, 0.0); basis.len()];
    for _ in 0..2 {
        for (j, v) in basis.iter().enumerate() {
            let c = dot(v, w);
            axpy(w, -c, v);
            h[j] += c;
        }
    }
    h
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub value: C64,
    pub vector: Vec<C64>,
    pub residual: f64,
    pub matvecs: usize,
}

/// Dominant (largest-modulus) eigenpair of a linear map by restarted Arnoldi.
///
/// Converged when `‖A v − θ v‖ ≤ tol · |θ|` with `‖v‖ = 1`.
pub fn dominant_eigenpair<F>(
    mut apply: F,
    x0: Vec<C64>,
    tol: f64,
    max_matvecs: usize,
    krylov_dim: usize,
) -> Result<Eigenpair>
where
    F: FnMut(&[C64]) -> Vec<C64>,
{
    let n = x0.len();
    let m_max = krylov_dim.clamp(1, n.max(1));
    let mut x = x0;
    let mut matvecs = 0usize;
    let mut last_residual;

    loop {
        let nx = norm(&x);
        if nx == 0.0 {
            return Err(Error::InvalidArgument("zero start vector".into()));
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let mut basis: Vec<Vec<C64>> = vec![x.clone()];
        let mut hess = Mat::<C64>::zeros(m_max + 1, m_max);
        let mut m = 0;
        while m < m_max {
            let mut w = apply(&basis[m]);
            matvecs += 1;
            let h = orthogonalize(&mut w, &basis);
            for (i, hi) in h.into_iter().enumerate() {
                hess[(i, m)] = hi;
            }
            let beta = norm(&w);
            hess[(m + 1, m)] = C64::new(beta, 0.0);
            m += 1;
            let scale = (0..m).map(|i| hess[(i, m - 1)].norm()).fold(0.0, f64::max);
            if beta <= 1e-14 * scale.max(1e-300) || m == n {
                break;
            }
            w.iter_mut().for_each(|v| *v /= beta);
            basis.push(w);
        }

        let small = Mat::from_fn(m, m, |i, j| hess[(i, j)]);
        let evd = small
            .eigen()
            .map_err(|e| Error::Backend(format!("eigen: {e:?}")))?;
        let vals: Vec<C64> = evd.S().column_vector().iter().copied().collect();
        let best = (0..m)
            .max_by(|&a, &b| {
                let (ma, mb) = (vals[a].norm(), vals[b].norm());
                if (ma - mb).abs() <= 1e-12 * ma.max(mb) {
                    vals[a].re.partial_cmp(&vals[b].re).unwrap()
                } else {
                    ma.partial_cmp(&mb).unwrap()
                }
            })
            .unwrap();
        let theta = vals[best];
        let mut y = vec![C64::new(0.0, 0.0); n];
        for j in 0..m {
            axpy(&mut y, evd.U()[(j, best)], &basis[j]);
        }
        let ny = norm(&y);
        y.iter_mut().for_each(|v| *v /= ny);

        let ay = apply(&y);
        matvecs += 1;
        let residual = ay
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - theta * b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        last_residual = residual;
        if residual <= tol * theta.norm().max(1e-300) || theta.norm() == 0.0 && residual == 0.0 {
            return Ok(Eigenpair {
                value: theta,
                vector: y,
                residual,
                matvecs,
            });
        }
        if matvecs >= max_matvecs {
            return Err(Error::NonConvergence {
                what: "dominant eigenpair",
                iterations: matvecs,
                residual: last_residual,
            });
        }
        x = y;
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<C64>,
    pub relative_residual: f64,
    pub iterations: usize,
}

/// Restarted GMRES for `A x = b`. Stops once `‖b − A x‖ ≤ tol · ‖b‖`.
pub fn gmres<F>(
    mut apply: F,
    b: &[C64],
    x0: Option<Vec<C64>>,
    tol: f64,
    max_iter: usize,
    restart: usize,
) -> Result<GmresOutcome>
where
    F: FnMut(&[C64]) -> Vec<C64>,
{
    let n = b.len();
    let bnorm = norm(b);
    let mut x = x0.unwrap_or_else(|| vec![C64::new(0.0, 0.0); n]);
    if bnorm == 0.0 {
        return Ok(GmresOutcome {
            x: vec![C64::new(0.0, 0.0); n],
            relative_residual: 0.0,
            iterations: 0,
        });
    }
    let m = restart.clamp(1, n.max(1));
    let mut iterations = 0usize;

    loop {
        let ax = apply(&x);
        let mut r: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        let rel = beta / bnorm;
        if rel <= tol {
            return Ok(GmresOutcome {
                x,
                relative_residual: rel,
                iterations,
            });
        }
        if iterations >= max_iter {
            return Err(Error::NonConvergence {
                what: "GMRES",
                iterations,
                residual: rel,
            });
        }
        r.iter_mut().for_each(|v| *v /= beta);
        let mut basis = vec![r];
        let mut h = Mat::<C64>::zeros(m + 1, m);
        let mut cs = vec![C64::new(0.0, 0.0); m];
        let mut sn = vec![C64::new(0.0, 0.0); m];
        let mut g = vec![C64::new(0.0, 0.0); m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k = 0;
        while k < m && iterations < max_iter {
            let mut w = apply(&basis[k]);
            iterations += 1;
            let coeffs = orthogonalize(&mut w, &basis);
            for (i, c) in coeffs.into_iter().enumerate() {
                h[(i, k)] = c;
            }
            let wn = norm(&w);
            h[(k + 1, k)] = C64::new(wn, 0.0);
            // apply previous rotations to the new column
            for i in 0..k {
                let t = cs[i].conj() * h[(i, k)] + sn[i].conj() * h[(i + 1, k)];
                h[(i + 1, k)] = -sn[i] * h[(i, k)] + cs[i] * h[(i + 1, k)];
                h[(i, k)] = t;
            }
            let a = h[(k, k)];
            let bb = h[(k + 1, k)];
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if den == 0.0 {
                cs[k] = C64::new(1.0, 0.0);
                sn[k] = C64::new(0.0, 0.0);
            } else {
                cs[k] = a / den;
                sn[k] = bb / den;
            }
            h[(k, k)] = cs[k].conj() * a + sn[k].conj() * bb;
            h[(k + 1, k)] = C64::new(0.0, 0.0);
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            k += 1;
            let est = g[k].norm() / bnorm;
            if est <= tol * 0.5 || wn <= 1e-300 {
                break;
            }
            w.iter_mut().for_each(|v| *v /= wn);
            basis.push(w);
        }
        // back substitution
        let mut y = vec![C64::new(0.0, 0.0); k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in i + 1..k {
                acc -= h[(i, j)] * y[j];
            }
            y[i] = acc / h[(i, i)];
        }
        for (j, yj) in y.iter().enumerate() {
            axpy(&mut x, *yj, &basis[j]);
        }
    }
}
