//! Semi-infinite boundary environments.
//!
//! Channel indices follow the MPO. On the left, channel `c−1` is the identity,
//! the middle channels are single transfer applications (`S̃_L` for the
//! Heisenberg layout), and channel `0` is the effective Hamiltonian `H̃_L`.
//! On the right the roles of `0` and `c−1` swap.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::imps::{transfer_apply, transfer_identity, InfiniteMps, Side};
use crate::krylov;
use crate::mpo::Mpo;
use crate::tensor::DenseTensor;

pub const SOLVE_TOL: f64 = 1e-10;
pub const SOLVE_MAX_ITER: usize = 5000;
const GMRES_RESTART: usize = 40;

#[derive(Clone, Debug)]
pub struct BoundaryEnvironment {
    components: Vec<DenseTensor>,
    e0: f64,
    side: Side,
    chi: usize,
}

impl BoundaryEnvironment {
    pub fn components(&self) -> &[DenseTensor] {
        &self.components
    }

    pub fn channel(&self, k: usize) -> &DenseTensor {
        &self.components[k]
    }

    pub fn e0(&self) -> f64 {
        self.e0
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn chi(&self) -> usize {
        self.chi
    }

    pub fn n_channels(&self) -> usize {
        self.components.len()
    }

    fn identity_index(&self) -> usize {
        match self.side {
            Side::Left => self.components.len() - 1,
            Side::Right => 0,
        }
    }

    fn hamiltonian_index(&self) -> usize {
        match self.side {
            Side::Left => 0,
            Side::Right => self.components.len() - 1,
        }
    }

    pub fn identity(&self) -> &DenseTensor {
        &self.components[self.identity_index()]
    }

    /// `H̃_L` or `H̃_R`.
    pub fn hamiltonian(&self) -> &DenseTensor {
        &self.components[self.hamiltonian_index()]
    }

    /// The channels that couple the exterior to the first window site.
    pub fn coupling_channels(&self) -> std::ops::Range<usize> {
        1..self.components.len() - 1
    }
}

#[derive(Clone, Debug)]
pub struct EffectiveCouplings {
    pub s_tilde: [DenseTensor; 3],
}

/// `tr(ρ C)`; fails when the imaginary part exceeds 1e-8.
pub fn energy_per_site(rho: &DenseTensor, c: &DenseTensor) -> Result<f64> {
    let r = rho.as_matrix()?;
    let m = c.as_matrix()?;
    if r.nrows() != m.ncols() || r.ncols() != m.nrows() {
        return Err(Error::DimensionMismatch("tr(ρC) shapes".into()));
    }
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..r.nrows() {
        for j in 0..r.ncols() {
            acc += r[(i, j)] * m[(j, i)];
        }
    }
    if acc.im.abs() > 1e-8 {
        return Err(Error::NumericalInconsistency(format!(
            "energy per site has imaginary part {:.3e}",
            acc.im
        )));
    }
    Ok(acc.re)
}

fn trace_with(rho: &DenseTensor, x: &DenseTensor) -> C64 {
    let r = rho.as_matrix().unwrap();
    let m = x.as_matrix().unwrap();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..r.nrows() {
        for j in 0..r.ncols() {
            acc += r[(i, j)] * m[(j, i)];
        }
    }
    acc
}

/// Solve `(I − T)(X) = rhs − tr(ρ rhs)·I` with `tr(ρ X) = 0`.
///
/// GMRES runs on the regularized operator `X ↦ X − T(X) + tr(ρX)·I`, which is
/// invertible once the unit eigenvalue of `T` is isolated. If GMRES stalls the
/// deflated geometric series `Σ_k T̃^k(rhs)` is summed instead.
pub fn solve_deflated<F>(transfer: F, rhs: &DenseTensor, rho: &DenseTensor, tol: f64) -> Result<DenseTensor>
where
    F: Fn(&DenseTensor) -> Result<DenseTensor>,
{
    let chi = rhs.dims()[0];
    let id = DenseTensor::identity("b", "k", chi);
    let shift = trace_with(rho, rhs);
    let b = rhs.axpy(-shift, &id)?;
    let labels = b.labels().to_vec();
    let dims = b.dims().to_vec();
    let wrap = |v: &[C64]| DenseTensor::from_parts(labels.clone(), dims.clone(), v.to_vec()).unwrap();

    let mut failure = None;
    let apply = |v: &[C64]| {
        let x = wrap(v);
        let tx = match transfer(&x) {
            Ok(t) => t,
            Err(e) => {
                failure.get_or_insert(e);
                return vec![C64::new(0.0, 0.0); v.len()];
            }
        };
        let p = trace_with(rho, &x);
        x.sub(&tx).unwrap().axpy(p, &id).unwrap().into_data()
    };
    let attempt = krylov::gmres(apply, b.data(), Some(b.data().to_vec()), tol, SOLVE_MAX_ITER, GMRES_RESTART);
    if let Some(e) = failure {
        return Err(e);
    }
    let x = match attempt {
        Ok(out) => wrap(&out.x),
        Err(Error::NonConvergence { residual, .. }) => {
            log::warn!("GMRES stalled at residual {residual:.3e}; summing the geometric series");
            geometric_series(&transfer, &b, rho, tol, SOLVE_MAX_ITER)?
        }
        Err(e) => return Err(e),
    };
    let p = trace_with(rho, &x);
    x.axpy(-p, &id)
}

/// `Σ_{k<K} T̃^k(b)` with `T̃(X) = T(X) − tr(ρ T(X))·I`, stopped when the
/// last term falls below `tol·‖b‖`.
pub fn geometric_series<F>(transfer: &F, b: &DenseTensor, rho: &DenseTensor, tol: f64, max_terms: usize) -> Result<DenseTensor>
where
    F: Fn(&DenseTensor) -> Result<DenseTensor>,
{
    let id = DenseTensor::identity("b", "k", b.dims()[0]);
    let scale = b.norm().max(1e-300);
    let mut term = b.clone();
    let mut sum = b.clone();
    for _ in 0..max_terms {
        let t = transfer(&term)?;
        let p = trace_with(rho, &t);
        term = t.axpy(-p, &id)?;
        sum = sum.add(&term)?;
        if term.norm() <= tol * scale {
            return Ok(sum);
        }
    }
    Err(Error::NonConvergence {
        what: "deflated geometric series",
        iterations: max_terms,
        residual: term.norm() / scale,
    })
}

/// Block operators of the semi-infinite half-chain on `side`.
pub fn compute_environment(psi: &InfiniteMps, mpo: &Mpo, side: Side, tol: f64) -> Result<BoundaryEnvironment> {
    if mpo.d() != psi.d() {
        return Err(Error::DimensionMismatch(format!(
            "MPO acts on d={}, state has d={}",
            mpo.d(),
            psi.d()
        )));
    }
    let c = mpo.bond_dim();
    for k in 1..c - 1 {
        if let Some(w) = mpo.get(k, k) {
            if w.max_abs() > 0.0 {
                return Err(Error::UnsupportedHamiltonian(format!(
                    "channel {k} has a nonzero diagonal entry"
                )));
            }
        }
    }
    let chi = psi.chi();
    let rho = psi.rho();
    let id = DenseTensor::identity("b", "k", chi);
    let mut comps: Vec<Option<DenseTensor>> = vec![None; c];

    let (tensor, top, bottom) = match side {
        Side::Left => (psi.a(), c - 1, 0),
        Side::Right => (psi.b(), 0, c - 1),
    };
    // W entry feeding channel `to` from channel `from`.
    let w_entry = |from: usize, to: usize| match side {
        Side::Left => mpo.get(from, to),
        Side::Right => mpo.get(to, from),
    };
    // channels ordered from the identity side towards the Hamiltonian side
    let order: Vec<usize> = match side {
        Side::Left => (0..c).rev().collect(),
        Side::Right => (0..c).collect(),
    };
    comps[top] = Some(id.clone());

    let source = |comps: &[Option<DenseTensor>], to: usize, done: &[usize]| -> Result<DenseTensor> {
        let mut acc = DenseTensor::zeros(&["b", "k"], &[chi, chi]);
        for &from in done {
            if let (Some(w), Some(e)) = (w_entry(from, to), &comps[from]) {
                acc = acc.add(&transfer_apply(e, &tensor, w, side)?)?;
            }
        }
        Ok(acc)
    };

    for (pos, &ch) in order.iter().enumerate().skip(1) {
        let done = &order[..pos];
        let src = source(&comps, ch, done)?;
        if ch != bottom {
            comps[ch] = Some(src);
            continue;
        }
        let e0 = energy_per_site(&rho, &src)?;
        let h = solve_deflated(|x| transfer_identity(x, &tensor, side), &src, &rho, tol)?;
        comps[ch] = Some(h);
        return Ok(BoundaryEnvironment {
            components: comps.into_iter().map(Option::unwrap).collect(),
            e0,
            side,
            chi,
        });
    }
    unreachable!("MPO bond dimension is at least 2")
}

/// `(S̃^x, S̃^y, S̃^z)` for the five-channel spin layout, Hermitized.
pub fn effective_couplings(env: &BoundaryEnvironment) -> Result<EffectiveCouplings> {
    if env.n_channels() != 5 {
        return Err(Error::Layout(format!(
            "expected 5 channels for the spin layout, got {}",
            env.n_channels()
        )));
    }
    let herm = |t: &DenseTensor| -> Result<DenseTensor> {
        t.add(&t.adjoint()?).map(|s| s.scale(C64::new(0.5, 0.0)))
    };
    Ok(EffectiveCouplings {
        s_tilde: [herm(env.channel(1))?, herm(env.channel(2))?, herm(env.channel(3))?],
    })
}
