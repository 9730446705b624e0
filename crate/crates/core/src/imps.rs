//! One-site translationally invariant iMPS `… λ Γ λ Γ λ …`.
//!
//! Site tensors carry labels `["l","p","r"]`. Bond matrices (environments,
//! fixed points) carry `["b","k"]`: the bra index first, the ket index second,
//! so `E = I` is the overlap of two identical half-chains.

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::krylov;
use crate::linalg::HermitianEigen;
use crate::tensor::{contract, matmul_owned, DenseTensor};

/// Schmidt values below this are dropped during canonicalization.
pub const LAMBDA_CUTOFF: f64 = 1e-12;
/// Residual tolerance for the canonical-form invariants.
pub const CANONICAL_TOL: f64 = 1e-8;
/// Fallback cutoff when the canonical residual cannot be met: Schmidt values
/// this small are lost in rounding once divided back out of `A` or `B`.
pub const RESOLVABLE_LAMBDA: f64 = 1e-6;
/// Matrix-vector cap for dominant fixed-point searches.
pub const FIXED_POINT_MAX_STEPS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug)]
pub struct SchmidtSpectrum {
    pub values: Vec<f64>,
    pub entanglement_entropy: f64,
}

impl SchmidtSpectrum {
    pub fn new(values: &[f64]) -> Self {
        let entanglement_entropy = values
            .iter()
            .filter(|&&l| l > 0.0)
            .map(|&l| -l * l * (l * l).ln())
            .sum();
        Self {
            values: values.to_vec(),
            entanglement_entropy,
        }
    }
}

#[derive(Clone, Debug)]
pub struct InfiniteMps {
    gamma: DenseTensor,
    lambda: Vec<f64>,
}

impl InfiniteMps {
    /// Wrap tensors that are already canonical; the residuals are checked.
    pub fn new(gamma: DenseTensor, lambda: Vec<f64>) -> Result<Self> {
        let psi = Self::new_unchecked(gamma, lambda)?;
        let (l, r) = psi.canonical_residuals()?;
        if l > CANONICAL_TOL || r > CANONICAL_TOL {
            return Err(Error::NumericalInconsistency(format!(
                "input is not canonical (residuals {l:.2e}, {r:.2e})"
            )));
        }
        Ok(psi)
    }

    /// Wrap without checking canonicality (only shapes).
    pub fn new_unchecked(gamma: DenseTensor, lambda: Vec<f64>) -> Result<Self> {
        check_site_tensor(&gamma)?;
        let chi = gamma.dim("l")?;
        if gamma.dim("r")? != chi || lambda.len() != chi {
            return Err(Error::DimensionMismatch(format!(
                "gamma {:?} with {} Schmidt values",
                gamma.dims(),
                lambda.len()
            )));
        }
        Ok(Self { gamma, lambda })
    }

    pub fn gamma(&self) -> &DenseTensor {
        &self.gamma
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn d(&self) -> usize {
        self.gamma.dims()[1]
    }

    pub fn chi(&self) -> usize {
        self.lambda.len()
    }

    /// `A = λΓ`, left-isometric.
    pub fn a(&self) -> DenseTensor {
        self.gamma.scale_axis("l", &self.lambda).unwrap()
    }

    /// `B = Γλ`, right-isometric.
    pub fn b(&self) -> DenseTensor {
        self.gamma.scale_axis("r", &self.lambda).unwrap()
    }

    /// `ρ = diag(λ²)` with bond labels.
    pub fn rho(&self) -> DenseTensor {
        let sq: Vec<f64> = self.lambda.iter().map(|l| l * l).collect();
        DenseTensor::diag("b", "k", &sq)
    }

    pub fn schmidt(&self) -> SchmidtSpectrum {
        SchmidtSpectrum::new(&self.lambda)
    }

    /// `(‖Σ A†A − I‖_max, ‖Σ BB† − I‖_max)`.
    pub fn canonical_residuals(&self) -> Result<(f64, f64)> {
        let id = DenseTensor::identity("b", "k", self.chi());
        let l = transfer_identity(&id, &self.a(), Side::Left)?.max_abs_diff(&id)?;
        let r = transfer_identity(&id, &self.b(), Side::Right)?.max_abs_diff(&id)?;
        Ok((l, r))
    }

    /// Single-site expectation value `⟨X⟩`.
    pub fn expectation(&self, x: &DenseTensor) -> Result<C64> {
        let id = DenseTensor::identity("b", "k", self.chi());
        let t = transfer_apply(&id, &self.a(), x, Side::Left)?;
        Ok((0..self.chi())
            .map(|i| t.get(&[i, i]) * self.lambda[i] * self.lambda[i])
            .sum())
    }
}

fn check_site_tensor(t: &DenseTensor) -> Result<()> {
    if t.labels() != ["l", "p", "r"] {
        return Err(Error::DimensionMismatch(format!(
            "site tensor must carry labels [l,p,r], got {:?}",
            t.labels()
        )));
    }
    Ok(())
}

/// `T_X(E)` with distinct bra and ket tensors and an optional local operator.
///
/// Left:  `E'[b',k'] = Σ X[s',s] conj(bra[b,s',b']) E[b,k] ket[k,s,k']`.
/// Right: `F'[b,k]   = Σ X[s',s] conj(bra[b,s',b']) F[b',k'] ket[k,s,k']`.
pub fn transfer_general(
    e: &DenseTensor,
    bra: &DenseTensor,
    ket: &DenseTensor,
    x: Option<&DenseTensor>,
    side: Side,
) -> Result<DenseTensor> {
    let bra = bra
        .conj()
        .relabel_all(&[("l", "bl"), ("p", "bp"), ("r", "br")])?;
    let (ket_bond, bra_bond, out) = match side {
        Side::Left => ("l", "bl", "br"),
        Side::Right => ("r", "br", "bl"),
    };
    let mut t = contract(e, ket, &[("k", ket_bond)])?;
    let phys = if let Some(x) = x {
        t = contract(x, &t, &[("i", "p")])?;
        "o"
    } else {
        "p"
    };
    let t = contract(&bra, &t, &[(bra_bond, "b"), ("bp", phys)])?;
    let free_ket = if side == Side::Left { "r" } else { "l" };
    t.relabel_all(&[(out, "b"), (free_ket, "k")])?.permute(&["b", "k"])
}

/// `T_X(E) = Σ_{s's} ⟨s'|X|s⟩ A^{s'†} E A^s` (left) or its mirror (right).
pub fn transfer_apply(e: &DenseTensor, a: &DenseTensor, x: &DenseTensor, side: Side) -> Result<DenseTensor> {
    transfer_general(e, a, a, Some(x), side)
}

pub fn transfer_identity(e: &DenseTensor, a: &DenseTensor, side: Side) -> Result<DenseTensor> {
    transfer_general(e, a, a, None, side)
}

fn as_vec(t: &DenseTensor) -> Vec<C64> {
    t.data().to_vec()
}

fn from_vec(v: Vec<C64>, chi: usize) -> DenseTensor {
    DenseTensor::new(&["b", "k"], &[chi, chi], v).unwrap()
}

/// Dominant eigenvalue and eigenmatrix of the identity transfer operator.
///
/// The eigenmatrix is phase-fixed to a real positive trace, Hermitized, and
/// normalized to unit Frobenius norm.
pub fn dominant_eigenpair(a: &DenseTensor, side: Side, tol: f64) -> Result<(f64, DenseTensor)> {
    check_site_tensor(a)?;
    let chi_in = a.dim("l")?;
    let chi_out = a.dim("r")?;
    if chi_in != chi_out {
        return Err(Error::DimensionMismatch("transfer operator of a non-square tensor".into()));
    }
    let chi = chi_in;
    let start = as_vec(&DenseTensor::identity("b", "k", chi));
    let mut failure = None;
    let apply = |v: &[C64]| match transfer_identity(&from_vec(v.to_vec(), chi), a, side) {
        Ok(t) => t.into_data(),
        Err(e) => {
            failure.get_or_insert(e);
            vec![C64::new(0.0, 0.0); v.len()]
        }
    };
    let out = krylov::dominant_eigenpair(apply, start, tol, FIXED_POINT_MAX_STEPS, 40.min(chi * chi));
    if let Some(e) = failure {
        return Err(e);
    }
    let out = out?;
    let mut v = from_vec(out.vector, chi);
    let tr = v.trace()?;
    if tr.norm() > 0.0 {
        v.scale_mut(tr.conj() / tr.norm());
    }
    let vh = v.adjoint()?;
    let mut v = v.add(&vh)?.scale(C64::new(0.5, 0.0));
    let n = v.norm();
    v.scale_mut(C64::new(1.0 / n, 0.0));
    Ok((out.value.re, v))
}

/// Bring a uniform MPS `… Γ λ Γ λ …` to canonical form.
///
/// Left and right fixed points are factorized as `L = Y†Y`, `R = XX†`; the
/// SVD `Y X = U λ' V†` gives the new Schmidt values and
/// `Γ' = V† X⁻¹ (Γλ) Y⁻¹ U`. Directions in which a fixed point vanishes are
/// projected out, which shrinks χ for redundant representations.
pub fn canonicalize(gamma: &DenseTensor, lambda: &[f64]) -> Result<InfiniteMps> {
    check_site_tensor(gamma)?;
    let sq: Vec<f64> = lambda.iter().map(|l| l.sqrt()).collect();
    canonicalize_balanced(gamma.scale_axis("l", &sq)?.scale_axis("r", &sq)?)
}

/// Canonicalize a state given by a right-isometric-ish tensor `B = Γλ` and
/// the bond values `λ`. `λ^{-1/2}` enters only as a preconditioner (values
/// are floored at the Schmidt cutoff); the result does not depend on it.
pub fn canonicalize_b_form(b: &DenseTensor, lambda: &[f64]) -> Result<InfiniteMps> {
    check_site_tensor(b)?;
    let sq: Vec<f64> = lambda.iter().map(|l| l.sqrt()).collect();
    let inv: Vec<f64> = lambda.iter().map(|l| 1.0 / l.max(LAMBDA_CUTOFF).sqrt()).collect();
    canonicalize_balanced(b.scale_axis("l", &sq)?.scale_axis("r", &inv)?)
}

/// Passes work on the balanced gauge `√λ Γ √λ`: its fixed points scale like
/// `λ` rather than `λ²`, which keeps small Schmidt values resolvable.
fn canonicalize_balanced(mut m: DenseTensor) -> Result<InfiniteMps> {
    let chi = m.dim("l")?;
    let mut residual = f64::INFINITY;
    let mut rank = chi;
    let mut best: Option<(f64, InfiniteMps)> = None;
    for _ in 0..3 {
        let psi = canonical_pass(&m)?;
        rank = psi.chi();
        let (l, r) = psi.canonical_residuals()?;
        residual = l.max(r);
        let sq: Vec<f64> = psi.lambda().iter().map(|l| l.sqrt()).collect();
        m = psi.gamma().scale_axis("l", &sq)?.scale_axis("r", &sq)?;
        if best.as_ref().map_or(true, |(b, _)| residual < *b) {
            best = Some((residual, psi));
        }
        if residual <= 1e-13 {
            break;
        }
    }
    match best {
        Some((res, psi)) if res <= CANONICAL_TOL => Ok(psi),
        Some((_, psi)) if psi.lambda().iter().any(|&l| l < RESOLVABLE_LAMBDA) && psi.lambda()[0] >= RESOLVABLE_LAMBDA => {
            // drop the unresolvable tail (weight below 1e-12) and start over
            let keep = psi.lambda().iter().filter(|&&l| l >= RESOLVABLE_LAMBDA).count();
            log::debug!("canonicalize: residual {residual:.3e}, reducing χ {chi} → {keep}");
            let g = psi.gamma();
            let d = g.dim("p")?;
            let mut t = DenseTensor::zeros(&["l", "p", "r"], &[keep, d, keep]);
            for l in 0..keep {
                for p in 0..d {
                    for r in 0..keep {
                        t.set(&[l, p, r], g.get(&[l, p, r]));
                    }
                }
            }
            let sq: Vec<f64> = psi.lambda()[..keep].iter().map(|l| l.sqrt()).collect();
            canonicalize_balanced(t.scale_axis("l", &sq)?.scale_axis("r", &sq)?)
        }
        _ => {
            log::debug!("canonicalize: residual {residual:.3e} after repeated passes");
            Err(Error::RankDeficient { rank, chi })
        }
    }
}

fn canonical_pass(m: &DenseTensor) -> Result<InfiniteMps> {
    let chi = m.dim("l")?;
    let (eta, l_fp) = dominant_eigenpair(m, Side::Left, 1e-13)?;
    if !(eta > 0.0) {
        return Err(Error::NumericalInconsistency(format!(
            "transfer operator has non-positive dominant eigenvalue {eta:.3e}"
        )));
    }
    let (_, r_fp) = dominant_eigenpair(m, Side::Right, 1e-13)?;
    let m = m.scale(C64::new(1.0 / eta.sqrt(), 0.0));

    // L[b,k] is the usual left fixed point; F[b,k] = R^T for the right one.
    let l_eig = HermitianEigen::new(l_fp.as_matrix()?)?;
    let r_usual = r_fp.permute(&["k", "b"])?;
    let r_eig = HermitianEigen::new(r_usual.as_matrix()?)?;

    let keep = |vals: &[f64]| -> Result<Vec<usize>> {
        let vmax = vals.iter().cloned().fold(f64::MIN, f64::max);
        let vmin = vals.iter().cloned().fold(f64::MAX, f64::min);
        if vmin < -1e-8 * vmax.abs() {
            return Err(Error::NumericalInconsistency(format!(
                "fixed point is indefinite (eigenvalues {vmin:.3e} .. {vmax:.3e})"
            )));
        }
        Ok((0..vals.len()).filter(|&i| vals[i] > 1e-14 * vmax).collect())
    };
    let kl = keep(&l_eig.values)?;
    let kr = keep(&r_eig.values)?;

    // Y = D^{1/2} U†  (kl × χ),   Y⁻¹ = U D^{-1/2}  (χ × kl)
    let y = Mat::from_fn(kl.len(), chi, |a, j| {
        l_eig.vectors[(j, kl[a])].conj() * l_eig.values[kl[a]].sqrt()
    });
    let y_inv = Mat::from_fn(chi, kl.len(), |j, a| {
        l_eig.vectors[(j, kl[a])] / l_eig.values[kl[a]].sqrt()
    });
    // X = V D^{1/2}  (χ × kr),   X⁻¹ = D^{-1/2} V†  (kr × χ)
    let x = Mat::from_fn(chi, kr.len(), |j, a| {
        r_eig.vectors[(j, kr[a])] * r_eig.values[kr[a]].sqrt()
    });
    let x_inv = Mat::from_fn(kr.len(), chi, |a, j| {
        r_eig.vectors[(j, kr[a])].conj() / r_eig.values[kr[a]].sqrt()
    });

    let yx = matmul_owned(y.as_ref(), x.as_ref());
    let svd = yx
        .thin_svd()
        .map_err(|e| Error::Backend(format!("svd: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|v| v.re).collect();
    let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::RankDeficient { rank: 0, chi });
    }
    let kept: Vec<usize> = (0..s.len()).filter(|&i| s[i] / norm > LAMBDA_CUTOFF).collect();
    let new_chi = kept.len();
    let mut lam: Vec<f64> = kept.iter().map(|&i| s[i]).collect();
    let ln = lam.iter().map(|v| v * v).sum::<f64>().sqrt();
    lam.iter_mut().for_each(|v| *v /= ln);

    let u = svd.U();
    let v = svd.V();
    // left gauge: V† X⁻¹ (new_chi × χ);  right gauge: Y⁻¹ U (χ × new_chi)
    let vh = Mat::from_fn(new_chi, v.nrows(), |a, j| v[(j, kept[a])].conj());
    let left = matmul_owned(vh.as_ref(), x_inv.as_ref());
    let uk = Mat::from_fn(u.nrows(), new_chi, |j, a| u[(j, kept[a])]);
    let right = matmul_owned(y_inv.as_ref(), uk.as_ref());

    let left_t = DenseTensor::from_matrix(left.as_ref(), &[("l", new_chi)], &[("_x", chi)])?;
    let right_t = DenseTensor::from_matrix(right.as_ref(), &[("_y", chi)], &[("r", new_chi)])?;
    let g = contract(&left_t, &m, &[("_x", "l")])?;
    let g = contract(&g, &right_t, &[("r", "_y")])?;
    let mut g = g.permute(&["l", "p", "r"])?;

    // Fix the overall scale so that Σ A†A = I exactly in trace.
    let id = DenseTensor::identity("b", "k", new_chi);
    let s_left = transfer_identity(&id, &g.scale_axis("l", &lam)?, Side::Left)?;
    let c = s_left.trace()?.re / new_chi as f64;
    g.scale_mut(C64::new(1.0 / c.sqrt(), 0.0));
    InfiniteMps::new_unchecked(g, lam)
}

/// `(A, λ, B)` with `A = λΓ` and `B = Γλ`.
pub fn to_mixed_canonical(psi: &InfiniteMps) -> (DenseTensor, Vec<f64>, DenseTensor) {
    (psi.a(), psi.lambda().to_vec(), psi.b())
}

/// AKLT state: `Γ^{+} = √(2/3) σ⁺`, `Γ^{0} = −√(1/3) σ^z`, `Γ^{−} = −√(2/3) σ⁻`.
/// Returned in the raw (not yet canonical) gauge with unit λ.
pub fn aklt_tensors() -> (DenseTensor, Vec<f64>) {
    let a = (2.0f64 / 3.0).sqrt();
    let b = (1.0f64 / 3.0).sqrt();
    let mut g = DenseTensor::zeros(&["l", "p", "r"], &[2, 3, 2]);
    g.set(&[0, 0, 1], C64::new(a, 0.0));
    g.set(&[0, 1, 0], C64::new(-b, 0.0));
    g.set(&[1, 1, 1], C64::new(b, 0.0));
    g.set(&[1, 2, 0], C64::new(-a, 0.0));
    (g, vec![1.0, 1.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpo::SpinOperators;

    fn product_state() -> InfiniteMps {
        let mut g = DenseTensor::zeros(&["l", "p", "r"], &[1, 3, 1]);
        g.set(&[0, 0, 0], C64::new(1.0, 0.0));
        canonicalize(&g, &[1.0]).unwrap()
    }

    #[test]
    fn product_state_is_fixed() {
        let psi = product_state();
        assert_eq!(psi.chi(), 1);
        assert!((psi.lambda()[0] - 1.0).abs() < 1e-14);
        assert!((psi.gamma().get(&[0, 0, 0]).norm() - 1.0).abs() < 1e-14);
        let (a, _, b) = to_mixed_canonical(&psi);
        assert!((a.get(&[0, 0, 0]).norm() - 1.0).abs() < 1e-14);
        assert!((b.get(&[0, 0, 0]).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn aklt_canonical_form() {
        let (g, l) = aklt_tensors();
        let psi = canonicalize(&g, &l).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert_eq!(psi.chi(), 2);
        for v in psi.lambda() {
            assert!((v - h).abs() < 1e-12);
        }
        assert!((psi.schmidt().entanglement_entropy - 2f64.ln()).abs() < 1e-12);
        let (lr, rr) = psi.canonical_residuals().unwrap();
        assert!(lr < 1e-12 && rr < 1e-12);
        // A λ = λ B
        let (a, lam, b) = to_mixed_canonical(&psi);
        let al = a.scale_axis("r", &lam).unwrap();
        let lb = b.scale_axis("l", &lam).unwrap();
        assert!(al.max_abs_diff(&lb).unwrap() < 1e-12);
    }

    #[test]
    fn transfer_examples() {
        let psi = product_state();
        let s = SpinOperators::spin_one();
        let id = DenseTensor::identity("b", "k", 1);
        // |m=+1⟩ has S^z = 1; the zero operator gives zero
        let t = transfer_apply(&id, &psi.a(), &s.sz, Side::Left).unwrap();
        assert!((t.get(&[0, 0]) - C64::new(1.0, 0.0)).norm() < 1e-14);
        let zero = DenseTensor::zeros(&["o", "i"], &[3, 3]);
        assert_eq!(transfer_apply(&id, &psi.a(), &zero, Side::Left).unwrap().max_abs(), 0.0);

        let mut g = DenseTensor::zeros(&["l", "p", "r"], &[1, 3, 1]);
        g.set(&[0, 1, 0], C64::new(1.0, 0.0));
        let zero_state = canonicalize(&g, &[1.0]).unwrap();
        assert!(zero_state.expectation(&s.sz).unwrap().norm() < 1e-14);
    }

    #[test]
    fn dominant_eigenpair_of_canonical_tensors() {
        let (g, l) = aklt_tensors();
        let psi = canonicalize(&g, &l).unwrap();
        let (eta, v) = dominant_eigenpair(&psi.a(), Side::Left, 1e-12).unwrap();
        assert!((eta - 1.0).abs() < 1e-12);
        let id = DenseTensor::identity("b", "k", 2).scale(C64::new(1.0 / 2f64.sqrt(), 0.0));
        assert!(v.max_abs_diff(&id).unwrap() < 1e-10);
        let (eta, _) = dominant_eigenpair(&psi.b(), Side::Right, 1e-12).unwrap();
        assert!((eta - 1.0).abs() < 1e-12);
        let (eta, _) = dominant_eigenpair(&psi.a().scale(C64::new(2.0, 0.0)), Side::Left, 1e-12).unwrap();
        assert!((eta - 4.0).abs() < 1e-10);
    }

    #[test]
    fn redundant_bond_collapses_to_the_product_state() {
        // |+1⟩ product state padded to χ = 2 and conjugated by an invertible gauge
        let mut g = DenseTensor::zeros(&["l", "p", "r"], &[2, 3, 2]);
        g.set(&[0, 0, 0], C64::new(1.0, 0.0));
        let x = [[C64::new(1.0, 0.2), C64::new(0.5, 0.0)], [C64::new(-0.3, 0.1), C64::new(0.9, -0.4)]];
        let det = x[0][0] * x[1][1] - x[0][1] * x[1][0];
        let xi = [[x[1][1] / det, -x[0][1] / det], [-x[1][0] / det, x[0][0] / det]];
        let mut h = DenseTensor::zeros(&["l", "p", "r"], &[2, 3, 2]);
        for a in 0..2 {
            for b in 0..2 {
                for p in 0..3 {
                    let v: C64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| x[a][i] * g.get(&[i, p, j]) * xi[j][b]).sum();
                    h.set(&[a, p, b], v);
                }
            }
        }
        let psi = canonicalize(&h, &[1.0, 1.0]).unwrap();
        assert!((psi.lambda()[0] - 1.0).abs() < 1e-10);
        assert!(psi.lambda().iter().skip(1).all(|l| *l < 1e-10));
        let sz = SpinOperators::spin_one().sz;
        assert!((psi.expectation(&sz).unwrap().re - 1.0).abs() < 1e-10);
    }
}
