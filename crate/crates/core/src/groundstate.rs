//! Imaginary-time iTEBD on a two-site unit cell.
//!
//! Each sublattice is kept in right-isometric form `B = Γλ`. A bond update
//! builds `θ = λ_left B_i B_j`, applies the gate, and splits `θ' = X S Y†`.
//! The new right tensor is `Y†` and the new left one is `U(B_i B_j) Y / ‖S‖`,
//! so no Schmidt value is ever inverted.

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imps::{aklt_tensors, canonicalize, canonicalize_b_form, transfer_general, InfiniteMps, Side};
use crate::krylov;
use crate::linalg::{hermitian_expm, svd_truncate};
use crate::tensor::{contract, DenseTensor};

/// The cell is folded to one site when the per-cell fidelity between the
/// state and its one-site translate, `|η|` of the mixed pair transfer, is
/// within this of 1.
pub const FOLD_FIDELITY_TOL: f64 = 1e-6;
/// Sanity bound on `‖B_B − G B_A G‖ / ‖B_B‖` after gauge fixing. A finite
/// Trotter step leaves an O(dτ²) sublattice asymmetry, so this is loose.
pub const FOLD_MISMATCH_TOL: f64 = 1e-2;
const SVD_TOL: f64 = 1e-13;
const CHECK_EVERY: usize = 10;

/// Starting point of the imaginary-time evolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialState {
    /// Random complex tensor from a seeded ChaCha8 stream.
    Random { seed: u64 },
    /// The spin-1 AKLT state. It is SU(2) symmetric, and the block-wise
    /// truncation rule then keeps every multiplet whole, so the result stays
    /// symmetric to machine precision.
    Aklt,
}

#[derive(Clone, Debug)]
pub struct ItebdSchedule {
    pub steps: Vec<(f64, usize)>,
    pub chi: usize,
    pub init: InitialState,
    pub energy_tol: f64,
    /// Largest Schmidt-value change between checks accepted as converged.
    pub lambda_tol: f64,
}

impl ItebdSchedule {
    /// `dtau` 0.1 → 0.03 → 0.01, each stage run until energy and Schmidt
    /// values are stationary.
    pub fn standard(chi: usize, init: InitialState) -> Self {
        Self {
            steps: vec![(0.1, 5000), (0.03, 5000), (0.01, 5000)],
            chi,
            init,
            energy_tol: 1e-10,
            lambda_tol: 1e-9,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.chi == 0 {
            return Err(Error::InvalidChi);
        }
        if self.steps.is_empty() {
            return Err(Error::InvalidArgument("empty iTEBD schedule".into()));
        }
        for w in self.steps.windows(2) {
            if w[1].0 >= w[0].0 {
                return Err(Error::InvalidArgument("dtau must strictly decrease".into()));
            }
        }
        if self.steps.iter().any(|&(dt, n)| !(dt > 0.0) || n == 0) {
            return Err(Error::InvalidArgument("dtau and iteration counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ItebdResult {
    pub mps: InfiniteMps,
    /// Energy per (original) site.
    pub energy: f64,
    /// True when the two sublattices differ and `mps` is the blocked pair.
    pub blocked: bool,
    /// False when the energy was still drifting by more than `energy_tol`.
    pub converged: bool,
    pub iterations: usize,
    /// Energy per site at every check point, in order.
    pub history: Vec<f64>,
}

struct Cell {
    /// Right-isometric site tensors `[l,p,r]`.
    b: [DenseTensor; 2],
    /// `lam[i]` sits to the right of site `i`.
    lam: [Vec<f64>; 2],
}

fn pair(b1: &DenseTensor, b2: &DenseTensor) -> Result<DenseTensor> {
    let b1 = b1.clone().relabel_all(&[("p", "p1"), ("r", "_m")])?;
    let b2 = b2.clone().relabel_all(&[("p", "p2"), ("l", "_m")])?;
    contract(&b1, &b2, &[("_m", "_m")])
}

fn apply_gate(gate: &DenseTensor, psi: &DenseTensor) -> Result<DenseTensor> {
    contract(gate, psi, &[("i1", "p1"), ("i2", "p2")])?
        .relabel_all(&[("o1", "p1"), ("o2", "p2")])?
        .permute(&["l", "p1", "p2", "r"])
}

fn bond_energy(theta: &DenseTensor, h: &DenseTensor) -> Result<f64> {
    let ht = apply_gate(h, theta)?;
    let num = theta.inner(&ht)?;
    let den = theta.inner(theta)?;
    Ok(num.re / den.re)
}

impl Cell {
    fn uniform(psi: &InfiniteMps) -> Self {
        let b = psi.b();
        Cell {
            b: [b.clone(), b],
            lam: [psi.lambda().to_vec(), psi.lambda().to_vec()],
        }
    }

    fn theta(&self, i: usize) -> Result<DenseTensor> {
        let j = 1 - i;
        pair(&self.b[i], &self.b[j])?.scale_axis("l", &self.lam[j])
    }

    fn update(&mut self, i: usize, gate: &DenseTensor, chi: usize) -> Result<f64> {
        let j = 1 - i;
        let psi = apply_gate(gate, &pair(&self.b[i], &self.b[j])?)?;
        let theta = psi.scale_axis("l", &self.lam[j])?;
        let svd = svd_truncate(&theta, &["l", "p1"], "_m", chi, SVD_TOL)?;
        let norm = svd.s.iter().map(|s| s * s).sum::<f64>().sqrt();
        let y = svd.v.relabel_all(&[("_m", "l"), ("p2", "p")])?;
        let yc = y.conj().relabel("l", "_n")?;
        let mut left = contract(&psi, &yc, &[("p2", "p"), ("r", "r")])?
            .relabel_all(&[("p1", "p"), ("_n", "r")])?;
        left.scale_mut(C64::new(1.0 / norm, 0.0));
        self.b[i] = left.permute(&["l", "p", "r"])?;
        self.b[j] = y;
        self.lam[i] = svd.s.iter().map(|s| s / norm).collect();
        Ok(svd.discarded_weight)
    }

    /// Restore exact canonical form: canonicalize the fused pair, then split
    /// `λ Γ_pair λ` once more to recover the inner Schmidt values.
    fn recanonicalize(&mut self, chi: usize) -> Result<()> {
        let m = fuse_pair(&self.b[0], &self.b[1])?;
        let d = self.b[0].dim("p")?;
        let psi = canonicalize_b_form(&m, &self.lam[1])?;
        let n = psi.chi();
        let lam = psi.lambda().to_vec();
        let unfuse = |t: DenseTensor| -> Result<DenseTensor> {
            DenseTensor::new(&["l", "p1", "p2", "r"], &[n, d, d, n], t.into_data())
        };
        let b_pair = unfuse(psi.b())?;
        let theta = b_pair.scale_axis("l", &lam)?;
        let svd = svd_truncate(&theta, &["l", "p1"], "_m", chi, SVD_TOL)?;
        let norm = svd.s.iter().map(|s| s * s).sum::<f64>().sqrt();
        let y = svd.v.relabel_all(&[("_m", "l"), ("p2", "p")])?;
        let yc = y.conj().relabel("l", "_n")?;
        let left = contract(&b_pair, &yc, &[("p2", "p"), ("r", "r")])?
            .relabel_all(&[("p1", "p"), ("_n", "r")])?;
        self.b[0] = left.permute(&["l", "p", "r"])?;
        self.b[1] = y;
        self.lam[0] = svd.s.iter().map(|s| s / norm).collect();
        self.lam[1] = lam;
        Ok(())
    }

    fn energy(&self, h: &DenseTensor) -> Result<f64> {
        Ok(0.5 * (bond_energy(&self.theta(0)?, h)? + bond_energy(&self.theta(1)?, h)?))
    }
}

fn lambda_change(a: &[Vec<f64>; 2], b: &[Vec<f64>; 2]) -> f64 {
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        if x.len() != y.len() {
            return f64::INFINITY;
        }
        for (p, q) in x.iter().zip(y) {
            worst = worst.max((p - q).abs());
        }
    }
    worst
}

/// Independent random tensors on the two sublattices, so that imaginary time
/// can break a sublattice symmetry the Hamiltonian favours breaking.
fn random_start(d: usize, chi: usize, seed: u64) -> Result<Cell> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = canonicalize(&DenseTensor::random(&["l", "p", "r"], &[chi, d, chi], &mut rng), &vec![1.0; chi])?;
    let b = canonicalize(&DenseTensor::random(&["l", "p", "r"], &[chi, d, chi], &mut rng), &vec![1.0; chi])?;
    if a.chi() != b.chi() {
        return Ok(Cell::uniform(&a));
    }
    let mut cell = Cell {
        b: [a.b(), b.b()],
        lam: [a.lambda().to_vec(), a.lambda().to_vec()],
    };
    cell.recanonicalize(chi)?;
    Ok(cell)
}

/// Imaginary-time evolution to the ground state of `Σ_i h(i, i+1)`.
///
/// `h_two_site` carries labels `["o1","o2","i1","i2"]`.
pub fn itebd_ground_state(h_two_site: &DenseTensor, schedule: &ItebdSchedule) -> Result<ItebdResult> {
    schedule.validate()?;
    let d = h_two_site.dims()[0];
    let start = match schedule.init {
        InitialState::Random { seed } => random_start(d, schedule.chi.min(d * d), seed)?,
        InitialState::Aklt => {
            if d != 3 {
                return Err(Error::InvalidArgument(format!("AKLT start needs d = 3, got {d}")));
            }
            let (g, l) = aklt_tensors();
            Cell::uniform(&canonicalize(&g, &l)?)
        }
    };
    run_itebd(h_two_site, schedule, start)
}

fn run_itebd(h: &DenseTensor, schedule: &ItebdSchedule, mut cell: Cell) -> Result<ItebdResult> {
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut last = cell.energy(h)?;
    let mut last_lam = cell.lam.clone();
    for (stage, &(dtau, n_iter)) in schedule.steps.iter().enumerate() {
        let half = hermitian_expm(h, &["o1", "o2"], C64::new(-0.5 * dtau, 0.0))?;
        let full = hermitian_expm(h, &["o1", "o2"], C64::new(-dtau, 0.0))?;
        let mut stage_converged = false;
        for it in 1..=n_iter {
            // second-order splitting: half A-B, full B-A, half A-B
            cell.update(0, &half, schedule.chi)?;
            cell.update(1, &full, schedule.chi)?;
            cell.update(0, &half, schedule.chi)?;
            iterations += 1;
            if it % CHECK_EVERY == 0 {
                cell.recanonicalize(schedule.chi)?;
                let e = cell.energy(h)?;
                history.push(e);
                let delta = (e - last).abs();
                let dlam = lambda_change(&last_lam, &cell.lam);
                last = e;
                last_lam = cell.lam.clone();
                if delta < schedule.energy_tol && dlam < schedule.lambda_tol {
                    stage_converged = true;
                    break;
                }
            }
        }
        log::info!(
            "iTEBD stage {stage}: dtau={dtau} energy={last:.12} converged={stage_converged}"
        );
        converged = stage_converged;
    }
    if !converged {
        log::warn!("iTEBD energy still drifting above {:.1e} at schedule end", schedule.energy_tol);
    }
    let energy = cell.energy(h)?;
    let (mps, blocked) = fold_cell(&cell)?;
    Ok(ItebdResult {
        mps,
        energy,
        blocked,
        converged,
        iterations,
        history,
    })
}

fn fuse_pair(b1: &DenseTensor, b2: &DenseTensor) -> Result<DenseTensor> {
    let t = pair(b1, b2)?.permute(&["l", "p1", "p2", "r"])?;
    let dims = t.dims().to_vec();
    DenseTensor::new(&["l", "p", "r"], &[dims[0], dims[1] * dims[2], dims[3]], t.into_data())
}

/// Re-express the converged two-site cell as a one-site iMPS.
///
/// For a translation-invariant state there is a unitary `G` with
/// `B_B = G B_A G`. It is read off the dominant eigenmatrix `F` of the mixed
/// pair transfer `F ↦ Σ conj(P) F Qᵀ` with `P = B_A B_B`, `Q = B_B B_A`, for
/// which `F ∝ Gᵀ`. The one-site tensor is then `B_A G`.
fn fold_cell(cell: &Cell) -> Result<(InfiniteMps, bool)> {
    let blocked = || -> Result<(InfiniteMps, bool)> {
        let m = fuse_pair(&cell.b[0], &cell.b[1])?;
        Ok((canonicalize_b_form(&m, &cell.lam[1])?, true))
    };
    if cell.lam[0].len() != cell.lam[1].len() {
        return blocked();
    }
    let chi = cell.lam[0].len();
    let p = fuse_pair(&cell.b[0], &cell.b[1])?;
    let q = fuse_pair(&cell.b[1], &cell.b[0])?;
    let wrap = |v: &[C64]| DenseTensor::new(&["b", "k"], &[chi, chi], v.to_vec()).unwrap();
    let apply = |v: &[C64]| {
        transfer_general(&wrap(v), &p, &q, None, Side::Right)
            .expect("shapes checked")
            .into_data()
    };
    let start: Vec<C64> = DenseTensor::identity("b", "k", chi).into_data();
    let eig = match krylov::dominant_eigenpair(apply, start, 1e-12, 10_000, 40.min(chi * chi)) {
        Ok(e) => e,
        Err(_) => return blocked(),
    };
    if (eig.value.norm() - 1.0).abs() > FOLD_FIDELITY_TOL {
        return blocked();
    }
    let f = wrap(&eig.vector);
    let mut g = f.permute(&["k", "b"])?.relabel_all(&[("k", "l"), ("b", "r")])?;
    // unitary normalization: ‖G‖_F² = χ
    g.scale_mut(C64::new((chi as f64).sqrt() / g.norm(), 0.0));
    let gba = |g: &DenseTensor| -> Result<DenseTensor> {
        let t = contract(&g.clone().relabel("r", "_x")?, &cell.b[0], &[("_x", "l")])?;
        let t = contract(&t, &g.clone().relabel("l", "_y")?, &[("r", "_y")])?;
        t.permute(&["l", "p", "r"])
    };
    let candidate = gba(&g)?;
    let overlap = candidate.inner(&cell.b[1])?;
    if overlap.norm() == 0.0 {
        return blocked();
    }
    // fix the phase of G so that G B_A G matches B_B
    let phase = (overlap / overlap.norm()).sqrt();
    g.scale_mut(phase);
    let candidate = gba(&g)?;
    let mismatch = candidate.sub(&cell.b[1])?.norm() / cell.b[1].norm();
    log::debug!("sublattice mismatch after gauge fixing: {mismatch:.3e}");
    if mismatch > FOLD_MISMATCH_TOL {
        return blocked();
    }
    let m = contract(&cell.b[0], &g.relabel("l", "_z")?, &[("r", "_z")])?;
    let m = m.permute(&["l", "p", "r"])?;
    Ok((canonicalize_b_form(&m, &cell.lam[1])?, false))
}

/// `⟨h⟩` on one bond of a canonical iMPS.
pub fn two_site_energy(psi: &InfiniteMps, h: &DenseTensor) -> Result<f64> {
    let a = psi.a().scale_axis("r", psi.lambda())?;
    let theta = pair(&a, &psi.b())?.permute(&["l", "p1", "p2", "r"])?;
    let ht = apply_gate(h, &theta)?;
    let v = theta.inner(&ht)?;
    if v.im.abs() > 1e-10 {
        return Err(Error::NumericalInconsistency(format!(
            "bond energy has imaginary part {:.3e}",
            v.im
        )));
    }
    Ok(v.re)
}
