//! Finite window embedded in the infinite ground state.
//!
//! Bond `b ∈ [0, N]` sits between site `b−1` and site `b`; bonds `0` and `N`
//! are the exterior bonds, whose basis is the Schmidt basis of the
//! semi-infinite halves. The state is kept in mixed canonical form
//! `A_0 … A_{k−1} Λ B_k … B_{N−1}` with the centre bond `k` in `[1, N−1]`
//! during evolution, so that the boundary gates always act on isometries:
//! `U_L`, `U_LW` are unitaries on the input legs of `A_0`, and `U_WR`, `U_R` on
//! those of `B_{N−1}`. None of them disturbs canonical form.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::environment::{compute_environment, BoundaryEnvironment, SOLVE_TOL};
use crate::error::{Error, Result};
use crate::imps::{transfer_apply, transfer_general, InfiniteMps, Side};
use crate::linalg::{lq_thin, qr_thin, svd_truncate, HermitianEigen};
use crate::mpo::{kron, op_identity, Mpo};
use crate::tensor::{contract, DenseTensor};

/// Singular values below this fraction of the largest are treated as exact
/// zeros when the centre is shifted (no truncation otherwise).
const SHIFT_TOL: f64 = 1e-14;
/// Per-step discarded weight above which a warning is emitted.
pub const DISCARD_ALARM: f64 = 1e-5;

/// Environments and the MPO, shared by every window cut from one ground state.
#[derive(Debug)]
pub struct Boundaries {
    pub psi: InfiniteMps,
    pub mpo: Mpo,
    pub left: BoundaryEnvironment,
    pub right: BoundaryEnvironment,
    spectra: OnceLock<Spectra>,
}

#[derive(Debug)]
struct Spectra {
    bond: HermitianEigen,
    left: HermitianEigen,
    left_coupling: HermitianEigen,
    right_coupling: HermitianEigen,
    right: HermitianEigen,
}

impl Boundaries {
    pub fn new(psi: InfiniteMps, mpo: Mpo) -> Result<Self> {
        let left = compute_environment(&psi, &mpo, Side::Left, SOLVE_TOL)?;
        let right = compute_environment(&psi, &mpo, Side::Right, SOLVE_TOL)?;
        Ok(Self {
            psi,
            mpo,
            left,
            right,
            spectra: OnceLock::new(),
        })
    }

    pub fn chi(&self) -> usize {
        self.psi.chi()
    }

    pub fn d(&self) -> usize {
        self.psi.d()
    }

    /// `Σ_k Ẽ^L_k ⊗ W[k][0] + ½ I ⊗ F`, labels `["ob","op","ib","ip"]`.
    pub fn left_coupling_hamiltonian(&self) -> Result<DenseTensor> {
        let (chi, d) = (self.chi(), self.d());
        let mut h = DenseTensor::zeros(&["ob", "op", "ib", "ip"], &[chi, d, chi, d]);
        for k in self.left.coupling_channels() {
            if let Some(w) = self.mpo.get(k, 0) {
                let e = self.left.channel(k).clone().relabel_all(&[("b", "o"), ("k", "i")])?;
                h = h.add(&relabel_pair(kron(&e, w)?, ("ob", "op", "ib", "ip"))?)?;
            }
        }
        if let Some(f) = self.mpo.field() {
            let half = kron(&op_identity(chi), f)?.scale(C64::new(0.5, 0.0));
            h = h.add(&relabel_pair(half, ("ob", "op", "ib", "ip"))?)?;
        }
        Ok(h)
    }

    /// `Σ_k W[c−1][k] ⊗ F̃^R_k + ½ F ⊗ I`, labels `["op","ob","ip","ib"]`.
    pub fn right_coupling_hamiltonian(&self) -> Result<DenseTensor> {
        let (chi, d) = (self.chi(), self.d());
        let c = self.mpo.bond_dim();
        let mut h = DenseTensor::zeros(&["op", "ob", "ip", "ib"], &[d, chi, d, chi]);
        for k in self.right.coupling_channels() {
            if let Some(w) = self.mpo.get(c - 1, k) {
                let f = self.right.channel(k).clone().relabel_all(&[("b", "o"), ("k", "i")])?;
                h = h.add(&relabel_pair(kron(w, &f)?, ("op", "ob", "ip", "ib"))?)?;
            }
        }
        if let Some(f) = self.mpo.field() {
            let half = kron(f, &op_identity(chi))?.scale(C64::new(0.5, 0.0));
            h = h.add(&relabel_pair(half, ("op", "ob", "ip", "ib"))?)?;
        }
        Ok(h)
    }

    fn spectra(&self) -> Result<&Spectra> {
        if let Some(s) = self.spectra.get() {
            return Ok(s);
        }
        let bond = self.mpo.bond_hamiltonian()?;
        let lc = self.left_coupling_hamiltonian()?;
        let rc = self.right_coupling_hamiltonian()?;
        let eig = |t: &DenseTensor, rows: &[&str], cols: &[&str]| -> Result<HermitianEigen> {
            HermitianEigen::new(t.to_matrix(rows, cols)?.as_ref())
        };
        let s = Spectra {
            bond: eig(&bond, &["o1", "o2"], &["i1", "i2"])?,
            left: eig(self.left.hamiltonian(), &["b"], &["k"])?,
            left_coupling: eig(&lc, &["ob", "op"], &["ib", "ip"])?,
            right_coupling: eig(&rc, &["op", "ob"], &["ip", "ib"])?,
            right: eig(self.right.hamiltonian(), &["b"], &["k"])?,
        };
        let _ = self.spectra.set(s);
        Ok(self.spectra.get().unwrap())
    }

    /// All five evolution operators for a time slice `tau`.
    pub fn gates(&self, tau: f64) -> Result<GateSet> {
        let s = self.spectra()?;
        let theta = C64::new(0.0, -tau);
        let (chi, d) = (self.chi(), self.d());
        let mk = |e: &HermitianEigen, rows: &[(&str, usize)], cols: &[(&str, usize)]| {
            DenseTensor::from_matrix(e.expm(theta).as_ref(), rows, cols)
        };
        Ok(GateSet {
            bond: mk(&s.bond, &[("o1", d), ("o2", d)], &[("i1", d), ("i2", d)])?,
            left: mk(&s.left, &[("o", chi)], &[("i", chi)])?,
            left_coupling: mk(&s.left_coupling, &[("ob", chi), ("op", d)], &[("ib", chi), ("ip", d)])?,
            right_coupling: mk(&s.right_coupling, &[("op", d), ("ob", chi)], &[("ip", d), ("ib", chi)])?,
            right: mk(&s.right, &[("o", chi)], &[("i", chi)])?,
        })
    }
}

fn relabel_pair(t: DenseTensor, to: (&str, &str, &str, &str)) -> Result<DenseTensor> {
    t.relabel_all(&[("o1", to.0), ("o2", to.1), ("i1", to.2), ("i2", to.3)])
}

/// Unitaries for one time slice.
#[derive(Clone, Debug)]
pub struct GateSet {
    pub bond: DenseTensor,
    pub left: DenseTensor,
    pub left_coupling: DenseTensor,
    pub right_coupling: DenseTensor,
    pub right: DenseTensor,
}

impl GateSet {
    pub fn all(&self) -> [&DenseTensor; 5] {
        [&self.bond, &self.left, &self.left_coupling, &self.right_coupling, &self.right]
    }
}

/// The two mutually commuting gate families.
///
/// `Even` holds interior links `(0,1), (2,3), …, (N−2,N−1)` and the pure
/// exterior terms `H̃_L`, `H̃_R`. `Odd` holds `(1,2), …, (N−3,N−2)` together
/// with the couplings `H̃_LW`, `H̃_WR`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    Even,
    Odd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateTarget {
    /// Interior link between sites `i` and `i+1`.
    Bond(usize),
    Left,
    LeftCoupling,
    RightCoupling,
    Right,
}

#[derive(Clone, Debug)]
pub struct TrotterPlan {
    order: u8,
    dt: f64,
    layers: Vec<(Group, f64)>,
}

impl TrotterPlan {
    /// Product formula of order 1 (`Even·Odd`), 2 (Strang), or 4 (Suzuki
    /// fractal built from five Strang kernels with `p = 1/(4 − 4^{1/3})`).
    pub fn new(order: u8, dt: f64) -> Result<Self> {
        if !dt.is_finite() || dt < 0.0 {
            return Err(Error::InvalidArgument(format!("time step {dt}")));
        }
        let strang = |c: f64| vec![(Group::Even, c / 2.0), (Group::Odd, c), (Group::Even, c / 2.0)];
        let raw = match order {
            1 => vec![(Group::Even, 1.0), (Group::Odd, 1.0)],
            2 => strang(1.0),
            4 => {
                let p = 1.0 / (4.0 - 4f64.powf(1.0 / 3.0));
                [p, p, 1.0 - 4.0 * p, p, p].into_iter().flat_map(strang).collect()
            }
            _ => return Err(Error::InvalidArgument(format!("Trotter order {order}"))),
        };
        let mut layers: Vec<(Group, f64)> = Vec::new();
        for (g, c) in raw {
            match layers.last_mut() {
                Some((lg, lc)) if *lg == g => *lc += c,
                _ => layers.push((g, c)),
            }
        }
        Ok(Self { order, dt, layers })
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn layers(&self) -> &[(Group, f64)] {
        &self.layers
    }

    /// Name of the product formula, recorded in run metadata.
    pub fn scheme(&self) -> &'static str {
        match self.order {
            1 => "lie-trotter",
            2 => "strang",
            _ => "suzuki-fractal-4th-order(5 strang kernels)",
        }
    }

    /// Every gate of one step for a window of `n` sites, with its fraction
    /// of `dt`.
    pub fn gate_sequence(&self, n: usize) -> Vec<(GateTarget, f64)> {
        let mut out = Vec::new();
        for &(g, c) in &self.layers {
            match g {
                Group::Even => {
                    out.push((GateTarget::Left, c));
                    out.extend((0..n.saturating_sub(1)).step_by(2).map(|i| (GateTarget::Bond(i), c)));
                    out.push((GateTarget::Right, c));
                }
                Group::Odd => {
                    out.push((GateTarget::LeftCoupling, c));
                    out.extend((1..n.saturating_sub(1)).step_by(2).map(|i| (GateTarget::Bond(i), c)));
                    out.push((GateTarget::RightCoupling, c));
                }
            }
        }
        out
    }
}

/// Diagnostics of one [`tebd_step`].
#[derive(Clone, Debug, Default)]
pub struct StepReport {
    pub time: f64,
    /// Sum of the discarded weights of all truncations in the step.
    pub discarded_weight: f64,
    /// Largest `|1 − ‖θ'‖²_kept| − discarded` seen over the step's gates.
    pub norm_excess: f64,
    pub max_chi: usize,
}

#[derive(Clone, Debug)]
pub struct WindowState {
    tensors: Vec<DenseTensor>,
    center: Vec<f64>,
    ortho: usize,
    bounds: Arc<Boundaries>,
    chi_max: usize,
    svd_tol: f64,
    discarded: f64,
    time: f64,
    /// Product of the norms removed by [`apply_local_operator`].
    amplitude: f64,
    forward: bool,
    gate_cache: HashMap<u64, Arc<GateSet>>,
}

/// Unperturbed window of `n` sites: `A^{n/2} λ B^{n/2}`.
pub fn open_window(psi: &InfiniteMps, n: usize, mpo: &Mpo) -> Result<WindowState> {
    let bounds = Arc::new(Boundaries::new(psi.clone(), mpo.clone())?);
    WindowState::from_boundaries(bounds, n)
}

impl WindowState {
    pub fn from_boundaries(bounds: Arc<Boundaries>, n: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidArgument(format!("window size {n} must be even and ≥ 2")));
        }
        let a = bounds.psi.a();
        let b = bounds.psi.b();
        let mut tensors = vec![a; n / 2];
        tensors.extend(std::iter::repeat(b).take(n / 2));
        Ok(Self {
            tensors,
            center: bounds.psi.lambda().to_vec(),
            ortho: n / 2,
            chi_max: bounds.chi(),
            svd_tol: 1e-12,
            discarded: 0.0,
            time: 0.0,
            amplitude: 1.0,
            forward: true,
            gate_cache: HashMap::new(),
            bounds,
        })
    }

    /// Reassemble from stored parts (checkpoint restore).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        bounds: Arc<Boundaries>,
        tensors: Vec<DenseTensor>,
        center: Vec<f64>,
        ortho: usize,
        chi_max: usize,
        time: f64,
        discarded: f64,
        amplitude: f64,
    ) -> Result<Self> {
        let n = tensors.len();
        if n < 2 || ortho == 0 || ortho >= n {
            return Err(Error::InvalidArgument(format!("centre bond {ortho} for {n} sites")));
        }
        let chi = bounds.chi();
        if tensors[0].dim("l")? != chi || tensors[n - 1].dim("r")? != chi {
            return Err(Error::DimensionMismatch("exterior bonds do not match the environments".into()));
        }
        for w in tensors.windows(2) {
            if w[0].dim("r")? != w[1].dim("l")? {
                return Err(Error::DimensionMismatch("adjacent window tensors".into()));
            }
        }
        if tensors[ortho].dim("l")? != center.len() {
            return Err(Error::DimensionMismatch("centre values".into()));
        }
        Ok(Self {
            tensors,
            center,
            ortho,
            bounds,
            chi_max,
            svd_tol: 1e-12,
            discarded,
            time,
            amplitude,
            forward: true,
            gate_cache: HashMap::new(),
        })
    }

    pub fn with_truncation(mut self, chi_max: usize, svd_tol: f64) -> Result<Self> {
        if chi_max < 1 {
            return Err(Error::InvalidChi);
        }
        self.chi_max = chi_max;
        self.svd_tol = svd_tol;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensors(&self) -> &[DenseTensor] {
        &self.tensors
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn ortho_position(&self) -> usize {
        self.ortho
    }

    pub fn boundaries(&self) -> &Arc<Boundaries> {
        &self.bounds
    }

    pub fn chi_max(&self) -> usize {
        self.chi_max
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn accumulated_discarded_weight(&self) -> f64 {
        self.discarded
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Direction of the next gate sweep; part of the state for bit-exact resumption.
    pub fn sweep_forward(&self) -> bool {
        self.forward
    }

    pub fn set_sweep_forward(&mut self, forward: bool) {
        self.forward = forward;
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.tensors.iter().map(|t| t.dims()[0]).collect();
        v.push(self.tensors.last().unwrap().dims()[2]);
        v
    }

    pub fn max_chi(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(0)
    }

    /// `Σ Λ²`.
    pub fn norm_sqr(&self) -> f64 {
        self.center.iter().map(|x| x * x).sum()
    }

    /// Largest isometry defect over all site tensors (A-form left of the
    /// centre, B-form right of it).
    pub fn canonical_residual(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for (i, t) in self.tensors.iter().enumerate() {
            let (side, bond) = if i < self.ortho { (Side::Left, "r") } else { (Side::Right, "l") };
            let chi = t.dim(bond)?;
            let id = DenseTensor::identity("b", "k", if side == Side::Left { t.dim("l")? } else { t.dim("r")? });
            let out = transfer_general(&id, t, t, None, side)?;
            worst = worst.max(out.max_abs_diff(&DenseTensor::identity("b", "k", chi))?);
        }
        Ok(worst)
    }

    /// Site tensors with the centre absorbed into the tensor right of it.
    pub fn plain_tensors(&self) -> Vec<DenseTensor> {
        let mut out = self.tensors.clone();
        out[self.ortho] = out[self.ortho].scale_axis("l", &self.center).unwrap();
        out
    }

    fn move_right(&mut self) -> Result<()> {
        let k = self.ortho;
        if k + 1 >= self.len() {
            return Err(Error::InvalidArgument("centre cannot pass the last window bond".into()));
        }
        let m = self.tensors[k].scale_axis("l", &self.center)?;
        let svd = svd_truncate(&m, &["l", "p"], "_m", usize::MAX, SHIFT_TOL)?;
        self.discarded += svd.discarded_weight;
        self.tensors[k] = svd.u.relabel("_m", "r")?;
        let next = contract(&svd.v, &self.tensors[k + 1], &[("r", "l")])?;
        self.tensors[k + 1] = next.relabel("_m", "l")?.permute(&["l", "p", "r"])?;
        self.center = svd.s;
        self.ortho = k + 1;
        Ok(())
    }

    fn move_left(&mut self) -> Result<()> {
        let k = self.ortho;
        if k < 2 {
            return Err(Error::InvalidArgument("centre cannot pass the first window bond".into()));
        }
        let m = self.tensors[k - 1].scale_axis("r", &self.center)?;
        let svd = svd_truncate(&m, &["l"], "_m", usize::MAX, SHIFT_TOL)?;
        self.discarded += svd.discarded_weight;
        self.tensors[k - 1] = svd.v.relabel("_m", "l")?;
        let prev = contract(&self.tensors[k - 2], &svd.u, &[("r", "l")])?;
        self.tensors[k - 2] = prev.relabel("_m", "r")?;
        self.center = svd.s;
        self.ortho = k - 1;
        Ok(())
    }

    fn move_to(&mut self, bond: usize) -> Result<()> {
        while self.ortho < bond {
            self.move_right()?;
        }
        while self.ortho > bond {
            self.move_left()?;
        }
        Ok(())
    }

    /// Two-site gate on sites `(i, i+1)`, centre at bond `i+1`.
    fn apply_bond(&mut self, i: usize, gate: &DenseTensor, report: &mut StepReport) -> Result<()> {
        // Two bonds away the skipped site is orthonormalized by a QR (or LQ)
        // folded into θ, which saves both centre-shift SVDs.
        let (a, b) = if i >= 1 && self.ortho + 1 == i {
            let m = self.tensors[i - 1].scale_axis("l", &self.center)?;
            let (q, r) = qr_thin(&m, &["l", "p"], "_q")?;
            self.tensors[i - 1] = q.relabel("_q", "r")?;
            let a = contract(&r, &self.tensors[i], &[("r", "l")])?.relabel("_q", "l")?;
            (a, self.tensors[i + 1].clone())
        } else if self.ortho == i + 3 {
            let m = self.tensors[i + 2].scale_axis("r", &self.center)?;
            let (l, q) = lq_thin(&m, &["l"], "_q")?;
            self.tensors[i + 2] = q.relabel("_q", "l")?;
            let b = contract(&self.tensors[i + 1], &l, &[("r", "l")])?.relabel("_q", "r")?;
            (self.tensors[i].clone(), b)
        } else {
            self.move_to(i + 1)?;
            (self.tensors[i].scale_axis("r", &self.center)?, self.tensors[i + 1].clone())
        };
        let a = a.permute(&["l", "p", "r"])?.relabel_all(&[("p", "p1"), ("r", "_x")])?;
        let b = b.relabel_all(&[("p", "p2"), ("l", "_x")])?;
        let theta = contract(&a, &b, &[("_x", "_x")])?;
        let theta = contract(gate, &theta, &[("i1", "p1"), ("i2", "p2")])?
            .relabel_all(&[("o1", "p1"), ("o2", "p2")])?
            .permute(&["l", "p1", "p2", "r"])?;
        let svd = svd_truncate(&theta, &["l", "p1"], "_m", self.chi_max, self.svd_tol)?;
        let kept: f64 = svd.s.iter().map(|s| s * s).sum();
        report.discarded_weight += svd.discarded_weight;
        report.norm_excess = report
            .norm_excess
            .max((1.0 - kept).abs() - svd.discarded_weight * svd.total_weight);
        self.discarded += svd.discarded_weight;
        let norm = kept.sqrt();
        self.tensors[i] = svd.u.relabel_all(&[("p1", "p"), ("_m", "r")])?;
        self.tensors[i + 1] = svd.v.relabel_all(&[("_m", "l"), ("p2", "p")])?;
        self.center = svd.s.iter().map(|s| s / norm).collect();
        self.ortho = i + 1;
        Ok(())
    }

    fn apply_left(&mut self, u: &DenseTensor) -> Result<()> {
        let t = contract(u, &self.tensors[0], &[("i", "l")])?.relabel("o", "l")?;
        self.tensors[0] = t.permute(&["l", "p", "r"])?;
        Ok(())
    }

    fn apply_left_coupling(&mut self, u: &DenseTensor) -> Result<()> {
        let t = contract(u, &self.tensors[0], &[("ib", "l"), ("ip", "p")])?
            .relabel_all(&[("ob", "l"), ("op", "p")])?;
        self.tensors[0] = t.permute(&["l", "p", "r"])?;
        Ok(())
    }

    fn apply_right_coupling(&mut self, u: &DenseTensor) -> Result<()> {
        let n = self.len();
        let t = contract(u, &self.tensors[n - 1], &[("ip", "p"), ("ib", "r")])?
            .relabel_all(&[("op", "p"), ("ob", "r")])?;
        self.tensors[n - 1] = t.permute(&["l", "p", "r"])?;
        Ok(())
    }

    fn apply_right(&mut self, u: &DenseTensor) -> Result<()> {
        let n = self.len();
        let t = contract(&self.tensors[n - 1], u, &[("r", "i")])?.relabel("o", "r")?;
        self.tensors[n - 1] = t;
        Ok(())
    }

    fn gates_for(&mut self, tau: f64) -> Result<Arc<GateSet>> {
        let key = tau.to_bits();
        if let Some(g) = self.gate_cache.get(&key) {
            return Ok(g.clone());
        }
        let g = Arc::new(self.bounds.gates(tau)?);
        self.gate_cache.insert(key, g.clone());
        Ok(g)
    }

    /// Gates of one group at slice `tau`, sweeping in the current direction.
    fn apply_group(&mut self, group: Group, tau: f64, report: &mut StepReport) -> Result<()> {
        let gates = self.gates_for(tau)?;
        let n = self.len();
        let start = match group {
            Group::Even => 0,
            Group::Odd => 1,
        };
        let mut links: Vec<usize> = (start..n - 1).step_by(2).collect();
        if !self.forward {
            links.reverse();
        }
        match group {
            Group::Even => {
                self.apply_left(&gates.left)?;
                self.apply_right(&gates.right)?;
            }
            Group::Odd => {
                self.apply_left_coupling(&gates.left_coupling)?;
                self.apply_right_coupling(&gates.right_coupling)?;
            }
        }
        for i in links {
            self.apply_bond(i, &gates.bond, report)?;
        }
        self.forward = !self.forward;
        Ok(())
    }
}

/// Multiply `op` into `site` (0-based) and renormalize.
///
/// Returns the norm `‖op|Ψ⟩‖` before renormalization; it is also folded into
/// the window's amplitude so that overlaps can be reported unnormalized.
pub fn apply_local_operator(w: &mut WindowState, site: usize, op: &DenseTensor) -> Result<f64> {
    let n = w.len();
    if site >= n {
        return Err(Error::InvalidArgument(format!("site {site} outside window of {n}")));
    }
    let opr = |t: &DenseTensor| -> Result<DenseTensor> {
        contract(op, t, &[("i", "p")])?.relabel("o", "p")?.permute(&["l", "p", "r"])
    };
    let norm;
    if site + 1 < n {
        // centre to the bond right of `site`; the site is then A-form
        w.move_to(site + 1)?;
        let m = opr(&w.tensors[site])?.scale_axis("r", &w.center)?;
        let svd = svd_truncate(&m, &["l", "p"], "_m", usize::MAX, SHIFT_TOL)?;
        norm = svd.s.iter().map(|s| s * s).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::Annihilated(norm));
        }
        w.tensors[site] = svd.u.relabel("_m", "r")?;
        let next = contract(&svd.v, &w.tensors[site + 1], &[("r", "l")])?;
        w.tensors[site + 1] = next.relabel("_m", "l")?.permute(&["l", "p", "r"])?;
        w.center = svd.s.iter().map(|s| s / norm).collect();
    } else {
        w.move_to(site)?;
        let m = opr(&w.tensors[site])?.scale_axis("l", &w.center)?;
        let svd = svd_truncate(&m, &["l"], "_m", usize::MAX, SHIFT_TOL)?;
        norm = svd.s.iter().map(|s| s * s).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::Annihilated(norm));
        }
        w.tensors[site] = svd.v.relabel("_m", "l")?;
        let prev = contract(&w.tensors[site - 1], &svd.u, &[("r", "l")])?;
        w.tensors[site - 1] = prev.relabel("_m", "r")?;
        w.center = svd.s.iter().map(|s| s / norm).collect();
    }
    w.amplitude *= norm;
    Ok(norm)
}

/// Advance by one step of `plan`.
pub fn tebd_step(w: &mut WindowState, plan: &TrotterPlan) -> Result<StepReport> {
    let mut report = StepReport::default();
    if plan.dt() == 0.0 {
        report.time = w.time;
        report.max_chi = w.max_chi();
        return Ok(report);
    }
    for &(group, c) in plan.layers() {
        w.apply_group(group, c * plan.dt(), &mut report)?;
    }
    w.time += plan.dt();
    report.time = w.time;
    report.max_chi = w.max_chi();
    if report.discarded_weight > DISCARD_ALARM {
        log::warn!(
            "t={:.4}: discarded weight {:.3e} above alarm threshold {:.1e}",
            w.time,
            report.discarded_weight,
            DISCARD_ALARM
        );
    }
    if log::log_enabled!(log::Level::Info) {
        let e = window_energy(w)?;
        log::info!(
            "t={:.4} discarded={:.3e} energy={:.12} max_chi={}",
            w.time,
            report.discarded_weight,
            e,
            report.max_chi
        );
    }
    Ok(report)
}

/// Insert `n_left` copies of `A` and `n_right` copies of `B` at the edges.
pub fn expand_window(w: &WindowState, n_left: usize, n_right: usize, psi: &InfiniteMps) -> Result<WindowState> {
    if psi.chi() != w.bounds.chi() || psi.lambda() != w.bounds.psi.lambda() {
        return Err(Error::InvalidArgument("expansion needs the window's own ground state".into()));
    }
    let mut out = w.clone();
    let mut tensors = vec![psi.a(); n_left];
    tensors.extend(out.tensors.drain(..));
    tensors.extend(std::iter::repeat(psi.b()).take(n_right));
    out.tensors = tensors;
    out.ortho += n_left;
    Ok(out)
}

/// `⟨X⟩` on every window site.
pub fn site_expectations(w: &WindowState, x: &DenseTensor) -> Result<Vec<C64>> {
    let n = w.len();
    let k = w.ortho;
    let mut out = vec![C64::new(0.0, 0.0); n];
    let rho = DenseTensor::diag("b", "k", &w.center.iter().map(|l| l * l).collect::<Vec<_>>());
    // sites left of the centre: right-environments grown leftwards from ρ
    let mut r = rho.clone();
    for i in (0..k).rev() {
        let t = transfer_apply(&r, &w.tensors[i], x, Side::Right)?;
        out[i] = t.trace()?;
        r = transfer_general(&r, &w.tensors[i], &w.tensors[i], None, Side::Right)?;
    }
    let mut l = rho;
    for i in k..n {
        let t = transfer_apply(&l, &w.tensors[i], x, Side::Left)?;
        out[i] = t.trace()?;
        l = transfer_general(&l, &w.tensors[i], &w.tensors[i], None, Side::Left)?;
    }
    Ok(out)
}

/// `⟨Ψ̃|H̃|Ψ̃⟩` including both exterior halves (with `e0` per site removed
/// there by construction).
pub fn window_energy(w: &WindowState) -> Result<f64> {
    let mpo = &w.bounds.mpo;
    let c = mpo.bond_dim();
    let tensors = w.plain_tensors();
    let mut env: Vec<DenseTensor> = w.bounds.left.components().to_vec();
    for t in &tensors {
        let chi = t.dim("r")?;
        let mut next = vec![DenseTensor::zeros(&["b", "k"], &[chi, chi]); c];
        for (alpha, e) in env.iter().enumerate() {
            for (beta, slot) in next.iter_mut().enumerate().take(alpha + 1) {
                if let Some(op) = mpo.get(alpha, beta) {
                    *slot = slot.add(&transfer_apply(e, t, op, Side::Left)?)?;
                }
            }
        }
        env = next;
    }
    let mut acc = C64::new(0.0, 0.0);
    for (l, f) in env.iter().zip(w.bounds.right.components()) {
        acc += l.data().iter().zip(f.data()).map(|(a, b)| a * b).sum::<C64>();
    }
    if acc.im.abs() > 1e-8 * acc.norm().max(1.0) {
        return Err(Error::NumericalInconsistency(format!(
            "window energy has imaginary part {:.3e}",
            acc.im
        )));
    }
    Ok(acc.re / w.norm_sqr())
}

/// `⟨bra|X_x|ket⟩` for every site `x`, exterior bonds closed with identities.
pub fn mixed_expectations(bra: &WindowState, ket: &WindowState, x: &DenseTensor) -> Result<Vec<C64>> {
    let n = bra.len();
    if ket.len() != n || bra.bounds.chi() != ket.bounds.chi() {
        return Err(Error::DimensionMismatch("windows differ in geometry".into()));
    }
    let bt = bra.plain_tensors();
    let kt = ket.plain_tensors();
    let chi = bra.bounds.chi();
    let mut rights = vec![DenseTensor::identity("b", "k", chi); n + 1];
    for i in (0..n).rev() {
        rights[i] = transfer_general(&rights[i + 1], &bt[i], &kt[i], None, Side::Right)?;
    }
    let mut l = DenseTensor::identity("b", "k", chi);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = transfer_general(&l, &bt[i], &kt[i], Some(x), Side::Left)?;
        out.push(t.data().iter().zip(rights[i + 1].data()).map(|(a, b)| a * b).sum());
        l = transfer_general(&l, &bt[i], &kt[i], None, Side::Left)?;
    }
    Ok(out)
}

/// Unitarity defect of every gate in `g`.
pub fn gate_unitarity(g: &GateSet) -> Result<f64> {
    let pairs: [(&DenseTensor, &[&str], &[&str]); 5] = [
        (&g.bond, &["o1", "o2"], &["i1", "i2"]),
        (&g.left, &["o"], &["i"]),
        (&g.left_coupling, &["ob", "op"], &["ib", "ip"]),
        (&g.right_coupling, &["op", "ob"], &["ip", "ib"]),
        (&g.right, &["o"], &["i"]),
    ];
    let mut worst = 0.0f64;
    for (t, r, c) in pairs {
        let m: Mat<C64> = t.to_matrix(r, c)?;
        worst = worst.max(crate::linalg::unitarity_defect(m.as_ref()));
    }
    Ok(worst)
}
