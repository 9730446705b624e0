//! Independent reference computations shared by the integration suites.
//! None of them goes through the environment, window or iTEBD code.

#![allow(dead_code)]

use ibc_core::linalg::svd_truncate;
use ibc_core::tensor::contract;
use ibc_core::{DenseTensor, C64};

// ---------------------------------------------------------------------------
// Exact diagonalization: open spin-1 chain of `l` sites with a spin-1/2 at
// each end, all couplings J = 1. The end spins screen the Haldane edge states,
// so the ground state is a unique singlet.
// ---------------------------------------------------------------------------

/// Lowest eigenvalue by plain Lanczos (no reorthogonalization; ghosts do not
/// affect the extremal value).
pub fn ed_ground_energy(l: usize) -> f64 {
    let dims: Vec<usize> = std::iter::once(2)
        .chain(std::iter::repeat(3).take(l))
        .chain(std::iter::once(2))
        .collect();
    let n = dims.len();
    let mut stride = vec![1usize; n];
    for i in (0..n - 1).rev() {
        stride[i] = stride[i + 1] * dims[i + 1];
    }
    let dim = stride[0] * dims[0];
    // m quantum number of local state k: m = S − k
    let spin = |d: usize| (d as f64 - 1.0) / 2.0;
    let apply = |x: &[f64], y: &mut [f64]| {
        y.iter_mut().for_each(|v| *v = 0.0);
        for idx in 0..dim {
            let xv = x[idx];
            if xv == 0.0 {
                continue;
            }
            for b in 0..n - 1 {
                let (da, db) = (dims[b], dims[b + 1]);
                let ka = (idx / stride[b]) % da;
                let kb = (idx / stride[b + 1]) % db;
                let (sa, sb) = (spin(da), spin(db));
                let (ma, mb) = (sa - ka as f64, sb - kb as f64);
                y[idx] += ma * mb * xv;
                // S+_a S-_b: ka → ka−1, kb → kb+1
                if ka > 0 && kb + 1 < db {
                    let amp = ((sa * (sa + 1.0) - ma * (ma + 1.0)) * (sb * (sb + 1.0) - mb * (mb - 1.0))).sqrt();
                    y[idx - stride[b] + stride[b + 1]] += 0.5 * amp * xv;
                }
                if kb > 0 && ka + 1 < da {
                    let amp = ((sa * (sa + 1.0) - ma * (ma - 1.0)) * (sb * (sb + 1.0) - mb * (mb + 1.0))).sqrt();
                    y[idx + stride[b] - stride[b + 1]] += 0.5 * amp * xv;
                }
            }
        }
    };
    // deterministic start with weight in every Sz sector
    let mut v: Vec<f64> = (0..dim).map(|i| (i as f64 * 0.7548776662).fract() - 0.5).collect();
    let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);
    let mut v_prev = vec![0.0; dim];
    let mut w = vec![0.0; dim];
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let mut last = f64::INFINITY;
    for it in 0..400 {
        apply(&v, &mut w);
        let a: f64 = w.iter().zip(&v).map(|(x, y)| x * y).sum();
        let b_prev = if it == 0 { 0.0 } else { beta[it - 1] };
        for i in 0..dim {
            w[i] -= a * v[i] + b_prev * v_prev[i];
        }
        alpha.push(a);
        let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        beta.push(b);
        let e = tridiagonal_min(&alpha, &beta[..alpha.len() - 1]);
        if (e - last).abs() < 1e-13 || b < 1e-12 {
            return e;
        }
        last = e;
        for i in 0..dim {
            v_prev[i] = v[i];
            v[i] = w[i] / b;
        }
    }
    last
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix by Sturm bisection.
fn tridiagonal_min(a: &[f64], b: &[f64]) -> f64 {
    let bound: f64 = a
        .iter()
        .enumerate()
        .map(|(i, x)| {
            x.abs() + if i > 0 { b[i - 1].abs() } else { 0.0 } + if i < b.len() { b[i].abs() } else { 0.0 }
        })
        .fold(0.0, f64::max);
    let count_below = |x: f64| {
        let mut c = 0;
        let mut q = a[0] - x;
        if q < 0.0 {
            c += 1;
        }
        for i in 1..a.len() {
            let qq = if q == 0.0 { 1e-300 } else { q };
            q = a[i] - x - b[i - 1] * b[i - 1] / qq;
            if q < 0.0 {
                c += 1;
            }
        }
        c
    };
    let (mut lo, mut hi) = (-bound - 1.0, bound + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Frozen output of [`ed_ground_energy`] for L = 8, 10, 12.
pub const ED_ENERGIES: [(usize, f64); 3] = [
    (8, -11.818821530619434),
    (10, -14.621737624550631),
    (12, -17.424686071777455),
];

/// Least-squares line through `E(L)/L` against `1/L`, evaluated at `1/L = 0`.
pub fn extrapolate_per_site(data: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = data.iter().map(|&(l, e)| (1.0 / l as f64, e / l as f64)).collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (sy - slope * sx) / n
}

/// Frozen output of [`extrapolate_per_site`] over [`ED_ENERGIES`].
pub const ED_E_INF: f64 = -1.401465071036359;

// ---------------------------------------------------------------------------
// Dense environment oracle: transfer maps as explicit loops over indices and
// the deflated geometric series for the effective Hamiltonian.
// ---------------------------------------------------------------------------

pub type Mat = Vec<Vec<C64>>;

pub fn zeros(n: usize) -> Mat {
    vec![vec![C64::new(0.0, 0.0); n]; n]
}

pub fn identity(n: usize) -> Mat {
    let mut m = zeros(n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = C64::new(1.0, 0.0);
    }
    m
}

/// `E'[b',k'] = Σ X[s',s] conj(A[b,s',b']) E[b,k] A[k,s,k']` by brute force.
pub fn dense_left_transfer(e: &Mat, a: &DenseTensor, x: Option<&DenseTensor>) -> Mat {
    let (chi, d) = (a.dims()[0], a.dims()[1]);
    let xs = |sp: usize, s: usize| match x {
        Some(x) => x.get(&[sp, s]),
        None => C64::new(if sp == s { 1.0 } else { 0.0 }, 0.0),
    };
    let mut out = zeros(chi);
    for bp in 0..chi {
        for kp in 0..chi {
            let mut acc = C64::new(0.0, 0.0);
            for sp in 0..d {
                for s in 0..d {
                    let xv = xs(sp, s);
                    if xv == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for b in 0..chi {
                        for k in 0..chi {
                            acc += xv * a.get(&[b, sp, bp]).conj() * e[b][k] * a.get(&[k, s, kp]);
                        }
                    }
                }
            }
            out[bp][kp] = acc;
        }
    }
    out
}

pub fn mat_add(a: &Mat, b: &Mat, s: f64) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, q)| r.iter().zip(q).map(|(x, y)| x + y * s).collect())
        .collect()
}

/// `Σ_{bk} ρ[b,k] X[b,k]` for diagonal ρ = diag(λ²).
pub fn weighted_trace(lambda: &[f64], x: &Mat) -> C64 {
    lambda.iter().enumerate().map(|(i, l)| x[i][i] * (l * l)).sum()
}

/// Left effective Hamiltonian from the truncated deflated geometric series
/// `H = Σ_n T^n(C − tr(ρC)·I)`, with the identity component projected out at
/// each order. Returns `(e0, H)`.
pub fn geometric_left_hamiltonian(a: &DenseTensor, lambda: &[f64], w: &[Vec<Option<DenseTensor>>], terms: usize) -> (f64, Mat) {
    let chi = lambda.len();
    let c = w.len();
    let id = identity(chi);
    // middle channels: one transfer from the identity channel
    let mut source = zeros(chi);
    for (k, row) in w.iter().enumerate().take(c - 1).skip(1) {
        if let Some(left) = &w[c - 1][k] {
            let ek = dense_left_transfer(&id, a, Some(left));
            if let Some(right) = &row[0] {
                source = mat_add(&source, &dense_left_transfer(&ek, a, Some(right)), 1.0);
            }
        }
    }
    if let Some(f) = &w[c - 1][0] {
        source = mat_add(&source, &dense_left_transfer(&id, a, Some(f)), 1.0);
    }
    let e0 = weighted_trace(lambda, &source).re;
    let project = |x: &Mat| mat_add(x, &id, -weighted_trace(lambda, x).re);
    let mut term = project(&mat_add(&source, &id, -e0));
    let mut total = term.clone();
    for _ in 0..terms {
        term = project(&dense_left_transfer(&term, a, None));
        total = mat_add(&total, &term, 1.0);
    }
    (e0, total)
}

// ---------------------------------------------------------------------------
// Conventional finite-chain TEBD: open chain, mixed canonical form with a
// diagonal centre, first-order even/odd splitting.
// ---------------------------------------------------------------------------

pub struct FiniteChain {
    pub tensors: Vec<DenseTensor>,
    pub center: Vec<f64>,
    /// Centre bond `k`: Λ sits between sites `k−1` and `k`.
    pub ortho: usize,
    pub chi_max: usize,
}

impl FiniteChain {
    /// Orthonormalize a raw open chain (edge bonds of size 1) and put the
    /// centre on bond `k`.
    pub fn from_raw(mut t: Vec<DenseTensor>, k: usize, chi_max: usize) -> Self {
        let n = t.len();
        for i in 0..k {
            let s = svd_truncate(&t[i], &["l", "p"], "_m", usize::MAX, 1e-15).unwrap();
            t[i] = s.u.relabel("_m", "r").unwrap();
            let sv = s.v.scale_axis("_m", &s.s).unwrap();
            t[i + 1] = contract(&sv, &t[i + 1], &[("r", "l")]).unwrap().relabel("_m", "l").unwrap();
        }
        for i in (k + 1..n).rev() {
            let s = svd_truncate(&t[i], &["l"], "_m", usize::MAX, 1e-15).unwrap();
            t[i] = s.v.relabel("_m", "l").unwrap();
            let us = s.u.scale_axis("_m", &s.s).unwrap();
            t[i - 1] = contract(&t[i - 1], &us, &[("r", "l")]).unwrap().relabel("_m", "r").unwrap();
        }
        // site k carries all weight; split it off to the left bond
        let s = svd_truncate(&t[k], &["l"], "_m", usize::MAX, 1e-15).unwrap();
        let norm = s.s.iter().map(|x| x * x).sum::<f64>().sqrt();
        t[k] = s.v.relabel("_m", "l").unwrap();
        t[k - 1] = contract(&t[k - 1], &s.u, &[("r", "l")]).unwrap().relabel("_m", "r").unwrap();
        Self {
            tensors: t,
            center: s.s.iter().map(|x| x / norm).collect(),
            ortho: k,
            chi_max,
        }
    }

    fn shift_right(&mut self) {
        let k = self.ortho;
        let m = self.tensors[k].scale_axis("l", &self.center).unwrap();
        let s = svd_truncate(&m, &["l", "p"], "_m", usize::MAX, 1e-15).unwrap();
        self.tensors[k] = s.u.relabel("_m", "r").unwrap();
        self.tensors[k + 1] = contract(&s.v, &self.tensors[k + 1], &[("r", "l")])
            .unwrap()
            .relabel("_m", "l")
            .unwrap()
            .permute(&["l", "p", "r"])
            .unwrap();
        self.center = s.s;
        self.ortho = k + 1;
    }

    fn shift_left(&mut self) {
        let k = self.ortho;
        let m = self.tensors[k - 1].scale_axis("r", &self.center).unwrap();
        let s = svd_truncate(&m, &["l"], "_m", usize::MAX, 1e-15).unwrap();
        self.tensors[k - 1] = s.v.relabel("_m", "l").unwrap();
        self.tensors[k - 2] = contract(&self.tensors[k - 2], &s.u, &[("r", "l")])
            .unwrap()
            .relabel("_m", "r")
            .unwrap();
        self.center = s.s;
        self.ortho = k - 1;
    }

    fn move_to(&mut self, k: usize) {
        while self.ortho < k {
            self.shift_right();
        }
        while self.ortho > k {
            self.shift_left();
        }
    }

    /// Gate `["o1","o2","i1","i2"]` on sites `(i, i+1)`.
    pub fn gate(&mut self, i: usize, g: &DenseTensor, svd_tol: f64) {
        self.move_to(i + 1);
        let a = self.tensors[i]
            .scale_axis("r", &self.center)
            .unwrap()
            .relabel_all(&[("p", "p1"), ("r", "_x")])
            .unwrap();
        let b = self.tensors[i + 1].clone().relabel_all(&[("p", "p2"), ("l", "_x")]).unwrap();
        let th = contract(&a, &b, &[("_x", "_x")]).unwrap();
        let th = contract(g, &th, &[("i1", "p1"), ("i2", "p2")])
            .unwrap()
            .relabel_all(&[("o1", "p1"), ("o2", "p2")])
            .unwrap()
            .permute(&["l", "p1", "p2", "r"])
            .unwrap();
        let s = svd_truncate(&th, &["l", "p1"], "_m", self.chi_max, svd_tol).unwrap();
        let norm = s.s.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.tensors[i] = s.u.relabel_all(&[("p1", "p"), ("_m", "r")]).unwrap();
        self.tensors[i + 1] = s.v.relabel_all(&[("_m", "l"), ("p2", "p")]).unwrap();
        self.center = s.s.iter().map(|x| x / norm).collect();
    }

    /// Apply `op` to `site` (not the last one) and renormalize; returns the
    /// norm removed.
    pub fn apply_op(&mut self, site: usize, op: &DenseTensor) -> f64 {
        self.move_to(site + 1);
        let t = contract(op, &self.tensors[site], &[("i", "p")])
            .unwrap()
            .relabel("o", "p")
            .unwrap()
            .permute(&["l", "p", "r"])
            .unwrap();
        let m = t.scale_axis("r", &self.center).unwrap();
        let s = svd_truncate(&m, &["l", "p"], "_m", usize::MAX, 1e-15).unwrap();
        let norm = s.s.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.tensors[site] = s.u.relabel("_m", "r").unwrap();
        self.tensors[site + 1] = contract(&s.v, &self.tensors[site + 1], &[("r", "l")])
            .unwrap()
            .relabel("_m", "l")
            .unwrap()
            .permute(&["l", "p", "r"])
            .unwrap();
        self.center = s.s.iter().map(|x| x / norm).collect();
        norm
    }

    /// One first-order step: even links then odd links, sweeping back and forth.
    pub fn step(&mut self, g: &DenseTensor, svd_tol: f64) {
        let n = self.tensors.len();
        for i in (0..n - 1).step_by(2) {
            self.gate(i, g, svd_tol);
        }
        let odd: Vec<usize> = (1..n - 1).step_by(2).collect();
        for &i in odd.iter().rev() {
            self.gate(i, g, svd_tol);
        }
    }

    /// `⟨X⟩` at `site`, with the centre moved next to it.
    pub fn expectation(&mut self, site: usize, x: &DenseTensor) -> f64 {
        let t = if site + 1 < self.tensors.len() {
            self.move_to(site + 1);
            self.tensors[site].scale_axis("r", &self.center).unwrap()
        } else {
            self.move_to(site);
            self.tensors[site].scale_axis("l", &self.center).unwrap()
        };
        let xt = contract(x, &t, &[("i", "p")]).unwrap().relabel("o", "p").unwrap();
        let v = contract(&t.conj(), &xt, &[("l", "l"), ("p", "p"), ("r", "r")]).unwrap();
        v.data()[0].re
    }
}
