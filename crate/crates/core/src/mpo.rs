//! Lower-triangular MPOs for nearest-neighbour chains.
//!
//! Local operators are rank-2 tensors labelled `["o", "i"]` (output, input),
//! so `op.get(&[a, b]) = ⟨a|op|b⟩`. The basis of a spin-S site is ordered
//! m = S, S−1, …, −S.
//!
//! Channel convention: the left boundary vector selects row `c−1`, the right
//! boundary vector selects column `0`, and a term `L(i)·R(i+1)` lives as
//! `w[c−1][k] = L`, `w[k][0] = R`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::tensor::{contract, DenseTensor};

pub fn op_identity(d: usize) -> DenseTensor {
    DenseTensor::identity("o", "i", d)
}

/// `a ⊗ b` as a two-site operator `["o1","o2","i1","i2"]`.
pub fn kron(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    let a = a.clone().relabel_all(&[("o", "o1"), ("i", "i1")])?;
    let b = b.clone().relabel_all(&[("o", "o2"), ("i", "i2")])?;
    contract(&a, &b, &[])?.permute(&["o1", "o2", "i1", "i2"])
}

/// Operator product `a · b`.
pub fn op_mul(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    let b = b.clone().relabel("o", "_m")?;
    let a = a.clone().relabel("i", "_m")?;
    contract(&a, &b, &[("_m", "_m")])
}

#[derive(Clone, Debug)]
pub struct SpinOperators {
    pub sx: DenseTensor,
    pub sy: DenseTensor,
    pub sz: DenseTensor,
    pub sp: DenseTensor,
    pub sm: DenseTensor,
}

impl SpinOperators {
    /// Spin operators for spin `two_s / 2`.
    pub fn new(two_s: usize) -> Self {
        let d = two_s + 1;
        let s = two_s as f64 / 2.0;
        let m = |i: usize| s - i as f64;
        let mut sz = DenseTensor::zeros(&["o", "i"], &[d, d]);
        let mut sp = DenseTensor::zeros(&["o", "i"], &[d, d]);
        for i in 0..d {
            sz.set(&[i, i], C64::new(m(i), 0.0));
            if i > 0 {
                // S+ |m⟩ = sqrt(s(s+1) − m(m+1)) |m+1⟩
                let mi = m(i);
                sp.set(&[i - 1, i], C64::new((s * (s + 1.0) - mi * (mi + 1.0)).sqrt(), 0.0));
            }
        }
        let sm = sp.adjoint().unwrap();
        let half = C64::new(0.5, 0.0);
        let sx = sp.add(&sm).unwrap().scale(half);
        let sy = sp.sub(&sm).unwrap().scale(C64::new(0.0, -0.5));
        Self { sx, sy, sz, sp, sm }
    }

    pub fn spin_one() -> Self {
        Self::new(2)
    }

    pub fn spin_half() -> Self {
        Self::new(1)
    }

    pub fn d(&self) -> usize {
        self.sz.dims()[0]
    }

    /// Look up an operator by name (`sx`, `sy`, `sz`, `sp`, `sm`, `id`).
    pub fn by_name(&self, name: &str) -> Option<DenseTensor> {
        Some(match name {
            "sx" => self.sx.clone(),
            "sy" => self.sy.clone(),
            "sz" => self.sz.clone(),
            "sp" => self.sp.clone(),
            "sm" => self.sm.clone(),
            "id" => op_identity(self.d()),
            _ => return None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Mpo {
    w: Vec<Vec<Option<DenseTensor>>>,
    d: usize,
}

impl Mpo {
    /// Build from an operator-valued matrix; `None` marks a zero entry.
    pub fn from_entries(w: Vec<Vec<Option<DenseTensor>>>, d: usize) -> Result<Self> {
        let c = w.len();
        if c < 2 {
            return Err(Error::Layout(format!("MPO bond dimension {c} < 2")));
        }
        for (i, row) in w.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Layout(format!("row {i} has {} entries, expected {c}", row.len())));
            }
            for (j, e) in row.iter().enumerate() {
                if let Some(op) = e {
                    if op.dims() != [d, d] || op.labels() != ["o", "i"] {
                        return Err(Error::DimensionMismatch(format!(
                            "MPO entry ({i},{j}) must be a {d}x{d} [o,i] operator"
                        )));
                    }
                    if j > i {
                        return Err(Error::Layout(format!("entry ({i},{j}) above the diagonal")));
                    }
                }
            }
        }
        let id = op_identity(d);
        for k in [0, c - 1] {
            match &w[k][k] {
                Some(op) if op.max_abs_diff(&id)? == 0.0 => {}
                _ => {
                    return Err(Error::Layout(format!("diagonal entry ({k},{k}) must be the identity")))
                }
            }
        }
        Ok(Self { w, d })
    }

    pub fn bond_dim(&self) -> usize {
        self.w.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, row: usize, col: usize) -> Option<&DenseTensor> {
        self.w[row][col].as_ref()
    }

    /// Entry as a dense operator (zero when absent).
    pub fn entry(&self, row: usize, col: usize) -> DenseTensor {
        self.w[row][col]
            .clone()
            .unwrap_or_else(|| DenseTensor::zeros(&["o", "i"], &[self.d, self.d]))
    }

    /// The on-site term `w[c−1][0]`.
    pub fn field(&self) -> Option<&DenseTensor> {
        self.get(self.bond_dim() - 1, 0)
    }

    /// The whole MPO as one tensor `["row","col","o","i"]`.
    pub fn to_tensor(&self) -> DenseTensor {
        let (c, d) = (self.bond_dim(), self.d);
        let mut data = Vec::with_capacity(c * c * d * d);
        for i in 0..c {
            for j in 0..c {
                data.extend_from_slice(self.entry(i, j).data());
            }
        }
        DenseTensor::new(&["row", "col", "o", "i"], &[c, c, d, d], data).unwrap()
    }

    /// Nearest-neighbour two-site term `Σ_k w[c−1][k] ⊗ w[k][0]` plus the
    /// on-site field split evenly over the two sites.
    pub fn bond_hamiltonian(&self) -> Result<DenseTensor> {
        let c = self.bond_dim();
        let id = op_identity(self.d);
        let mut h = DenseTensor::zeros(&["o1", "o2", "i1", "i2"], &[self.d; 4]);
        for k in 1..c - 1 {
            if let (Some(l), Some(r)) = (self.get(c - 1, k), self.get(k, 0)) {
                h = h.add(&kron(l, r)?)?;
            }
        }
        if let Some(f) = self.field() {
            let half = C64::new(0.5, 0.0);
            h = h.add(&kron(f, &id)?.scale(half))?;
            h = h.add(&kron(&id, f)?.scale(half))?;
        }
        Ok(h)
    }

    /// Dense open-chain Hamiltonian on `n` sites, obtained by contracting the
    /// boundary row `c−1` with `n` copies of W and the boundary column `0`.
    /// Returned as a `d^n × d^n` matrix in row-major order.
    pub fn assemble(&self, n: usize) -> Result<Vec<Vec<C64>>> {
        if n == 0 {
            return Err(Error::InvalidArgument("zero sites".into()));
        }
        let (c, d) = (self.bond_dim(), self.d);
        // blocks[a] is the d^k × d^k operator accumulated with open channel a.
        let mut dim = 1usize;
        let mut blocks: Vec<Option<Vec<C64>>> = vec![None; c];
        blocks[c - 1] = Some(vec![C64::new(1.0, 0.0)]);
        for _ in 0..n {
            let nd = dim * d;
            let mut next: Vec<Option<Vec<C64>>> = vec![None; c];
            for (a, blk) in blocks.iter().enumerate() {
                let Some(blk) = blk else { continue };
                for b in 0..=a {
                    let Some(op) = self.get(a, b) else { continue };
                    let tgt = next[b].get_or_insert_with(|| vec![C64::new(0.0, 0.0); nd * nd]);
                    for r1 in 0..dim {
                        for c1 in 0..dim {
                            let x = blk[r1 * dim + c1];
                            if x == C64::new(0.0, 0.0) {
                                continue;
                            }
                            for r2 in 0..d {
                                for c2 in 0..d {
                                    tgt[(r1 * d + r2) * nd + c1 * d + c2] += x * op.get(&[r2, c2]);
                                }
                            }
                        }
                    }
                }
            }
            blocks = next;
            dim = nd;
        }
        let flat = blocks[0].take().unwrap_or_else(|| vec![C64::new(0.0, 0.0); dim * dim]);
        Ok(flat.chunks(dim).map(|r| r.to_vec()).collect())
    }
}

/// MPO for `Σ_i Σ_k L_k(i) R_k(i+1) + Σ_i F(i)`; bond dimension `2 + #terms`.
pub fn nn_mpo(terms: &[(DenseTensor, DenseTensor)], field: Option<DenseTensor>) -> Result<Mpo> {
    if terms.is_empty() && field.is_none() {
        return Err(Error::InvalidArgument("MPO needs at least one term or a field".into()));
    }
    let d = terms
        .first()
        .map(|(l, _)| l.dims()[0])
        .or_else(|| field.as_ref().map(|f| f.dims()[0]))
        .unwrap();
    let c = terms.len() + 2;
    let mut w: Vec<Vec<Option<DenseTensor>>> = vec![vec![None; c]; c];
    w[0][0] = Some(op_identity(d));
    w[c - 1][c - 1] = Some(op_identity(d));
    for (k, (l, r)) in terms.iter().enumerate() {
        w[c - 1][k + 1] = Some(l.clone());
        w[k + 1][0] = Some(r.clone());
    }
    w[c - 1][0] = field;
    Mpo::from_entries(w, d)
}

/// Spin-1 antiferromagnetic Heisenberg chain `Σ S_i·S_{i+1}` (5×5 W).
pub fn heisenberg_s1_mpo() -> Mpo {
    heisenberg_mpo(2, 1.0, 0.0).expect("static construction")
}

/// Spin-S Heisenberg chain `J Σ S_i·S_{i+1} + h Σ S^z_i`.
pub fn heisenberg_mpo(two_s: usize, coupling: f64, field: f64) -> Result<Mpo> {
    let s = SpinOperators::new(two_s);
    let j = C64::new(coupling, 0.0);
    let terms = vec![
        (s.sx.scale(j), s.sx.clone()),
        (s.sy.scale(j), s.sy.clone()),
        (s.sz.scale(j), s.sz.clone()),
    ];
    let f = (field != 0.0).then(|| s.sz.scale(C64::new(field, 0.0)));
    nn_mpo(&terms, f)
}

/// Spin-1/2 transverse-field Ising chain `J Σ S^z_i S^z_{i+1} + h Σ S^x_i`.
pub fn tfi_mpo(coupling: f64, field: f64) -> Result<Mpo> {
    let s = SpinOperators::spin_half();
    let terms = vec![(s.sz.scale(C64::new(coupling, 0.0)), s.sz.clone())];
    let f = (field != 0.0).then(|| s.sx.scale(C64::new(field, 0.0)));
    nn_mpo(&terms, f)
}
