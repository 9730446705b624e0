//! Truncated SVD and Hermitian matrix exponentials on top of [`DenseTensor`].

use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::tensor::{matmul_owned, DenseTensor};

/// Singular values closer than this (relative to the larger one) are treated as
/// one degenerate block when deciding where to cut.
pub const DEGENERACY_RTOL: f64 = 1e-8;

/// Hermiticity tolerance accepted by [`hermitian_expm`].
pub const HERMITICITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct SvdResult {
    /// Left isometry: row labels followed by the new bond label.
    pub u: DenseTensor,
    /// Kept singular values, descending.
    pub s: Vec<f64>,
    /// Right isometry: the new bond label followed by the column labels.
    pub v: DenseTensor,
    /// Squared weight of the dropped values over the total squared weight.
    pub discarded_weight: f64,
    /// Sum of squares of all singular values before truncation.
    pub total_weight: f64,
}

impl SvdResult {
    pub fn kept(&self) -> usize {
        self.s.len()
    }
}

/// Number of singular values to keep.
///
/// `chi_max` and the relative cutoff `tol` are combined by taking the stricter
/// one; a degenerate block straddling the cut is kept whole when it fits under
/// `chi_max` and dropped whole otherwise.
pub fn truncation_rank(s: &[f64], chi_max: usize, tol: f64) -> usize {
    if s.is_empty() {
        return 0;
    }
    let s_max = s[0];
    if s_max <= 0.0 {
        return 1;
    }
    let n_tol = s.iter().take_while(|&&x| x >= tol * s_max).count().max(1);
    let k0 = chi_max.min(n_tol).min(s.len());
    let degenerate = |i: usize| s[i - 1] - s[i] <= DEGENERACY_RTOL * s[i - 1];
    if k0 == s.len() || !degenerate(k0) {
        return k0;
    }
    let mut hi = k0;
    while hi < s.len() && degenerate(hi) {
        hi += 1;
    }
    if hi <= chi_max {
        return hi;
    }
    let mut lo = k0;
    while lo > 0 && degenerate(lo) {
        lo -= 1;
    }
    if lo == 0 {
        k0
    } else {
        lo
    }
}

/// Truncated SVD of `m` with `rows` fused into the row index and every other
/// label (in tensor order) into the column index.
pub fn svd_truncate(
    m: &DenseTensor,
    rows: &[&str],
    bond: &str,
    chi_max: usize,
    tol: f64,
) -> Result<SvdResult> {
    if chi_max < 1 {
        return Err(Error::InvalidChi);
    }
    if m.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    for r in rows {
        m.axis(r)?;
    }
    let cols: Vec<&str> = m
        .labels()
        .iter()
        .map(String::as_str)
        .filter(|l| !rows.contains(l))
        .collect();
    let row_dims: Vec<(&str, usize)> = rows.iter().map(|&r| (r, m.dim(r).unwrap())).collect();
    let col_dims: Vec<(&str, usize)> = cols.iter().map(|&c| (c, m.dim(c).unwrap())).collect();
    let mat = m.to_matrix(rows, &cols)?;
    if mat.nrows() == 0 || mat.ncols() == 0 {
        return Err(Error::EmptyMatrix);
    }

    let svd = mat
        .thin_svd()
        .map_err(|e| Error::Backend(format!("svd: {e:?}")))?;
    let s_all: Vec<f64> = svd.S().column_vector().iter().map(|x| x.re).collect();
    let total: f64 = s_all.iter().map(|x| x * x).sum();
    let k = truncation_rank(&s_all, chi_max, tol);
    let discarded: f64 = s_all[k..].iter().map(|x| x * x).sum();
    let discarded_weight = if total > 0.0 { discarded / total } else { 0.0 };

    let u = svd.U().subcols(0, k);
    // Right factor as rows: V† restricted to the kept values.
    let vh = svd.V().subcols(0, k).adjoint().to_owned();

    let mut u_rows = row_dims.clone();
    u_rows.truncate(rows.len());
    let u_t = DenseTensor::from_matrix(u, &u_rows, &[(bond, k)])?;
    let v_t = DenseTensor::from_matrix(vh.as_ref(), &[(bond, k)], &col_dims)?;

    Ok(SvdResult {
        u: u_t,
        s: s_all[..k].to_vec(),
        v: v_t,
        discarded_weight,
        total_weight: total,
    })
}

/// Largest entrywise deviation of a square matrix from its adjoint.
pub fn hermiticity_defect(m: MatRef<'_, C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(m + m†)/2`.
pub fn symmetrize(m: MatRef<'_, C64>) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<C64>,
}

impl HermitianEigen {
    pub fn new(m: MatRef<'_, C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "eigendecomposition of {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        let defect = hermiticity_defect(m);
        if defect > HERMITICITY_TOL {
            return Err(Error::NonHermitian(defect));
        }
        let sym = symmetrize(m);
        let evd = sym
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Backend(format!("eigh: {e:?}")))?;
        let values = evd.S().column_vector().iter().map(|x| x.re).collect();
        Ok(Self {
            values,
            vectors: evd.U().to_owned(),
        })
    }

    /// `V · diag(f(λ)) · V†`.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> Mat<C64> {
        let n = self.values.len();
        let fv: Vec<C64> = self.values.iter().map(|&x| f(x)).collect();
        let scaled = Mat::from_fn(n, n, |i, j| self.vectors[(i, j)] * fv[j]);
        matmul_owned(scaled.as_ref(), self.vectors.adjoint())
    }

    /// `exp(theta · H)`.
    pub fn expm(&self, theta: C64) -> Mat<C64> {
        self.map(|x| (theta * x).exp())
    }
}

/// `exp(theta · h)` for a Hermitian operator.
///
/// `rows` names the output indices of `h`; the remaining labels are its input
/// indices. The result carries the same labels in the same order as `h`.
pub fn hermitian_expm(h: &DenseTensor, rows: &[&str], theta: C64) -> Result<DenseTensor> {
    let cols: Vec<&str> = h
        .labels()
        .iter()
        .map(String::as_str)
        .filter(|l| !rows.contains(l))
        .collect();
    let m = h.to_matrix(rows, &cols)?;
    let eig = HermitianEigen::new(m.as_ref())?;
    let out = eig.expm(theta);
    let row_dims: Vec<(&str, usize)> = rows.iter().map(|&r| Ok((r, h.dim(r)?))).collect::<Result<_>>()?;
    let col_dims: Vec<(&str, usize)> = cols.iter().map(|&c| Ok((c, h.dim(c)?))).collect::<Result<_>>()?;
    let t = DenseTensor::from_matrix(out.as_ref(), &row_dims, &col_dims)?;
    let order: Vec<&str> = h.labels().iter().map(String::as_str).collect();
    t.permute(&order)
}

/// Thin QR with `rows` fused into the row index: `m = Q·R`, `Q` carrying
/// `rows + [bond]` and `R` carrying `[bond] + cols`.
pub fn qr_thin(m: &DenseTensor, rows: &[&str], bond: &str) -> Result<(DenseTensor, DenseTensor)> {
    let (row_dims, col_dims) = split_dims(m, rows)?;
    let cols: Vec<&str> = col_dims.iter().map(|c| c.0).collect();
    let mat = m.to_matrix(rows, &cols)?;
    let k = mat.nrows().min(mat.ncols());
    let qr = mat.qr();
    let q = qr.compute_thin_Q();
    let r = qr.thin_R().to_owned();
    Ok((
        DenseTensor::from_matrix(q.as_ref(), &row_dims, &[(bond, k)])?,
        DenseTensor::from_matrix(r.as_ref(), &[(bond, k)], &col_dims)?,
    ))
}

/// Thin LQ with `rows` fused into the row index: `m = L·Q`, `Q` row-isometric
/// and carrying `[bond] + cols`.
pub fn lq_thin(m: &DenseTensor, rows: &[&str], bond: &str) -> Result<(DenseTensor, DenseTensor)> {
    let (row_dims, col_dims) = split_dims(m, rows)?;
    let cols: Vec<&str> = col_dims.iter().map(|c| c.0).collect();
    let mat = m.to_matrix(rows, &cols)?;
    let k = mat.nrows().min(mat.ncols());
    let qr = mat.adjoint().qr();
    let q = qr.compute_thin_Q().adjoint().to_owned();
    let l = qr.thin_R().adjoint().to_owned();
    Ok((
        DenseTensor::from_matrix(l.as_ref(), &row_dims, &[(bond, k)])?,
        DenseTensor::from_matrix(q.as_ref(), &[(bond, k)], &col_dims)?,
    ))
}

type Dims<'a> = Vec<(&'a str, usize)>;

fn split_dims<'a>(m: &'a DenseTensor, rows: &[&'a str]) -> Result<(Dims<'a>, Dims<'a>)> {
    let row_dims = rows.iter().map(|&r| Ok((r, m.dim(r)?))).collect::<Result<_>>()?;
    let col_dims = m
        .labels()
        .iter()
        .map(String::as_str)
        .filter(|l| !rows.contains(l))
        .map(|c| (c, m.dim(c).unwrap()))
        .collect();
    Ok((row_dims, col_dims))
}

/// `‖U†U − I‖_max`.
pub fn unitarity_defect(u: MatRef<'_, C64>) -> f64 {
    let p = matmul_owned(u.adjoint(), u);
    let mut worst = 0.0f64;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((p[(i, j)] - target).norm());
        }
    }
    worst
}
