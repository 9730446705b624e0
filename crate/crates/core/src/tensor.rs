//! Dense complex tensors with named indices.
//!
//! Data is stored row-major over the declared label order. Contractions
//! permute both operands into matrix form and hand the product to the
//! backend GEMM, so the output layout is always "free labels of `a`, then
//! free labels of `b`".

use faer::linalg::matmul::matmul;
use faer::traits::Conjugate;
use faer::{Accum, Mat, MatMut, MatRef, Par};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    labels: Vec<String>,
    dims: Vec<usize>,
    data: Vec<C64>,
}

fn check_labels(labels: &[String]) -> Result<()> {
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(Error::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

impl DenseTensor {
    pub fn new<S: AsRef<str>>(labels: &[S], dims: &[usize], data: Vec<C64>) -> Result<Self> {
        let labels: Vec<String> = labels.iter().map(|l| l.as_ref().to_owned()).collect();
        Self::from_parts(labels, dims.to_vec(), data)
    }

    pub fn from_parts(labels: Vec<String>, dims: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if labels.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} dimensions",
                labels.len(),
                dims.len()
            )));
        }
        check_labels(&labels)?;
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "dims {dims:?} need {len} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { labels, dims, data })
    }

    pub fn zeros<S: AsRef<str>>(labels: &[S], dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Self::new(labels, dims, vec![C64::new(0.0, 0.0); len]).expect("consistent zeros")
    }

    /// `n × n` identity with the given row and column labels.
    pub fn identity(row: &str, col: &str, n: usize) -> Self {
        let mut t = Self::zeros(&[row, col], &[n, n]);
        for i in 0..n {
            t.data[i * n + i] = C64::new(1.0, 0.0);
        }
        t
    }

    /// Rank-2 tensor from a row-major nested slice.
    pub fn from_rows(row: &str, col: &str, rows: &[Vec<C64>]) -> Result<Self> {
        let nr = rows.len();
        let nc = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nc) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(&[row, col], &[nr, nc], data)
    }

    /// Diagonal matrix with real entries.
    pub fn diag(row: &str, col: &str, values: &[f64]) -> Self {
        let n = values.len();
        let mut t = Self::zeros(&[row, col], &[n, n]);
        for (i, v) in values.iter().enumerate() {
            t.data[i * n + i] = C64::new(*v, 0.0);
        }
        t
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn axis(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::LabelNotFound(label.to_owned()))
    }

    pub fn dim(&self, label: &str) -> Result<usize> {
        Ok(self.dims[self.axis(label)?])
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        idx.iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| {
                debug_assert!(i < d);
                acc * d + i
            })
    }

    /// Element at a multi-index given in label order.
    pub fn get(&self, idx: &[usize]) -> C64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: C64) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    pub fn relabel(mut self, from: &str, to: &str) -> Result<Self> {
        let ax = self.axis(from)?;
        if from != to && self.has_label(to) {
            return Err(Error::DuplicateLabel(to.to_owned()));
        }
        self.labels[ax] = to.to_owned();
        Ok(self)
    }

    /// Rename several labels at once; the renaming is simultaneous, so swaps work.
    pub fn relabel_all(mut self, map: &[(&str, &str)]) -> Result<Self> {
        let axes = map
            .iter()
            .map(|(from, _)| self.axis(from))
            .collect::<Result<Vec<_>>>()?;
        for (ax, (_, to)) in axes.into_iter().zip(map) {
            self.labels[ax] = (*to).to_owned();
        }
        check_labels(&self.labels)?;
        Ok(self)
    }

    pub fn scale(&self, alpha: C64) -> Self {
        let mut out = self.clone();
        out.scale_mut(alpha);
        out
    }

    pub fn scale_mut(&mut self, alpha: C64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    /// Entries with real and imaginary parts uniform in [-1, 1).
    pub fn random<S: AsRef<str>, R: rand::Rng + ?Sized>(labels: &[S], dims: &[usize], rng: &mut R) -> Self {
        let n: usize = dims.iter().product();
        let data = (0..n)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        Self::new(labels, dims, data).expect("consistent shape")
    }

    /// Multiply every slice along `label` by the matching entry of `w`.
    pub fn scale_axis(&self, label: &str, w: &[f64]) -> Result<Self> {
        let ax = self.axis(label)?;
        if w.len() != self.dims[ax] {
            return Err(Error::DimensionMismatch(format!(
                "scale along `{label}`: {} weights for extent {}",
                w.len(),
                self.dims[ax]
            )));
        }
        let inner: usize = self.dims[ax + 1..].iter().product();
        let mut out = self.clone();
        for (n, x) in out.data.iter_mut().enumerate() {
            *x *= w[(n / inner) % w.len()];
        }
        Ok(out)
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x = x.conj());
        out
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// Bring `other` into this tensor's label order and check shapes.
    fn aligned<'a>(&self, other: &'a DenseTensor) -> Result<std::borrow::Cow<'a, DenseTensor>> {
        if self.labels == other.labels {
            if self.dims != other.dims {
                return Err(Error::DimensionMismatch(format!(
                    "{:?} vs {:?}",
                    self.dims, other.dims
                )));
            }
            return Ok(std::borrow::Cow::Borrowed(other));
        }
        let order: Vec<&str> = self.labels.iter().map(String::as_str).collect();
        let p = other.permute(&order)?;
        if p.dims != self.dims {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims, p.dims
            )));
        }
        Ok(std::borrow::Cow::Owned(p))
    }

    /// `self + alpha * other`, matching indices by label.
    pub fn axpy(&self, alpha: C64, other: &DenseTensor) -> Result<Self> {
        let o = self.aligned(other)?;
        let mut out = self.clone();
        out.data
            .iter_mut()
            .zip(o.data.iter())
            .for_each(|(x, y)| *x += alpha * y);
        Ok(out)
    }

    pub fn add(&self, other: &DenseTensor) -> Result<Self> {
        self.axpy(C64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<Self> {
        self.axpy(C64::new(-1.0, 0.0), other)
    }

    /// Max-abs entrywise difference, matching indices by label.
    pub fn max_abs_diff(&self, other: &DenseTensor) -> Result<f64> {
        let o = self.aligned(other)?;
        Ok(self
            .data
            .iter()
            .zip(o.data.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max))
    }

    /// Frobenius inner product `Σ conj(self)·other`.
    pub fn inner(&self, other: &DenseTensor) -> Result<C64> {
        let o = self.aligned(other)?;
        Ok(self
            .data
            .iter()
            .zip(o.data.iter())
            .map(|(x, y)| x.conj() * y)
            .sum())
    }

    /// Reorder indices to `order` (a permutation of the current labels).
    pub fn permute<S: AsRef<str>>(&self, order: &[S]) -> Result<Self> {
        if order.len() != self.rank() {
            return Err(Error::DimensionMismatch(format!(
                "permutation of length {} for rank {}",
                order.len(),
                self.rank()
            )));
        }
        let perm = order
            .iter()
            .map(|l| self.axis(l.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<String> = perm.iter().map(|&a| self.labels[a].clone()).collect();
        check_labels(&labels)?;
        if perm.iter().enumerate().all(|(i, &a)| i == a) {
            return Ok(self.clone());
        }
        let dims: Vec<usize> = perm.iter().map(|&a| self.dims[a]).collect();
        let data = permute_data(&self.data, &self.dims, &perm);
        Ok(Self { labels, dims, data })
    }

    /// Copy out as a backend matrix with the given row/column label groups.
    pub fn to_matrix<S: AsRef<str>>(&self, rows: &[S], cols: &[S]) -> Result<Mat<C64>> {
        let order: Vec<&str> = rows
            .iter()
            .chain(cols.iter())
            .map(|s| s.as_ref())
            .collect();
        let p = self.permute(&order)?;
        let nr: usize = p.dims[..rows.len()].iter().product();
        let nc: usize = p.dims[rows.len()..].iter().product();
        Ok(MatRef::from_row_major_slice(&p.data, nr, nc).to_owned())
    }

    /// Build from a matrix whose rows/columns fuse the given labelled indices.
    pub fn from_matrix<S: AsRef<str>>(
        m: MatRef<'_, C64>,
        rows: &[(S, usize)],
        cols: &[(S, usize)],
    ) -> Result<Self> {
        let nr: usize = rows.iter().map(|r| r.1).product();
        let nc: usize = cols.iter().map(|c| c.1).product();
        if m.nrows() != nr || m.ncols() != nc {
            return Err(Error::DimensionMismatch(format!(
                "matrix {}x{} for index groups {nr}x{nc}",
                m.nrows(),
                m.ncols()
            )));
        }
        let mut data = vec![C64::new(0.0, 0.0); nr * nc];
        for i in 0..nr {
            for j in 0..nc {
                data[i * nc + j] = m[(i, j)];
            }
        }
        let labels: Vec<String> = rows
            .iter()
            .chain(cols.iter())
            .map(|x| x.0.as_ref().to_owned())
            .collect();
        let dims: Vec<usize> = rows.iter().chain(cols.iter()).map(|x| x.1).collect();
        Self::from_parts(labels, dims, data)
    }

    /// Borrow a rank-2 tensor as a matrix (rows = first label).
    pub fn as_matrix(&self) -> Result<MatRef<'_, C64>> {
        if self.rank() != 2 {
            return Err(Error::DimensionMismatch(format!(
                "expected rank 2, got rank {}",
                self.rank()
            )));
        }
        Ok(MatRef::from_row_major_slice(
            &self.data,
            self.dims[0],
            self.dims[1],
        ))
    }

    /// Sum of the diagonal of a square rank-2 tensor.
    pub fn trace(&self) -> Result<C64> {
        let m = self.as_matrix()?;
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch("trace of non-square matrix".into()));
        }
        Ok((0..m.nrows()).map(|i| m[(i, i)]).sum())
    }

    /// Conjugate transpose of a rank-2 tensor, keeping the label order.
    pub fn adjoint(&self) -> Result<Self> {
        let m = self.as_matrix()?;
        let (r, c) = (m.nrows(), m.ncols());
        let mut data = vec![C64::new(0.0, 0.0); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = m[(i, j)].conj();
            }
        }
        Self::from_parts(self.labels.clone(), vec![c, r], data)
    }
}

fn permute_data(data: &[C64], dims: &[usize], perm: &[usize]) -> Vec<C64> {
    let rank = dims.len();
    let mut strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let out_dims: Vec<usize> = perm.iter().map(|&a| dims[a]).collect();
    let out_strides: Vec<usize> = perm.iter().map(|&a| strides[a]).collect();
    let mut out = Vec::with_capacity(data.len());
    if data.is_empty() {
        return out;
    }
    // Innermost output axis is walked directly; the rest with an odometer.
    let inner_dim = out_dims[rank - 1];
    let inner_stride = out_strides[rank - 1];
    let mut idx = vec![0usize; rank];
    let mut base = 0usize;
    loop {
        for k in 0..inner_dim {
            out.push(data[base + k * inner_stride]);
        }
        let mut ax = rank - 1;
        loop {
            if ax == 0 {
                return out;
            }
            ax -= 1;
            idx[ax] += 1;
            base += out_strides[ax];
            if idx[ax] < out_dims[ax] {
                break;
            }
            base -= out_strides[ax] * out_dims[ax];
            idx[ax] = 0;
        }
    }
}

/// Contract `a` with `b` over the listed `(label_in_a, label_in_b)` pairs.
///
/// The result carries the unpaired labels of `a` followed by those of `b`.
pub fn contract(a: &DenseTensor, b: &DenseTensor, pairs: &[(&str, &str)]) -> Result<DenseTensor> {
    let mut paired_a = Vec::with_capacity(pairs.len());
    let mut paired_b = Vec::with_capacity(pairs.len());
    for (la, lb) in pairs {
        let ia = a.axis(la)?;
        let ib = b.axis(lb)?;
        if a.dims[ia] != b.dims[ib] {
            return Err(Error::DimensionMismatch(format!(
                "`{la}` has extent {} but `{lb}` has extent {}",
                a.dims[ia], b.dims[ib]
            )));
        }
        paired_a.push(ia);
        paired_b.push(ib);
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|i| !paired_a.contains(i)).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|i| !paired_b.contains(i)).collect();

    let order_a: Vec<&str> = free_a
        .iter()
        .chain(paired_a.iter())
        .map(|&i| a.labels[i].as_str())
        .collect();
    let order_b: Vec<&str> = paired_b
        .iter()
        .chain(free_b.iter())
        .map(|&i| b.labels[i].as_str())
        .collect();
    let pa = a.permute(&order_a)?;
    let pb = b.permute(&order_b)?;

    let m: usize = free_a.iter().map(|&i| a.dims[i]).product();
    let n: usize = free_b.iter().map(|&i| b.dims[i]).product();
    let k: usize = paired_a.iter().map(|&i| a.dims[i]).product();

    let labels: Vec<String> = free_a
        .iter()
        .map(|&i| a.labels[i].clone())
        .chain(free_b.iter().map(|&i| b.labels[i].clone()))
        .collect();
    let dims: Vec<usize> = free_a
        .iter()
        .map(|&i| a.dims[i])
        .chain(free_b.iter().map(|&i| b.dims[i]))
        .collect();
    check_labels(&labels)?;

    let mut data = vec![C64::new(0.0, 0.0); m * n];
    if m > 0 && n > 0 {
        let lhs = MatRef::from_row_major_slice(&pa.data, m, k);
        let rhs = MatRef::from_row_major_slice(&pb.data, k, n);
        let dst = MatMut::from_row_major_slice_mut(&mut data, m, n);
        matmul(dst, Accum::Replace, lhs, rhs, C64::new(1.0, 0.0), Par::Seq);
    }
    Ok(DenseTensor { labels, dims, data })
}

/// Plain matrix product of two backend matrices.
pub(crate) fn matmul_owned<A, B>(a: MatRef<'_, A>, b: MatRef<'_, B>) -> Mat<C64>
where
    A: Conjugate<Canonical = C64>,
    B: Conjugate<Canonical = C64>,
{
    let mut out = Mat::<C64>::zeros(a.nrows(), b.ncols());
    matmul(out.as_mut(), Accum::Replace, a, b, C64::new(1.0, 0.0), Par::Seq);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn identity_contracts_to_identity() {
        let a = DenseTensor::identity("i", "j", 2);
        let b = DenseTensor::identity("k", "l", 2);
        let out = contract(&a, &b, &[("j", "k")]).unwrap();
        assert_eq!(out.labels(), &["i", "l"]);
        assert_eq!(out.max_abs_diff(&DenseTensor::identity("i", "l", 2)).unwrap(), 0.0);
    }

    #[test]
    fn full_contraction_gives_frobenius_norm() {
        // tr(M†M) for M = [[1,2],[3,4]] is 1 + 4 + 9 + 16.
        let m = DenseTensor::new(&["i", "j"], &[2, 2], vec![c(1.0), c(2.0), c(3.0), c(4.0)])
            .unwrap();
        let out = contract(&m.conj(), &m, &[("i", "i"), ("j", "j")]).unwrap();
        assert_eq!(out.rank(), 0);
        assert!((out.data()[0] - c(30.0)).norm() < 1e-14);
    }

    #[test]
    fn errors_on_unknown_label_and_extent_mismatch() {
        let a = DenseTensor::zeros(&["i", "j"], &[2, 3]);
        let b = DenseTensor::zeros(&["k", "l"], &[2, 3]);
        assert!(matches!(
            contract(&a, &b, &[("x", "k")]),
            Err(Error::LabelNotFound(_))
        ));
        assert!(matches!(
            contract(&a, &b, &[("j", "k")]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn constructor_rejects_bad_shapes() {
        assert!(DenseTensor::new(&["a", "a"], &[1, 1], vec![c(1.0)]).is_err());
        assert!(DenseTensor::new(&["a", "b"], &[2, 2], vec![c(1.0)]).is_err());
    }

    #[test]
    fn permute_matches_index_lookup() {
        let data: Vec<C64> = (0..24).map(|x| c(x as f64)).collect();
        let t = DenseTensor::new(&["a", "b", "c"], &[2, 3, 4], data).unwrap();
        let p = t.permute(&["c", "a", "b"]).unwrap();
        assert_eq!(p.dims(), &[4, 2, 3]);
        for a in 0..2 {
            for b in 0..3 {
                for cc in 0..4 {
                    assert_eq!(p.get(&[cc, a, b]), t.get(&[a, b, cc]));
                }
            }
        }
    }

    #[test]
    fn matrix_round_trip() {
        let data: Vec<C64> = (0..12).map(|x| C64::new(x as f64, -(x as f64))).collect();
        let t = DenseTensor::new(&["a", "b", "c"], &[2, 3, 2], data).unwrap();
        let m = t.to_matrix(&["b"], &["c", "a"]).unwrap();
        let back = DenseTensor::from_matrix(m.as_ref(), &[("b", 3)], &[("c", 2), ("a", 2)]).unwrap();
        assert_eq!(t.max_abs_diff(&back).unwrap(), 0.0);
    }
}
