//! Dense primitives shared by every other module: row-major matrices,
//! embeddings, similarity matrices, labels, and the softmax / KL / one-hot
//! building blocks of the objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Display names of the five severity grades, indexed by class.
pub const GRADE_NAMES: [&str; 5] = ["normal", "mild", "moderate", "severe", "proliferative"];

/// Floor applied to the second argument of [`kl_divergence_row`].
pub const KL_EPS: f64 = 1e-12;

/// Tolerance on the unit sum of probability vectors.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Row-major dense `f64` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::invalid(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::invalid(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (p, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                for (ov, &bv) in o.iter_mut().zip(other.row(p)) {
                    *ov += av * bv;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_transposed(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::invalid(format!(
                "matmul {}x{} by ({}x{})ᵀ",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn transposed_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::invalid(format!(
                "matmul ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for p in 0..self.rows {
            let a = self.row(p);
            let b = other.row(p);
            for (i, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let o = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (ov, &bv) in o.iter_mut().zip(b) {
                    *ov += av * bv;
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Selects a subset of rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Image (M×D) or class-text (K×D) embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix(Matrix);

impl EmbeddingMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::invalid("embedding matrix needs rows >= 1 and dim >= 1"));
        }
        if !values.is_finite() {
            return Err(Error::invalid("embedding matrix has non-finite entries"));
        }
        Ok(Self(values))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Rescales every row to unit Euclidean length; zero rows are left as is.
    pub fn normalized(&self) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.rows() {
            let row = m.row_mut(i);
            let norm = dot(row, row).sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Self(m)
    }
}

/// M×K image-to-class similarity scores, either raw or calibrated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    values: Matrix,
    calibrated: bool,
}

impl SimilarityMatrix {
    pub fn new(values: Matrix, calibrated: bool) -> Result<Self> {
        if values.rows() == 0 {
            return Err(Error::invalid("similarity matrix needs at least one row"));
        }
        if values.cols() < 2 {
            return Err(Error::invalid("similarity matrix needs at least two classes"));
        }
        if !values.is_finite() {
            return Err(Error::invalid("similarity matrix has non-finite entries"));
        }
        Ok(Self { values, calibrated })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, false)
    }

    pub fn m(&self) -> usize {
        self.values.rows()
    }

    pub fn k(&self) -> usize {
        self.values.cols()
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibrated
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }
}

/// 0-based class index per sample, validated against a class count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    k: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some((i, &c)) = labels.iter().enumerate().find(|(_, &c)| c >= k) {
            return Err(Error::invalid(format!(
                "label {c} at position {i} out of range for {k} classes"
            )));
        }
        Ok(Self { labels, k })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn select(&self, idx: &[usize]) -> LabelVector {
        LabelVector {
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            k: self.k,
        }
    }

    /// Number of samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &c in &self.labels {
            counts[c] += 1;
        }
        counts
    }
}

/// `S = X · Tᵀ`: inner products of every image embedding with every class embedding.
pub fn similarity_matrix(images: &EmbeddingMatrix, texts: &EmbeddingMatrix) -> Result<SimilarityMatrix> {
    if images.dim() != texts.dim() {
        return Err(Error::invalid(format!(
            "image dim {} != text dim {}",
            images.dim(),
            texts.dim()
        )));
    }
    SimilarityMatrix::new(images.matrix().matmul_transposed(texts.matrix())?, false)
}

/// Numerically stable softmax of `row / tau`, written into `out`.
pub fn softmax_into(row: &[f64], tau: f64, out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = ((v - max) / tau).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// `log softmax(row / tau)`, stable for large magnitudes.
pub fn log_softmax(row: &[f64], tau: f64) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|&v| ((v - max) / tau).exp()).sum::<f64>().ln();
    row.iter().map(|&v| (v - max) / tau - lse).collect()
}

/// Row-wise softmax at temperature `tau`. The result is row-stochastic.
pub fn softmax_rows(s: &SimilarityMatrix, tau: f64) -> Result<Matrix> {
    check_tau(tau)?;
    let mut out = Matrix::zeros(s.m(), s.k());
    for i in 0..s.m() {
        softmax_into(s.row(i), tau, out.row_mut(i));
    }
    Ok(out)
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

/// `KL(p ‖ q) = Σ p·ln(p/q)` with `0·ln 0 = 0` and `q` floored at [`KL_EPS`].
pub fn kl_divergence_row(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "distribution lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    for (name, v) in [("p", p), ("q", q)] {
        if v.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::invalid(format!("{name} has negative or non-finite entries")));
        }
        let total: f64 = v.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::invalid(format!("{name} sums to {total}, not 1")));
        }
    }
    let kl = p
        .iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi.max(KL_EPS)).ln())
        .sum::<f64>();
    // Rounding can leave tiny negatives when p == q.
    Ok(kl.max(0.0))
}

/// Binary M×K matrix with a single 1 per row at the sample's class.
pub fn one_hot(labels: &LabelVector, k: usize) -> Result<Matrix> {
    if labels.k() > k {
        if let Some(&c) = labels.as_slice().iter().find(|&&c| c >= k) {
            return Err(Error::invalid(format!("label {c} out of range for {k} classes")));
        }
    }
    let mut y = Matrix::zeros(labels.len(), k);
    for (i, &c) in labels.as_slice().iter().enumerate() {
        y.set(i, c, 1.0);
    }
    Ok(y)
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function `1 / (1 + e^{-x})`, stable in both tails.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn emb(rows: &[&[f64]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn similarity_identity() {
        let i2 = emb(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let s = similarity_matrix(&i2, &i2).unwrap();
        assert_eq!(s.values().data(), &[1.0, 0.0, 0.0, 1.0]);
        assert!(!s.is_calibrated());
    }

    #[test]
    fn similarity_hand_inner_products() {
        let s = similarity_matrix(&emb(&[&[1.0, 2.0]]), &emb(&[&[3.0, 4.0], &[-1.0, 0.0]])).unwrap();
        assert_eq!(s.row(0), &[11.0, -1.0]);
    }

    #[test]
    fn similarity_zero_images() {
        let x = EmbeddingMatrix::new(Matrix::zeros(3, 4)).unwrap();
        let t = EmbeddingMatrix::new(Matrix::new(5, 4, (0..20).map(f64::from).collect()).unwrap()).unwrap();
        let s = similarity_matrix(&x, &t).unwrap();
        assert_eq!((s.m(), s.k()), (3, 5));
        assert!(s.values().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn similarity_dim_mismatch() {
        let err = similarity_matrix(&emb(&[&[1.0, 2.0]]), &emb(&[&[1.0], &[2.0]]));
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn embedding_rejects_nan() {
        assert!(EmbeddingMatrix::from_rows(&[[f64::NAN]]).is_err());
        assert!(EmbeddingMatrix::new(Matrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn softmax_examples() {
        let s = SimilarityMatrix::from_rows(&[
            vec![0.0, 0.0, 0.0],
            vec![1000.0, 1000.0, -f64::MAX / 2.0],
            vec![2f64.ln(), 0.0, -1e308],
        ])
        .unwrap();
        let p = softmax_rows(&s, 1.0).unwrap();
        for v in p.row(0) {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(p.get(1, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(1, 1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(2, 0), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(2, 1), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn softmax_two_column_examples() {
        let s = SimilarityMatrix::from_rows(&[[1000.0, 1000.0], [2f64.ln(), 0.0]]).unwrap();
        let p = softmax_rows(&s, 1.0).unwrap();
        assert_eq!(p.row(0), &[0.5, 0.5]);
        assert_abs_diff_eq!(p.get(1, 0), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn softmax_rejects_bad_tau() {
        let s = SimilarityMatrix::from_rows(&[[0.0, 1.0]]).unwrap();
        assert!(softmax_rows(&s, 0.0).is_err());
        assert!(softmax_rows(&s, -1.0).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence_row(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        let uniform = [0.2; 5];
        let kl = kl_divergence_row(&[0.0, 0.0, 1.0, 0.0, 0.0], &uniform).unwrap();
        assert_abs_diff_eq!(kl, 5f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(kl, 1.609438, epsilon = 1e-6);
        let kl = kl_divergence_row(&[0.5, 0.5], &[0.75, 0.25]).unwrap();
        assert_abs_diff_eq!(kl, 0.5 * (2.0f64 / 3.0).ln() + 0.5 * 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(kl, 0.143841, epsilon = 1e-6);
    }

    #[test]
    fn kl_floors_q() {
        let kl = kl_divergence_row(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(kl, 0.5 * 0.5f64.ln() + 0.5 * (0.5 / KL_EPS).ln(), epsilon = 1e-12);
    }

    #[test]
    fn kl_rejects_bad_input() {
        assert!(kl_divergence_row(&[1.0], &[0.5, 0.5]).is_err());
        assert!(kl_divergence_row(&[0.6, 0.6], &[0.5, 0.5]).is_err());
        assert!(kl_divergence_row(&[1.5, -0.5], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn one_hot_examples() {
        let y = one_hot(&LabelVector::new(vec![1], 3).unwrap(), 3).unwrap();
        assert_eq!(y.data(), &[0.0, 1.0, 0.0]);
        let y = one_hot(&LabelVector::new(vec![0, 0, 2], 3).unwrap(), 3).unwrap();
        assert_eq!(y.data(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let y = one_hot(&LabelVector::new(vec![4], 5).unwrap(), 5).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn one_hot_rejects_out_of_range() {
        assert!(LabelVector::new(vec![3], 3).is_err());
        let labels = LabelVector::new(vec![0, 4], 5).unwrap();
        assert!(one_hot(&labels, 3).is_err());
    }

    #[test]
    fn softplus_and_sigmoid_tails() {
        assert_abs_diff_eq!(softplus(0.0), 2f64.ln(), epsilon = 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
    }

    #[test]
    fn matrix_products_agree() {
        let a = Matrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Matrix::new(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.data(), &[58.0, 64.0, 139.0, 154.0]);
        assert_eq!(a.matmul_transposed(&b.transpose()).unwrap(), ab);
        assert_eq!(a.transpose().transposed_matmul(&b).unwrap(), ab);
    }

    fn row_strategy() -> impl Strategy<Value = Vec<f64>> {
        (2usize..7).prop_flat_map(|k| prop::collection::vec(-50.0f64..50.0, k))
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one_and_shift_invariant(row in row_strategy(), shift in -1e3f64..1e3, tau in 0.1f64..5.0) {
            let s = SimilarityMatrix::from_rows(std::slice::from_ref(&row)).unwrap();
            let shifted = SimilarityMatrix::from_rows(&[row.iter().map(|v| v + shift).collect::<Vec<_>>()]).unwrap();
            let p = softmax_rows(&s, tau).unwrap();
            let q = softmax_rows(&shifted, tau).unwrap();
            prop_assert!((p.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for (a, b) in p.row(0).iter().zip(q.row(0)) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn kl_is_nonnegative(a in row_strategy(), b_seed in row_strategy()) {
            let k = a.len().min(b_seed.len());
            let p = softmax_rows(&SimilarityMatrix::from_rows(&[a[..k].to_vec()]).unwrap(), 1.0).unwrap();
            let q = softmax_rows(&SimilarityMatrix::from_rows(&[b_seed[..k].to_vec()]).unwrap(), 1.0).unwrap();
            let kl = kl_divergence_row(p.row(0), q.row(0)).unwrap();
            prop_assert!(kl >= 0.0);
            prop_assert!(kl_divergence_row(p.row(0), p.row(0)).unwrap() < 1e-12);
        }

        #[test]
        fn similarity_is_bilinear(vals in prop::collection::vec(-3.0f64..3.0, 12), c in -4.0f64..4.0) {
            let x = EmbeddingMatrix::new(Matrix::new(2, 3, vals[..6].to_vec()).unwrap()).unwrap();
            let t = EmbeddingMatrix::new(Matrix::new(2, 3, vals[6..].to_vec()).unwrap()).unwrap();
            let xc = EmbeddingMatrix::new(x.matrix().scale(c)).unwrap();
            let s = similarity_matrix(&x, &t).unwrap();
            let sc = similarity_matrix(&xc, &t).unwrap();
            for (a, b) in s.values().data().iter().zip(sc.values().data()) {
                prop_assert!((a * c - b).abs() < 1e-9);
            }
        }

        #[test]
        fn one_hot_rows_sum_to_one(labels in prop::collection::vec(0usize..6, 1..20)) {
            let y = one_hot(&LabelVector::new(labels, 6).unwrap(), 6).unwrap();
            for r in y.iter_rows() {
                prop_assert_eq!(r.iter().sum::<f64>(), 1.0);
            }
        }
    }
}
