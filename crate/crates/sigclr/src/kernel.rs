//! Dense linear-algebra and scalar primitives every other module builds on.
//!
//! All kernels are pure functions over `f64` data. Every reduction runs in
//! ascending index order, so identical inputs give bit-identical outputs
//! across runs and thread counts.

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise `self += other`. Shapes must match.
    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "add {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Largest absolute entry difference; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Dot product reduced in ascending index order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Matrix product with a fixed reduction order: for each output entry, the
/// sum over `k` accumulates in ascending `k`. The i-k-j loop keeps that
/// order while leaving the innermost loop contiguous.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut c = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let crow = &mut c.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            for j in 0..b.cols {
                crow[j] += aik * brow[j];
            }
        }
    }
    Ok(c)
}

/// L2 norm of each row, reduced in ascending index order.
pub fn row_norms(m: &Matrix) -> Vec<f64> {
    (0..m.rows()).map(|i| dot(m.row(i), m.row(i)).sqrt()).collect()
}

/// Divide each row by `max(norm, eps)`. Zero rows stay zero instead of
/// turning into NaN; callers that must reject them check norms first.
pub fn l2_normalize_rows(m: &Matrix, eps: f64) -> Matrix {
    assert!(eps > 0.0, "eps must be positive");
    let mut out = m.clone();
    for i in 0..m.rows() {
        let norm = dot(m.row(i), m.row(i)).sqrt();
        let denom = norm.max(eps);
        for v in out.row_mut(i) {
            *v /= denom;
        }
    }
    out
}

/// log(sigmoid(x)) in the stable branch form `min(x, 0) - log1p(e^{-|x|})`.
/// Never overflows for finite input.
pub fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

/// sigmoid(x) computed through the stable log form.
pub fn sigmoid(x: f64) -> f64 {
    log_sigmoid(x).exp()
}

/// Max-shifted log(sum(exp(v))).
pub fn logsumexp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Shape("logsumexp of empty vector".into()));
    }
    let m = v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut s = 0.0;
    for &x in v {
        s += (x - m).exp();
    }
    Ok(m + s.ln())
}

/// Central-difference gradient of a scalar function of a matrix:
/// `(f(x + h e) - f(x - h e)) / 2h` per entry.
pub fn finite_diff_grad<F>(mut f: F, at: &Matrix, h: f64) -> Matrix
where
    F: FnMut(&Matrix) -> f64,
{
    assert!(h > 0.0, "step must be positive");
    let mut grad = Matrix::zeros(at.rows(), at.cols());
    let mut probe = at.clone();
    for idx in 0..at.data.len() {
        let orig = probe.data[idx];
        probe.data[idx] = orig + h;
        let fp = f(&probe);
        probe.data[idx] = orig - h;
        let fm = f(&probe);
        probe.data[idx] = orig;
        grad.data[idx] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Central-difference derivative of a scalar function of a scalar.
pub fn finite_diff_scalar<F>(mut f: F, at: f64, h: f64) -> f64
where
    F: FnMut(f64) -> f64,
{
    (f(at + h) - f(at - h)) / (2.0 * h)
}

/// Gradient-check metric: largest entry difference relative to the largest
/// gradient magnitude on either side. Zero against zero compares equal.
pub fn max_rel_err(analytic: &Matrix, reference: &Matrix) -> f64 {
    let scale = analytic.max_abs().max(reference.max_abs());
    if scale == 0.0 {
        return 0.0;
    }
    analytic.max_abs_diff(reference) / scale
}

/// Scalar counterpart of [`max_rel_err`].
pub fn scalar_rel_err(analytic: f64, reference: f64) -> f64 {
    let scale = analytic.abs().max(reference.abs());
    if scale == 0.0 {
        return 0.0;
    }
    (analytic - reference).abs() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Naive triple-loop product, the independent oracle for `matmul`.
    fn matmul_oracle(a: &Matrix, b: &Matrix) -> Matrix {
        let mut c = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                c.set(i, j, s);
            }
        }
        c
    }

    #[test]
    fn matmul_identity_is_noop() {
        let m = random_matrix(3, 3, 7);
        let prod = matmul(&Matrix::identity(3), &m).unwrap();
        assert_eq!(prod, m);
    }

    #[test]
    fn matmul_hand_sum() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle_exactly() {
        let a = random_matrix(16, 8, 1);
        let b = random_matrix(8, 4, 2);
        let fast = matmul(&a, &b).unwrap();
        let slow = matmul_oracle(&a, &b);
        // Same ascending-k reduction order on both paths: 0 ulp difference.
        assert_eq!(fast, slow);
    }

    #[test]
    fn matmul_shape_mismatch_errors() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 2);
        assert!(matches!(matmul(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn matmul_associative_within_tolerance() {
        let a = random_matrix(5, 4, 3);
        let b = random_matrix(4, 6, 4);
        let c = random_matrix(6, 3, 5);
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        assert!(left.max_abs_diff(&right) < 1e-10);
    }

    #[test]
    fn normalize_345_triangle() {
        let m = Matrix::from_vec(1, 2, vec![3.0, 4.0]).unwrap();
        let n = l2_normalize_rows(&m, 1e-12);
        assert_relative_eq!(n.get(0, 0), 0.6, max_relative = 1e-15);
        assert_relative_eq!(n.get(0, 1), 0.8, max_relative = 1e-15);
    }

    #[test]
    fn normalize_zero_row_clamps() {
        let m = Matrix::from_vec(1, 3, vec![0.0, 0.0, 0.0]).unwrap();
        let n = l2_normalize_rows(&m, 1e-12);
        assert_eq!(n.data(), &[0.0, 0.0, 0.0]);
        assert!(n.is_finite());
    }

    #[test]
    fn normalize_unit_row_unchanged() {
        let inv = 1.0 / 3.0f64.sqrt();
        let m = Matrix::from_vec(1, 3, vec![inv, inv, inv]).unwrap();
        let n = l2_normalize_rows(&m, 1e-12);
        assert!(m.max_abs_diff(&n) < 1e-15);
    }

    #[test]
    fn log_sigmoid_at_zero() {
        assert_relative_eq!(log_sigmoid(0.0), -(2.0f64.ln()), max_relative = 1e-15);
    }

    #[test]
    fn log_sigmoid_left_asymptote() {
        assert!((log_sigmoid(-100.0) - (-100.0)).abs() < 1e-9);
    }

    #[test]
    fn log_sigmoid_far_right_matches_high_precision_oracle() {
        // Value frozen from a 40-digit evaluation of log(1/(1+e^{-50})).
        assert_relative_eq!(log_sigmoid(50.0), -1.9287498479639178e-22, max_relative = 1e-12);
        // And no overflow far out.
        assert!(log_sigmoid(1e6).is_finite());
        assert!(log_sigmoid(-1e6).is_finite());
    }

    #[test]
    fn logsumexp_pair_of_zeros() {
        assert_relative_eq!(logsumexp(&[0.0, 0.0]).unwrap(), 2.0f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn logsumexp_shift_stability() {
        let v = logsumexp(&[1000.0, 1000.0]).unwrap();
        assert_relative_eq!(v, 1000.0 + 2.0f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn logsumexp_matches_naive_oracle_at_small_magnitudes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let naive = v.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((logsumexp(&v).unwrap() - naive).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_empty_errors() {
        assert!(matches!(logsumexp(&[]), Err(Error::Shape(_))));
    }

    #[test]
    fn finite_diff_square() {
        let at = Matrix::from_vec(1, 1, vec![3.0]).unwrap();
        let g = finite_diff_grad(|m| m.get(0, 0) * m.get(0, 0), &at, 1e-5);
        assert!((g.get(0, 0) - 6.0).abs() < 1e-6);
    }

    #[test]
    fn finite_diff_sum_is_all_ones() {
        let at = random_matrix(3, 4, 9);
        let g = finite_diff_grad(|m| m.data().iter().sum(), &at, 1e-5);
        for &v in g.data() {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn sigmoid_symmetry_identity(x in -30.0f64..30.0) {
            // sigma(x) + sigma(-x) = 1
            let s = log_sigmoid(x).exp() + log_sigmoid(-x).exp();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn normalize_is_idempotent(seed in 0u64..1000) {
            let m = random_matrix(4, 6, seed);
            let once = l2_normalize_rows(&m, 1e-12);
            let twice = l2_normalize_rows(&once, 1e-12);
            prop_assert!(once.max_abs_diff(&twice) < 1e-14);
        }
    }
}
