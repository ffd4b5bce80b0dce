//! Contrastive objectives over two-view embedding batches: the sigmoid
//! pairwise loss with learnable bias, and the NT-Xent (softmax) baseline.
//!
//! Batch layout is fixed everywhere: rows `0..n-1` hold view A and rows
//! `n..2n-1` hold view B, so the positive partner of row `i` is row
//! `(i + n) mod 2n`.

mod masks;
mod ntxent;
mod sigclr;

pub use masks::{build_masks, PairMasks};
pub use ntxent::ntxent_loss;
pub use sigclr::{bias_grad_closed_form, sigclr_loss};

use crate::error::{Error, Result};
use crate::kernel::Matrix;

/// Two-view embedding batch: `2n x dim`, view A first.
#[derive(Debug, Clone)]
pub struct EmbeddingBatch {
    n: usize,
    dim: usize,
    rows: Matrix,
}

impl EmbeddingBatch {
    /// Wrap a `2n x dim` matrix. Row count must be even and positive.
    pub fn from_rows(rows: Matrix) -> Result<Self> {
        if rows.rows() == 0 || rows.rows() % 2 != 0 {
            return Err(Error::Shape(format!(
                "embedding batch needs a positive even row count, got {}",
                rows.rows()
            )));
        }
        Ok(EmbeddingBatch {
            n: rows.rows() / 2,
            dim: rows.cols(),
            rows,
        })
    }

    /// Number of image pairs (half the row count).
    pub fn pairs(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_rows(&self) -> usize {
        2 * self.n
    }

    pub fn rows(&self) -> &Matrix {
        &self.rows
    }

    /// Index of the positive partner of row `i`.
    pub fn positive_partner(&self, i: usize) -> usize {
        (i + self.n) % (2 * self.n)
    }
}

/// Loss normalization: the double sum divided by `2n` (per-row) or by
/// `(2n)^2` (mean over all pair entries). The two differ by a constant
/// factor `2n` that the learning rate absorbs; per-row is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    PerRow,
    Mean,
}

impl Normalization {
    pub fn factor(&self, total_rows: usize) -> f64 {
        match self {
            Normalization::PerRow => total_rows as f64,
            Normalization::Mean => (total_rows * total_rows) as f64,
        }
    }
}

/// Parameter space for a learnable temperature. Log space keeps the
/// temperature positive under unconstrained updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemperatureParamSpace {
    Raw,
    Log,
}

/// Sigmoid-loss parameters. Defaults: fixed temperature 5, learnable bias
/// initialized at -10, per-row normalization.
#[derive(Debug, Clone)]
pub struct LossParams {
    pub temperature: f64,
    pub bias: f64,
    pub learnable_temperature: bool,
    pub temperature_param_space: TemperatureParamSpace,
    pub normalization: Normalization,
    /// Rows with norm below this are rejected as degenerate.
    pub eps: f64,
    /// Materialize the `2n x 2n` per-pair loss matrix in the output.
    /// Off by default: it is exactly the full pairwise object the chunked
    /// implementation exists to avoid.
    pub retain_pair_terms: bool,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams {
            temperature: 5.0,
            bias: -10.0,
            learnable_temperature: false,
            temperature_param_space: TemperatureParamSpace::Log,
            normalization: Normalization::PerRow,
            eps: 1e-12,
            retain_pair_terms: false,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !self.bias.is_finite() {
            return Err(Error::InvalidArgument("bias must be finite".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument("eps must be positive".into()));
        }
        Ok(())
    }
}

/// Loss value plus exact analytic gradients.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    /// Gradient w.r.t. the raw (unnormalized) embedding rows, `2n x dim`.
    pub grad_embeddings: Matrix,
    pub grad_bias: f64,
    /// Gradient w.r.t. the temperature in its configured parameter space;
    /// exactly zero when the temperature is fixed.
    pub grad_temperature: f64,
    /// Per-pair losses `L_ij`, present only when requested.
    pub pair_terms: Option<Matrix>,
}

/// Check batch rows are finite and no row norm is below `eps`.
/// Returns the row norms for reuse in the gradient chain.
pub(crate) fn validate_batch(batch: &EmbeddingBatch, eps: f64) -> Result<Vec<f64>> {
    if !batch.rows().is_finite() {
        return Err(Error::InvalidArgument(
            "embedding batch contains non-finite values".into(),
        ));
    }
    let norms = crate::kernel::row_norms(batch.rows());
    for (row, &norm) in norms.iter().enumerate() {
        if norm < eps {
            return Err(Error::DegenerateEmbedding { row, norm, eps });
        }
    }
    Ok(norms)
}

/// Propagate a gradient taken w.r.t. unit-normalized rows back to the raw
/// rows: `g_raw = (g - (g . xhat) xhat) / norm` per row.
pub(crate) fn chain_through_normalization(
    ghat: &Matrix,
    xhat: &Matrix,
    norms: &[f64],
    scale: f64,
) -> Matrix {
    let mut out = Matrix::zeros(ghat.rows(), ghat.cols());
    for i in 0..ghat.rows() {
        let g = ghat.row(i);
        let x = xhat.row(i);
        let mut proj = 0.0;
        for k in 0..g.len() {
            proj += g[k] * scale * x[k];
        }
        let out_row = out.row_mut(i);
        for k in 0..g.len() {
            out_row[k] = (g[k] * scale - proj * x[k]) / norms[i];
        }
    }
    out
}
