//! Positive/negative sign mask and self-pair loss mask for a two-view batch.

use crate::error::{Error, Result};
use crate::kernel::Matrix;

/// Pair masks for a batch of `n` image pairs (`2n` rows).
///
/// `sign` holds the pair label: `+1` at `(i, (i+n) mod 2n)` (the two views
/// of the same image), `-1` everywhere else. `loss_mask` is `0` on the
/// diagonal (a row paired with itself) and `1` elsewhere.
#[derive(Debug, Clone)]
pub struct PairMasks {
    n: usize,
    sign: Matrix,
    loss_mask: Matrix,
}

impl PairMasks {
    pub fn pairs(&self) -> usize {
        self.n
    }

    pub fn sign(&self) -> &Matrix {
        &self.sign
    }

    pub fn loss_mask(&self) -> &Matrix {
        &self.loss_mask
    }
}

/// Sign of the pair `(i, j)` computed from global row indices: `+1` for the
/// two views of the same image, `-1` otherwise.
pub(crate) fn sign_at(i: usize, j: usize, total_rows: usize) -> f64 {
    let n = total_rows / 2;
    if j == (i + n) % total_rows {
        1.0
    } else {
        -1.0
    }
}

/// Build the masks for `n >= 1` pairs.
pub fn build_masks(n: usize) -> Result<PairMasks> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "mask construction needs at least one pair".into(),
        ));
    }
    let total = 2 * n;
    let sign = Matrix::from_fn(total, total, |i, j| sign_at(i, j, total));
    let loss_mask = Matrix::from_fn(total, total, |i, j| if i == j { 0.0 } else { 1.0 });
    Ok(PairMasks { n, sign, loss_mask })
}
