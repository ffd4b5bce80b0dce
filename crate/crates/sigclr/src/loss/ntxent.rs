//! NT-Xent (normalized temperature-scaled cross entropy), the softmax
//! contrastive baseline: each row classifies its positive partner against
//! all other non-self rows.

use super::{chain_through_normalization, validate_batch, EmbeddingBatch, LossOutput};
use crate::error::{Error, Result};
use crate::kernel::{l2_normalize_rows, matmul, Matrix};

const EPS: f64 = 1e-12;

/// Cross-entropy of the positive against all `2n - 1` non-self candidates
/// at the given temperature, averaged over rows, with exact gradients.
pub fn ntxent_loss(batch: &EmbeddingBatch, temperature: f64) -> Result<LossOutput> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let norms = validate_batch(batch, EPS)?;
    let total = batch.total_rows();
    let xhat = l2_normalize_rows(batch.rows(), EPS);
    let cos = matmul(&xhat, &xhat.transpose())?;

    let mut raw_loss = 0.0;
    let mut ghat = Matrix::zeros(total, batch.dim());
    let denom = (total as f64) * temperature;
    for i in 0..total {
        let pos = batch.positive_partner(i);
        // Max-shifted log-sum-exp over the non-self candidates.
        let mut m = f64::NEG_INFINITY;
        for j in 0..total {
            if j != i {
                m = m.max(cos.get(i, j) / temperature);
            }
        }
        let mut sum = 0.0;
        for j in 0..total {
            if j != i {
                sum += (cos.get(i, j) / temperature - m).exp();
            }
        }
        let lse = m + sum.ln();
        raw_loss += lse - cos.get(i, pos) / temperature;

        for j in 0..total {
            if j == i {
                continue;
            }
            let p = (cos.get(i, j) / temperature - lse).exp();
            let w = (p - if j == pos { 1.0 } else { 0.0 }) / denom;
            {
                let (gi, xj) = (ghat.row_mut(i), xhat.row(j));
                for k in 0..xj.len() {
                    gi[k] += w * xj[k];
                }
            }
            {
                let (gj, xi) = (ghat.row_mut(j), xhat.row(i));
                for k in 0..xi.len() {
                    gj[k] += w * xi[k];
                }
            }
        }
    }

    Ok(LossOutput {
        value: raw_loss / total as f64,
        grad_embeddings: chain_through_normalization(&ghat, &xhat, &norms, 1.0),
        grad_bias: 0.0,
        grad_temperature: 0.0,
        pair_terms: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{dot, finite_diff_grad, max_rel_err};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_batch(n: usize, dim: usize, seed: u64) -> EmbeddingBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = Matrix::from_fn(2 * n, dim, |_, _| rng.gen_range(-1.0..1.0));
        EmbeddingBatch::from_rows(rows).unwrap()
    }

    /// Plain-formula softmax cross entropy, enumerating every candidate.
    fn brute_force(batch: &EmbeddingBatch, tau: f64) -> f64 {
        let xhat = l2_normalize_rows(batch.rows(), EPS);
        let total = batch.total_rows();
        let mut loss = 0.0;
        for i in 0..total {
            let pos = batch.positive_partner(i);
            let mut denom = 0.0;
            for j in 0..total {
                if j != i {
                    denom += (dot(xhat.row(i), xhat.row(j)) / tau).exp();
                }
            }
            let p = (dot(xhat.row(i), xhat.row(pos)) / tau).exp() / denom;
            loss += -p.ln();
        }
        loss / total as f64
    }

    #[test]
    fn single_pair_has_zero_loss() {
        let batch = random_batch(1, 8, 3);
        let out = ntxent_loss(&batch, 0.5).unwrap();
        assert_eq!(out.value, 0.0);
        assert_eq!(out.grad_embeddings.max_abs(), 0.0);
    }

    #[test]
    fn matches_brute_force_oracle_for_two_pairs() {
        let batch = random_batch(2, 8, 5);
        for &tau in &[0.1, 0.5, 1.0] {
            let out = ntxent_loss(&batch, tau).unwrap();
            let oracle = brute_force(&batch, tau);
            assert!((out.value - oracle).abs() < 1e-9, "tau {tau}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let batch = random_batch(4, 8, 11);
        let out = ntxent_loss(&batch, 0.5).unwrap();
        let fd = finite_diff_grad(
            |m| {
                let b = EmbeddingBatch::from_rows(m.clone()).unwrap();
                ntxent_loss(&b, 0.5).unwrap().value
            },
            batch.rows(),
            1e-5,
        );
        let err = max_rel_err(&out.grad_embeddings, &fd);
        assert!(err < 1e-6, "rel err {err:e}");
    }

    #[test]
    fn degenerate_row_is_rejected() {
        let mut rows = random_batch(2, 4, 8).rows().clone();
        for v in rows.row_mut(0) {
            *v = 0.0;
        }
        let batch = EmbeddingBatch::from_rows(rows).unwrap();
        assert!(matches!(
            ntxent_loss(&batch, 0.5),
            Err(Error::DegenerateEmbedding { row: 0, .. })
        ));
    }

    #[test]
    fn nonpositive_temperature_rejected() {
        let batch = random_batch(2, 4, 8);
        assert!(ntxent_loss(&batch, 0.0).is_err());
        assert!(ntxent_loss(&batch, -1.0).is_err());
    }
}
