//! Sigmoid pairwise contrastive loss with fixed temperature and learnable
//! bias, plus exact analytic gradients.
//!
//! Every masked pair `(i, j)` contributes an independent binary
//! classification term `-log sigmoid(z_ij (t c_ij + b))` where `c_ij` is the
//! cosine similarity of rows `i` and `j`, `z_ij` the +1/-1 pair label, and
//! `b` the learnable bias. No batch-wide normalizer is needed.

use super::{
    chain_through_normalization, validate_batch, EmbeddingBatch, LossOutput, LossParams,
    PairMasks, TemperatureParamSpace,
};
use crate::error::{Error, Result};
use crate::kernel::{dot, l2_normalize_rows, log_sigmoid, sigmoid, Matrix};

fn check_masks(batch: &EmbeddingBatch, masks: &PairMasks) -> Result<()> {
    if masks.pairs() != batch.pairs() {
        return Err(Error::Shape(format!(
            "masks built for n={} but batch has n={}",
            masks.pairs(),
            batch.pairs()
        )));
    }
    Ok(())
}

/// Compute the sigmoid pairwise loss and its exact gradients with respect
/// to the embeddings, the bias, and (when learnable) the temperature.
///
/// The gradient w.r.t. each affine logit `a_ij = t c_ij + b` is
/// `-(1/N) k_ij z_ij sigmoid(-z_ij a_ij)`; the embedding gradient chains
/// that through the cosine and the row normalization.
pub fn sigclr_loss(
    batch: &EmbeddingBatch,
    masks: &PairMasks,
    params: &LossParams,
) -> Result<LossOutput> {
    params.validate()?;
    check_masks(batch, masks)?;
    let norms = validate_batch(batch, params.eps)?;
    let total = batch.total_rows();
    let xhat = l2_normalize_rows(batch.rows(), params.eps);

    let t = params.temperature;
    let b = params.bias;
    let mut raw_loss = 0.0;
    let mut bias_raw = 0.0;
    let mut temp_raw = 0.0;
    let mut ghat = Matrix::zeros(total, batch.dim());
    let mut pair_terms = params
        .retain_pair_terms
        .then(|| Matrix::zeros(total, total));

    for i in 0..total {
        for j in 0..total {
            if masks.loss_mask().get(i, j) == 0.0 {
                continue;
            }
            let c = dot(xhat.row(i), xhat.row(j));
            let z = masks.sign().get(i, j);
            let a = t * c + b;
            let term = -log_sigmoid(z * a);
            raw_loss += term;
            let u = -z * sigmoid(-z * a);
            bias_raw += u;
            temp_raw += u * c;
            let tu = t * u;
            {
                let (gi, xj) = (ghat.row_mut(i), xhat.row(j));
                for k in 0..xj.len() {
                    gi[k] += tu * xj[k];
                }
            }
            {
                let (gj, xi) = (ghat.row_mut(j), xhat.row(i));
                for k in 0..xi.len() {
                    gj[k] += tu * xi[k];
                }
            }
            if let Some(pt) = pair_terms.as_mut() {
                pt.set(i, j, term);
            }
        }
    }

    let nf = params.normalization.factor(total);
    let grad_temperature = if params.learnable_temperature {
        match params.temperature_param_space {
            TemperatureParamSpace::Raw => temp_raw / nf,
            TemperatureParamSpace::Log => t * temp_raw / nf,
        }
    } else {
        0.0
    };
    Ok(LossOutput {
        value: raw_loss / nf,
        grad_embeddings: chain_through_normalization(&ghat, &xhat, &norms, 1.0 / nf),
        grad_bias: bias_raw / nf,
        grad_temperature,
        pair_terms,
    })
}

/// Closed-form bias derivative `-(1/N) sum k_ij z_ij sigmoid(-z_ij a_ij)`,
/// accumulated in the same order as [`sigclr_loss`] so the two agree
/// bit-for-bit.
pub fn bias_grad_closed_form(
    batch: &EmbeddingBatch,
    masks: &PairMasks,
    params: &LossParams,
) -> Result<f64> {
    params.validate()?;
    check_masks(batch, masks)?;
    validate_batch(batch, params.eps)?;
    let total = batch.total_rows();
    let xhat = l2_normalize_rows(batch.rows(), params.eps);
    let t = params.temperature;
    let b = params.bias;
    let mut bias_raw = 0.0;
    for i in 0..total {
        for j in 0..total {
            if masks.loss_mask().get(i, j) == 0.0 {
                continue;
            }
            let c = dot(xhat.row(i), xhat.row(j));
            let z = masks.sign().get(i, j);
            let a = t * c + b;
            bias_raw += -z * sigmoid(-z * a);
        }
    }
    Ok(bias_raw / params.normalization.factor(total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{finite_diff_grad, finite_diff_scalar, max_rel_err};
    use crate::loss::{build_masks, Normalization};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_batch(n: usize, dim: usize, seed: u64) -> EmbeddingBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = Matrix::from_fn(2 * n, dim, |_, _| rng.gen_range(-1.0..1.0));
        EmbeddingBatch::from_rows(rows).unwrap()
    }

    fn params(t: f64, b: f64) -> LossParams {
        LossParams {
            temperature: t,
            bias: b,
            ..LossParams::default()
        }
    }

    #[test]
    fn identical_unit_vectors_hand_value() {
        // Two positive terms -log sigmoid(1), prefactor 1/2.
        let rows = Matrix::from_vec(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let batch = EmbeddingBatch::from_rows(rows).unwrap();
        let masks = build_masks(1).unwrap();
        let out = sigclr_loss(&batch, &masks, &params(1.0, 0.0)).unwrap();
        let expected = (-1.0f64).exp().ln_1p(); // log(1 + e^{-1})
        assert_relative_eq!(out.value, expected, max_relative = 1e-12);
    }

    #[test]
    fn orthogonal_unit_vectors_ln2() {
        let rows = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let batch = EmbeddingBatch::from_rows(rows).unwrap();
        let masks = build_masks(1).unwrap();
        let out = sigclr_loss(&batch, &masks, &params(1.0, 0.0)).unwrap();
        assert_relative_eq!(out.value, 2.0f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn embedding_gradient_matches_finite_differences() {
        for &t in &[1.0, 2.0, 5.0, 10.0] {
            let batch = random_batch(8, 16, 42);
            let masks = build_masks(8).unwrap();
            let p = params(t, -1.0);
            let out = sigclr_loss(&batch, &masks, &p).unwrap();
            let fd = finite_diff_grad(
                |m| {
                    let b = EmbeddingBatch::from_rows(m.clone()).unwrap();
                    sigclr_loss(&b, &masks, &p).unwrap().value
                },
                batch.rows(),
                1e-5,
            );
            let err = max_rel_err(&out.grad_embeddings, &fd);
            assert!(err < 1e-6, "t={t}: rel err {err:e}");
        }
    }

    #[test]
    fn bias_gradient_matches_finite_differences() {
        let batch = random_batch(6, 8, 7);
        let masks = build_masks(6).unwrap();
        let p = params(5.0, -10.0);
        let out = sigclr_loss(&batch, &masks, &p).unwrap();
        let fd = finite_diff_scalar(
            |b| {
                let pb = LossParams { bias: b, ..p.clone() };
                sigclr_loss(&batch, &masks, &pb).unwrap().value
            },
            p.bias,
            1e-5,
        );
        assert!((out.grad_bias - fd).abs() < 1e-8, "{} vs {}", out.grad_bias, fd);
    }

    #[test]
    fn temperature_gradient_matches_finite_differences_in_both_spaces() {
        let batch = random_batch(5, 8, 3);
        let masks = build_masks(5).unwrap();
        for space in [TemperatureParamSpace::Raw, TemperatureParamSpace::Log] {
            for &t in &[1.0, 2.0, 5.0, 10.0] {
                let p = LossParams {
                    temperature: t,
                    bias: -2.0,
                    learnable_temperature: true,
                    temperature_param_space: space,
                    ..LossParams::default()
                };
                let out = sigclr_loss(&batch, &masks, &p).unwrap();
                let fd = match space {
                    TemperatureParamSpace::Raw => finite_diff_scalar(
                        |tv| {
                            let pt = LossParams { temperature: tv, ..p.clone() };
                            sigclr_loss(&batch, &masks, &pt).unwrap().value
                        },
                        t,
                        1e-6,
                    ),
                    TemperatureParamSpace::Log => finite_diff_scalar(
                        |lt| {
                            let pt = LossParams { temperature: lt.exp(), ..p.clone() };
                            sigclr_loss(&batch, &masks, &pt).unwrap().value
                        },
                        t.ln(),
                        1e-6,
                    ),
                };
                let rel = (out.grad_temperature - fd).abs()
                    / out.grad_temperature.abs().max(fd.abs()).max(1e-12);
                assert!(rel < 1e-6, "space {space:?} t={t}: {} vs {}", out.grad_temperature, fd);
            }
        }
    }

    #[test]
    fn fixed_temperature_gradient_is_zero() {
        let batch = random_batch(4, 8, 1);
        let masks = build_masks(4).unwrap();
        let out = sigclr_loss(&batch, &masks, &params(5.0, -10.0)).unwrap();
        assert_eq!(out.grad_temperature, 0.0);
    }

    #[test]
    fn closed_form_bias_grad_is_bit_identical() {
        let batch = random_batch(7, 12, 9);
        let masks = build_masks(7).unwrap();
        let p = params(5.0, -10.0);
        let out = sigclr_loss(&batch, &masks, &p).unwrap();
        let closed = bias_grad_closed_form(&batch, &masks, &p).unwrap();
        assert_eq!(out.grad_bias.to_bits(), closed.to_bits());
    }

    #[test]
    fn bias_grad_all_logits_zero() {
        // Orthogonal rows, b = 0: every term has sigmoid(0) = 1/2 and both
        // pairs are positive, so the per-row normalized grad is -0.5.
        let rows = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let batch = EmbeddingBatch::from_rows(rows).unwrap();
        let masks = build_masks(1).unwrap();
        let g = bias_grad_closed_form(&batch, &masks, &params(1.0, 0.0)).unwrap();
        assert_relative_eq!(g, -0.5, max_relative = 1e-15);
    }

    #[test]
    fn bias_grad_saturates_as_bias_goes_to_minus_infinity() {
        // Positives contribute -1 each, negatives vanish: per-row grad -> -1.
        let batch = random_batch(4, 8, 5);
        let masks = build_masks(4).unwrap();
        let g = bias_grad_closed_form(&batch, &masks, &params(1.0, -1000.0)).unwrap();
        assert_relative_eq!(g, -1.0, max_relative = 1e-12);
    }

    #[test]
    fn view_swap_invariance() {
        let batch = random_batch(6, 10, 13);
        let n = batch.pairs();
        let total = batch.total_rows();
        let rolled = Matrix::from_fn(total, batch.dim(), |i, k| {
            batch.rows().get((i + n) % total, k)
        });
        let swapped = EmbeddingBatch::from_rows(rolled).unwrap();
        let masks = build_masks(n).unwrap();
        let p = params(5.0, -10.0);
        let a = sigclr_loss(&batch, &masks, &p).unwrap().value;
        let b = sigclr_loss(&swapped, &masks, &p).unwrap().value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn input_scale_invariance_of_value() {
        let batch = random_batch(4, 8, 21);
        let mut scaled_rows = batch.rows().clone();
        for v in scaled_rows.row_mut(3) {
            *v *= 37.5;
        }
        let scaled = EmbeddingBatch::from_rows(scaled_rows).unwrap();
        let masks = build_masks(4).unwrap();
        let p = params(2.0, -1.0);
        let a = sigclr_loss(&batch, &masks, &p).unwrap().value;
        let b = sigclr_loss(&scaled, &masks, &p).unwrap().value;
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn mean_normalization_differs_by_factor_2n() {
        let batch = random_batch(5, 8, 17);
        let masks = build_masks(5).unwrap();
        let per_row = sigclr_loss(&batch, &masks, &params(5.0, -10.0)).unwrap();
        let mean = sigclr_loss(
            &batch,
            &masks,
            &LossParams {
                normalization: Normalization::Mean,
                ..params(5.0, -10.0)
            },
        )
        .unwrap();
        let factor = 2.0 * 5.0;
        assert_relative_eq!(per_row.value, mean.value * factor, max_relative = 1e-12);
        assert_relative_eq!(per_row.grad_bias, mean.grad_bias * factor, max_relative = 1e-12);
        let mut scaled = mean.grad_embeddings.clone();
        scaled.scale(factor);
        assert!(per_row.grad_embeddings.max_abs_diff(&scaled) < 1e-12);
    }

    #[test]
    fn pair_terms_structure() {
        let batch = random_batch(3, 6, 2);
        let masks = build_masks(3).unwrap();
        let p = LossParams {
            retain_pair_terms: true,
            ..params(5.0, -10.0)
        };
        let out = sigclr_loss(&batch, &masks, &p).unwrap();
        let pt = out.pair_terms.as_ref().unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let term = pt.get(i, j);
                assert!(term.is_finite());
                if masks.loss_mask().get(i, j) == 0.0 {
                    assert_eq!(term, 0.0);
                } else {
                    assert!(term >= 0.0);
                }
            }
        }
        let defaulted = sigclr_loss(&batch, &masks, &params(5.0, -10.0)).unwrap();
        assert!(defaulted.pair_terms.is_none());
    }

    #[test]
    fn per_pair_logit_derivative_signs() {
        // Reconstruct u_ij = -z (1 - e^{-L_ij}) from the retained pair
        // terms: negative for positive pairs, positive for negative pairs.
        let batch = random_batch(4, 8, 31);
        let masks = build_masks(4).unwrap();
        let p = LossParams {
            retain_pair_terms: true,
            ..params(2.0, -1.0)
        };
        let out = sigclr_loss(&batch, &masks, &p).unwrap();
        let pt = out.pair_terms.as_ref().unwrap();
        let total = batch.total_rows();
        let mut u_sum = 0.0;
        for i in 0..total {
            for j in 0..total {
                if masks.loss_mask().get(i, j) == 0.0 {
                    continue;
                }
                let z = masks.sign().get(i, j);
                let u = -z * (1.0 - (-pt.get(i, j)).exp());
                if z > 0.0 {
                    assert!(u < 0.0, "positive pair ({i},{j}) must pull similarity up");
                } else {
                    assert!(u > 0.0, "negative pair ({i},{j}) must push similarity down");
                }
                u_sum += u;
            }
        }
        let reconstructed = u_sum / p.normalization.factor(total);
        assert!((reconstructed - out.grad_bias).abs() < 1e-12);
    }

    #[test]
    fn negative_terms_are_dominated_at_bias_init() {
        // t=5, b=-10: every negative term equals -log sigmoid(10 - 5c) and
        // the negatives total a small fraction of the positive total.
        let batch = random_batch(32, 64, 4);
        let masks = build_masks(32).unwrap();
        let p = LossParams {
            retain_pair_terms: true,
            ..params(5.0, -10.0)
        };
        let out = sigclr_loss(&batch, &masks, &p).unwrap();
        let pt = out.pair_terms.as_ref().unwrap();
        let xhat = l2_normalize_rows(batch.rows(), p.eps);
        let total = batch.total_rows();
        let (mut pos_total, mut neg_total) = (0.0, 0.0);
        for i in 0..total {
            for j in 0..total {
                if masks.loss_mask().get(i, j) == 0.0 {
                    continue;
                }
                let term = pt.get(i, j);
                if masks.sign().get(i, j) > 0.0 {
                    pos_total += term;
                } else {
                    let c = dot(xhat.row(i), xhat.row(j));
                    let bound = -log_sigmoid(10.0 - 5.0 * c);
                    assert!(term <= bound + 1e-12);
                    neg_total += term;
                }
            }
        }
        assert!(neg_total < 0.05 * pos_total, "neg {neg_total} vs pos {pos_total}");
    }

    #[test]
    fn degenerate_row_is_rejected() {
        let mut rows = random_batch(2, 4, 8).rows().clone();
        for v in rows.row_mut(2) {
            *v = 0.0;
        }
        let batch = EmbeddingBatch::from_rows(rows).unwrap();
        let masks = build_masks(2).unwrap();
        let err = sigclr_loss(&batch, &masks, &params(1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateEmbedding { row: 2, .. }));
    }

    #[test]
    fn mask_batch_mismatch_errors() {
        let batch = random_batch(3, 4, 8);
        let masks = build_masks(2).unwrap();
        assert!(matches!(
            sigclr_loss(&batch, &masks, &params(1.0, 0.0)),
            Err(Error::Shape(_))
        ));
    }
}
