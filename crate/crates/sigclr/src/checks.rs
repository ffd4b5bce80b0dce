//! Self-contained verification suites behind the `check` CLI subcommand:
//! gradient checks against finite differences, chunked-vs-monolithic
//! equivalence, mask structure, and frozen loss values.

use crate::chunked::{
    chunk_exchange_count, chunked_sigclr_loss_instrumented, plan_shards, ChunkOptions,
};
use crate::error::Result;
use crate::kernel::{
    dot, finite_diff_grad, finite_diff_scalar, l2_normalize_rows, max_rel_err, Matrix,
};
use crate::loss::{
    bias_grad_closed_form, build_masks, ntxent_loss, sigclr_loss, EmbeddingBatch, LossParams,
};
use crate::model::{Activation, LayerSpec, Model, ModelSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckItem {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        CheckItem {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

pub fn all_passed(items: &[CheckItem]) -> bool {
    items.iter().all(|i| i.passed)
}

fn random_batch(n: usize, dim: usize, seed: u64) -> EmbeddingBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = Matrix::from_fn(2 * n, dim, |_, _| rng.gen_range(-1.0..1.0));
    EmbeddingBatch::from_rows(rows).unwrap()
}

/// Mask-structure invariants for n = 1..=64.
pub fn check_masks() -> Vec<CheckItem> {
    let mut roll_ok = true;
    let mut symmetric_ok = true;
    let mut diag_ok = true;
    let mut count_ok = true;
    for n in 1..=64usize {
        let masks = build_masks(n).unwrap();
        let total = 2 * n;
        let mut positives = 0;
        for i in 0..total {
            for j in 0..total {
                let s = masks.sign().get(i, j);
                let expected = if j == (i + n) % total { 1.0 } else { -1.0 };
                if s != expected {
                    roll_ok = false;
                }
                if s != masks.sign().get(j, i) || masks.loss_mask().get(i, j) != masks.loss_mask().get(j, i) {
                    symmetric_ok = false;
                }
                if masks.loss_mask().get(i, j) != if i == j { 0.0 } else { 1.0 } {
                    diag_ok = false;
                }
                if s == 1.0 {
                    positives += 1;
                }
            }
        }
        if positives != total {
            count_ok = false;
        }
    }
    vec![
        CheckItem::new("masks: positives at roll-by-n positions", roll_ok, "n = 1..=64"),
        CheckItem::new("masks: sign and loss masks symmetric", symmetric_ok, "n = 1..=64"),
        CheckItem::new("masks: loss mask zero exactly on diagonal", diag_ok, "n = 1..=64"),
        CheckItem::new("masks: exactly 2n positive entries", count_ok, "n = 1..=64"),
    ]
}

/// Frozen loss values: hand-evaluated sigmoid cases and the NT-Xent
/// brute-force oracle.
pub fn check_loss_values() -> Vec<CheckItem> {
    let mut items = Vec::new();

    let params = LossParams {
        temperature: 1.0,
        bias: 0.0,
        ..LossParams::default()
    };
    let masks = build_masks(1).unwrap();

    let identical = EmbeddingBatch::from_rows(
        Matrix::from_vec(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap(),
    )
    .unwrap();
    let value = sigclr_loss(&identical, &masks, &params).unwrap().value;
    let expected = (-1.0f64).exp().ln_1p();
    let err = (value - expected).abs();
    items.push(CheckItem::new(
        "loss-values: identical unit pair = log(1+e^-1)",
        err < 1e-12,
        format!("got {value}, expected {expected}, |diff| = {err:e}"),
    ));

    let orthogonal = EmbeddingBatch::from_rows(
        Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
    )
    .unwrap();
    let value = sigclr_loss(&orthogonal, &masks, &params).unwrap().value;
    let err = (value - 2.0f64.ln()).abs();
    items.push(CheckItem::new(
        "loss-values: orthogonal unit pair = ln 2",
        err < 1e-12,
        format!("got {value}, |diff| = {err:e}"),
    ));

    let single = random_batch(1, 8, 3);
    let value = ntxent_loss(&single, 0.5).unwrap().value;
    items.push(CheckItem::new(
        "loss-values: nt-xent with one pair is exactly zero",
        value == 0.0,
        format!("got {value}"),
    ));

    // Brute-force softmax cross entropy over the 3 candidates per row.
    let batch = random_batch(2, 8, 5);
    let tau = 0.5;
    let fast = ntxent_loss(&batch, tau).unwrap().value;
    let xhat = l2_normalize_rows(batch.rows(), 1e-12);
    let mut oracle = 0.0;
    for i in 0..4 {
        let pos = batch.positive_partner(i);
        let mut denom = 0.0;
        for j in 0..4 {
            if j != i {
                denom += (dot(xhat.row(i), xhat.row(j)) / tau).exp();
            }
        }
        oracle += -((dot(xhat.row(i), xhat.row(pos)) / tau).exp() / denom).ln();
    }
    oracle /= 4.0;
    let err = (fast - oracle).abs();
    items.push(CheckItem::new(
        "loss-values: nt-xent matches brute-force oracle (n=2)",
        err < 1e-9,
        format!("|diff| = {err:e}"),
    ));

    items
}

/// Two-layer model used by the end-to-end gradient check.
fn grad_check_model_spec() -> ModelSpec {
    ModelSpec {
        encoder: vec![LayerSpec::new(6, 5, Activation::Relu)],
        projector: vec![LayerSpec::new(5, 4, Activation::Linear)],
    }
}

fn end_to_end_grad_err(seed: u64, t: f64) -> Result<f64> {
    let spec = grad_check_model_spec();
    let masks = build_masks(3)?;
    let params = LossParams {
        temperature: t,
        bias: -1.0,
        ..LossParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
    let x = Matrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));

    // Nonzero biases keep every ReLU row alive (an all-dead row would make
    // the projector output degenerate) and give the bias check signal.
    let lift_biases = |m: &mut Model| {
        for layer in m.encoder.iter_mut().chain(m.projector.iter_mut()) {
            for b in &mut layer.bias {
                *b = 0.1;
            }
        }
    };
    let mut model = Model::init(spec.clone(), seed)?;
    lift_biases(&mut model);
    let (_, z) = model.forward(&x)?;
    let out = sigclr_loss(&EmbeddingBatch::from_rows(z)?, &masks, &params)?;
    let grads = model.backward(&out.grad_embeddings)?;

    let loss_of = |m: &Model| -> f64 {
        let (_, z) = m.forward_frozen(&x).unwrap();
        sigclr_loss(&EmbeddingBatch::from_rows(z).unwrap(), &masks, &params)
            .unwrap()
            .value
    };
    let mut base = Model::init(spec, seed)?;
    lift_biases(&mut base);
    let mut worst = 0.0f64;
    // Encoder weight + bias.
    let fd_w = finite_diff_grad(
        |w| {
            let mut probe = base.clone();
            probe.encoder[0].weight = w.clone();
            loss_of(&probe)
        },
        &base.encoder[0].weight,
        1e-5,
    );
    worst = worst.max(max_rel_err(&grads.encoder[0].0, &fd_w));
    let bias_mat = Matrix::from_vec(1, 5, base.encoder[0].bias.clone())?;
    let fd_b = finite_diff_grad(
        |b| {
            let mut probe = base.clone();
            probe.encoder[0].bias = b.data().to_vec();
            loss_of(&probe)
        },
        &bias_mat,
        1e-5,
    );
    let analytic_b = Matrix::from_vec(1, 5, grads.encoder[0].1.clone())?;
    worst = worst.max(max_rel_err(&analytic_b, &fd_b));
    // Projector weight + bias.
    let fd_w = finite_diff_grad(
        |w| {
            let mut probe = base.clone();
            probe.projector[0].weight = w.clone();
            loss_of(&probe)
        },
        &base.projector[0].weight,
        1e-5,
    );
    worst = worst.max(max_rel_err(&grads.projector[0].0, &fd_w));
    let bias_mat = Matrix::from_vec(1, 4, base.projector[0].bias.clone())?;
    let fd_b = finite_diff_grad(
        |b| {
            let mut probe = base.clone();
            probe.projector[0].bias = b.data().to_vec();
            loss_of(&probe)
        },
        &bias_mat,
        1e-5,
    );
    let analytic_b = Matrix::from_vec(1, 4, grads.projector[0].1.clone())?;
    worst = worst.max(max_rel_err(&analytic_b, &fd_b));
    Ok(worst)
}

/// Gradient correctness against central finite differences: sigmoid-loss
/// embeddings/bias/temperature and NT-Xent embeddings at < 1e-6, plus the
/// end-to-end two-layer model at < 1e-5. Seeds 0..=2, t in {1, 2, 5, 10}.
pub fn check_grad() -> Vec<CheckItem> {
    let temperatures = [1.0, 2.0, 5.0, 10.0];
    let seeds = [0u64, 1, 2];

    let mut emb_worst = 0.0f64;
    let mut bias_worst = 0.0f64;
    let mut temp_worst = 0.0f64;
    let mut ntxent_worst = 0.0f64;
    let mut model_worst = 0.0f64;

    for &seed in &seeds {
        let batch = random_batch(8, 16, seed);
        let masks = build_masks(8).unwrap();
        for &t in &temperatures {
            let params = LossParams {
                temperature: t,
                bias: -2.0,
                learnable_temperature: true,
                ..LossParams::default()
            };
            let out = sigclr_loss(&batch, &masks, &params).unwrap();

            let fd = finite_diff_grad(
                |m| {
                    let b = EmbeddingBatch::from_rows(m.clone()).unwrap();
                    sigclr_loss(&b, &masks, &params).unwrap().value
                },
                batch.rows(),
                1e-5,
            );
            emb_worst = emb_worst.max(max_rel_err(&out.grad_embeddings, &fd));

            let fd_bias = finite_diff_scalar(
                |b| {
                    let p = LossParams { bias: b, ..params.clone() };
                    sigclr_loss(&batch, &masks, &p).unwrap().value
                },
                params.bias,
                1e-5,
            );
            let scale = out.grad_bias.abs().max(fd_bias.abs()).max(1e-12);
            bias_worst = bias_worst.max((out.grad_bias - fd_bias).abs() / scale);

            // Default learnable parameterization is log-space.
            let fd_temp = finite_diff_scalar(
                |lt| {
                    let p = LossParams { temperature: lt.exp(), ..params.clone() };
                    sigclr_loss(&batch, &masks, &p).unwrap().value
                },
                t.ln(),
                1e-6,
            );
            let scale = out.grad_temperature.abs().max(fd_temp.abs()).max(1e-12);
            temp_worst = temp_worst.max((out.grad_temperature - fd_temp).abs() / scale);
        }

        let nt = ntxent_loss(&batch, 0.5).unwrap();
        let fd = finite_diff_grad(
            |m| {
                let b = EmbeddingBatch::from_rows(m.clone()).unwrap();
                ntxent_loss(&b, 0.5).unwrap().value
            },
            batch.rows(),
            1e-5,
        );
        ntxent_worst = ntxent_worst.max(max_rel_err(&nt.grad_embeddings, &fd));

        for &t in &temperatures {
            model_worst = model_worst.max(end_to_end_grad_err(seed, t).unwrap());
        }
    }

    // Closed-form bias derivative must agree bit-for-bit with the packed
    // gradient.
    let batch = random_batch(6, 8, 11);
    let masks = build_masks(6).unwrap();
    let params = LossParams::default();
    let closed = bias_grad_closed_form(&batch, &masks, &params).unwrap();
    let packed = sigclr_loss(&batch, &masks, &params).unwrap().grad_bias;
    let closed_ok = closed.to_bits() == packed.to_bits();

    vec![
        CheckItem::new(
            "grad: sigmoid-loss embeddings vs finite differences",
            emb_worst < 1e-6,
            format!("max rel err {emb_worst:e} (< 1e-6)"),
        ),
        CheckItem::new(
            "grad: sigmoid-loss bias vs finite differences",
            bias_worst < 1e-6,
            format!("max rel err {bias_worst:e} (< 1e-6)"),
        ),
        CheckItem::new(
            "grad: learnable temperature vs finite differences",
            temp_worst < 1e-6,
            format!("max rel err {temp_worst:e} (< 1e-6)"),
        ),
        CheckItem::new(
            "grad: nt-xent embeddings vs finite differences",
            ntxent_worst < 1e-6,
            format!("max rel err {ntxent_worst:e} (< 1e-6)"),
        ),
        CheckItem::new(
            "grad: end-to-end two-layer model vs finite differences",
            model_worst < 1e-5,
            format!("max rel err {model_worst:e} (< 1e-5)"),
        ),
        CheckItem::new(
            "grad: closed-form bias derivative bit-equal to packed gradient",
            closed_ok,
            format!("{closed} vs {packed}"),
        ),
    ]
}

/// Chunked-vs-monolithic equivalence for 2n = 32, d = 16, D in {1,2,4,8}:
/// values and gradients within 1e-9, full index coverage exactly once,
/// per-device peak block exactly (2n/D)^2.
pub fn check_chunk() -> Vec<CheckItem> {
    let n = 16;
    let batch = random_batch(n, 16, 7);
    let params = LossParams::default();
    let masks = build_masks(n).unwrap();
    let mono = sigclr_loss(&batch, &masks, &params).unwrap();

    let mut value_worst = 0.0f64;
    let mut grad_worst = 0.0f64;
    let mut coverage_ok = true;
    let mut peak_ok = true;
    let mut exchange_ok = true;
    for &d in &[1usize, 2, 4, 8] {
        let plan = plan_shards(n, d).unwrap();
        let opts = ChunkOptions {
            threads: 1,
            record_coverage: true,
        };
        let (out, report) =
            chunked_sigclr_loss_instrumented(&batch, &params, &plan, &opts).unwrap();
        value_worst = value_worst.max((out.value - mono.value).abs());
        grad_worst = grad_worst
            .max(out.grad_embeddings.max_abs_diff(&mono.grad_embeddings))
            .max((out.grad_bias - mono.grad_bias).abs());
        let coverage = report.coverage.as_ref().unwrap();
        if coverage.len() != (2 * n) * (2 * n) || coverage.iter().any(|&c| c != 1) {
            coverage_ok = false;
        }
        let expected_peak = (2 * n / d) * (2 * n / d);
        if report.devices.iter().any(|r| r.peak_block_elems != expected_peak) {
            peak_ok = false;
        }
        if report.exchange_count != d * (d - 1) || chunk_exchange_count(&plan) != d * (d - 1) {
            exchange_ok = false;
        }
    }

    vec![
        CheckItem::new(
            "chunk: loss value matches monolithic for D in {1,2,4,8}",
            value_worst <= 1e-9,
            format!("max |diff| {value_worst:e} (<= 1e-9)"),
        ),
        CheckItem::new(
            "chunk: gradients match monolithic for D in {1,2,4,8}",
            grad_worst <= 1e-9,
            format!("max |diff| {grad_worst:e} (<= 1e-9)"),
        ),
        CheckItem::new(
            "chunk: block visitation covers every index exactly once",
            coverage_ok,
            "(2n)^2 bitmap, counts all 1",
        ),
        CheckItem::new(
            "chunk: peak pairwise block per device = (2n/D)^2",
            peak_ok,
            "quadratic pairwise memory drops to per-chunk blocks",
        ),
        CheckItem::new(
            "chunk: exchange count is D(D-1)",
            exchange_ok,
            "each device receives D-1 remote chunks",
        ),
    ]
}

pub fn check_all() -> Vec<CheckItem> {
    let mut items = check_masks();
    items.extend(check_loss_values());
    items.extend(check_grad());
    items.extend(check_chunk());
    items
}

/// One row of the `chunk-bench` report.
#[derive(Debug, Clone)]
pub struct ChunkBenchRow {
    pub devices: usize,
    pub wall_ms: f64,
    pub peak_block_elems: usize,
    pub exchange_count: usize,
    pub max_value_dev: f64,
    pub max_grad_dev: f64,
}

/// Time the chunked loss across device counts and report peak block
/// memory, exchange counts, and deviation from the monolithic loss.
/// Returns the rows plus the monolithic pair-matrix element count.
pub fn chunk_bench(
    pairs: usize,
    dim: usize,
    devices: &[usize],
    seed: u64,
    threads: usize,
) -> Result<(Vec<ChunkBenchRow>, usize)> {
    let batch = random_batch(pairs, dim, seed);
    let masks = build_masks(pairs)?;
    let params = LossParams {
        retain_pair_terms: true,
        ..LossParams::default()
    };
    let mono = sigclr_loss(&batch, &masks, &params)?;
    let mono_elems = mono
        .pair_terms
        .as_ref()
        .map(|m| m.data().len())
        .unwrap_or(0);

    let mut rows = Vec::new();
    for &d in devices {
        let plan = plan_shards(pairs, d)?;
        let opts = ChunkOptions {
            threads,
            record_coverage: false,
        };
        let start = Instant::now();
        let (out, report) = chunked_sigclr_loss_instrumented(&batch, &params, &plan, &opts)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        rows.push(ChunkBenchRow {
            devices: d,
            wall_ms,
            peak_block_elems: report.devices.iter().map(|r| r.peak_block_elems).max().unwrap_or(0),
            exchange_count: report.exchange_count,
            max_value_dev: (out.value - mono.value).abs(),
            max_grad_dev: out.grad_embeddings.max_abs_diff(&mono.grad_embeddings),
        });
    }
    Ok((rows, mono_elems))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        let items = check_all();
        for item in &items {
            assert!(item.passed, "{}: {}", item.name, item.detail);
        }
        assert!(all_passed(&items));
    }

    #[test]
    fn bench_reports_quadratic_reduction() {
        let (rows, mono_elems) = chunk_bench(16, 8, &[1, 4, 8], 0, 1).unwrap();
        assert_eq!(mono_elems, 32 * 32);
        assert_eq!(rows[1].peak_block_elems, 8 * 8);
        assert_eq!(rows[2].peak_block_elems, 4 * 4);
        assert!(rows.iter().all(|r| r.max_value_dev <= 1e-9));
    }
}
