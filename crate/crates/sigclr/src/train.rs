//! Experiment orchestration: seeded end-to-end pretraining, linear-probe
//! evaluation, and batch-size sweeps.
//!
//! Determinism contract: every random draw derives from the run seed and a
//! fixed stream id (`streams`), so a (config, seed) pair reproduces the
//! metrics CSV byte-for-byte. Augmentation streams depend only on
//! (seed, epoch, record id); the loss branch consumes no randomness, so
//! SigCLR and NT-Xent runs see identical view streams under one seed.

use crate::checkpoint::{save_tensors, NamedTensor};
use crate::chunked::{chunked_sigclr_loss_instrumented, plan_shards, ChunkOptions, ShardPlan};
use crate::config::{DataConfig, LossKind, RunConfig};
use crate::data::{
    eval_transform, read_cifar10, synth_cluster_images, two_views, EvalPhase, ImageRecord,
};
use crate::error::{Error, Result};
use crate::kernel::Matrix;
use crate::loss::{
    build_masks, ntxent_loss, sigclr_loss, EmbeddingBatch, LossOutput, LossParams, PairMasks,
    TemperatureParamSpace,
};
use crate::model::Model;
use crate::optim::{lr_at, Lars};
use crate::probe::{fit_linear_probe, top1, ProbeResult};
use crate::streams;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::time::Instant;

/// Worker-thread cap from `SIGCLR_THREADS` (default 1).
pub fn thread_cap() -> usize {
    std::env::var("SIGCLR_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// One metrics line per epoch. `wall_seconds` is measured, not replayed,
/// so it lives in the JSON summary rather than the byte-reproducible CSV.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub learning_rate: f64,
    pub bias_value: f64,
    pub temperature_value: f64,
    pub wall_seconds: f64,
}

pub const METRICS_HEADER: &str = "epoch,train_loss,learning_rate,bias_value,temperature_value";

#[derive(Debug)]
pub struct PretrainOutcome {
    pub model: Model,
    pub metrics: Vec<MetricsRow>,
    pub metrics_csv: PathBuf,
    pub summary_json: PathBuf,
    pub checkpoint: PathBuf,
    /// SHA-256 over the first training epoch's assembled view batches.
    pub view_stream_hash: String,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Load the configured dataset as (train, held-out test) records.
pub fn load_dataset(cfg: &RunConfig) -> Result<(Vec<ImageRecord>, Vec<ImageRecord>)> {
    match &cfg.data {
        DataConfig::Synthetic {
            classes,
            per_class,
            test_per_class,
            height,
            width,
            channels,
            separation,
            seed,
        } => {
            let total_per_class = per_class + test_per_class;
            let all = synth_cluster_images(
                *classes,
                total_per_class,
                *height,
                *width,
                *channels,
                *separation,
                *seed,
            )?;
            let mut train = Vec::with_capacity(classes * per_class);
            let mut test = Vec::with_capacity(classes * test_per_class);
            for c in 0..*classes {
                let block = &all[c * total_per_class..(c + 1) * total_per_class];
                train.extend_from_slice(&block[..*per_class]);
                test.extend_from_slice(&block[*per_class..]);
            }
            Ok((train, test))
        }
        DataConfig::Cifar10 { dir } => {
            let mut train = Vec::new();
            for i in 1..=5 {
                let path = dir.join(format!("data_batch_{i}.bin"));
                if path.is_file() {
                    train.extend(read_cifar10(&path)?);
                }
            }
            if train.is_empty() {
                return Err(Error::Config(format!(
                    "no data_batch_*.bin files found in {}",
                    dir.display()
                )));
            }
            let test_path = dir.join("test_batch.bin");
            let test = if test_path.is_file() {
                read_cifar10(&test_path)?
            } else {
                Vec::new()
            };
            Ok((train, test))
        }
    }
}

fn class_count(cfg: &RunConfig) -> usize {
    match &cfg.data {
        DataConfig::Synthetic { classes, .. } => *classes,
        DataConfig::Cifar10 { .. } => 10,
    }
}

fn aug_rng(seed: u64, epoch: usize, record: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(streams::augment(epoch, record));
    rng
}

/// Assemble the `2n x input_dim` two-view batch: view A rows first, then
/// view B rows, in mini-batch order.
fn build_batch(
    records: &[ImageRecord],
    ids: &[usize],
    cfg: &RunConfig,
    epoch: usize,
) -> Result<Matrix> {
    let n = ids.len();
    let dim = cfg.input_dim();
    let mut x = Matrix::zeros(2 * n, dim);
    for (pos, &id) in ids.iter().enumerate() {
        let mut rng = aug_rng(cfg.seed, epoch, id);
        let (va, vb) = two_views(&records[id], &cfg.augment, &mut rng)?;
        if va.len() != dim {
            return Err(Error::Shape(format!(
                "augmented view width {} does not match model input {dim}",
                va.len()
            )));
        }
        x.row_mut(pos).copy_from_slice(&va);
        x.row_mut(n + pos).copy_from_slice(&vb);
    }
    Ok(x)
}

struct LossState {
    kind: LossKind,
    base: LossParams,
    ntxent_temperature: f64,
    bias: f64,
    /// Temperature in its optimization space (log t or raw t).
    temp_param: f64,
}

impl LossState {
    fn new(cfg: &RunConfig) -> Self {
        let temp_param = if cfg.loss.learnable_temperature {
            match cfg.loss.temperature_param_space {
                TemperatureParamSpace::Log => cfg.loss.temperature.ln(),
                TemperatureParamSpace::Raw => cfg.loss.temperature,
            }
        } else {
            cfg.loss.temperature
        };
        LossState {
            kind: cfg.loss_kind,
            base: cfg.loss.clone(),
            ntxent_temperature: cfg.ntxent_temperature,
            bias: cfg.loss.bias,
            temp_param,
        }
    }

    fn temperature(&self) -> f64 {
        if self.base.learnable_temperature {
            match self.base.temperature_param_space {
                TemperatureParamSpace::Log => self.temp_param.exp(),
                TemperatureParamSpace::Raw => self.temp_param,
            }
        } else {
            self.base.temperature
        }
    }

    fn params(&self) -> LossParams {
        LossParams {
            temperature: self.temperature(),
            bias: self.bias,
            ..self.base.clone()
        }
    }

    fn evaluate(
        &self,
        z: Matrix,
        masks: &PairMasks,
        plan: Option<&ShardPlan>,
        threads: usize,
    ) -> Result<LossOutput> {
        let batch = EmbeddingBatch::from_rows(z)?;
        match (self.kind, plan) {
            (LossKind::Sigclr, None) => sigclr_loss(&batch, masks, &self.params()),
            (LossKind::Sigclr, Some(plan)) => {
                let opts = ChunkOptions {
                    threads,
                    record_coverage: false,
                };
                chunked_sigclr_loss_instrumented(&batch, &self.params(), plan, &opts)
                    .map(|(out, _)| out)
            }
            (LossKind::Ntxent, _) => ntxent_loss(&batch, self.ntxent_temperature),
        }
    }
}

fn format_row(row: &MetricsRow) -> String {
    format!(
        "{},{},{},{},{}",
        row.epoch, row.train_loss, row.learning_rate, row.bias_value, row.temperature_value
    )
}

fn checkpoint_tensors(model: &Model, loss: &LossState) -> Vec<NamedTensor> {
    let mut tensors = model.to_named_tensors();
    tensors.push(NamedTensor::scalar("loss.bias", loss.bias));
    tensors.push(NamedTensor::scalar("loss.temperature", loss.temperature()));
    tensors
}

/// Seeded end-to-end pretraining: per epoch, shuffle, build two-view
/// batches (drop-last), forward, loss (monolithic or chunked), backward,
/// LARS step, schedule advance. Emits one metrics row per epoch plus an
/// epoch-0 row describing the initial state, and writes the final
/// checkpoint, metrics CSV, and JSON summary under `cfg.out_dir`.
pub fn pretrain(cfg: &RunConfig) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let (train, _) = load_dataset(cfg)?;
    let batch_size = cfg.batch_size();
    let steps_per_epoch = train.len() / batch_size;
    if steps_per_epoch == 0 {
        return Err(Error::Config(format!(
            "batch size {batch_size} exceeds the {}-record training set",
            train.len()
        )));
    }

    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut model = Model::init(cfg.model.spec(cfg.input_dim()), cfg.seed)?;
    let mut loss_state = LossState::new(cfg);
    let masks = build_masks(batch_size)?;
    let plan = if cfg.devices > 1 {
        Some(plan_shards(batch_size, cfg.devices)?)
    } else {
        None
    };
    let threads = thread_cap();

    let mut opt_cfg = cfg.optimizer.clone();
    for name in model.bias_tensor_names() {
        opt_cfg.lars_excluded.insert(name);
    }
    opt_cfg.lars_excluded.insert("loss.bias".into());
    opt_cfg.lars_excluded.insert("loss.temperature".into());
    let mut lars = Lars::new(opt_cfg.clone())?;

    // Epoch-0 row: state before any update, including the loss of the
    // first batch under the initial parameters.
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(streams::shuffle(0));
    let mut first_order: Vec<usize> = (0..train.len()).collect();
    first_order.shuffle(&mut shuffle_rng);
    let first_batch = build_batch(&train, &first_order[..batch_size], cfg, 0)?;
    let (_, z0) = model.forward_frozen(&first_batch)?;
    let initial_loss = loss_state.evaluate(z0, &masks, plan.as_ref(), threads)?.value;

    let mut metrics = vec![MetricsRow {
        epoch: 0,
        train_loss: initial_loss,
        learning_rate: lr_at(&opt_cfg, 0.0)?,
        bias_value: loss_state.bias,
        temperature_value: loss_state.temperature(),
        wall_seconds: 0.0,
    }];

    let run_start = Instant::now();
    let mut hasher = Some(Sha256::new());
    let mut view_hash = hex_digest(hasher.take().unwrap());
    let mut first_epoch_hasher = Sha256::new();

    for epoch in 0..cfg.epochs() {
        let epoch_start = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(streams::shuffle(epoch));
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut last_lr = 0.0;
        for step in 0..steps_per_epoch {
            let ids = &order[step * batch_size..(step + 1) * batch_size];
            let x = build_batch(&train, ids, cfg, epoch)?;
            if epoch == 0 {
                for v in x.data() {
                    first_epoch_hasher.update(v.to_le_bytes());
                }
            }
            let fraction = epoch as f64 + step as f64 / steps_per_epoch as f64;
            let lr = lr_at(&opt_cfg, fraction)?;
            last_lr = lr;

            let (_, z) = model.forward(&x)?;
            let out = loss_state.evaluate(z, &masks, plan.as_ref(), threads)?;
            if !out.value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: step,
                    bias: loss_state.bias,
                    temperature: loss_state.temperature(),
                });
            }
            epoch_loss += out.value;

            let grads = model.backward(&out.grad_embeddings)?;
            let grads_named = grads.named();
            let mut bias_arr = [loss_state.bias];
            let mut temp_arr = [loss_state.temp_param];
            let grad_bias_arr = [out.grad_bias];
            let grad_temp_arr = [out.grad_temperature];
            {
                let named = model.named_tensors_mut();
                let mut triples: Vec<(&str, &mut [f64], &[f64])> = Vec::new();
                for ((pname, pvals), (gname, gvals)) in named.into_iter().zip(grads_named.iter()) {
                    debug_assert_eq!(&pname, gname);
                    triples.push((gname.as_str(), pvals, gvals));
                }
                triples.push(("loss.bias", &mut bias_arr, &grad_bias_arr));
                triples.push(("loss.temperature", &mut temp_arr, &grad_temp_arr));
                lars.step(triples, lr)?;
            }
            loss_state.bias = bias_arr[0];
            if cfg.loss.learnable_temperature {
                loss_state.temp_param = temp_arr[0];
            }
        }

        if epoch == 0 {
            view_hash = hex_digest(std::mem::take(&mut first_epoch_hasher));
        }
        metrics.push(MetricsRow {
            epoch: epoch + 1,
            train_loss: epoch_loss / steps_per_epoch as f64,
            learning_rate: last_lr,
            bias_value: loss_state.bias,
            temperature_value: loss_state.temperature(),
            wall_seconds: epoch_start.elapsed().as_secs_f64(),
        });

        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            let path = cfg.out_dir.join(format!("checkpoint_epoch{}.sgcl", epoch + 1));
            save_tensors(&path, &checkpoint_tensors(&model, &loss_state))?;
        }
    }

    let checkpoint = cfg.out_dir.join("checkpoint.sgcl");
    save_tensors(&checkpoint, &checkpoint_tensors(&model, &loss_state))?;

    let metrics_csv = cfg.out_dir.join("metrics.csv");
    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    for row in &metrics {
        csv.push_str(&format_row(row));
        csv.push('\n');
    }
    std::fs::write(&metrics_csv, csv)?;

    let final_loss = metrics.last().unwrap().train_loss;
    let summary_json = cfg.out_dir.join("summary.json");
    let summary = serde_json::json!({
        "loss": cfg.loss_kind.as_str(),
        "seed": cfg.seed,
        "epochs": cfg.epochs(),
        "batch_size": batch_size,
        "devices": cfg.devices,
        "initial_loss": initial_loss,
        "final_loss": final_loss,
        "view_stream_hash": view_hash,
        "total_wall_seconds": run_start.elapsed().as_secs_f64(),
        "per_epoch_wall_seconds": metrics.iter().skip(1).map(|r| r.wall_seconds).collect::<Vec<_>>(),
        "checkpoint": checkpoint.display().to_string(),
        "metrics_csv": metrics_csv.display().to_string(),
    });
    std::fs::write(&summary_json, format!("{:#}\n", summary))?;

    Ok(PretrainOutcome {
        model,
        metrics,
        metrics_csv,
        summary_json,
        checkpoint,
        view_stream_hash: view_hash,
        initial_loss,
        final_loss,
    })
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Frozen-encoder feature extraction in fixed-size forward chunks.
fn encoder_features(model: &Model, rows: Vec<Vec<f64>>, input_dim: usize) -> Result<Matrix> {
    let count = rows.len();
    let embed = model.spec().embed_dim();
    let mut features = Matrix::zeros(count, embed);
    const CHUNK: usize = 256;
    let mut start = 0;
    while start < count {
        let end = (start + CHUNK).min(count);
        let mut x = Matrix::zeros(end - start, input_dim);
        for (i, row) in rows[start..end].iter().enumerate() {
            if row.len() != input_dim {
                return Err(Error::Shape(format!(
                    "feature row width {} vs model input {input_dim}",
                    row.len()
                )));
            }
            x.row_mut(i).copy_from_slice(row);
        }
        let (h, _) = model.forward_frozen(&x)?;
        for i in 0..(end - start) {
            features.row_mut(start + i).copy_from_slice(h.row(i));
        }
        start = end;
    }
    Ok(features)
}

/// Linear evaluation of a frozen encoder: train-phase transforms on the
/// training split, deterministic test-phase transforms on the held-out
/// split, probe fitted on encoder embeddings only.
pub fn run_probe(cfg: &RunConfig, model: &Model) -> Result<ProbeResult> {
    let (train, test) = load_dataset(cfg)?;
    if test.is_empty() {
        return Err(Error::Config(
            "probe needs a held-out test split (test_batch.bin or test_per_class > 0)".into(),
        ));
    }
    let classes = class_count(cfg);
    let input_dim = cfg.input_dim();

    let mut train_rows = Vec::with_capacity(train.len());
    let mut train_labels = Vec::with_capacity(train.len());
    for (idx, rec) in train.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(streams::probe(idx));
        train_rows.push(eval_transform(rec, &cfg.augment, EvalPhase::Train, &mut rng)?);
        train_labels.push(rec.label);
    }
    let train_features = encoder_features(model, train_rows, input_dim)?;
    let fit = fit_linear_probe(&train_features, &train_labels, classes, &cfg.probe)?;

    let mut test_rows = Vec::with_capacity(test.len());
    let mut test_labels = Vec::with_capacity(test.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for rec in &test {
        test_rows.push(eval_transform(rec, &cfg.augment, EvalPhase::Test, &mut rng)?);
        test_labels.push(rec.label);
    }
    let test_features = encoder_features(model, test_rows, input_dim)?;
    let mut result = top1(&fit.weights, &test_features, &test_labels)?;
    result.epochs_run = fit.epochs_run;
    result.train_loss_curve = fit.loss_curve;
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub batch_size: usize,
    pub top1: Option<f64>,
    pub final_loss: Option<f64>,
    pub status: String,
}

/// Full-scale reference results (ResNet-18 encoder, 1000-epoch
/// pretraining), reported for context in sweep output and never asserted
/// at desk scale.
pub const REFERENCE_FOOTER: &[&str] = &[
    "# reference full-scale top-1 % (resnet-18, 1000-epoch pretraining):",
    "# sigclr cifar10:  64=91.26 128=91.77 256=92.11 512=92.59 1024=92.62",
    "# sigclr cifar100: 64=66.52 128=66.98 256=67.86 512=68.57 1024=68.58",
    "# sigclr tiny-in:  64=47.53 128=48.94 256=49.62 512=50.56 1024=51.54",
    "# simclr cifar10:  64=90.56 128=91.69 256=92.23 512=92.42 1024=92.26",
    "# simclr cifar100: 64=62.85 128=65.49 256=66.67 512=67.26 1024=66.49",
    "# simclr tiny-in:  64=46.08 128=48.16 256=49.92 512=49.16 1024=49.94",
    "# reported for context only; desk-scale runs do not reproduce them",
];

/// Pretrain + probe per batch size with linear lr scaling (built into the
/// schedule). Per-run failures are recorded and the sweep continues.
pub fn sweep(cfg: &RunConfig, batch_sizes: &[usize]) -> Result<Vec<SweepRow>> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut rows = Vec::new();
    for &bs in batch_sizes {
        let mut sub = cfg.clone();
        sub.optimizer.batch_size = bs;
        sub.out_dir = cfg.out_dir.join(format!("bs{bs}"));
        let row = match pretrain(&sub).and_then(|out| {
            let probe = run_probe(&sub, &out.model)?;
            Ok((out, probe))
        }) {
            Ok((out, probe)) => SweepRow {
                batch_size: bs,
                top1: Some(probe.top1),
                final_loss: Some(out.final_loss),
                status: "ok".into(),
            },
            Err(e) => SweepRow {
                batch_size: bs,
                top1: None,
                final_loss: None,
                status: format!("error: {e}"),
            },
        };
        rows.push(row);
    }

    let mut table = String::from("batch_size,top1,final_loss,status\n");
    for row in &rows {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        table.push_str(&format!(
            "{},{},{},{}\n",
            row.batch_size,
            fmt(row.top1),
            fmt(row.final_loss),
            row.status
        ));
    }
    for line in REFERENCE_FOOTER {
        table.push_str(line);
        table.push('\n');
    }
    std::fs::write(cfg.out_dir.join("sweep.csv"), table)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn tiny_cfg(dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.data = DataConfig::Synthetic {
            classes: 2,
            per_class: 24,
            test_per_class: 8,
            height: 4,
            width: 4,
            channels: 3,
            separation: 6.0,
            seed: 7,
        };
        cfg.augment.output_size = (4, 4);
        cfg.model.encoder_hidden = vec![16];
        cfg.model.embed_dim = 8;
        cfg.model.projector = vec![8, 8];
        cfg.optimizer.batch_size = 8;
        cfg.optimizer.total_epochs = 2;
        cfg.optimizer.warmup_epochs = 1;
        cfg.out_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn zero_epochs_checkpoint_equals_initialization() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(dir.path());
        cfg.optimizer.total_epochs = 0;
        cfg.optimizer.warmup_epochs = 0;
        let out = pretrain(&cfg).unwrap();
        let init = Model::init(cfg.model.spec(cfg.input_dim()), cfg.seed).unwrap();
        let saved = crate::checkpoint::load_tensors(&out.checkpoint).unwrap();
        for expected in init.to_named_tensors() {
            let got = saved.iter().find(|t| t.name == expected.name).unwrap();
            assert_eq!(got.data, expected.data);
        }
        assert_eq!(out.metrics.len(), 1);
        assert_eq!(out.metrics[0].bias_value, -10.0);
    }

    #[test]
    fn same_seed_reproduces_metrics_and_checkpoint_bytes() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = pretrain(&tiny_cfg(dir_a.path())).unwrap();
        let b = pretrain(&tiny_cfg(dir_b.path())).unwrap();
        assert_eq!(
            std::fs::read(&a.metrics_csv).unwrap(),
            std::fs::read(&b.metrics_csv).unwrap()
        );
        assert_eq!(
            std::fs::read(&a.checkpoint).unwrap(),
            std::fs::read(&b.checkpoint).unwrap()
        );
        assert_eq!(a.view_stream_hash, b.view_stream_hash);
    }

    #[test]
    fn sigclr_and_ntxent_share_the_view_stream() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mut cfg_a = tiny_cfg(dir_a.path());
        cfg_a.optimizer.total_epochs = 1;
        let mut cfg_b = tiny_cfg(dir_b.path());
        cfg_b.optimizer.total_epochs = 1;
        cfg_b.loss_kind = LossKind::Ntxent;
        let a = pretrain(&cfg_a).unwrap();
        let b = pretrain(&cfg_b).unwrap();
        assert_eq!(a.view_stream_hash, b.view_stream_hash);
        assert_ne!(a.final_loss, b.final_loss);
    }

    #[test]
    fn chunked_devices_match_single_device_training() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let cfg_a = tiny_cfg(dir_a.path());
        let mut cfg_b = tiny_cfg(dir_b.path());
        cfg_b.devices = 4;
        let a = pretrain(&cfg_a).unwrap();
        let b = pretrain(&cfg_b).unwrap();
        assert!((a.final_loss - b.final_loss).abs() < 1e-9);
    }

    #[test]
    fn probe_runs_on_trained_model() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        let out = pretrain(&cfg).unwrap();
        let result = run_probe(&cfg, &out.model).unwrap();
        assert!(result.top1 >= 0.0 && result.top1 <= 1.0);
        assert_eq!(result.per_class.len(), 2);
        assert!(result.epochs_run > 0);
    }

    #[test]
    fn probe_does_not_touch_model_parameters() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        let out = pretrain(&cfg).unwrap();
        let before = out.model.to_named_tensors();
        run_probe(&cfg, &out.model).unwrap();
        assert_eq!(before, out.model.to_named_tensors());
    }

    #[test]
    fn oversized_batch_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(dir.path());
        cfg.optimizer.batch_size = 4096;
        assert!(matches!(pretrain(&cfg), Err(Error::Config(_))));
    }
}
