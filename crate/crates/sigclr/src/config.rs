//! Run configuration: flat `key = value` files with dotted section
//! prefixes (e.g. `loss.temperature = 5`), plus CLI overrides. Unknown
//! keys are config errors so typos fail loudly.

use crate::data::AugmentationConfig;
use crate::error::{Error, Result};
use crate::loss::{LossParams, Normalization, TemperatureParamSpace};
use crate::model::ModelSpec;
use crate::optim::OptimizerConfig;
use crate::probe::ProbeConfig;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Sigclr,
    Ntxent,
}

impl LossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::Sigclr => "sigclr",
            LossKind::Ntxent => "ntxent",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigclr" => Ok(LossKind::Sigclr),
            "ntxent" => Ok(LossKind::Ntxent),
            other => Err(Error::Config(format!(
                "unknown loss `{other}` (expected sigclr or ntxent)"
            ))),
        }
    }
}

/// Dataset selection.
#[derive(Debug, Clone)]
pub enum DataConfig {
    Synthetic {
        classes: usize,
        per_class: usize,
        test_per_class: usize,
        height: usize,
        width: usize,
        channels: usize,
        separation: f64,
        seed: u64,
    },
    Cifar10 {
        dir: PathBuf,
    },
}

impl DataConfig {
    pub fn default_synthetic() -> Self {
        DataConfig::Synthetic {
            classes: 4,
            per_class: 256,
            test_per_class: 64,
            height: 8,
            width: 8,
            channels: 3,
            separation: 6.0,
            seed: 7,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            DataConfig::Synthetic { channels, .. } => *channels,
            DataConfig::Cifar10 { .. } => 3,
        }
    }
}

/// Encoder/projector widths; the input width comes from the augmentation
/// output shape and the dataset channel count.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub encoder_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub projector: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder_hidden: vec![256],
            embed_dim: 128,
            projector: vec![128, 128, 64],
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, input_dim: usize) -> ModelSpec {
        ModelSpec::mlp(input_dim, &self.encoder_hidden, self.embed_dim, &self.projector)
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub loss_kind: LossKind,
    pub loss: LossParams,
    /// NT-Xent temperature, independent of the sigmoid-loss temperature.
    pub ntxent_temperature: f64,
    pub optimizer: OptimizerConfig,
    pub augment: AugmentationConfig,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub devices: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Checkpoint every N epochs; 0 writes only the final checkpoint.
    pub checkpoint_every: usize,
    pub probe: ProbeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            loss_kind: LossKind::Sigclr,
            loss: LossParams::default(),
            ntxent_temperature: 0.5,
            optimizer: OptimizerConfig::default(),
            augment: AugmentationConfig {
                output_size: (8, 8),
                ..AugmentationConfig::default()
            },
            model: ModelConfig::default(),
            data: DataConfig::default_synthetic(),
            devices: 1,
            seed: 0,
            out_dir: PathBuf::from("sigclr-out"),
            checkpoint_every: 0,
            probe: ProbeConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn epochs(&self) -> usize {
        self.optimizer.total_epochs
    }

    pub fn batch_size(&self) -> usize {
        self.optimizer.batch_size
    }

    /// Flattened model input width: output pixels times channels.
    pub fn input_dim(&self) -> usize {
        self.augment.output_size.0 * self.augment.output_size.1 * self.data.channels()
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.optimizer.validate()?;
        self.augment.validate()?;
        if !(self.ntxent_temperature > 0.0) {
            return Err(Error::Config("ntxent temperature must be positive".into()));
        }
        if self.devices == 0 {
            return Err(Error::Config("devices must be >= 1".into()));
        }
        if (2 * self.batch_size()) % self.devices != 0 {
            return Err(Error::Config(format!(
                "{} devices do not divide 2x batch ({})",
                self.devices,
                2 * self.batch_size()
            )));
        }
        if self.loss_kind == LossKind::Ntxent && self.devices > 1 {
            return Err(Error::Config(
                "the chunked multi-device path supports only the sigclr loss".into(),
            ));
        }
        if self.model.embed_dim == 0
            || self.model.projector.is_empty()
            || self.model.encoder_hidden.iter().any(|&w| w == 0)
            || self.model.projector.iter().any(|&w| w == 0)
        {
            return Err(Error::Config("model widths must be positive".into()));
        }
        match &self.data {
            DataConfig::Synthetic {
                classes,
                per_class,
                test_per_class,
                height,
                width,
                channels,
                separation,
                ..
            } => {
                if *classes < 2 {
                    return Err(Error::Config("synthetic classes must be >= 2".into()));
                }
                if *per_class == 0 || *test_per_class == 0 {
                    return Err(Error::Config("synthetic record counts must be positive".into()));
                }
                if *height == 0 || *width == 0 || *channels == 0 {
                    return Err(Error::Config("synthetic image shape must be positive".into()));
                }
                if !(*separation >= 0.0) {
                    return Err(Error::Config("separation must be non-negative".into()));
                }
            }
            DataConfig::Cifar10 { dir } => {
                if !dir.is_dir() {
                    return Err(Error::Config(format!(
                        "cifar10 directory {} does not exist",
                        dir.display()
                    )));
                }
            }
        }
        if self.probe.max_epochs == 0 || !(self.probe.lr > 0.0) {
            return Err(Error::Config("probe epochs/lr out of range".into()));
        }
        Ok(())
    }

    /// Apply one `key = value` assignment.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("key `{key}`: {what} (got `{value}`)"));
        let parse_f64 = |v: &str| v.parse::<f64>().map_err(|_| bad("expected a number"));
        let parse_usize = |v: &str| v.parse::<usize>().map_err(|_| bad("expected a count"));
        let parse_u64 = |v: &str| v.parse::<u64>().map_err(|_| bad("expected an integer"));
        let parse_bool = |v: &str| match v {
            "true" | "on" | "1" => Ok(true),
            "false" | "off" | "0" => Ok(false),
            _ => Err(bad("expected true/false")),
        };
        let parse_list = |v: &str| -> Result<Vec<usize>> {
            v.split(',')
                .map(|p| p.trim().parse::<usize>().map_err(|_| bad("expected a comma list")))
                .collect()
        };

        match key {
            "loss.kind" => self.loss_kind = value.parse()?,
            "loss.temperature" => self.loss.temperature = parse_f64(value)?,
            "loss.bias_init" => self.loss.bias = parse_f64(value)?,
            "loss.learnable_temperature" => self.loss.learnable_temperature = parse_bool(value)?,
            "loss.temperature_param_space" => {
                self.loss.temperature_param_space = match value {
                    "raw" => TemperatureParamSpace::Raw,
                    "log" => TemperatureParamSpace::Log,
                    _ => return Err(bad("expected raw or log")),
                }
            }
            "loss.normalization" => {
                self.loss.normalization = match value {
                    "per_row" => Normalization::PerRow,
                    "mean" => Normalization::Mean,
                    _ => return Err(bad("expected per_row or mean")),
                }
            }
            "loss.eps" => self.loss.eps = parse_f64(value)?,
            "loss.ntxent_temperature" => self.ntxent_temperature = parse_f64(value)?,
            "opt.base_lr" => self.optimizer.base_lr = parse_f64(value)?,
            "opt.momentum" => self.optimizer.momentum = parse_f64(value)?,
            "opt.weight_decay" => self.optimizer.weight_decay = parse_f64(value)?,
            "opt.trust_coefficient" => self.optimizer.trust_coefficient = parse_f64(value)?,
            "opt.eps" => self.optimizer.eps = parse_f64(value)?,
            "opt.warmup_epochs" => self.optimizer.warmup_epochs = parse_usize(value)?,
            "opt.reference_batch" => self.optimizer.reference_batch = parse_usize(value)?,
            "train.epochs" => self.optimizer.total_epochs = parse_usize(value)?,
            "train.batch_size" => self.optimizer.batch_size = parse_usize(value)?,
            "train.devices" => self.devices = parse_usize(value)?,
            "train.seed" => self.seed = parse_u64(value)?,
            "train.out_dir" => self.out_dir = PathBuf::from(value),
            "train.checkpoint_every" => self.checkpoint_every = parse_usize(value)?,
            "aug.crop_scale_min" => self.augment.crop_scale_range.0 = parse_f64(value)?,
            "aug.crop_scale_max" => self.augment.crop_scale_range.1 = parse_f64(value)?,
            "aug.crop_aspect_min" => self.augment.crop_aspect_range.0 = parse_f64(value)?,
            "aug.crop_aspect_max" => self.augment.crop_aspect_range.1 = parse_f64(value)?,
            "aug.flip_prob" => self.augment.flip_prob = parse_f64(value)?,
            "aug.jitter_prob" => self.augment.jitter_apply_prob = parse_f64(value)?,
            "aug.brightness" => self.augment.brightness = parse_f64(value)?,
            "aug.contrast" => self.augment.contrast = parse_f64(value)?,
            "aug.saturation" => self.augment.saturation = parse_f64(value)?,
            "aug.hue" => self.augment.hue = parse_f64(value)?,
            "aug.grayscale_prob" => self.augment.grayscale_prob = parse_f64(value)?,
            "aug.blur_prob_a" => self.augment.blur_prob_a = parse_f64(value)?,
            "aug.blur_prob_b" => self.augment.blur_prob_b = parse_f64(value)?,
            "aug.blur_sigma_min" => self.augment.blur_sigma_range.0 = parse_f64(value)?,
            "aug.blur_sigma_max" => self.augment.blur_sigma_range.1 = parse_f64(value)?,
            "aug.output_height" => self.augment.output_size.0 = parse_usize(value)?,
            "aug.output_width" => self.augment.output_size.1 = parse_usize(value)?,
            "model.encoder_hidden" => self.model.encoder_hidden = parse_list(value)?,
            "model.embed_dim" => self.model.embed_dim = parse_usize(value)?,
            "model.projector" => self.model.projector = parse_list(value)?,
            "data.kind" => match value {
                "synthetic" => {
                    if !matches!(self.data, DataConfig::Synthetic { .. }) {
                        self.data = DataConfig::default_synthetic();
                    }
                }
                "cifar10" => {
                    if !matches!(self.data, DataConfig::Cifar10 { .. }) {
                        self.data = DataConfig::Cifar10 {
                            dir: PathBuf::from("."),
                        };
                    }
                }
                _ => return Err(bad("expected synthetic or cifar10")),
            },
            "data.path" => match &mut self.data {
                DataConfig::Cifar10 { dir } => *dir = PathBuf::from(value),
                _ => {
                    self.data = DataConfig::Cifar10 {
                        dir: PathBuf::from(value),
                    }
                }
            },
            "data.classes" | "data.per_class" | "data.test_per_class" | "data.height"
            | "data.width" | "data.channels" | "data.separation" | "data.seed" => {
                let DataConfig::Synthetic {
                    classes,
                    per_class,
                    test_per_class,
                    height,
                    width,
                    channels,
                    separation,
                    seed,
                } = &mut self.data
                else {
                    return Err(Error::Config(format!(
                        "key `{key}` applies only to synthetic data (set data.kind first)"
                    )));
                };
                match key {
                    "data.classes" => *classes = parse_usize(value)?,
                    "data.per_class" => *per_class = parse_usize(value)?,
                    "data.test_per_class" => *test_per_class = parse_usize(value)?,
                    "data.height" => *height = parse_usize(value)?,
                    "data.width" => *width = parse_usize(value)?,
                    "data.channels" => *channels = parse_usize(value)?,
                    "data.separation" => *separation = parse_f64(value)?,
                    "data.seed" => *seed = parse_u64(value)?,
                    _ => unreachable!(),
                }
            }
            "probe.epochs" => self.probe.max_epochs = parse_usize(value)?,
            "probe.lr" => self.probe.lr = parse_f64(value)?,
            "probe.momentum" => self.probe.momentum = parse_f64(value)?,
            "probe.tol" => self.probe.tol = parse_f64(value)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }
}

/// Parse a flat `key = value` config file into a `RunConfig` starting from
/// defaults. `#` starts a comment; blank lines are skipped.
pub fn load_config_file(path: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    apply_config_file(&mut cfg, path)?;
    Ok(cfg)
}

pub fn apply_config_file(cfg: &mut RunConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "{}:{}: expected `key = value`, got `{raw}`",
                path.display(),
                lineno + 1
            )));
        };
        cfg.apply_kv(key.trim(), value.trim()).map_err(|e| {
            Error::Config(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn kv_overrides_apply() {
        let mut cfg = RunConfig::default();
        cfg.apply_kv("loss.kind", "ntxent").unwrap();
        cfg.apply_kv("loss.temperature", "2.5").unwrap();
        cfg.apply_kv("train.batch_size", "128").unwrap();
        cfg.apply_kv("model.projector", "64, 64, 32").unwrap();
        assert_eq!(cfg.loss_kind, LossKind::Ntxent);
        assert_eq!(cfg.loss.temperature, 2.5);
        assert_eq!(cfg.batch_size(), 128);
        assert_eq!(cfg.model.projector, vec![64, 64, 32]);
    }

    #[test]
    fn unknown_key_is_a_config_error() {
        let mut cfg = RunConfig::default();
        assert!(matches!(
            cfg.apply_kv("loss.temprature", "5"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn config_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# desk preset\nloss.temperature = 5\ntrain.epochs = 3  # short\n\ndata.separation = 4.5\n",
        )
        .unwrap();
        let cfg = load_config_file(&path).unwrap();
        assert_eq!(cfg.loss.temperature, 5.0);
        assert_eq!(cfg.epochs(), 3);
        match cfg.data {
            DataConfig::Synthetic { separation, .. } => assert_eq!(separation, 4.5),
            _ => panic!("expected synthetic"),
        }
    }

    #[test]
    fn malformed_line_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "loss.temperature 5\n").unwrap();
        let err = load_config_file(&path).unwrap_err();
        assert!(err.to_string().contains(":1:"));
    }

    #[test]
    fn ntxent_with_multiple_devices_rejected() {
        let mut cfg = RunConfig::default();
        cfg.loss_kind = LossKind::Ntxent;
        cfg.devices = 2;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn device_divisibility_enforced() {
        let mut cfg = RunConfig::default();
        cfg.optimizer.batch_size = 31;
        cfg.devices = 4;
        assert!(cfg.validate().is_err());
        cfg.optimizer.batch_size = 32;
        cfg.validate().unwrap();
    }

    #[test]
    fn missing_cifar_dir_fails_validation() {
        let mut cfg = RunConfig::default();
        cfg.data = DataConfig::Cifar10 {
            dir: PathBuf::from("/nonexistent/cifar"),
        };
        assert!(cfg.validate().is_err());
    }
}
