//! Run configuration file (TOML).
//!
//! ```toml
//! seed = 7                  # global seed; every component seed derives from it
//! val_frac = 0.2
//! loss_variant = "base+ood" # base | base+id | base+ood | base+id+ood
//! out_dir = "runs/demo"     # optional, `--out` overrides
//! tn_rate = 0.99            # optional
//!
//! [data]                    # exactly one of `csv` or `[data.synth]`
//! csv = "dataset.csv"       # relative to the config file
//!
//! [data.synth]              # every field optional
//! d = 6
//! k = 8
//! n_id = 4000
//! n_ood = 2000
//! noise_sd = 0.01
//! split_plane = { normal = [1, 1, 0, 0, 0, 0], offset = 0.5 }
//!
//! [checksum]
//! kind = "sinusoid"         # or "linear"
//! w = 0.0001
//!
//! [loss]
//! lambda_id = 0.01
//! lambda_ood = 0.01
//! epsilon = 1e-8
//!
//! [train]
//! epochs = 500
//! batch_size = 64
//! hidden = [128, 128, 128]
//! activation = "tanh"
//! optimizer = { kind = "adam", lr = 0.001 }
//!
//! [ood]
//! lo_frac = 0.20
//! hi_frac = 0.25
//! pool_size = 3200
//!
//! [sweep]
//! repeats = 5
//! ```
//!
//! Seeds not given explicitly are derived from `seed` with
//! [`derive_seed`](crate::rng::derive_seed) under the component names
//! `data/function`, `data/sample`, `split` and `train`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::checksum::{ChecksumSpec, DEFAULT_SINUSOID_W};
use crate::data::{SplitPlane, SynthSpec};
use crate::error::{Error, Result};
use crate::loss::{LossConfig, LossVariant, DEFAULT_EPSILON, DEFAULT_LAMBDA};
use crate::metrics::DEFAULT_TN_RATE;
use crate::network::{Activation, DEFAULT_HIDDEN};
use crate::optim::OptimizerConfig;
use crate::rng::derive_seed;
use crate::trainer::{OodConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synth(SynthSpec),
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub val_frac: f64,
    pub tn_rate: f64,
    pub out_dir: Option<PathBuf>,
    pub data: DataSource,
    pub loss_variant: LossVariant,
    pub loss: LossCoefficients,
    pub checksum: ChecksumSpec,
    pub train: TrainSection,
    pub ood: OodConfig,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossCoefficients {
    #[serde(default = "default_lambda")]
    pub lambda_id: f64,
    #[serde(default = "default_lambda")]
    pub lambda_ood: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl Default for LossCoefficients {
    fn default() -> Self {
        Self {
            lambda_id: DEFAULT_LAMBDA,
            lambda_ood: DEFAULT_LAMBDA,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Overrides the seed derived from the global seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch(),
            hidden: default_hidden(),
            activation: Activation::default(),
            optimizer: OptimizerConfig::default(),
            seed: None,
        }
    }
}

fn default_epochs() -> usize {
    500
}
fn default_batch() -> usize {
    64
}
fn default_hidden() -> Vec<usize> {
    DEFAULT_HIDDEN.to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            repeats: default_repeats(),
        }
    }
}

fn default_repeats() -> usize {
    5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_val_frac")]
    val_frac: f64,
    #[serde(default = "default_tn_rate")]
    tn_rate: f64,
    #[serde(default)]
    out_dir: Option<PathBuf>,
    data: RawData,
    #[serde(default = "default_variant")]
    loss_variant: String,
    #[serde(default)]
    loss: LossCoefficients,
    #[serde(default)]
    checksum: Option<RawChecksum>,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    ood: OodConfig,
    #[serde(default)]
    sweep: SweepSection,
}

fn default_val_frac() -> f64 {
    0.2
}
fn default_tn_rate() -> f64 {
    DEFAULT_TN_RATE
}
fn default_variant() -> String {
    "base".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChecksum {
    kind: String,
    #[serde(default)]
    w: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    #[serde(default)]
    csv: Option<PathBuf>,
    #[serde(default)]
    synth: Option<RawSynth>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynth {
    d: Option<usize>,
    k: Option<usize>,
    n_id: Option<usize>,
    n_ood: Option<usize>,
    function_seed: Option<u64>,
    sample_seed: Option<u64>,
    noise_sd: Option<f64>,
    split_plane: Option<SplitPlane>,
}

impl RawSynth {
    fn resolve(self, global: u64) -> SynthSpec {
        let defaults = SynthSpec::default();
        let d = self.d.unwrap_or(defaults.d);
        let split_plane = self.split_plane.unwrap_or_else(|| {
            // default plane x_0 + x_1 = offset, padded to d
            let mut normal = vec![0.0; d];
            for v in normal.iter_mut().take(2) {
                *v = 1.0;
            }
            SplitPlane {
                normal,
                offset: defaults.split_plane.offset,
            }
        });
        SynthSpec {
            d,
            k: self.k.unwrap_or(defaults.k),
            n_id: self.n_id.unwrap_or(defaults.n_id),
            n_ood: self.n_ood.unwrap_or(defaults.n_ood),
            function_seed: self
                .function_seed
                .unwrap_or_else(|| derive_seed(global, "data/function")),
            sample_seed: self
                .sample_seed
                .unwrap_or_else(|| derive_seed(global, "data/sample")),
            noise_sd: self.noise_sd.unwrap_or(defaults.noise_sd),
            split_plane,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_with_seed(&text, base, seed_override)
    }

    /// Parses a config; relative CSV paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        Self::from_toml_with_seed(text, base_dir, None)
    }

    /// As [`RunConfig::from_toml`], with `seed_override` replacing the global seed before
    /// any unpinned component seed is derived.
    pub fn from_toml_with_seed(text: &str, base_dir: &Path, seed_override: Option<u64>) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1) as u64);
            Error::Parse {
                line,
                detail: format!("config: {}", e.message()),
            }
        })?;
        Self::from_raw(raw, base_dir, seed_override)
    }

    fn from_raw(raw: RawConfig, base_dir: &Path, seed_override: Option<u64>) -> Result<Self> {
        let seed = seed_override.unwrap_or(raw.seed);
        let data = match (raw.data.csv, raw.data.synth) {
            (Some(p), None) => {
                let p = if p.is_absolute() { p } else { base_dir.join(p) };
                if !p.is_file() {
                    return Err(Error::config(format!("dataset {} does not exist", p.display())));
                }
                DataSource::Csv(p)
            }
            (None, Some(s)) => DataSource::Synth(s.resolve(seed)),
            _ => {
                return Err(Error::config(
                    "[data] needs exactly one of `csv` or `[data.synth]`",
                ))
            }
        };
        let checksum = match raw.checksum {
            None => ChecksumSpec::Linear,
            Some(RawChecksum { kind, w }) => match kind.as_str() {
                "linear" if w.is_none() => ChecksumSpec::Linear,
                "linear" => return Err(Error::config("the linear checksum takes no `w`")),
                "sinusoid" => ChecksumSpec::sinusoid(w.unwrap_or(DEFAULT_SINUSOID_W))?,
                other => return Err(Error::config(format!("unknown checksum kind '{other}'"))),
            },
        };
        let cfg = RunConfig {
            seed,
            val_frac: raw.val_frac,
            tn_rate: raw.tn_rate,
            out_dir: raw.out_dir,
            data,
            loss_variant: raw.loss_variant.parse()?,
            loss: raw.loss,
            checksum,
            train: raw.train,
            ood: raw.ood,
            sweep: raw.sweep,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.val_frac > 0.0 && self.val_frac < 1.0) {
            return Err(Error::config("val_frac must be in (0, 1)"));
        }
        if !(self.tn_rate > 0.0 && self.tn_rate <= 1.0) {
            return Err(Error::config("tn_rate must be in (0, 1]"));
        }
        if let DataSource::Synth(s) = &self.data {
            s.validate()?;
        }
        self.loss_config().validate()?;
        self.train.optimizer.validate()?;
        if self.sweep.repeats == 0 {
            return Err(Error::config("sweep.repeats must be >= 1"));
        }
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            lambda_id: self.loss.lambda_id,
            lambda_ood: self.loss.lambda_ood,
            epsilon: self.loss.epsilon,
            ..LossConfig::for_variant(self.loss_variant)
        }
    }

    pub fn train_seed(&self) -> u64 {
        self.train.seed.unwrap_or_else(|| derive_seed(self.seed, "train"))
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, "split")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            optimizer: self.train.optimizer,
            seed: self.train_seed(),
            loss: self.loss_config(),
            checksum: self.checksum,
            hidden: self.train.hidden.clone(),
            activation: self.train.activation,
            ood: self.ood.clone(),
        }
    }
}
