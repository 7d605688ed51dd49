//! Seeded minibatch training under the composite loss.
//!
//! Component seeds come from `TrainConfig::seed` through [`derive_seed`]:
//! `"init"` for weights, `"shuffle"` for per-epoch orderings and `"ood_pool"`
//! for the shell sample pool (unless `ood.seed` is set).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checksum::ChecksumSpec;
use crate::data::{LabeledDataset, Partition};
use crate::error::{Error, Result};
use crate::loss::{self, LossConfig, LossTerms};
use crate::matrix::Matrix;
use crate::network::{init_params, layer_dims_for, Activation, ModelParams, NormStat, DEFAULT_HIDDEN};
use crate::ood_sampler::{bounding_hypercube, sample_shell, ShellSpec, DEFAULT_HI_FRAC, DEFAULT_LO_FRAC};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::rng::{derive_seed, SeededRng};

/// Total loss above this aborts training.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OodConfig {
    #[serde(default = "default_lo")]
    pub lo_frac: f64,
    #[serde(default = "default_hi")]
    pub hi_frac: f64,
    /// Pool size; defaults to the training set size.
    #[serde(default)]
    pub pool_size: Option<usize>,
    /// Pool seed; defaults to one derived from the training seed.
    #[serde(default)]
    pub seed: Option<u64>,
    /// OOD minibatch size; defaults to the ID batch size.
    #[serde(default)]
    pub batch_size: Option<usize>,
}

fn default_lo() -> f64 {
    DEFAULT_LO_FRAC
}
fn default_hi() -> f64 {
    DEFAULT_HI_FRAC
}

impl Default for OodConfig {
    fn default() -> Self {
        Self {
            lo_frac: DEFAULT_LO_FRAC,
            hi_frac: DEFAULT_HI_FRAC,
            pool_size: None,
            seed: None,
            batch_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub loss: LossConfig,
    pub checksum: ChecksumSpec,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub ood: OodConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 64,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            loss: LossConfig::default(),
            checksum: ChecksumSpec::Linear,
            hidden: DEFAULT_HIDDEN.to_vec(),
            activation: Activation::Tanh,
            ood: OodConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_pred: f64,
    pub l_cs: f64,
    pub l_id: f64,
    pub l_ood: f64,
    pub val_l_pred: f64,
    pub val_l_cs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Number of OOD pool rows pushed through the network during training.
    pub ood_rows_evaluated: usize,
}

impl TrainHistory {
    /// CSV with header `epoch,l_pred,l_cs,l_id,l_ood,val_l_pred,val_l_cs`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut buf = ryu::Buffer::new();
        writeln!(w, "epoch,l_pred,l_cs,l_id,l_ood,val_l_pred,val_l_cs")?;
        for r in &self.records {
            write!(w, "{}", r.epoch)?;
            for v in [r.l_pred, r.l_cs, r.l_id, r.l_ood, r.val_l_pred, r.val_l_cs] {
                write!(w, ",{}", buf.format(v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_csv(&mut bytes).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Seeded shuffle split of `dataset` into train (tag `train`) and validation (tag `validation`).
///
/// The validation side gets `round(val_frac · N)` rows; both sides keep the original row order.
pub fn split_id(
    dataset: &LabeledDataset,
    val_frac: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(val_frac > 0.0 && val_frac < 1.0) {
        return Err(Error::config(format!("val_frac must be in (0, 1), got {val_frac}")));
    }
    let n = dataset.len();
    let n_val = (val_frac * n as f64).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::data(format!(
            "{n} rows cannot be split with val_frac {val_frac} leaving both sides non-empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let mut val_idx = order[..n_val].to_vec();
    let mut train_idx = order[n_val..].to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((
        dataset.select(&train_idx).retag(Partition::Train),
        dataset.select(&val_idx).retag(Partition::Validation),
    ))
}

/// Per-column mean and population standard deviation; zero-variance columns get scale 1.
pub fn fit_normalization(train: &LabeledDataset) -> Result<(Vec<NormStat>, Vec<NormStat>)> {
    if train.is_empty() {
        return Err(Error::data("cannot fit normalization on an empty dataset"));
    }
    Ok((column_stats(train.inputs()), column_stats(train.targets())))
}

fn column_stats(m: &Matrix) -> Vec<NormStat> {
    let n = m.rows() as f64;
    (0..m.cols())
        .map(|j| {
            let mean = m.iter_rows().map(|r| r[j]).sum::<f64>() / n;
            let var = m.iter_rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            let scale = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
            NormStat { mean, scale }
        })
        .collect()
}

fn with_step(e: Error, epoch: usize, step: usize) -> Error {
    match e {
        Error::Numeric { term, detail } => Error::Numeric {
            term,
            detail: format!("epoch {epoch}, step {step}: {detail}"),
        },
        other => other,
    }
}

/// Prediction and checksum losses of `params` on a whole dataset.
pub fn dataset_losses(
    params: &ModelParams,
    data: &LabeledDataset,
    checksum: &ChecksumSpec,
) -> Result<(f64, f64)> {
    let out = params.forward(data.inputs())?;
    let y = params.normalize_targets(data.targets());
    Ok((
        loss::loss_prediction(&y, &out.y_hat)?,
        loss::loss_checksum(&y, &out.c_hat, checksum)?,
    ))
}

impl TrainConfig {
    pub fn validate(&self, n_train: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.batch_size > n_train {
            return Err(Error::config(format!(
                "batch_size {} exceeds the {n_train} training rows",
                self.batch_size
            )));
        }
        self.optimizer.validate()?;
        self.loss.validate()?;
        self.checksum.validate()?;
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be >= 1"));
        }
        if self.loss.use_ood_term {
            let pool = self.ood.pool_size.unwrap_or(n_train);
            let ob = self.ood.batch_size.unwrap_or(self.batch_size);
            if ob == 0 || pool < ob {
                return Err(Error::config(format!(
                    "OOD pool of {pool} rows cannot fill OOD batches of {ob}"
                )));
            }
        }
        Ok(())
    }
}

pub fn train(
    config: &TrainConfig,
    train: &LabeledDataset,
    validation: &LabeledDataset,
) -> Result<(ModelParams, TrainHistory)> {
    if train.is_empty() || validation.is_empty() {
        return Err(Error::data("training and validation sets must be non-empty"));
    }
    if (train.input_dim(), train.target_dim()) != (validation.input_dim(), validation.target_dim()) {
        return Err(Error::shape("training and validation sets differ in width"));
    }
    config.validate(train.len())?;

    let dims = layer_dims_for(train.input_dim(), &config.hidden, train.target_dim());
    let mut params = init_params(&dims, config.activation, derive_seed(config.seed, "init"))?;
    let (input_norm, output_norm) = fit_normalization(train)?;
    params.input_norm = input_norm;
    params.output_norm = output_norm;

    let mut history = TrainHistory::default();
    if config.epochs == 0 {
        return Ok((params, history));
    }

    let ood_pool = if config.loss.use_ood_term {
        let cube = bounding_hypercube(train.inputs())?;
        let spec = ShellSpec {
            lo_frac: config.ood.lo_frac,
            hi_frac: config.ood.hi_frac,
            count: config.ood.pool_size.unwrap_or(train.len()),
            seed: config.ood.seed.unwrap_or_else(|| derive_seed(config.seed, "ood_pool")),
        };
        Some(sample_shell(&cube, &spec)?)
    } else {
        None
    };
    let ood_batch = config.ood.batch_size.unwrap_or(config.batch_size);

    let mut opt = Optimizer::new(config.optimizer, &params);
    let mut rng = SeededRng::new(derive_seed(config.seed, "shuffle"));
    let n = train.len();
    let steps = n.div_ceil(config.batch_size);
    let mut order: Vec<usize> = (0..n).collect();
    let mut pool_order: Vec<usize> = (0..ood_pool.as_ref().map_or(0, Matrix::rows)).collect();

    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        if ood_pool.is_some() {
            rng.shuffle(&mut pool_order);
        }
        let mut sums = LossTerms::default();
        for step in 0..steps {
            let idx = &order[step * config.batch_size..((step + 1) * config.batch_size).min(n)];
            let x = train.inputs().select_rows(idx);
            let y = train.targets().select_rows(idx);
            let xo = ood_pool.as_ref().map(|pool| {
                let p = pool.rows();
                let sel: Vec<usize> = (0..ood_batch)
                    .map(|i| pool_order[(step * ood_batch + i) % p])
                    .collect();
                pool.select_rows(&sel)
            });
            if let Some(xo) = &xo {
                history.ood_rows_evaluated += xo.rows();
            }
            let (terms, grads) = params
                .backward(&x, &y, xo.as_ref(), &config.checksum, &config.loss)
                .map_err(|e| with_step(e, epoch, step))?;
            if terms.total > DIVERGENCE_LIMIT {
                return Err(Error::numeric(
                    "total",
                    format!("epoch {epoch}, step {step}: loss {} diverged", terms.total),
                ));
            }
            sums.prediction += terms.prediction;
            sums.checksum += terms.checksum;
            sums.id += terms.id;
            sums.ood += terms.ood;
            opt.step(&mut params, &grads);
        }
        let s = steps as f64;
        let (val_l_pred, val_l_cs) = dataset_losses(&params, validation, &config.checksum)
            .map_err(|e| with_step(e, epoch, steps))?;
        history.records.push(EpochRecord {
            epoch,
            l_pred: sums.prediction / s,
            l_cs: sums.checksum / s,
            l_id: sums.id / s,
            l_ood: sums.ood / s,
            val_l_pred,
            val_l_cs,
        });
    }
    Ok((params, history))
}
