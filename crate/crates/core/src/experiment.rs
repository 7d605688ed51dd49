//! End-to-end pipeline pieces shared by the CLI subcommands and the sweep.

use std::io::Write;
use std::path::Path;

use crate::checksum::{ChecksumSpec, DEFAULT_SINUSOID_W};
use crate::config::{DataSource, RunConfig};
use crate::data::{synth_generate, LabeledDataset, Partition};
use crate::error::{Error, Result};
use crate::loss::{LossConfig, LossVariant};
use crate::metrics::{evaluate_at, EvalReport};
use crate::network::{ModelFile, ModelParams};
use crate::rng::derive_seed;
use crate::trainer::{split_id, train, TrainConfig, TrainHistory};

pub fn load_dataset(cfg: &RunConfig) -> Result<LabeledDataset> {
    match &cfg.data {
        DataSource::Synth(spec) => synth_generate(spec),
        DataSource::Csv(path) => LabeledDataset::load_csv(path),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
    pub ood: LabeledDataset,
}

impl Splits {
    /// Train, validation and OOD rows in one dataset, tagged accordingly.
    pub fn combined(&self) -> Result<LabeledDataset> {
        self.train.concat(&self.validation)?.concat(&self.ood)
    }
}

/// Splits `unsplit` rows into train/validation; rows already tagged keep their role.
pub fn make_splits(dataset: &LabeledDataset, val_frac: f64, seed: u64) -> Result<Splits> {
    let unsplit = dataset.filter(Partition::Unsplit);
    let mut train = dataset.filter(Partition::Train);
    let mut validation = dataset.filter(Partition::Validation);
    if !unsplit.is_empty() {
        let (t, v) = split_id(&unsplit, val_frac, seed)?;
        train = if train.is_empty() { t } else { train.concat(&t)? };
        validation = if validation.is_empty() {
            v
        } else {
            validation.concat(&v)?
        };
    }
    if train.is_empty() || validation.is_empty() {
        return Err(Error::data("dataset yields an empty training or validation set"));
    }
    Ok(Splits {
        train,
        validation,
        ood: dataset.filter(Partition::Ood),
    })
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: TrainHistory,
    pub splits: Splits,
}

pub fn run_training(cfg: &RunConfig) -> Result<TrainOutcome> {
    let dataset = load_dataset(cfg)?;
    let splits = make_splits(&dataset, cfg.val_frac, cfg.split_seed())?;
    let (params, history) = train(&cfg.train_config(), &splits.train, &splits.validation)?;
    Ok(TrainOutcome {
        params,
        history,
        splits,
    })
}

/// Calibrates on the `validation` rows of `dataset` and scores its `ood` rows.
pub fn evaluate_model(model: &ModelFile, dataset: &LabeledDataset, tn_rate: f64) -> Result<EvalReport> {
    if dataset.input_dim() != model.params.input_dim() || dataset.target_dim() != model.params.output_dim() {
        return Err(Error::shape(format!(
            "model maps {} inputs to {} targets, dataset has {} inputs and {} targets",
            model.params.input_dim(),
            model.params.output_dim(),
            dataset.input_dim(),
            dataset.target_dim()
        )));
    }
    let validation = dataset.filter(Partition::Validation);
    let ood = dataset.filter(Partition::Ood);
    if validation.is_empty() || ood.is_empty() {
        return Err(Error::data(
            "evaluation needs rows tagged 'validation' and rows tagged 'ood'",
        ));
    }
    evaluate_at(&model.params, &validation, &ood, &model.checksum, tn_rate)
}

/// One cell of the loss-variant × checksum grid for one repeat.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub variant: LossVariant,
    pub checksum: ChecksumSpec,
    pub repeat: usize,
    pub seed: u64,
    pub outcome: std::result::Result<EvalReport, String>,
}

impl SweepCell {
    pub fn fnr99(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|r| r.fnr99)
    }
}

/// Training seed of repeat `r`: shared by every cell of that repeat so cells pair up.
pub fn repeat_seed(global: u64, r: usize) -> u64 {
    derive_seed(global, &format!("sweep/{r}"))
}

/// The two checksum columns: linear, and sinusoid at the configured (or default) frequency.
pub fn sweep_checksums(cfg: &RunConfig) -> [ChecksumSpec; 2] {
    let w = match cfg.checksum {
        ChecksumSpec::Sinusoid { w } => w,
        ChecksumSpec::Linear => DEFAULT_SINUSOID_W,
    };
    [ChecksumSpec::Linear, ChecksumSpec::Sinusoid { w }]
}

/// Trains and evaluates every (variant, checksum, repeat) combination on one fixed dataset split.
///
/// A failed cell records its error and the grid continues. `progress` is called after each cell.
pub fn run_grid(
    cfg: &RunConfig,
    variants: &[LossVariant],
    checksums: &[ChecksumSpec],
    repeats: usize,
    mut progress: impl FnMut(&SweepCell),
) -> Result<Vec<SweepCell>> {
    let dataset = load_dataset(cfg)?;
    let splits = make_splits(&dataset, cfg.val_frac, cfg.split_seed())?;
    if splits.ood.is_empty() {
        return Err(Error::data("sweep needs rows tagged 'ood'"));
    }
    let base = cfg.train_config();
    let mut cells = Vec::with_capacity(variants.len() * checksums.len() * repeats);
    for &variant in variants {
        for &checksum in checksums {
            for repeat in 0..repeats {
                let seed = repeat_seed(cfg.seed, repeat);
                let tc = TrainConfig {
                    seed,
                    checksum,
                    loss: LossConfig {
                        use_id_term: variant.uses_id_term(),
                        use_ood_term: variant.uses_ood_term(),
                        ..base.loss
                    },
                    ..base.clone()
                };
                let outcome = train(&tc, &splits.train, &splits.validation)
                    .and_then(|(params, _)| {
                        evaluate_at(&params, &splits.validation, &splits.ood, &checksum, cfg.tn_rate)
                    })
                    .map_err(|e| e.to_string());
                let cell = SweepCell {
                    variant,
                    checksum,
                    repeat,
                    seed,
                    outcome,
                };
                progress(&cell);
                cells.push(cell);
            }
        }
    }
    Ok(cells)
}

pub fn run_sweep(cfg: &RunConfig, progress: impl FnMut(&SweepCell)) -> Result<Vec<SweepCell>> {
    run_grid(cfg, &LossVariant::ALL, &sweep_checksums(cfg), cfg.sweep.repeats, progress)
}

/// Per-seed table, header `loss_variant,checksum,seed,fnr99`; failed cells read `failed`.
pub fn write_sweep_table<W: Write>(cells: &[SweepCell], mut w: W) -> std::io::Result<()> {
    let mut buf = ryu::Buffer::new();
    writeln!(w, "loss_variant,checksum,seed,fnr99")?;
    for c in cells {
        let v = match c.fnr99() {
            Some(f) => buf.format(f).to_string(),
            None => "failed".to_string(),
        };
        writeln!(w, "{},{},{},{v}", c.variant, c.checksum.name(), c.seed)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummaryRow {
    pub variant: LossVariant,
    pub checksum: &'static str,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean_fnr99: Option<f64>,
    pub mean_pearson_r: Option<f64>,
}

/// Means per (variant, checksum) in grid order, over the cells that succeeded.
pub fn summarize(cells: &[SweepCell]) -> Vec<SweepSummaryRow> {
    let mut rows: Vec<SweepSummaryRow> = Vec::new();
    for c in cells {
        let name = c.checksum.name();
        if !rows.iter().any(|r| r.variant == c.variant && r.checksum == name) {
            rows.push(SweepSummaryRow {
                variant: c.variant,
                checksum: name,
                n_ok: 0,
                n_failed: 0,
                mean_fnr99: None,
                mean_pearson_r: None,
            });
        }
    }
    for row in &mut rows {
        let group: Vec<&SweepCell> = cells
            .iter()
            .filter(|c| c.variant == row.variant && c.checksum.name() == row.checksum)
            .collect();
        let ok: Vec<&EvalReport> = group.iter().filter_map(|c| c.outcome.as_ref().ok()).collect();
        row.n_ok = ok.len();
        row.n_failed = group.len() - ok.len();
        if !ok.is_empty() {
            row.mean_fnr99 = Some(ok.iter().map(|r| r.fnr99).sum::<f64>() / ok.len() as f64);
        }
        let rs: Vec<f64> = ok.iter().filter_map(|r| r.pearson_r).collect();
        if !rs.is_empty() {
            row.mean_pearson_r = Some(rs.iter().sum::<f64>() / rs.len() as f64);
        }
    }
    rows
}

/// Summary table, header `loss_variant,checksum,n_ok,n_failed,mean_fnr99,mean_pearson_r`.
pub fn write_summary<W: Write>(rows: &[SweepSummaryRow], mut w: W) -> std::io::Result<()> {
    let mut buf = ryu::Buffer::new();
    let mut fmt = |v: Option<f64>| v.map_or_else(|| "failed".to_string(), |x| buf.format(x).to_string());
    writeln!(w, "loss_variant,checksum,n_ok,n_failed,mean_fnr99,mean_pearson_r")?;
    for r in rows {
        let f = fmt(r.mean_fnr99);
        let p = fmt(r.mean_pearson_r);
        writeln!(w, "{},{},{},{},{f},{p}", r.variant, r.checksum, r.n_ok, r.n_failed)?;
    }
    Ok(())
}

pub fn save_with<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut bytes = Vec::new();
    write(&mut bytes).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
