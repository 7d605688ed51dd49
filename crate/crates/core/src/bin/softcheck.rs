use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use softcheck::config::RunConfig;
use softcheck::experiment::{
    evaluate_model, load_dataset, run_sweep, run_training, save_with, summarize, write_summary,
    write_sweep_table,
};
use softcheck::loss::LossVariant;
use softcheck::network::ModelFile;
use softcheck::{ChecksumSpec, Error, LabeledDataset, Result};

const DEFAULT_OUT: &str = "softcheck-out";

#[derive(Parser)]
#[command(name = "softcheck", version, about = "Soft-checksum OOD detection for regression networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset to `<out>/dataset.csv`.
    Generate(Common),
    /// Train a model; writes `model.json`, `history.csv` and `dataset_split.csv`.
    Train {
        #[command(flatten)]
        common: Common,
        /// Loss variant: base, base+id, base+ood, base+id+ood.
        #[arg(long)]
        variant: Option<LossVariant>,
        /// Checksum: linear, sinusoid or sinusoid:<w>.
        #[arg(long)]
        checksum: Option<ChecksumSpec>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a model on the validation/ood rows of a dataset; writes `report.json` and `scatter.csv`.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Model file (default `<out>/model.json`).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset CSV with validation and ood rows (default `<out>/dataset_split.csv`).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        tn_rate: Option<f64>,
    },
    /// Train and score every loss variant × checksum over several seeds; writes `sweep.csv` and
    /// `sweep_summary.csv`.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    RunConfig::load(path, common.seed)
}

fn out_dir(common: &Common, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    let dir = common
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.out_dir.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

fn announce(path: &Path) {
    eprintln!("wrote {}", path.display());
}

fn generate(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let dataset = load_dataset(&cfg)?;
    let path = out_dir(common, Some(&cfg))?.join("dataset.csv");
    dataset.save_csv(&path)?;
    announce(&path);
    Ok(())
}

fn train(
    common: &Common,
    variant: Option<LossVariant>,
    checksum: Option<ChecksumSpec>,
    epochs: Option<usize>,
) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(v) = variant {
        cfg.loss_variant = v;
    }
    if let Some(c) = checksum {
        cfg.checksum = c;
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    cfg.validate()?;
    let dir = out_dir(common, Some(&cfg))?;
    let outcome = run_training(&cfg)?;

    let model = dir.join("model.json");
    ModelFile::new(outcome.params, cfg.checksum).save(&model)?;
    announce(&model);
    let history = dir.join("history.csv");
    outcome.history.save_csv(&history)?;
    announce(&history);
    let split = dir.join("dataset_split.csv");
    outcome.splits.combined()?.save_csv(&split)?;
    announce(&split);
    if let Some(last) = outcome.history.records.last() {
        eprintln!(
            "final epoch {}: l_pred {:.4e}, l_cs {:.4e}, val_l_pred {:.4e}",
            last.epoch, last.l_pred, last.l_cs, last.val_l_pred
        );
    }
    Ok(())
}

fn evaluate(
    common: &Common,
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    tn_rate: Option<f64>,
) -> Result<()> {
    let cfg = common.config.as_ref().map(|_| load_config(common)).transpose()?;
    let dir = out_dir(common, cfg.as_ref())?;
    let model_path = model.unwrap_or_else(|| dir.join("model.json"));
    let data_path = data.unwrap_or_else(|| dir.join("dataset_split.csv"));
    let tn_rate = tn_rate
        .or_else(|| cfg.as_ref().map(|c| c.tn_rate))
        .unwrap_or(softcheck::metrics::DEFAULT_TN_RATE);

    let model = ModelFile::load(&model_path)?;
    let dataset = LabeledDataset::load_csv(&data_path)?;
    let report = evaluate_model(&model, &dataset, tn_rate)?;

    let report_path = dir.join("report.json");
    report.save_json(&report_path)?;
    announce(&report_path);
    let scatter = dir.join("scatter.csv");
    report.save_scatter(&scatter)?;
    announce(&scatter);
    println!(
        "threshold {:.6e}  tn_rate_achieved {:.4}  fnr99 {:.4}  pearson_r {}",
        report.threshold,
        report.tn_rate_achieved,
        report.fnr99,
        report
            .pearson_r
            .map_or_else(|| "undefined".to_string(), |r| format!("{r:.4}"))
    );
    Ok(())
}

fn sweep(common: &Common, repeats: Option<usize>, epochs: Option<usize>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(r) = repeats {
        cfg.sweep.repeats = r;
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    cfg.validate()?;
    let dir = out_dir(common, Some(&cfg))?;
    let cells = run_sweep(&cfg, |c| match c.fnr99() {
        Some(f) => eprintln!("{:<12} {:<9} seed {:>20}  fnr99 {f:.4}", c.variant, c.checksum.name(), c.seed),
        None => eprintln!("{:<12} {:<9} seed {:>20}  failed", c.variant, c.checksum.name(), c.seed),
    })?;
    let table = dir.join("sweep.csv");
    save_with(&table, |w| write_sweep_table(&cells, w))?;
    announce(&table);
    let rows = summarize(&cells);
    let summary = dir.join("sweep_summary.csv");
    save_with(&summary, |w| write_summary(&rows, w))?;
    announce(&summary);
    write_summary(&rows, std::io::stdout()).map_err(|e| Error::Io {
        path: "<stdout>".into(),
        source: e,
    })?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(common) => generate(&common),
        Command::Train {
            common,
            variant,
            checksum,
            epochs,
        } => train(&common, variant, checksum, epochs),
        Command::Evaluate {
            common,
            model,
            data,
            tn_rate,
        } => evaluate(&common, model, data, tn_rate),
        Command::Sweep {
            common,
            repeats,
            epochs,
        } => sweep(&common, repeats, epochs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
