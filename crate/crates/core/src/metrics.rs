//! Threshold calibration, OOD flagging, FNR99, and checksum/prediction error correlation.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checksum::Checksum;
use crate::data::{LabeledDataset, Partition};
use crate::error::{Error, Result};
use crate::network::ModelParams;

/// Fraction of validation samples that must fall at or below the threshold.
pub const DEFAULT_TN_RATE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPair {
    /// `(C(ŷ) − Ĉ)²`
    pub checksum_error: f64,
    /// `1/k Σ_i (y_i − ŷ_i)²`
    pub prediction_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrustLabel {
    Id,
    Ood,
}

/// Per-sample checksum and prediction errors, both in normalized target space.
pub fn per_sample_errors<C: Checksum + ?Sized>(
    params: &ModelParams,
    data: &LabeledDataset,
    checksum: &C,
) -> Result<Vec<ErrorPair>> {
    if data.is_empty() {
        return Err(Error::data("cannot score an empty dataset"));
    }
    if data.target_dim() != params.output_dim() {
        return Err(Error::shape(format!(
            "model predicts {} targets, dataset has {}",
            params.output_dim(),
            data.target_dim()
        )));
    }
    let out = params.forward(data.inputs())?;
    let y = params.normalize_targets(data.targets());
    let k = y.cols() as f64;
    let pairs = out
        .y_hat
        .iter_rows()
        .zip(&out.c_hat)
        .zip(y.iter_rows())
        .map(|((yh, &ch), yt)| {
            let r = checksum.value(yh) - ch;
            let mut sq = 0.0;
            for (a, b) in yt.iter().zip(yh) {
                let d = a - b;
                sq += d * d;
            }
            ErrorPair {
                checksum_error: r * r,
                prediction_error: sq / k,
            }
        })
        .collect();
    Ok(pairs)
}

/// Nearest-rank upper quantile: the smallest observed error such that at least
/// `tn_rate` of `errors` are `≤` it.
pub fn calibrate_threshold(errors: &[f64], tn_rate: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::data("cannot calibrate a threshold on an empty error list"));
    }
    if !(tn_rate > 0.0 && tn_rate <= 1.0) {
        return Err(Error::config(format!("tn_rate must be in (0, 1], got {tn_rate}")));
    }
    if errors.iter().any(|e| e.is_nan()) {
        return Err(Error::numeric("calibration", "NaN checksum error"));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // rank m = ceil(tn_rate · n), corrected for rounding in the product
    let covers = |m: usize| m as f64 / n as f64 >= tn_rate;
    let mut m = ((tn_rate * n as f64).ceil() as usize).clamp(1, n);
    while m < n && !covers(m) {
        m += 1;
    }
    while m > 1 && covers(m - 1) {
        m -= 1;
    }
    Ok(sorted[m - 1])
}

/// Ties are trusted: an error equal to the threshold is ID.
pub fn flag(checksum_error: f64, threshold: f64) -> TrustLabel {
    if checksum_error > threshold {
        TrustLabel::Ood
    } else {
        TrustLabel::Id
    }
}

/// Fraction of OOD samples that [`flag`] would trust.
pub fn fnr99(ood_errors: &[f64], threshold: f64) -> Result<f64> {
    if ood_errors.is_empty() {
        return Err(Error::data("cannot score FNR on an empty OOD error list"));
    }
    let missed = ood_errors
        .iter()
        .filter(|&&e| flag(e, threshold) == TrustLabel::Id)
        .count();
    Ok(missed as f64 / ood_errors.len() as f64)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::shape(format!(
            "pearson needs equal lengths, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::data("pearson needs at least two samples"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "one of the inputs is constant".into(),
        ));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    if !r.is_finite() {
        return Err(Error::numeric("pearson", "non-finite correlation"));
    }
    Ok(r.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterRecord {
    pub checksum_error: f64,
    pub prediction_error: f64,
    pub partition: Partition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub tn_rate: f64,
    pub tn_rate_achieved: f64,
    pub fnr99: f64,
    /// Correlation over OOD samples; `None` when undefined (a constant error list).
    pub pearson_r: Option<f64>,
    pub n_validation: usize,
    pub n_ood: usize,
    #[serde(skip)]
    pub scatter: Vec<ScatterRecord>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    /// Scatter CSV with header `checksum_error,prediction_error,partition`.
    pub fn write_scatter<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut buf = ryu::Buffer::new();
        writeln!(w, "checksum_error,prediction_error,partition")?;
        for s in &self.scatter {
            write!(w, "{},", buf.format(s.checksum_error))?;
            writeln!(w, "{},{}", buf.format(s.prediction_error), s.partition)?;
        }
        Ok(())
    }

    pub fn save_scatter(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_scatter(&mut bytes).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Calibrates on `validation`, scores `ood`, and correlates errors on `ood`.
pub fn evaluate<C: Checksum + ?Sized>(
    params: &ModelParams,
    validation: &LabeledDataset,
    ood: &LabeledDataset,
    checksum: &C,
) -> Result<EvalReport> {
    evaluate_at(params, validation, ood, checksum, DEFAULT_TN_RATE)
}

pub fn evaluate_at<C: Checksum + ?Sized>(
    params: &ModelParams,
    validation: &LabeledDataset,
    ood: &LabeledDataset,
    checksum: &C,
    tn_rate: f64,
) -> Result<EvalReport> {
    let val = per_sample_errors(params, validation, checksum)?;
    let oo = per_sample_errors(params, ood, checksum)?;
    let val_cs: Vec<f64> = val.iter().map(|p| p.checksum_error).collect();
    let ood_cs: Vec<f64> = oo.iter().map(|p| p.checksum_error).collect();
    let ood_pred: Vec<f64> = oo.iter().map(|p| p.prediction_error).collect();

    let threshold = calibrate_threshold(&val_cs, tn_rate)?;
    let trusted = val_cs.iter().filter(|&&e| flag(e, threshold) == TrustLabel::Id).count();
    let pearson_r = match pearson(&ood_cs, &ood_pred) {
        Ok(r) => Some(r),
        Err(Error::UndefinedCorrelation(_)) | Err(Error::Data(_)) => None,
        Err(e) => return Err(e),
    };
    let scatter = val
        .iter()
        .map(|p| (p, Partition::Validation))
        .chain(oo.iter().map(|p| (p, Partition::Ood)))
        .map(|(p, partition)| ScatterRecord {
            checksum_error: p.checksum_error,
            prediction_error: p.prediction_error,
            partition,
        })
        .collect();
    Ok(EvalReport {
        threshold,
        tn_rate,
        tn_rate_achieved: trusted as f64 / val_cs.len() as f64,
        fnr99: fnr99(&ood_cs, threshold)?,
        pearson_r,
        n_validation: val.len(),
        n_ood: oo.len(),
        scatter,
    })
}
