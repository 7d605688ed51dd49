//! Composite training loss.
//!
//! ```text
//! L = L_prediction + L_checksum + L_id + L_ood
//!
//! L_prediction = 1/M Σ_j 1/k Σ_i (y_i − ŷ_i)²
//! L_checksum   = 1/M Σ_j 1/k (C(y) − Ĉ)²
//! L_id         = λ_id · 1/M Σ_j (C(ŷ) − Ĉ)²
//! L_ood        = λ_ood / (1/M' Σ_j (C(ŷ') − Ĉ')² + ε)
//! ```
//!
//! `L_checksum` carries the `1/k` factor and `L_id` does not. All inputs are in
//! normalized target space. Sums run left to right over samples (and over
//! outputs within a sample), then divide by the sample count.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::checksum::Checksum;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_LAMBDA: f64 = 0.01;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// The four loss compositions, addressable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossVariant {
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "base+id")]
    BaseId,
    #[serde(rename = "base+ood")]
    BaseOod,
    #[serde(rename = "base+id+ood")]
    BaseIdOod,
}

impl LossVariant {
    pub const ALL: [LossVariant; 4] = [
        LossVariant::Base,
        LossVariant::BaseId,
        LossVariant::BaseOod,
        LossVariant::BaseIdOod,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossVariant::Base => "base",
            LossVariant::BaseId => "base+id",
            LossVariant::BaseOod => "base+ood",
            LossVariant::BaseIdOod => "base+id+ood",
        }
    }

    pub fn uses_id_term(self) -> bool {
        matches!(self, LossVariant::BaseId | LossVariant::BaseIdOod)
    }

    pub fn uses_ood_term(self) -> bool {
        matches!(self, LossVariant::BaseOod | LossVariant::BaseIdOod)
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown loss variant '{s}' (expected base, base+id, base+ood or base+id+ood)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub use_id_term: bool,
    pub use_ood_term: bool,
    pub lambda_id: f64,
    pub lambda_ood: f64,
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self::for_variant(LossVariant::Base)
    }
}

impl LossConfig {
    pub fn for_variant(variant: LossVariant) -> Self {
        Self {
            use_id_term: variant.uses_id_term(),
            use_ood_term: variant.uses_ood_term(),
            lambda_id: DEFAULT_LAMBDA,
            lambda_ood: DEFAULT_LAMBDA,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn variant(&self) -> LossVariant {
        match (self.use_id_term, self.use_ood_term) {
            (false, false) => LossVariant::Base,
            (true, false) => LossVariant::BaseId,
            (false, true) => LossVariant::BaseOod,
            (true, true) => LossVariant::BaseIdOod,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        for (name, v) in [("lambda_id", self.lambda_id), ("lambda_ood", self.lambda_ood)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-term loss values. Disabled terms are reported as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub prediction: f64,
    pub checksum: f64,
    pub id: f64,
    pub ood: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn named(&self) -> [(&'static str, f64); 4] {
        [
            ("l_pred", self.prediction),
            ("l_cs", self.checksum),
            ("l_id", self.id),
            ("l_ood", self.ood),
        ]
    }

    /// First non-finite term, by name.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.named()
            .into_iter()
            .chain(std::iter::once(("total", self.total)))
            .find(|(_, v)| !v.is_finite())
            .map(|(n, _)| n)
    }
}

fn check_batch(y_hat: &Matrix, c_hat: &[f64], what: &str) -> Result<()> {
    if y_hat.rows() == 0 {
        return Err(Error::shape(format!("{what}: batch is empty")));
    }
    if c_hat.len() != y_hat.rows() {
        return Err(Error::shape(format!(
            "{what}: {} check node outputs for {} samples",
            c_hat.len(),
            y_hat.rows()
        )));
    }
    Ok(())
}

/// Mean squared checksum mismatch `1/M Σ_j (C(ŷ_j) − Ĉ_j)²`.
pub(crate) fn mean_checksum_mismatch<C: Checksum + ?Sized>(
    y_hat: &Matrix,
    c_hat: &[f64],
    c: &C,
) -> f64 {
    let mut sum = 0.0;
    for (row, &ch) in y_hat.iter_rows().zip(c_hat) {
        let r = c.value(row) - ch;
        sum += r * r;
    }
    sum / y_hat.rows() as f64
}

pub fn loss_prediction(y: &Matrix, y_hat: &Matrix) -> Result<f64> {
    if (y.rows(), y.cols()) != (y_hat.rows(), y_hat.cols()) {
        return Err(Error::shape(format!(
            "targets are {}x{}, predictions {}x{}",
            y.rows(),
            y.cols(),
            y_hat.rows(),
            y_hat.cols()
        )));
    }
    if y.rows() == 0 {
        return Err(Error::shape("prediction loss: batch is empty"));
    }
    let k = y.cols() as f64;
    let mut sum = 0.0;
    for (t, p) in y.iter_rows().zip(y_hat.iter_rows()) {
        let mut inner = 0.0;
        for (a, b) in t.iter().zip(p) {
            let d = a - b;
            inner += d * d;
        }
        sum += inner / k;
    }
    Ok(sum / y.rows() as f64)
}

pub fn loss_checksum<C: Checksum + ?Sized>(y: &Matrix, c_hat: &[f64], c: &C) -> Result<f64> {
    check_batch(y, c_hat, "checksum loss")?;
    let k = y.cols() as f64;
    let mut sum = 0.0;
    for (row, &ch) in y.iter_rows().zip(c_hat) {
        let r = c.value(row) - ch;
        sum += r * r / k;
    }
    Ok(sum / y.rows() as f64)
}

pub fn loss_id<C: Checksum + ?Sized>(
    y_hat: &Matrix,
    c_hat: &[f64],
    c: &C,
    lambda_id: f64,
) -> Result<f64> {
    check_batch(y_hat, c_hat, "ID checksum loss")?;
    Ok(lambda_id * mean_checksum_mismatch(y_hat, c_hat, c))
}

pub fn loss_ood<C: Checksum + ?Sized>(
    y_hat_prime: &Matrix,
    c_hat_prime: &[f64],
    c: &C,
    lambda_ood: f64,
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::config(format!("epsilon must be positive, got {epsilon}")));
    }
    check_batch(y_hat_prime, c_hat_prime, "OOD checksum loss")?;
    Ok(lambda_ood / (mean_checksum_mismatch(y_hat_prime, c_hat_prime, c) + epsilon))
}

/// Network outputs on an OOD batch (no targets exist for these).
#[derive(Debug, Clone, Copy)]
pub struct OodOutputs<'a> {
    pub y_hat: &'a Matrix,
    pub c_hat: &'a [f64],
}

/// All four terms and their sum under `cfg`.
pub fn total_loss<C: Checksum + ?Sized>(
    y: &Matrix,
    y_hat: &Matrix,
    c_hat: &[f64],
    ood: Option<OodOutputs<'_>>,
    c: &C,
    cfg: &LossConfig,
) -> Result<LossTerms> {
    cfg.validate()?;
    let prediction = loss_prediction(y, y_hat)?;
    let checksum = loss_checksum(y, c_hat, c)?;
    let id = if cfg.use_id_term {
        loss_id(y_hat, c_hat, c, cfg.lambda_id)?
    } else {
        0.0
    };
    let ood = if cfg.use_ood_term {
        let o = ood.ok_or_else(|| {
            Error::config("the OOD term is enabled but no OOD batch was supplied")
        })?;
        loss_ood(o.y_hat, o.c_hat, c, cfg.lambda_ood, cfg.epsilon)?
    } else {
        0.0
    };
    Ok(LossTerms {
        prediction,
        checksum,
        id,
        ood,
        total: prediction + checksum + id + ood,
    })
}
