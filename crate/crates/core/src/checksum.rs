//! Checksum functions encoded by the check node, and the per-sample checksum error.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scalar function of the prediction vector that the check node learns to reproduce.
///
/// Implementations must be differentiable almost everywhere; `gradient` writes
/// `∂C/∂y_i` into `out` (same length as `y`).
pub trait Checksum {
    fn value(&self, y: &[f64]) -> f64;
    fn gradient(&self, y: &[f64], out: &mut [f64]);
}

/// The shipped checksum functions.
///
/// Serialized as `{ "kind": "linear" }` or `{ "kind": "sinusoid", "w": 0.0001 }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ChecksumSpec {
    /// `C(y) = Σ y_i`
    Linear,
    /// `C(y) = sin(w |Σ y_i|)`
    Sinusoid { w: f64 },
}

/// Frequency used for the sinusoid checksum unless configured otherwise.
pub const DEFAULT_SINUSOID_W: f64 = 1e-4;

impl ChecksumSpec {
    pub fn sinusoid(w: f64) -> Result<Self> {
        let spec = ChecksumSpec::Sinusoid { w };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ChecksumSpec::Linear => Ok(()),
            ChecksumSpec::Sinusoid { w } if w > 0.0 && w.is_finite() => Ok(()),
            ChecksumSpec::Sinusoid { w } => Err(Error::config(format!(
                "sinusoid checksum frequency must be positive and finite, got {w}"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChecksumSpec::Linear => "linear",
            ChecksumSpec::Sinusoid { .. } => "sinusoid",
        }
    }
}

impl fmt::Display for ChecksumSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChecksumSpec::Linear => f.write_str("linear"),
            ChecksumSpec::Sinusoid { w } => write!(f, "sinusoid(w={w})"),
        }
    }
}

impl FromStr for ChecksumSpec {
    type Err = Error;

    /// Accepts `linear`, `sinusoid` (default `w`) or `sinusoid:<w>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "linear" => Ok(ChecksumSpec::Linear),
            None if s == "sinusoid" => ChecksumSpec::sinusoid(DEFAULT_SINUSOID_W),
            Some(("sinusoid", w)) => {
                let w: f64 = w
                    .parse()
                    .map_err(|_| Error::config(format!("bad sinusoid frequency '{w}'")))?;
                ChecksumSpec::sinusoid(w)
            }
            _ => Err(Error::config(format!("unknown checksum '{s}'"))),
        }
    }
}

impl Checksum for ChecksumSpec {
    fn value(&self, y: &[f64]) -> f64 {
        let s: f64 = y.iter().sum();
        match *self {
            ChecksumSpec::Linear => s,
            ChecksumSpec::Sinusoid { w } => (w * s.abs()).sin(),
        }
    }

    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        let g = match *self {
            ChecksumSpec::Linear => 1.0,
            ChecksumSpec::Sinusoid { w } => {
                let s: f64 = y.iter().sum();
                // d|s|/ds taken as 0 at s = 0
                let sign = if s > 0.0 {
                    1.0
                } else if s < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                w * (w * s.abs()).cos() * sign
            }
        };
        out.fill(g);
    }
}

fn check_input(y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::shape("checksum input must have at least one element"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("checksum", "non-finite input"));
    }
    Ok(())
}

pub fn checksum<C: Checksum + ?Sized>(c: &C, y: &[f64]) -> Result<f64> {
    check_input(y)?;
    Ok(c.value(y))
}

pub fn checksum_grad<C: Checksum + ?Sized>(c: &C, y: &[f64]) -> Result<Vec<f64>> {
    check_input(y)?;
    let mut out = vec![0.0; y.len()];
    c.gradient(y, &mut out);
    Ok(out)
}

/// Squared mismatch `(C(ŷ) − Ĉ)²` between the checksum of the predictions and the check node.
pub fn checksum_error<C: Checksum + ?Sized>(c_hat: f64, y_hat: &[f64], c: &C) -> Result<f64> {
    if !c_hat.is_finite() {
        return Err(Error::numeric("checksum error", "non-finite check node output"));
    }
    let r = checksum(c, y_hat)? - c_hat;
    Ok(r * r)
}
