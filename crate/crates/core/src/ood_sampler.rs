//! Synthetic OOD inputs drawn from a thin shell just outside the bounding box of the training inputs.
//!
//! A point's *exceedance* is its largest per-dimension overshoot beyond the box,
//! measured in units of that dimension's range:
//!
//! ```text
//! exceed(x) = max_i max(mins_i − x_i, x_i − maxs_i, 0) / (maxs_i − mins_i)
//! ```
//!
//! Dimensions with zero range are pinned to their constant value and left out of the max.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::SeededRng;

pub const DEFAULT_LO_FRAC: f64 = 0.20;
pub const DEFAULT_HI_FRAC: f64 = 0.25;
/// Proposal budget per requested sample.
pub const MAX_ATTEMPTS_PER_SAMPLE: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypercube {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellSpec {
    pub lo_frac: f64,
    pub hi_frac: f64,
    pub count: usize,
    pub seed: u64,
}

impl ShellSpec {
    pub fn new(count: usize, seed: u64) -> Self {
        Self {
            lo_frac: DEFAULT_LO_FRAC,
            hi_frac: DEFAULT_HI_FRAC,
            count,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo_frac > 0.0 && self.lo_frac < self.hi_frac && self.hi_frac.is_finite()) {
            return Err(Error::config(format!(
                "shell fractions need 0 < lo_frac < hi_frac, got {} and {}",
                self.lo_frac, self.hi_frac
            )));
        }
        if self.count == 0 {
            return Err(Error::config("shell sample count must be >= 1"));
        }
        Ok(())
    }
}

impl Hypercube {
    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mins.len() != self.maxs.len() || self.mins.is_empty() {
            return Err(Error::shape("hypercube mins and maxs must be non-empty and equal length"));
        }
        for (i, (lo, hi)) in self.mins.iter().zip(&self.maxs).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(format!("invalid hypercube extent [{lo}, {hi}] in dimension {i}")));
            }
        }
        Ok(())
    }

    /// Normalized exceedance of `x` beyond the box; degenerate dimensions are ignored.
    pub fn exceed(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for ((v, lo), hi) in x.iter().zip(&self.mins).zip(&self.maxs) {
            let r = hi - lo;
            if r > 0.0 {
                worst = worst.max((lo - v).max(v - hi).max(0.0) / r);
            }
        }
        worst
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.mins)
            .zip(&self.maxs)
            .all(|((v, lo), hi)| lo <= v && v <= hi)
    }
}

pub fn bounding_hypercube(inputs: &Matrix) -> Result<Hypercube> {
    if inputs.rows() == 0 || inputs.cols() == 0 {
        return Err(Error::data("cannot bound an empty input set"));
    }
    let mut mins = inputs.row(0).to_vec();
    let mut maxs = mins.clone();
    for row in inputs.iter_rows() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::data("non-finite input while computing bounding box"));
            }
            mins[j] = mins[j].min(v);
            maxs[j] = maxs[j].max(v);
        }
    }
    Ok(Hypercube { mins, maxs })
}

/// Uniform proposals in the box widened by `hi_frac` of each range, keeping those whose
/// exceedance lies in `[lo_frac, hi_frac]`.
pub fn sample_shell(cube: &Hypercube, spec: &ShellSpec) -> Result<Matrix> {
    cube.validate()?;
    spec.validate()?;
    let d = cube.dim();
    let ranges: Vec<f64> = cube.maxs.iter().zip(&cube.mins).map(|(h, l)| h - l).collect();
    if ranges.iter().all(|&r| r == 0.0) {
        return Err(Error::config(
            "every dimension of the bounding box is degenerate; no shell exists",
        ));
    }
    let mut rng = SeededRng::new(spec.seed);
    let budget = spec.count.saturating_mul(MAX_ATTEMPTS_PER_SAMPLE);
    let mut out = Vec::with_capacity(spec.count * d);
    let mut x = vec![0.0; d];
    let mut accepted = 0;
    let mut attempts = 0usize;
    while accepted < spec.count {
        if attempts >= budget {
            return Err(Error::Sampling {
                detail: format!("gave up after {attempts} proposals with {accepted} accepted"),
                acceptance_rate: accepted as f64 / attempts as f64,
            });
        }
        attempts += 1;
        for i in 0..d {
            let r = ranges[i];
            x[i] = if r > 0.0 {
                rng.range(cube.mins[i] - spec.hi_frac * r, cube.maxs[i] + spec.hi_frac * r)
            } else {
                cube.mins[i]
            };
        }
        let e = cube.exceed(&x);
        if e >= spec.lo_frac && e <= spec.hi_frac {
            out.extend_from_slice(&x);
            accepted += 1;
        }
    }
    Matrix::from_vec(spec.count, d, out)
}
