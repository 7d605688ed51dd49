//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls into the backward pass; loss oracles re-derive every
//! formula with plain per-sample loops.
#![allow(dead_code)]

use softcheck::loss::{LossConfig, OodOutputs};
use softcheck::matrix::Matrix;
use softcheck::network::{init_params, Activation, ModelParams, NormStat};
use softcheck::rng::SeededRng;
use softcheck::{Checksum, ChecksumSpec};

pub fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| scale * rng.range(-1.0, 1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Small one-hidden-layer tanh network with non-trivial normalization and biases.
pub fn random_network(rng: &mut SeededRng, d: usize, hidden: usize, k: usize) -> ModelParams {
    let mut p = init_params(&[d, hidden, k + 1], Activation::Tanh, rng.next_u64()).unwrap();
    for l in &mut p.layers {
        for b in &mut l.biases {
            *b = rng.range(-0.5, 0.5);
        }
        for w in l.weights.as_mut_slice() {
            *w *= 1.5;
        }
    }
    for n in p.input_norm.iter_mut().chain(p.output_norm.iter_mut()) {
        *n = NormStat {
            mean: rng.range(-0.5, 0.5),
            scale: rng.range(0.5, 2.0),
        };
    }
    p
}

/// Composite loss through the forward pass only.
pub fn loss_via_forward(
    p: &ModelParams,
    x: &Matrix,
    y_raw: &Matrix,
    xo: Option<&Matrix>,
    spec: &ChecksumSpec,
    cfg: &LossConfig,
) -> f64 {
    let id = p.forward(x).unwrap();
    let y = p.normalize_targets(y_raw);
    let ood = xo.map(|xo| p.forward(xo).unwrap());
    softcheck::total_loss(
        &y,
        &id.y_hat,
        &id.c_hat,
        ood.as_ref().map(|o| OodOutputs {
            y_hat: &o.y_hat,
            c_hat: &o.c_hat,
        }),
        spec,
        cfg,
    )
    .unwrap()
    .total
}

/// Central finite differences of the composite loss for every parameter.
pub fn fd_gradient(
    p: &ModelParams,
    x: &Matrix,
    y: &Matrix,
    xo: Option<&Matrix>,
    spec: &ChecksumSpec,
    cfg: &LossConfig,
    h: f64,
) -> Vec<f64> {
    let mut q = p.clone();
    (0..p.param_count())
        .map(|i| {
            let orig = q.param(i);
            *q.param_mut(i) = orig + h;
            let plus = loss_via_forward(&q, x, y, xo, spec, cfg);
            *q.param_mut(i) = orig - h;
            let minus = loss_via_forward(&q, x, y, xo, spec, cfg);
            *q.param_mut(i) = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Entries smaller than this in magnitude are compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_ERR_FLOOR))
        .fold(0.0, f64::max)
}

/// Smallest `|Σŷ|` over a batch; gradient checks of the sinusoid stay clear of the kink at 0.
pub fn min_abs_output_sum(p: &ModelParams, x: &Matrix) -> f64 {
    let out = p.forward(x).unwrap();
    out.y_hat
        .iter_rows()
        .map(|r| r.iter().sum::<f64>().abs())
        .fold(f64::INFINITY, f64::min)
}

// ---- loss oracles: textbook loops, one sample at a time ----

fn c_of(spec: &ChecksumSpec, y: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in y {
        s += v;
    }
    match spec {
        ChecksumSpec::Linear => s,
        ChecksumSpec::Sinusoid { w } => (w * s.abs()).sin(),
    }
}

pub fn oracle_prediction(y: &Matrix, yh: &Matrix) -> f64 {
    let (m, k) = (y.rows(), y.cols());
    let mut total = 0.0;
    for j in 0..m {
        let mut per = 0.0;
        for i in 0..k {
            per += (y.get(j, i) - yh.get(j, i)).powi(2);
        }
        total += per / k as f64;
    }
    total / m as f64
}

pub fn oracle_checksum(spec: &ChecksumSpec, y: &Matrix, ch: &[f64]) -> f64 {
    let (m, k) = (y.rows(), y.cols());
    let mut total = 0.0;
    for j in 0..m {
        total += (c_of(spec, y.row(j)) - ch[j]).powi(2) / k as f64;
    }
    total / m as f64
}

pub fn oracle_id(spec: &ChecksumSpec, yh: &Matrix, ch: &[f64], lambda: f64) -> f64 {
    let m = yh.rows();
    let mut total = 0.0;
    for j in 0..m {
        total += (c_of(spec, yh.row(j)) - ch[j]).powi(2);
    }
    lambda * total / m as f64
}

pub fn oracle_ood(spec: &ChecksumSpec, yh: &Matrix, ch: &[f64], lambda: f64, eps: f64) -> f64 {
    let m = yh.rows();
    let mut total = 0.0;
    for j in 0..m {
        total += (c_of(spec, yh.row(j)) - ch[j]).powi(2);
    }
    lambda / (total / m as f64 + eps)
}

pub fn checksum_value(spec: &ChecksumSpec, y: &[f64]) -> f64 {
    spec.value(y)
}
