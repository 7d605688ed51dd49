//! Dense feed-forward network whose last layer carries `k` predictions plus one check node.
//!
//! Inputs are standardized with the stored input statistics before the first
//! layer. Outputs live in normalized target space; [`ModelParams::denormalize`]
//! maps predictions back to raw units.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::checksum::{Checksum, ChecksumSpec};
use crate::error::{ensure_finite, Error, Result};
use crate::loss::{self, LossConfig, LossTerms, OodOutputs};
use crate::matrix::Matrix;
use crate::rng::SeededRng;

/// Current model file format version.
pub const MODEL_VERSION: u32 = 1;
pub const MODEL_FORMAT: &str = "softcheck-model";
pub const DEFAULT_HIDDEN: [usize; 3] = [128, 128, 128];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, v: &mut [f64]) {
        match self {
            Activation::Tanh => v.iter_mut().for_each(|x| *x = x.tanh()),
            Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(0.0)),
        }
    }

    /// Multiplies `grad` by the derivative, expressed through the activation output.
    fn backprop(self, out: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Tanh => grad
                .iter_mut()
                .zip(out)
                .for_each(|(g, a)| *g *= 1.0 - a * a),
            Activation::Relu => grad.iter_mut().zip(out).for_each(|(g, a)| {
                if *a <= 0.0 {
                    *g = 0.0
                }
            }),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::config(format!("unknown activation '{s}'"))),
        }
    }
}

/// Affine standardization `(v − mean) / scale` for one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStat {
    pub mean: f64,
    pub scale: f64,
}

impl NormStat {
    pub const IDENTITY: NormStat = NormStat {
        mean: 0.0,
        scale: 1.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out × in`, row-major.
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub version: u32,
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub layers: Vec<Layer>,
    pub input_norm: Vec<NormStat>,
    pub output_norm: Vec<NormStat>,
}

/// Gradient of a scalar loss with respect to every weight and bias, layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    fn zeros_like(params: &ModelParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    /// Flattened in the same order as [`ModelParams::param`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.biases).copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `M × k` predictions in normalized target space.
    pub y_hat: Matrix,
    /// Check node output per sample.
    pub c_hat: Vec<f64>,
}

pub fn init_params(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<ModelParams> {
    validate_dims(layer_dims)?;
    let mut rng = SeededRng::new(seed);
    let layers = layer_dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.range(-bound, bound))
                .collect();
            Layer {
                weights: Matrix::from_vec(fan_out, fan_in, data).expect("sized above"),
                biases: vec![0.0; fan_out],
            }
        })
        .collect();
    Ok(ModelParams {
        version: MODEL_VERSION,
        layer_dims: layer_dims.to_vec(),
        activation,
        layers,
        input_norm: vec![NormStat::IDENTITY; layer_dims[0]],
        output_norm: vec![NormStat::IDENTITY; layer_dims[layer_dims.len() - 1] - 1],
    })
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::config(format!(
            "layer_dims needs an input and an output entry, got {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::config(format!("layer_dims entries must be >= 1, got {layer_dims:?}")));
    }
    if layer_dims[layer_dims.len() - 1] < 2 {
        return Err(Error::config(
            "the output layer needs at least one prediction plus the check node",
        ));
    }
    Ok(())
}

/// Layer sizes `[d, hidden.., k + 1]`.
pub fn layer_dims_for(d: usize, hidden: &[usize], k: usize) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(d);
    dims.extend_from_slice(hidden);
    dims.push(k + 1);
    dims
}

impl ModelParams {
    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    /// Number of predicted targets `k` (excludes the check node).
    pub fn output_dim(&self) -> usize {
        self.layer_dims[self.layer_dims.len() - 1] - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::config(format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                self.version
            )));
        }
        validate_dims(&self.layer_dims)?;
        if self.layers.len() != self.layer_dims.len() - 1 {
            return Err(Error::shape(format!(
                "{} layers for layer_dims {:?}",
                self.layers.len(),
                self.layer_dims
            )));
        }
        for (i, (layer, w)) in self.layers.iter().zip(self.layer_dims.windows(2)).enumerate() {
            if (layer.weights.rows(), layer.weights.cols()) != (w[1], w[0])
                || layer.biases.len() != w[1]
            {
                return Err(Error::shape(format!(
                    "layer {i}: weights {}x{}, biases {}, expected {}x{} and {}",
                    layer.weights.rows(),
                    layer.weights.cols(),
                    layer.biases.len(),
                    w[1],
                    w[0],
                    w[1]
                )));
            }
            ensure_finite(layer.weights.as_slice(), "weights")?;
            ensure_finite(&layer.biases, "biases")?;
        }
        if self.input_norm.len() != self.input_dim() || self.output_norm.len() != self.output_dim() {
            return Err(Error::shape("normalization statistics do not match layer_dims"));
        }
        for n in self.input_norm.iter().chain(&self.output_norm) {
            if !(n.mean.is_finite() && n.scale.is_finite() && n.scale > 0.0) {
                return Err(Error::config(format!(
                    "invalid normalization statistic (mean {}, scale {})",
                    n.mean, n.scale
                )));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.biases.len())
            .sum()
    }

    fn locate(&self, mut idx: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            let nw = l.weights.as_slice().len();
            if idx < nw {
                return (li, true, idx);
            }
            idx -= nw;
            if idx < l.biases.len() {
                return (li, false, idx);
            }
            idx -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter by flat index: each layer's weights (row-major) then its biases.
    pub fn param(&self, idx: usize) -> f64 {
        match self.locate(idx) {
            (l, true, i) => self.layers[l].weights.as_slice()[i],
            (l, false, i) => self.layers[l].biases[i],
        }
    }

    pub fn param_mut(&mut self, idx: usize) -> &mut f64 {
        match self.locate(idx) {
            (l, true, i) => &mut self.layers[l].weights.as_mut_slice()[i],
            (l, false, i) => &mut self.layers[l].biases[i],
        }
    }

    fn check_inputs(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "model expects {} input features, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        ensure_finite(x.as_slice(), "input batch")
    }

    pub fn normalize_inputs(&self, x: &Matrix) -> Matrix {
        standardize(x, &self.input_norm)
    }

    pub fn normalize_targets(&self, y: &Matrix) -> Matrix {
        standardize(y, &self.output_norm)
    }

    /// Maps normalized predictions back to raw target units.
    pub fn denormalize(&self, y_hat: &Matrix) -> Matrix {
        let mut out = y_hat.clone();
        for r in 0..out.rows() {
            for (v, n) in out.row_mut(r).iter_mut().zip(&self.output_norm) {
                *v = *v * n.scale + n.mean;
            }
        }
        out
    }

    /// Activations of every layer for a normalized input batch; the last entry is the raw output.
    fn activations(&self, x_norm: Matrix) -> Vec<Matrix> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x_norm);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].matmul_transposed(&layer.weights);
            for r in 0..z.rows() {
                let row = z.row_mut(r);
                for (v, b) in row.iter_mut().zip(&layer.biases) {
                    *v += b;
                }
                if i != last {
                    self.activation.apply(row);
                }
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardOutput> {
        self.check_inputs(x)?;
        let out = self
            .activations(self.normalize_inputs(x))
            .pop()
            .expect("at least one layer");
        Ok(split_output(&out, self.output_dim()))
    }

    /// Composite loss on an ID batch (raw `x`, raw `y`) and an optional OOD batch, with its
    /// exact gradient.
    ///
    /// `ood_x` may be empty or `None` only when the OOD term is disabled.
    pub fn backward<C: Checksum + ?Sized>(
        &self,
        id_x: &Matrix,
        id_y: &Matrix,
        ood_x: Option<&Matrix>,
        checksum: &C,
        cfg: &LossConfig,
    ) -> Result<(LossTerms, Gradients)> {
        cfg.validate()?;
        self.check_inputs(id_x)?;
        if id_x.rows() == 0 {
            return Err(Error::config("ID batch is empty"));
        }
        if id_y.rows() != id_x.rows() || id_y.cols() != self.output_dim() {
            return Err(Error::shape(format!(
                "targets are {}x{}, expected {}x{}",
                id_y.rows(),
                id_y.cols(),
                id_x.rows(),
                self.output_dim()
            )));
        }
        ensure_finite(id_y.as_slice(), "target batch")?;
        let ood_x = match ood_x {
            Some(x) if cfg.use_ood_term => {
                if x.rows() == 0 {
                    return Err(Error::config("OOD term enabled but the OOD batch is empty"));
                }
                self.check_inputs(x)?;
                Some(x)
            }
            None if cfg.use_ood_term => {
                return Err(Error::config("OOD term enabled but no OOD batch supplied"))
            }
            _ => None,
        };

        let k = self.output_dim();
        let y = self.normalize_targets(id_y);
        let id_acts = self.activations(self.normalize_inputs(id_x));
        let id_out = split_output(id_acts.last().expect("output layer"), k);
        let ood_acts = ood_x.map(|x| self.activations(self.normalize_inputs(x)));
        let ood_out = ood_acts
            .as_ref()
            .map(|a| split_output(a.last().expect("output layer"), k));

        let terms = loss::total_loss(
            &y,
            &id_out.y_hat,
            &id_out.c_hat,
            ood_out.as_ref().map(|o| OodOutputs {
                y_hat: &o.y_hat,
                c_hat: &o.c_hat,
            }),
            checksum,
            cfg,
        )?;
        if let Some(term) = terms.first_non_finite() {
            return Err(Error::numeric(term, "loss term is not finite"));
        }

        let mut grads = Gradients::zeros_like(self);
        let mut cgrad = vec![0.0; k];

        // ID batch: prediction, checksum and (optionally) ID-penalty terms.
        let m = id_x.rows() as f64;
        let kf = k as f64;
        let mut d_out = Matrix::zeros(id_x.rows(), k + 1);
        for j in 0..id_x.rows() {
            let yh = id_out.y_hat.row(j);
            let yt = y.row(j);
            let ch = id_out.c_hat[j];
            let row = d_out.row_mut(j);
            for i in 0..k {
                row[i] = 2.0 / (m * kf) * (yh[i] - yt[i]);
            }
            row[k] = 2.0 / (m * kf) * (ch - checksum.value(yt));
            if cfg.use_id_term {
                let r = checksum.value(yh) - ch;
                checksum.gradient(yh, &mut cgrad);
                let s = 2.0 * cfg.lambda_id / m * r;
                for i in 0..k {
                    row[i] += s * cgrad[i];
                }
                row[k] -= s;
            }
        }
        self.backprop(&id_acts, d_out, &mut grads);

        // OOD batch: inverted mean-squared checksum mismatch.
        if let (Some(acts), Some(out)) = (&ood_acts, &ood_out) {
            let mp = out.c_hat.len() as f64;
            let s_mean = loss::mean_checksum_mismatch(&out.y_hat, &out.c_hat, checksum);
            let denom = s_mean + cfg.epsilon;
            let d_s = -cfg.lambda_ood / (denom * denom);
            let mut d_out = Matrix::zeros(out.c_hat.len(), k + 1);
            for j in 0..out.c_hat.len() {
                let yh = out.y_hat.row(j);
                let r = checksum.value(yh) - out.c_hat[j];
                checksum.gradient(yh, &mut cgrad);
                let s = d_s * 2.0 * r / mp;
                let row = d_out.row_mut(j);
                for i in 0..k {
                    row[i] = s * cgrad[i];
                }
                row[k] = -s;
            }
            self.backprop(acts, d_out, &mut grads);
        }

        for l in &grads.layers {
            if l.weights.as_slice().iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(Error::numeric("gradient", "non-finite gradient entry"));
            }
        }
        Ok((terms, grads))
    }

    /// Accumulates parameter gradients given `∂L/∂output` for a batch.
    fn backprop(&self, acts: &[Matrix], mut delta: Matrix, grads: &mut Gradients) {
        for li in (0..self.layers.len()).rev() {
            let g = &mut grads.layers[li];
            delta.transposed_matmul_acc(&acts[li], &mut g.weights);
            for r in delta.iter_rows() {
                for (b, d) in g.biases.iter_mut().zip(r) {
                    *b += d;
                }
            }
            if li == 0 {
                break;
            }
            let mut prev = delta.matmul(&self.layers[li].weights);
            for r in 0..prev.rows() {
                self.activation.backprop(acts[li].row(r), prev.row_mut(r));
            }
            delta = prev;
        }
    }
}

fn standardize(x: &Matrix, stats: &[NormStat]) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        for (v, n) in out.row_mut(r).iter_mut().zip(stats) {
            *v = (*v - n.mean) / n.scale;
        }
    }
    out
}

fn split_output(out: &Matrix, k: usize) -> ForwardOutput {
    let mut y_hat = Vec::with_capacity(out.rows() * k);
    let mut c_hat = Vec::with_capacity(out.rows());
    for r in out.iter_rows() {
        y_hat.extend_from_slice(&r[..k]);
        c_hat.push(r[k]);
    }
    ForwardOutput {
        y_hat: Matrix::from_vec(out.rows(), k, y_hat).expect("sized above"),
        c_hat,
    }
}

/// On-disk model: parameters plus the checksum function the check node was trained on.
///
/// JSON layout:
///
/// ```json
/// {
///   "format": "softcheck-model",
///   "checksum": { "kind": "sinusoid", "w": 0.0001 },
///   "params": {
///     "version": 1,
///     "layer_dims": [6, 128, 128, 128, 9],
///     "activation": "tanh",
///     "layers": [ { "weights": { "rows": 128, "cols": 6, "data": [..] }, "biases": [..] }, .. ],
///     "input_norm":  [ { "mean": 0.0, "scale": 1.0 }, .. ],
///     "output_norm": [ { "mean": 0.0, "scale": 1.0 }, .. ]
///   }
/// }
/// ```
///
/// `weights.data` is row-major `out × in`. Floats are written in shortest round-trip form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub checksum: ChecksumSpec,
    pub params: ModelParams,
}

impl ModelFile {
    pub fn new(params: ModelParams, checksum: ChecksumSpec) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            checksum,
            params,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s).map_err(|e| Error::Parse {
            line: e.line() as u64,
            detail: format!("model file: {e}"),
        })?;
        if file.format != MODEL_FORMAT {
            return Err(Error::config(format!("not a model file (format '{}')", file.format)));
        }
        file.checksum.validate()?;
        file.params.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
