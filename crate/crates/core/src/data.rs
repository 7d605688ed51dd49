//! Labeled regression datasets, the synthetic hyperplane-split benchmark, and CSV I/O.
//!
//! CSV layout: header `partition,x_0,…,x_{d−1},y_0,…,y_{k−1}`, one sample per
//! row, floats in shortest round-trip decimal form, `partition` one of
//! `train`, `validation`, `ood`, `unsplit`.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::matrix::Matrix;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Ood,
    Unsplit,
}

impl Partition {
    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Ood => "ood",
            Partition::Unsplit => "unsplit",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Partition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Partition::Train),
            "validation" => Ok(Partition::Validation),
            "ood" => Ok(Partition::Ood),
            "unsplit" => Ok(Partition::Unsplit),
            _ => Err(Error::data(format!("unknown partition '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    inputs: Matrix,
    targets: Matrix,
    partition: Vec<Partition>,
}

impl LabeledDataset {
    pub fn new(inputs: Matrix, targets: Matrix, partition: Vec<Partition>) -> Result<Self> {
        if inputs.rows() != targets.rows() || inputs.rows() != partition.len() {
            return Err(Error::shape(format!(
                "row counts disagree: {} inputs, {} targets, {} tags",
                inputs.rows(),
                targets.rows(),
                partition.len()
            )));
        }
        if inputs.cols() == 0 || targets.cols() == 0 {
            return Err(Error::shape("datasets need at least one input and one target column"));
        }
        ensure_finite(inputs.as_slice(), "inputs")?;
        ensure_finite(targets.as_slice(), "targets")?;
        Ok(Self {
            inputs,
            targets,
            partition,
        })
    }

    /// Same rows, every row tagged `tag`.
    pub fn with_partition(inputs: Matrix, targets: Matrix, tag: Partition) -> Result<Self> {
        let n = inputs.rows();
        Self::new(inputs, targets, vec![tag; n])
    }

    pub fn len(&self) -> usize {
        self.partition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partition.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn target_dim(&self) -> usize {
        self.targets.cols()
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn targets(&self) -> &Matrix {
        &self.targets
    }

    pub fn partition(&self) -> &[Partition] {
        &self.partition
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_rows(indices),
            targets: self.targets.select_rows(indices),
            partition: indices.iter().map(|&i| self.partition[i]).collect(),
        }
    }

    /// Rows carrying `tag`, in original order.
    pub fn filter(&self, tag: Partition) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.partition[i] == tag).collect();
        self.select(&idx)
    }

    pub fn retag(mut self, tag: Partition) -> Self {
        self.partition.fill(tag);
        self
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if (self.input_dim(), self.target_dim()) != (other.input_dim(), other.target_dim()) {
            return Err(Error::shape("cannot concatenate datasets of different widths"));
        }
        let mut x = self.inputs.as_slice().to_vec();
        x.extend_from_slice(other.inputs.as_slice());
        let mut y = self.targets.as_slice().to_vec();
        y.extend_from_slice(other.targets.as_slice());
        let mut tags = self.partition.clone();
        tags.extend_from_slice(&other.partition);
        let n = tags.len();
        Ok(Self {
            inputs: Matrix::from_vec(n, self.input_dim(), x)?,
            targets: Matrix::from_vec(n, self.target_dim(), y)?,
            partition: tags,
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["partition".to_string()];
        header.extend((0..self.input_dim()).map(|i| format!("x_{i}")));
        header.extend((0..self.target_dim()).map(|i| format!("y_{i}")));
        out.write_record(&header).map_err(csv_write_err)?;
        let mut buf = ryu::Buffer::new();
        let mut record = Vec::with_capacity(header.len());
        for r in 0..self.len() {
            record.clear();
            record.push(self.partition[r].name().to_string());
            for v in self.inputs.row(r).iter().chain(self.targets.row(r)) {
                record.push(buf.format(*v).to_string());
            }
            out.write_record(&record).map_err(csv_write_err)?;
        }
        out.flush().map_err(|e| Error::io("<csv output>", e))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(r);
        let header = reader.headers().map_err(|e| csv_read_err(e, 1))?.clone();
        let (d, k) = parse_header(&header)?;
        let width = 1 + d + k;

        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut tags = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_read_err(e, 0))?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != width {
                return Err(Error::Parse {
                    line,
                    detail: format!("expected {width} fields, found {}", rec.len()),
                });
            }
            let tag: Partition = rec[0].trim().parse().map_err(|e: Error| Error::Parse {
                line,
                detail: e.to_string(),
            })?;
            tags.push(tag);
            for (j, cell) in rec.iter().enumerate().skip(1) {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    line,
                    detail: format!("column {} ('{}'): '{cell}' is not a number", j + 1, &header[j]),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        detail: format!("column {} ('{}'): non-finite value", j + 1, &header[j]),
                    });
                }
                if j <= d {
                    xs.push(v);
                } else {
                    ys.push(v);
                }
            }
        }
        if tags.is_empty() {
            return Err(Error::data("dataset has a header but no rows"));
        }
        let n = tags.len();
        Self::new(Matrix::from_vec(n, d, xs)?, Matrix::from_vec(n, k, ys)?, tags)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_csv(&mut bytes)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

fn parse_header(header: &csv::StringRecord) -> Result<(usize, usize)> {
    let bad = |detail: String| Error::Parse { line: 1, detail };
    if header.get(0) != Some("partition") {
        return Err(bad("first column must be 'partition'".into()));
    }
    let d = header.iter().skip(1).take_while(|h| h.starts_with("x_")).count();
    let k = header.len() - 1 - d;
    if d == 0 || k == 0 {
        return Err(bad(format!("need x_* and y_* columns, got {d} inputs and {k} targets")));
    }
    for (i, h) in header.iter().skip(1).enumerate() {
        let expect = if i < d { format!("x_{i}") } else { format!("y_{}", i - d) };
        if h != expect {
            return Err(bad(format!("column {} is '{h}', expected '{expect}'", i + 2)));
        }
    }
    Ok((d, k))
}

fn csv_read_err(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    Error::Parse {
        line,
        detail: e.to_string(),
    }
}

fn csv_write_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<csv output>", io),
        other => Error::data(format!("csv write failed: {other:?}")),
    }
}

/// Hyperplane `normal · x = offset` separating ID (`≤`) from OOD (`>`) inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlane {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl SplitPlane {
    pub fn side(&self, x: &[f64]) -> f64 {
        self.normal.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
    }

    pub fn is_id(&self, x: &[f64]) -> bool {
        self.side(x) <= self.offset
    }
}

/// Synthetic benchmark definition. Inputs are drawn from the base box `[-1, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub d: usize,
    pub k: usize,
    pub n_id: usize,
    pub n_ood: usize,
    pub function_seed: u64,
    pub sample_seed: u64,
    pub noise_sd: f64,
    pub split_plane: SplitPlane,
}

pub const BASE_BOX: (f64, f64) = (-1.0, 1.0);
/// Number of sinusoid components in the synthetic target map.
pub const TARGET_COMPONENTS: usize = 6;
const REJECTION_ATTEMPTS_PER_ROW: usize = 1000;

impl Default for SynthSpec {
    /// d = 6, k = 8, 4000 ID rows, 2000 OOD rows, noise 0.01, plane `x_0 + x_1 = 0.5`.
    fn default() -> Self {
        let d = 6;
        let mut normal = vec![0.0; d];
        normal[0] = 1.0;
        normal[1] = 1.0;
        Self {
            d,
            k: 8,
            n_id: 4000,
            n_ood: 2000,
            function_seed: 1,
            sample_seed: 2,
            noise_sd: 0.01,
            split_plane: SplitPlane { normal, offset: 0.5 },
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.k == 0 {
            return Err(Error::config("synthetic d and k must be >= 1"));
        }
        if self.n_id == 0 || self.n_ood == 0 {
            return Err(Error::config("synthetic n_id and n_ood must be >= 1"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::config(format!("noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        if self.split_plane.normal.len() != self.d {
            return Err(Error::config(format!(
                "split plane normal has {} entries for d = {}",
                self.split_plane.normal.len(),
                self.d
            )));
        }
        if self
            .split_plane
            .normal
            .iter()
            .chain(std::iter::once(&self.split_plane.offset))
            .any(|v| !v.is_finite())
        {
            return Err(Error::config("split plane must be finite"));
        }
        Ok(())
    }
}

/// Smooth random map `y_i = Σ_m α_im sin(β_m · x + φ_m) + γ_i ‖x‖²`.
///
/// Coefficients are drawn from `SeededRng::new(function_seed)` in this order:
/// `β` (`TARGET_COMPONENTS × d`, standard normal), `φ` (uniform `[0, 2π)`),
/// `α` (`k × TARGET_COMPONENTS`, normal with sd `1/√TARGET_COMPONENTS`),
/// `γ` (`k`, uniform `[-1, 1)`).
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMap {
    freq: Matrix,
    phase: Vec<f64>,
    amp: Matrix,
    quad: Vec<f64>,
}

impl TargetMap {
    pub fn new(d: usize, k: usize, function_seed: u64) -> Self {
        let mut rng = SeededRng::new(function_seed);
        let m = TARGET_COMPONENTS;
        let freq = (0..m * d).map(|_| rng.normal()).collect();
        let phase = (0..m).map(|_| rng.range(0.0, std::f64::consts::TAU)).collect();
        let sd = 1.0 / (m as f64).sqrt();
        let amp = (0..k * m).map(|_| sd * rng.normal()).collect();
        let quad = (0..k).map(|_| rng.range(-1.0, 1.0)).collect();
        Self {
            freq: Matrix::from_vec(m, d, freq).expect("sized"),
            phase,
            amp: Matrix::from_vec(k, m, amp).expect("sized"),
            quad,
        }
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        let waves: Vec<f64> = self
            .freq
            .iter_rows()
            .zip(&self.phase)
            .map(|(b, p)| (b.iter().zip(x).map(|(u, v)| u * v).sum::<f64>() + p).sin())
            .collect();
        let sq: f64 = x.iter().map(|v| v * v).sum();
        for (i, o) in out.iter_mut().enumerate() {
            let s: f64 = self.amp.row(i).iter().zip(&waves).map(|(a, w)| a * w).sum();
            *o = s + self.quad[i] * sq;
        }
    }
}

/// Generates `n_id` rows tagged `unsplit` (`a·x ≤ b`) followed by `n_ood` rows tagged `ood`.
///
/// Inputs, then per-row target noise, are drawn from `SeededRng::new(sample_seed)`:
/// for each row, uniform points in the base box are proposed until one lands on
/// the required side, then `k` standard normals scale the noise.
pub fn synth_generate(spec: &SynthSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let g = TargetMap::new(spec.d, spec.k, spec.function_seed);
    let mut rng = SeededRng::new(spec.sample_seed);
    let n = spec.n_id + spec.n_ood;
    let mut xs = Vec::with_capacity(n * spec.d);
    let mut ys = vec![0.0; n * spec.k];
    let mut tags = Vec::with_capacity(n);
    let mut x = vec![0.0; spec.d];
    for row in 0..n {
        let want_id = row < spec.n_id;
        let mut attempts = 0;
        loop {
            x.iter_mut().for_each(|v| *v = rng.range(BASE_BOX.0, BASE_BOX.1));
            if spec.split_plane.is_id(&x) == want_id {
                break;
            }
            attempts += 1;
            if attempts >= REJECTION_ATTEMPTS_PER_ROW {
                return Err(Error::config(format!(
                    "split plane leaves the {} side of the base box (nearly) empty",
                    if want_id { "ID" } else { "OOD" }
                )));
            }
        }
        xs.extend_from_slice(&x);
        let y = &mut ys[row * spec.k..(row + 1) * spec.k];
        g.eval(&x, y);
        for v in y.iter_mut() {
            *v += spec.noise_sd * rng.normal();
        }
        tags.push(if want_id { Partition::Unsplit } else { Partition::Ood });
    }
    LabeledDataset::new(
        Matrix::from_vec(n, spec.d, xs)?,
        Matrix::from_vec(n, spec.k, ys)?,
        tags,
    )
}
