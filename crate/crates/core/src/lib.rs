//! Soft-checksum out-of-distribution detection for multi-output regression networks.
//!
//! A dense network predicts `k` targets plus one extra *check node* trained to
//! reproduce a checksum function `C(ŷ)` of its own predictions. At inference
//! the squared mismatch `(C(ŷ) − Ĉ)²` is compared with a threshold calibrated
//! so that 99% of validation samples pass; anything above it is flagged as
//! out-of-distribution.
//!
//! Pipeline: [`data`] builds or loads datasets, [`trainer`] fits the network
//! under the [`loss`] variants (optionally exposing it to shell samples from
//! [`ood_sampler`]), and [`metrics`] calibrates the threshold and scores FNR99.

pub mod checksum;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod network;
pub mod ood_sampler;
pub mod optim;
pub mod rng;
pub mod trainer;

pub use checksum::{checksum, checksum_error, checksum_grad, Checksum, ChecksumSpec};
pub use data::{synth_generate, LabeledDataset, Partition, SplitPlane, SynthSpec};
pub use error::{Error, Result};
pub use loss::{total_loss, LossConfig, LossTerms, LossVariant};
pub use matrix::Matrix;
pub use metrics::{calibrate_threshold, evaluate, flag, fnr99, pearson, per_sample_errors, EvalReport, TrustLabel};
pub use network::{init_params, Activation, ForwardOutput, Gradients, ModelFile, ModelParams, NormStat};
pub use ood_sampler::{bounding_hypercube, sample_shell, Hypercube, ShellSpec};
pub use trainer::{fit_normalization, split_id, train, TrainConfig, TrainHistory};
