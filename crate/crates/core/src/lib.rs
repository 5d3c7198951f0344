//! Layer-wise quantization error analysis for smoothing, Hadamard rotation and
//! their composition.

pub mod chart;
pub mod cli;
pub mod ingest;
pub mod metrics;
pub mod outliers;
pub mod quant;
pub mod rng;
pub mod suites;
pub mod tensor;
pub mod transform;
pub mod verify;

pub use metrics::{DifficultyReport, LayerPair};
pub use quant::{Granularity, QuantConfig, Rounding};
pub use tensor::Matrix;
pub use transform::{TransformKind, TransformSpec};
