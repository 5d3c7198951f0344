//! Symmetric round-to-nearest integer quantization.
//!
//! Each group (a token row or a weight output column) gets one step size
//! `Δ = max|group| / (2^(b-1) - 1)` and values map to `round(x / Δ)`. There
//! is no clipping: the largest magnitude in a group always lands exactly on
//! the grid edge.
//!
//! Weights are quantized per **output** channel, i.e. one step per column of
//! `W` in the `X * W` orientation.

use std::collections::HashSet;

use thiserror::Error;

use crate::tensor::{self, matmul, Matrix, TensorError};

/// Largest supported bit width. Grid indices stay exactly representable in `f64`.
pub const MAX_BITS: u32 = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantError {
    #[error("bit width must be in 2..={MAX_BITS}, got {0}")]
    InvalidBits(u32),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Granularity {
    /// One step per row.
    #[default]
    PerToken,
    /// One step per column.
    PerChannel,
}

/// Tie-breaking rule for values exactly halfway between two grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Rounding {
    #[default]
    HalfToEven,
    HalfAwayFromZero,
}

impl Rounding {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Rounding::HalfToEven => v.round_ties_even(),
            Rounding::HalfAwayFromZero => v.round(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantConfig {
    bits: u32,
    pub granularity: Granularity,
    pub rounding: Rounding,
}

impl QuantConfig {
    pub fn new(
        bits: u32,
        granularity: Granularity,
        rounding: Rounding,
    ) -> Result<Self, QuantError> {
        if !(2..=MAX_BITS).contains(&bits) {
            return Err(QuantError::InvalidBits(bits));
        }
        Ok(Self {
            bits,
            granularity,
            rounding,
        })
    }

    /// Per-token activation quantizer with the default rounding.
    pub fn activations(bits: u32) -> Result<Self, QuantError> {
        Self::new(bits, Granularity::PerToken, Rounding::default())
    }

    /// Per-output-channel weight quantizer with the default rounding.
    pub fn weights(bits: u32) -> Result<Self, QuantError> {
        Self::new(bits, Granularity::PerChannel, Rounding::default())
    }

    pub fn with_rounding(mut self, rounding: Rounding) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Largest grid index, `2^(b-1) - 1`.
    pub fn grid_max(&self) -> i64 {
        (1i64 << (self.bits - 1)) - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantResult {
    /// Grid indices, same shape as the input, row-major.
    pub integer_grid: Vec<i64>,
    /// One step per group: per row for `PerToken`, per column for `PerChannel`.
    pub steps: Vec<f64>,
    pub dequantized: Matrix,
    pub granularity: Granularity,
}

impl QuantResult {
    pub fn grid_index(&self, row: usize, col: usize) -> i64 {
        self.integer_grid[row * self.dequantized.cols() + col]
    }
}

pub fn step_for(max_abs: f64, cfg: &QuantConfig) -> f64 {
    max_abs / cfg.grid_max() as f64
}

/// One step size per group. All-zero groups get a step of zero.
pub fn compute_steps(x: &Matrix, cfg: &QuantConfig) -> Vec<f64> {
    let maxima = match cfg.granularity {
        Granularity::PerToken => x.row_max_abs(),
        Granularity::PerChannel => x.column_max_abs(),
    };
    maxima.into_iter().map(|m| step_for(m, cfg)).collect()
}

#[inline]
fn grid_index(v: f64, step: f64, rounding: Rounding) -> i64 {
    if step == 0.0 {
        0
    } else {
        rounding.apply(v / step) as i64
    }
}

pub fn quantize_rtn(x: &Matrix, cfg: &QuantConfig) -> Result<QuantResult, QuantError> {
    let steps = compute_steps(x, cfg);
    let cols = x.cols();
    let mut grid = Vec::with_capacity(x.as_slice().len());
    let mut deq = Vec::with_capacity(x.as_slice().len());
    for (i, row) in x.rows_iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let step = match cfg.granularity {
                Granularity::PerToken => steps[i],
                Granularity::PerChannel => steps[j],
            };
            let k = grid_index(v, step, cfg.rounding);
            grid.push(k);
            deq.push(k as f64 * step);
        }
    }
    Ok(QuantResult {
        integer_grid: grid,
        steps,
        dequantized: Matrix::new(x.rows(), cols, deq)?,
        granularity: cfg.granularity,
    })
}

/// Fake-quantizes `x` (quantize then dequantize).
pub fn fake_quantize(x: &Matrix, cfg: &QuantConfig) -> Result<Matrix, QuantError> {
    Ok(quantize_rtn(x, cfg)?.dequantized)
}

/// Squared Frobenius norm of `X W - Q(X) Q(W)`.
///
/// `cfg_act` and `cfg_wt` are applied as given; use [`QuantConfig::activations`]
/// and [`QuantConfig::weights`] for the usual per-token / per-output-channel
/// pairing.
pub fn layer_error(
    x: &Matrix,
    w: &Matrix,
    cfg_act: &QuantConfig,
    cfg_wt: &QuantConfig,
) -> Result<f64, QuantError> {
    let exact = matmul(x, w)?;
    let approx = matmul(&fake_quantize(x, cfg_act)?, &fake_quantize(w, cfg_wt)?)?;
    Ok(tensor::frobenius_norm(&exact.sub(&approx)?).powi(2))
}

/// Variance of uniform rounding noise on `[-Δ/2, Δ/2]`.
pub fn quant_noise_variance(step: f64) -> f64 {
    step * step / 12.0
}

/// Number of distinct grid indices a token occupies under the default rounding.
pub fn effective_bins(token: &[f64], step: f64) -> usize {
    effective_bins_with(token, step, Rounding::default())
}

pub fn effective_bins_with(token: &[f64], step: f64, rounding: Rounding) -> usize {
    if step == 0.0 {
        return 1;
    }
    token
        .iter()
        .map(|&v| grid_index(v, step, rounding))
        .collect::<HashSet<_>>()
        .len()
}
