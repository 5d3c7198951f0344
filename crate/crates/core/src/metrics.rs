//! Distribution statistics and the per-layer difficulty report.
//!
//! Quantization difficulty is the population standard deviation of the
//! per-channel Frobenius magnitudes: a tensor whose channels all carry the
//! same energy scores zero.

use rayon::prelude::*;
use thiserror::Error;

use crate::quant::{self, QuantConfig, QuantError};
use crate::tensor::{channel_magnitudes, Matrix};
use crate::transform::{self, TransformError, TransformKind, TransformSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("statistic is undefined for zero-variance input")]
    ZeroVariance,
    #[error("inputs must have equal length, got {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("at least {needed} values are required, got {got}")]
    TooShort { needed: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("record {record}: {source}")]
    Transform {
        record: String,
        #[source]
        source: TransformError,
    },
    #[error("record {record}: {source}")]
    Quant {
        record: String,
        #[source]
        source: QuantError,
    },
    #[error("record {record}: {source}")]
    Stats {
        record: String,
        #[source]
        source: StatsError,
    },
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Population standard deviation of [`channel_magnitudes`].
pub fn quantization_difficulty(m: &Matrix) -> f64 {
    population_std(&channel_magnitudes(m))
}

/// Excess kurtosis of all entries, `m4 / m2² - 3`, with population moments.
pub fn kurtosis(m: &Matrix) -> Result<f64, StatsError> {
    let v = m.as_slice();
    let mu = mean(v);
    let (m2, m4) = v.iter().fold((0.0, 0.0), |(a, b), x| {
        let d2 = (x - mu).powi(2);
        (a + d2, b + d2 * d2)
    });
    let n = v.len() as f64;
    let (m2, m4) = (m2 / n, m4 / n);
    if m2 == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooShort {
            needed: 2,
            got: x.len(),
        });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// An activation/weight pair for one linear module.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPair {
    pub name: String,
    pub activation: Matrix,
    pub weight: Matrix,
}

/// Activation and weight quantizers used for every report row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantPair {
    pub act: QuantConfig,
    pub wt: QuantConfig,
}

impl QuantPair {
    /// Per-token activations and per-output-channel weights.
    pub fn new(bits_act: u32, bits_wt: u32) -> Result<Self, QuantError> {
        Ok(Self {
            act: QuantConfig::activations(bits_act)?,
            wt: QuantConfig::weights(bits_wt)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyReport {
    pub record_name: String,
    pub transform: TransformKind,
    pub alpha: f64,
    pub bits_act: u32,
    pub bits_wt: u32,
    pub layer_error: f64,
    pub act_difficulty: f64,
    /// Measured over input channels, the rows of `W` in `XW`.
    pub wt_difficulty: f64,
    pub act_kurtosis: f64,
    pub wt_kurtosis: f64,
    /// Largest magnitude of the transformed activations.
    pub act_max_abs: f64,
    /// Fewest occupied grid points over all transformed tokens.
    pub effective_bins_min: usize,
}

/// Applies `spec`, quantizes, and measures one row.
pub fn report_row(
    pair: &LayerPair,
    cfg: &QuantPair,
    spec: &TransformSpec,
) -> Result<DifficultyReport, ReportError> {
    let record = || pair.name.clone();
    let (x, w) =
        transform::apply_transform(&pair.activation, &pair.weight, spec).map_err(|source| {
            ReportError::Transform {
                record: record(),
                source,
            }
        })?;
    let layer_error =
        quant::layer_error(&x, &w, &cfg.act, &cfg.wt).map_err(|source| ReportError::Quant {
            record: record(),
            source,
        })?;
    let stats = |source| ReportError::Stats {
        record: record(),
        source,
    };
    let act_kurtosis = kurtosis(&x).map_err(stats)?;
    let wt_kurtosis = kurtosis(&w).map_err(stats)?;
    let steps = quant::compute_steps(&x, &cfg.act);
    let effective_bins_min = x
        .rows_iter()
        .zip(&steps)
        .map(|(row, &s)| quant::effective_bins_with(row, s, cfg.act.rounding))
        .min()
        .unwrap_or(0);
    Ok(DifficultyReport {
        record_name: pair.name.clone(),
        transform: spec.kind,
        alpha: spec.alpha(),
        bits_act: cfg.act.bits(),
        bits_wt: cfg.wt.bits(),
        layer_error,
        act_difficulty: quantization_difficulty(&x),
        wt_difficulty: quantization_difficulty(&w.transpose()),
        act_kurtosis,
        wt_kurtosis,
        act_max_abs: x.max_abs(),
        effective_bins_min,
    })
}

/// One row per `(record, spec)` in record-major order. Records are processed
/// in parallel; the output matches sequential evaluation.
pub fn build_report(
    records: &[LayerPair],
    cfg: &QuantPair,
    specs: &[TransformSpec],
) -> Result<Vec<DifficultyReport>, ReportError> {
    build_report_with(records, cfg, |_| specs.to_vec())
}

/// Like [`build_report`] but with per-record transform specs, e.g. to apply
/// a different `α` per module type.
pub fn build_report_with<F>(
    records: &[LayerPair],
    cfg: &QuantPair,
    specs_for: F,
) -> Result<Vec<DifficultyReport>, ReportError>
where
    F: Fn(&LayerPair) -> Vec<TransformSpec> + Sync,
{
    let mut rows = Vec::new();
    for r in report_records(records, cfg, specs_for) {
        rows.extend(r?);
    }
    Ok(rows)
}

/// One result per record, in input order, so that a failing record does not
/// hide the others.
pub fn report_records<F>(
    records: &[LayerPair],
    cfg: &QuantPair,
    specs_for: F,
) -> Vec<Result<Vec<DifficultyReport>, ReportError>>
where
    F: Fn(&LayerPair) -> Vec<TransformSpec> + Sync,
{
    records
        .par_iter()
        .map(|pair| {
            specs_for(pair)
                .iter()
                .map(|spec| report_row(pair, cfg, spec))
                .collect()
        })
        .collect()
}

/// `pearson(layer_error, act_difficulty²)` over the given rows.
pub fn error_difficulty_correlation(rows: &[&DifficultyReport]) -> Result<f64, StatsError> {
    let err: Vec<f64> = rows.iter().map(|r| r.layer_error).collect();
    let diff2: Vec<f64> = rows.iter().map(|r| r.act_difficulty.powi(2)).collect();
    pearson(&err, &diff2)
}

/// Layer error of smoothing at each `α` in `alphas`.
///
/// There is no principled choice of `α` per module; this sweep is a
/// convenience for exploring the trade-off.
pub fn alpha_sweep(
    pair: &LayerPair,
    cfg: &QuantPair,
    kind: TransformKind,
    alphas: &[f64],
) -> Result<Vec<(f64, f64)>, ReportError> {
    alphas
        .iter()
        .map(|&a| {
            let spec = TransformSpec::new(kind, a).map_err(|source| ReportError::Transform {
                record: pair.name.clone(),
                source,
            })?;
            Ok((a, report_row(pair, cfg, &spec)?.layer_error))
        })
        .collect()
}
