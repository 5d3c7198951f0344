//! Synthetic outlier generators and closed-form predictions for how a
//! Hadamard rotation (with or without prior smoothing) reshapes a token that
//! carries massive outliers.
//!
//! For a token `t` with outliers `o_i` at dimensions `i ∈ O` and `N(0, σ²)`
//! noise elsewhere, rotation by `R = H / √d` gives
//! `t̂_j = Σ_{i∈O} h_ij o_i / √d + ε̂_j`: every entry sits near one of the
//! signed sums `±Σ ±o_i / √d`, and the largest magnitude is reached in the
//! columns whose signs agree with the outlier signs.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::rng::NoiseSource;
use crate::tensor::{Matrix, TensorError};

/// Largest `|O|` accepted by [`predict_centroids`].
pub const MAX_CENTROID_OUTLIERS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OutlierError {
    #[error("invalid outlier spec: {0}")]
    InvalidSpec(String),
    #[error("{0} outlier dimensions is too many to enumerate (limit {MAX_CENTROID_OUTLIERS})")]
    TooManyOutliers(usize),
    #[error("weight channel maximum for outlier channel {channel} must be positive, got {value}")]
    NonPositiveWeightMax { channel: usize, value: f64 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// A single token with massive outliers at a few dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierTokenSpec {
    dim: usize,
    outliers: BTreeMap<usize, f64>,
    noise_sigma: f64,
    seed: u64,
}

impl OutlierTokenSpec {
    pub fn new(
        dim: usize,
        outliers: impl IntoIterator<Item = (usize, f64)>,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self, OutlierError> {
        let invalid = |m: String| Err(OutlierError::InvalidSpec(m));
        let outliers: BTreeMap<usize, f64> = outliers.into_iter().collect();
        if dim == 0 {
            return invalid("dimension must be positive".into());
        }
        if outliers.is_empty() {
            return invalid("at least one outlier dimension is required".into());
        }
        if let Some(&j) = outliers.keys().find(|&&j| j >= dim) {
            return invalid(format!("outlier dimension {j} is out of range for d={dim}"));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return invalid(format!(
                "noise sigma must be finite and >= 0, got {noise_sigma}"
            ));
        }
        if let Some((j, v)) = outliers
            .iter()
            .find(|(_, v)| !(v.is_finite() && v.abs() > 10.0 * noise_sigma))
        {
            return invalid(format!(
                "outlier {v} at dimension {j} must exceed 10 sigma ({})",
                10.0 * noise_sigma
            ));
        }
        Ok(Self {
            dim,
            outliers,
            noise_sigma,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Outlier dimensions and values, ordered by dimension.
    pub fn outliers(&self) -> &BTreeMap<usize, f64> {
        &self.outliers
    }

    pub fn outlier_dims(&self) -> Vec<usize> {
        self.outliers.keys().copied().collect()
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// `n x d` Gaussian activations with a few channels scaled up for every token.
#[derive(Debug, Clone, PartialEq)]
pub struct SystematicSpec {
    pub tokens: usize,
    pub dim: usize,
    pub outlier_channels: BTreeSet<usize>,
    pub channel_scale: f64,
    pub base_sigma: f64,
    pub seed: u64,
}

impl SystematicSpec {
    pub fn validate(&self) -> Result<(), OutlierError> {
        let invalid = |m: String| Err(OutlierError::InvalidSpec(m));
        if self.tokens == 0 || self.dim == 0 {
            return invalid(format!(
                "shape must be positive, got {}x{}",
                self.tokens, self.dim
            ));
        }
        if self.outlier_channels.is_empty() {
            return invalid("at least one outlier channel is required".into());
        }
        if let Some(&j) = self.outlier_channels.iter().find(|&&j| j >= self.dim) {
            return invalid(format!(
                "outlier channel {j} is out of range for d={}",
                self.dim
            ));
        }
        if !(self.channel_scale > 1.0 && self.channel_scale.is_finite()) {
            return invalid(format!(
                "channel scale must be > 1, got {}",
                self.channel_scale
            ));
        }
        if !(self.base_sigma > 0.0 && self.base_sigma.is_finite()) {
            return invalid(format!("base sigma must be > 0, got {}", self.base_sigma));
        }
        Ok(())
    }
}

/// `t_j = o_j` for `j ∈ O`, `N(0, σ²)` otherwise. Noise is drawn for every
/// dimension so the stream does not depend on `O`.
pub fn synth_massive_token(spec: &OutlierTokenSpec) -> Vec<f64> {
    let mut t = NoiseSource::new(spec.seed, 0).normals(spec.dim, spec.noise_sigma);
    for (&j, &o) in &spec.outliers {
        t[j] = o;
    }
    t
}

pub fn synth_systematic(spec: &SystematicSpec) -> Result<Matrix, OutlierError> {
    spec.validate()?;
    let mut noise = NoiseSource::new(spec.seed, 0);
    let mut data = noise.normals(spec.tokens * spec.dim, spec.base_sigma);
    for row in data.chunks_exact_mut(spec.dim) {
        for &j in &spec.outlier_channels {
            row[j] *= spec.channel_scale;
        }
    }
    Ok(Matrix::new(spec.tokens, spec.dim, data)?)
}

/// Distinct values of `|Σ_{i∈O} ±o_i| / √d`, sorted descending.
///
/// Sums closer than `1e-12` of the largest sum are merged, so coinciding
/// sign combinations yield fewer than `2^(|O|-1)` centroids.
pub fn predict_centroids(spec: &OutlierTokenSpec, d: usize) -> Result<Vec<f64>, OutlierError> {
    let values: Vec<f64> = spec.outliers.values().copied().collect();
    if values.len() > MAX_CENTROID_OUTLIERS {
        return Err(OutlierError::TooManyOutliers(values.len()));
    }
    let norm = (d as f64).sqrt();
    let total: f64 = values.iter().map(|v| v.abs()).sum();
    let tol = 1e-12 * total;
    // The first sign is fixed to + since |s| = |-s|.
    let (first, rest) = values.split_first().expect("spec has at least one outlier");
    let mut sums: Vec<f64> = (0..1u64 << rest.len())
        .map(|mask| {
            let tail: f64 = rest
                .iter()
                .enumerate()
                .map(|(k, v)| if mask >> k & 1 == 1 { -v } else { *v })
                .sum();
            (first + tail).abs()
        })
        .collect();
    sums.sort_by(|a, b| b.total_cmp(a));
    sums.dedup_by(|a, b| (*a - *b).abs() <= tol);
    Ok(sums.into_iter().map(|s| s / norm).collect())
}

/// `Σ_{i∈O} |o_i| / √d`, the noise-free maximum of the rotated token.
pub fn predict_rot_max(spec: &OutlierTokenSpec, d: usize) -> f64 {
    spec.outliers.values().map(|v| v.abs()).sum::<f64>() / (d as f64).sqrt()
}

/// `(lo, hi)` band of `±3σ` around [`predict_rot_max`].
pub fn rot_max_band(spec: &OutlierTokenSpec, d: usize) -> (f64, f64) {
    let p = predict_rot_max(spec, d);
    let b = 3.0 * spec.noise_sigma;
    (p - b, p + b)
}

/// `Σ_{i∈O} √(|o_i| · max|W_i| / d)`, the maximum after smoothing at `α = 0.5`
/// followed by rotation. `w_channel_max[j]` is `max|W_j|` for input channel `j`.
pub fn predict_smooth_rot_max(
    spec: &OutlierTokenSpec,
    w_channel_max: &[f64],
    d: usize,
) -> Result<f64, OutlierError> {
    let mut total = 0.0;
    for (&i, &o) in &spec.outliers {
        let wm = w_channel_max.get(i).copied().unwrap_or(f64::NAN);
        if wm.is_nan() || wm <= 0.0 {
            return Err(OutlierError::NonPositiveWeightMax {
                channel: i,
                value: wm,
            });
        }
        total += (o.abs() * wm / d as f64).sqrt();
    }
    Ok(total)
}

/// Whether the Sylvester rows indexed by `dims` have independent sign
/// patterns, i.e. the indices are linearly independent as GF(2) bit vectors.
/// When they are, every sign combination occurs in exactly `d / 2^|O|`
/// columns and the absolute centroids have equal-sized clusters.
pub fn sylvester_patterns_independent(dims: &[usize]) -> bool {
    let mut basis: Vec<usize> = Vec::new();
    for &v in dims {
        let mut x = v;
        for &b in &basis {
            x = x.min(x ^ b);
        }
        if x == 0 {
            return false;
        }
        basis.push(x);
        basis.sort_unstable_by(|a, b| b.cmp(a));
    }
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    /// Fraction of entries within `4σ` of some centroid.
    pub fraction: f64,
    /// `(centroid, count)` in the order the centroids were given.
    pub counts: Vec<(f64, usize)>,
}

/// Assigns each `|rotated_j|` to its nearest centroid if it is within `4σ`
/// (or within `1e-9` relative when `σ = 0`).
pub fn cluster_check(rotated: &[f64], centroids: &[f64], sigma: f64) -> ClusterReport {
    assert!(!centroids.is_empty(), "at least one centroid is required");
    let mut counts = vec![0usize; centroids.len()];
    let mut inside = 0usize;
    for v in rotated.iter().map(|v| v.abs()) {
        let (k, dist) = centroids
            .iter()
            .enumerate()
            .map(|(k, c)| (k, (v - c).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty");
        let band = if sigma > 0.0 {
            4.0 * sigma
        } else {
            1e-9 * centroids[k].abs().max(1.0)
        };
        if dist <= band {
            inside += 1;
            counts[k] += 1;
        }
    }
    let fraction = if rotated.is_empty() {
        1.0
    } else {
        inside as f64 / rotated.len() as f64
    };
    ClusterReport {
        fraction,
        counts: centroids.iter().copied().zip(counts).collect(),
    }
}
