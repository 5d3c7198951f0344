//! Named synthetic layer suites.
//!
//! * `massive-basic`: down-projection-like layers where one token carries
//!   massive outliers (up to 1000) in one to three dimensions.
//! * `systematic`: layers with one channel scaled by 100 for every token.
//! * `systematic-graded`: eight layers whose outlier-channel scale grows
//!   from 2 to 256 in powers of two.
//!
//! Every record is generated from `(seed, record index)` alone, so suites are
//! reproducible and records are independent of each other.

use std::collections::BTreeSet;

use crate::metrics::LayerPair;
use crate::outliers::{self, OutlierError, OutlierTokenSpec, SystematicSpec};
use crate::rng::NoiseSource;
use crate::tensor::Matrix;

pub const SUITES: [&str; 3] = ["massive-basic", "systematic", "systematic-graded"];

/// Std of the ordinary (non-massive) tokens in `massive-basic`.
pub const MASSIVE_TOKEN_SIGMA: f64 = 0.3;
/// Std of weights in every suite.
pub const WEIGHT_SIGMA: f64 = 0.02;
/// Weight rows feeding a massive-outlier dimension are scaled by this factor.
pub const OUTLIER_ROW_ATTENUATION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct MassiveLayerSpec {
    pub name: &'static str,
    pub tokens: usize,
    pub dim: usize,
    pub out_channels: usize,
    pub outliers: &'static [(usize, f64)],
    pub noise_sigma: f64,
}

/// Layer definitions for `massive-basic`. The first entry is the
/// single-outlier layer (`o = 1000`, `d = 4096`, `σ = 0.1`).
pub const MASSIVE_BASIC: [MassiveLayerSpec; 4] = [
    MassiveLayerSpec {
        name: "layer.1.down_proj",
        tokens: 64,
        dim: 4096,
        out_channels: 128,
        outliers: &[(7, 1000.0)],
        noise_sigma: 0.1,
    },
    MassiveLayerSpec {
        name: "layer.2.down_proj",
        tokens: 64,
        dim: 1024,
        out_channels: 128,
        outliers: &[(5, 600.0), (77, 300.0)],
        noise_sigma: 0.1,
    },
    MassiveLayerSpec {
        name: "layer.30.down_proj",
        tokens: 64,
        dim: 4096,
        out_channels: 128,
        outliers: &[(7, 900.0), (1500, 500.0)],
        noise_sigma: 0.1,
    },
    MassiveLayerSpec {
        name: "layer.31.down_proj",
        tokens: 64,
        dim: 4096,
        out_channels: 128,
        outliers: &[(3, 1000.0), (700, 600.0), (2222, 300.0)],
        noise_sigma: 0.1,
    },
];

/// Systematic layers: `(name, tokens, dim, out_channels, outlier channel, scale)`.
pub const SYSTEMATIC: [(&str, usize, usize, usize, usize, f64); 2] = [
    ("layer.0.k_proj", 512, 256, 128, 17, 100.0),
    ("layer.0.gate_proj", 512, 512, 128, 300, 100.0),
];

/// Outlier-channel scales of `systematic-graded`.
pub const GRADED_SCALES: [f64; 8] = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0];

fn record_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn gaussian_weight(noise: &mut NoiseSource, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, noise.normals(rows * cols, WEIGHT_SIGMA)).expect("finite normals")
}

impl MassiveLayerSpec {
    /// The massive token as an [`OutlierTokenSpec`] for the given record seed.
    pub fn token_spec(&self, seed: u64) -> Result<OutlierTokenSpec, OutlierError> {
        OutlierTokenSpec::new(
            self.dim,
            self.outliers.iter().copied(),
            self.noise_sigma,
            seed,
        )
    }

    /// Token 0 is the massive token; the rest are `N(0, 0.3²)`. Weights are
    /// `N(0, 0.02²)` with the rows at outlier dimensions attenuated.
    pub fn generate(&self, seed: u64) -> Result<LayerPair, OutlierError> {
        let token = outliers::synth_massive_token(&self.token_spec(seed)?);
        let mut noise = NoiseSource::new(seed, 1);
        let mut x = noise.normals(self.tokens * self.dim, MASSIVE_TOKEN_SIGMA);
        x[..self.dim].copy_from_slice(&token);
        let w = gaussian_weight(&mut noise, self.dim, self.out_channels);
        let mut wdata = w.into_vec();
        for &(j, _) in self.outliers {
            for v in &mut wdata[j * self.out_channels..(j + 1) * self.out_channels] {
                *v *= OUTLIER_ROW_ATTENUATION;
            }
        }
        Ok(LayerPair {
            name: self.name.to_string(),
            activation: Matrix::new(self.tokens, self.dim, x)?,
            weight: Matrix::new(self.dim, self.out_channels, wdata)?,
        })
    }
}

fn systematic_pair(
    name: String,
    tokens: usize,
    dim: usize,
    out_channels: usize,
    channel: usize,
    scale: f64,
    seed: u64,
) -> Result<LayerPair, OutlierError> {
    let spec = SystematicSpec {
        tokens,
        dim,
        outlier_channels: BTreeSet::from([channel]),
        channel_scale: scale,
        base_sigma: 1.0,
        seed,
    };
    let activation = outliers::synth_systematic(&spec)?;
    let weight = gaussian_weight(&mut NoiseSource::new(seed, 1), dim, out_channels);
    Ok(LayerPair {
        name,
        activation,
        weight,
    })
}

/// Builds the named suite, or returns `None` for an unknown name.
pub fn generate(suite: &str, seed: u64) -> Option<Result<Vec<LayerPair>, OutlierError>> {
    let out = match suite {
        "massive-basic" => MASSIVE_BASIC
            .iter()
            .enumerate()
            .map(|(i, spec)| spec.generate(record_seed(seed, i)))
            .collect(),
        "systematic" => SYSTEMATIC
            .iter()
            .enumerate()
            .map(|(i, &(name, n, d, c, ch, scale))| {
                systematic_pair(name.to_string(), n, d, c, ch, scale, record_seed(seed, i))
            })
            .collect(),
        "systematic-graded" => GRADED_SCALES
            .iter()
            .enumerate()
            .map(|(i, &scale)| {
                systematic_pair(
                    format!("layer.{i}.o_proj"),
                    256,
                    256,
                    64,
                    42,
                    scale,
                    record_seed(seed, i),
                )
            })
            .collect(),
        _ => return None,
    };
    Some(out)
}
