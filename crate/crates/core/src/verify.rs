//! Self-checks of the numerical core against independent oracles.
//!
//! `fast` finishes in well under a second; `full` adds the `d = 4096`
//! centroid test, the 11008-wide rotation and a larger quantizer sweep.

use std::fmt;

use crate::outliers::{self, OutlierTokenSpec};
use crate::quant::{self, Granularity, QuantConfig, Rounding};
use crate::rng::NoiseSource;
use crate::tensor::{matmul, Matrix};
use crate::transform::hadamard::HadamardTable;
use crate::transform::{self, TransformError, TransformKind, TransformSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Level {
    #[default]
    Fast,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, outcome: Result<String, String>) -> CheckResult {
    match outcome {
        Ok(detail) => CheckResult {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckResult {
            name,
            passed: false,
            detail,
        },
    }
}

fn random(noise: &mut NoiseSource, rows: usize, cols: usize, sigma: f64) -> Matrix {
    Matrix::new(rows, cols, noise.normals(rows * cols, sigma)).expect("finite")
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Runs every check. `table` is the Hadamard table under test; when it
/// failed to load, the asset check reports why and later checks fall back to
/// powers of two only.
pub fn run(level: Level, table: Result<HadamardTable, TransformError>) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let table = match table {
        Ok(t) => {
            out.push(check(
                "hadamard-assets",
                Ok(format!("base sizes {:?}", t.base_sizes())),
            ));
            t
        }
        Err(e) => {
            out.push(check("hadamard-assets", Err(e.to_string())));
            HadamardTable::sylvester_only()
        }
    };
    out.push(check(
        "hadamard-orthogonality",
        hadamard_orthogonality(&table),
    ));
    out.push(check("hadamard-fast-path", fast_path(&table, level)));
    out.push(check("hadamard-unsupported", unsupported(&table)));
    out.push(check("equivalence", equivalence(&table)));
    out.push(check("smoothing-equalization", smoothing_equalization()));
    out.push(check("quantizer-oracle", quantizer_oracle(level)));
    out.push(check("rotated-max", rotated_max(&table)));
    out.push(check("smooth-rotated-max", smooth_rotated_max(&table)));
    out.push(check("centroid-clusters", centroids(&table, level)));
    out
}

fn hadamard_orthogonality(table: &HadamardTable) -> Result<String, String> {
    let sizes = [2, 4, 8, 64, 128, 12, 20, 28, 48, 172, 344, 1024];
    let mut worst: f64 = 0.0;
    for d in sizes {
        let r = table.hadamard(d).map_err(|e| e.to_string())?;
        let rrt = matmul(&r, &r.transpose()).map_err(|e| e.to_string())?;
        let residual = max_abs_diff(&rrt, &Matrix::identity(d).map_err(|e| e.to_string())?);
        worst = worst.max(residual);
        if residual > 1e-10 {
            return Err(format!("size {d}: |R Rᵀ - I| = {residual:e}"));
        }
        let c = 1.0 / (d as f64).sqrt();
        if let Some(v) = r.as_slice().iter().find(|v| (v.abs() - c).abs() > 1e-15) {
            return Err(format!("size {d}: entry {v} is not ±1/√{d}"));
        }
        let unbalanced = (0..d)
            .filter(|&j| (0..d).map(|i| r.get(i, j)).sum::<f64>().abs() > 1e-9)
            .count();
        if unbalanced > 1 {
            return Err(format!("size {d}: {unbalanced} columns have nonzero sums"));
        }
    }
    Ok(format!(
        "{} sizes, worst |R Rᵀ - I| = {worst:e}",
        sizes.len()
    ))
}

fn fast_path(table: &HadamardTable, level: Level) -> Result<String, String> {
    let mut noise = NoiseSource::new(11, 0);
    let mut worst: f64 = 0.0;
    for d in [8, 12, 48, 344] {
        let x = random(&mut noise, 3, d, 1.0);
        let dense = matmul(&x, &table.hadamard(d).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let fast = table
            .rotation(d)
            .and_then(|r| r.rotate_rows(&x))
            .map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&dense, &fast));
    }
    if worst > 1e-12 {
        return Err(format!("fast and dense rotations differ by {worst:e}"));
    }
    let mut detail = format!("fast = dense within {worst:e}");
    if level == Level::Full {
        let plan = table.plan(11008).map_err(|e| e.to_string())?;
        if plan.factors != [64, 172] {
            return Err(format!(
                "11008 plan is {:?}, expected [64, 172]",
                plan.factors
            ));
        }
        let rot = table.rotation(11008).map_err(|e| e.to_string())?;
        let x: Vec<f64> = noise.normals(11008, 1.0);
        let y = rot.rotate_vector(&x);
        let n0 = x.iter().map(|v| v * v).sum::<f64>();
        let n1 = y.iter().map(|v| v * v).sum::<f64>();
        if ((n1 - n0) / n0).abs() > 1e-12 {
            return Err(format!("11008 rotation changes the norm: {n0} -> {n1}"));
        }
        detail.push_str("; 11008 = 64 x 172 preserves norms");
    }
    Ok(detail)
}

fn unsupported(table: &HadamardTable) -> Result<String, String> {
    match table.plan(6) {
        Err(e @ TransformError::UnsupportedSize(6)) => Ok(e.to_string()),
        other => Err(format!("size 6 gave {other:?}")),
    }
}

fn equivalence(table: &HadamardTable) -> Result<String, String> {
    let mut noise = NoiseSource::new(12, 0);
    let mut worst: f64 = 0.0;
    for d in [2, 4, 8, 12, 64, 344] {
        let x = random(&mut noise, 8, d, 1.0);
        let w = random(&mut noise, d, 5, 1.0);
        for kind in TransformKind::ALL {
            let spec = TransformSpec::of(kind);
            let (xt, wt) = match kind {
                TransformKind::Rotate => transform::rotate_with(table, &x, &w),
                TransformKind::SmoothRotate => transform::smooth(&x, &w, &spec)
                    .and_then(|(xs, ws)| transform::rotate_with(table, &xs, &ws)),
                _ => transform::apply_transform(&x, &w, &spec),
            }
            .map_err(|e| format!("{kind} at c_in={d}: {e}"))?;
            let residual =
                transform::verify_equivalence(&x, &w, &xt, &wt).map_err(|e| e.to_string())?;
            if residual > 1e-10 {
                return Err(format!(
                    "{kind} at c_in={d}: relative residual {residual:e}"
                ));
            }
            worst = worst.max(residual);
        }
    }
    Ok(format!("worst relative residual {worst:e}"))
}

fn smoothing_equalization() -> Result<String, String> {
    let mut noise = NoiseSource::new(13, 0);
    let x = random(&mut noise, 16, 32, 1.0);
    let w = random(&mut noise, 32, 8, 0.05);
    let (xs, ws) = transform::smooth(&x, &w, &TransformSpec::of(TransformKind::Smooth))
        .map_err(|e| e.to_string())?;
    let xm = xs.column_max_abs();
    let wm = ws.row_max_abs();
    let worst = xm
        .iter()
        .zip(&wm)
        .map(|(a, b)| ((a - b) / a).abs())
        .fold(0.0, f64::max);
    if worst > 1e-12 {
        return Err(format!("channel maxima differ by {worst:e} relative"));
    }
    Ok(format!("max|X̂_j| = max|Ŵ_j| within {worst:e}"))
}

/// Nearest grid index by exhaustive search in the scaled domain.
fn nearest_index(t: f64, qmax: i64, rounding: Rounding) -> i64 {
    let mut best = -qmax;
    for k in -qmax..=qmax {
        let (dk, db) = ((t - k as f64).abs(), (t - best as f64).abs());
        let better = dk < db
            || (dk == db
                && match rounding {
                    Rounding::HalfToEven => k % 2 == 0,
                    Rounding::HalfAwayFromZero => k.abs() > best.abs(),
                });
        if better {
            best = k;
        }
    }
    best
}

fn quantizer_oracle(level: Level) -> Result<String, String> {
    let trials = if level == Level::Full { 2000 } else { 200 };
    let mut noise = NoiseSource::new(14, 0);
    let mut values = 0usize;
    for trial in 0..trials {
        let bits = 2 + (trial % 7) as u32;
        let granularity = if trial % 2 == 0 {
            Granularity::PerToken
        } else {
            Granularity::PerChannel
        };
        let rounding = if trial % 3 == 0 {
            Rounding::HalfAwayFromZero
        } else {
            Rounding::HalfToEven
        };
        let cfg = QuantConfig::new(bits, granularity, rounding).map_err(|e| e.to_string())?;
        let (rows, cols) = (1 + trial % 5, 1 + trial % 7);
        let data: Vec<f64> = (0..rows * cols)
            .map(|i| {
                // Every fourth trial uses half-integers to force ties.
                if trial % 4 == 0 {
                    (noise.uniform() * 16.0).floor() / 2.0 - 4.0 + (i % 2) as f64 * 0.5
                } else {
                    noise.normal(3.0)
                }
            })
            .collect();
        let x = Matrix::new(rows, cols, data).map_err(|e| e.to_string())?;
        let q = quant::quantize_rtn(&x, &cfg).map_err(|e| e.to_string())?;
        for r in 0..rows {
            for c in 0..cols {
                let step = match granularity {
                    Granularity::PerToken => q.steps[r],
                    Granularity::PerChannel => q.steps[c],
                };
                let v = x.get(r, c);
                let k = if step == 0.0 {
                    0
                } else {
                    nearest_index(v / step, cfg.grid_max(), rounding)
                };
                if q.grid_index(r, c) != k || q.dequantized.get(r, c) != k as f64 * step {
                    return Err(format!(
                        "trial {trial}: value {v} at ({r}, {c}) mapped to {} not {k}",
                        q.grid_index(r, c)
                    ));
                }
                values += 1;
            }
        }
    }
    Ok(format!(
        "{values} values over {trials} trials match exhaustive search"
    ))
}

fn rotated_max(table: &HadamardTable) -> Result<String, String> {
    let cases: [(usize, &[(usize, f64)]); 3] = [
        (4, &[(1, -5.0), (2, 3.0)]),
        (64, &[(3, 40.0), (12, -25.0), (33, 10.0)]),
        (1024, &[(7, 1000.0), (100, -300.0), (513, 200.0)]),
    ];
    let mut worst: f64 = 0.0;
    for (d, o) in cases {
        let spec =
            OutlierTokenSpec::new(d, o.iter().copied(), 0.0, 0).map_err(|e| e.to_string())?;
        let token = outliers::synth_massive_token(&spec);
        let rotated = table
            .rotation(d)
            .map_err(|e| e.to_string())?
            .rotate_vector(&token);
        let got = rotated.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let want = outliers::predict_rot_max(&spec, d);
        let rel = ((got - want) / want).abs();
        if rel > 1e-12 {
            return Err(format!("d={d}: max {got} vs predicted {want}"));
        }
        worst = worst.max(rel);
    }
    Ok(format!("σ=0 maxima match Σ|o|/√d within {worst:e}"))
}

fn smooth_rotated_max(table: &HadamardTable) -> Result<String, String> {
    let d = 64;
    let spec =
        OutlierTokenSpec::new(d, [(3, 40.0), (12, -25.0)], 0.0, 0).map_err(|e| e.to_string())?;
    let x = Matrix::new(1, d, outliers::synth_massive_token(&spec)).map_err(|e| e.to_string())?;
    let w = random(&mut NoiseSource::new(15, 0), d, 16, 0.05);
    let (xs, ws) = transform::smooth(&x, &w, &TransformSpec::of(TransformKind::Smooth))
        .map_err(|e| e.to_string())?;
    let (xr, _) = transform::rotate_with(table, &xs, &ws).map_err(|e| e.to_string())?;
    let got = xr.max_abs();
    let want =
        outliers::predict_smooth_rot_max(&spec, &w.row_max_abs(), d).map_err(|e| e.to_string())?;
    let rel = ((got - want) / want).abs();
    if rel > 1e-9 {
        return Err(format!("max {got} vs predicted {want}"));
    }
    Ok(format!("σ=0 maximum {got:.6} matches within {rel:e}"))
}

fn centroids(table: &HadamardTable, level: Level) -> Result<String, String> {
    let (d, o): (usize, &[(usize, f64)]) = match level {
        Level::Fast => (1024, &[(5, 600.0), (40, 400.0), (300, 100.0)]),
        Level::Full => (4096, &[(10, 900.0), (300, 500.0), (2049, 300.0)]),
    };
    let sigma = 0.01;
    let spec = OutlierTokenSpec::new(d, o.iter().copied(), sigma, 16).map_err(|e| e.to_string())?;
    let dims = spec.outlier_dims();
    if !outliers::sylvester_patterns_independent(&dims) {
        return Err(format!("outlier dims {dims:?} are not independent"));
    }
    let predicted = outliers::predict_centroids(&spec, d).map_err(|e| e.to_string())?;
    let rotated = table
        .rotation(d)
        .map_err(|e| e.to_string())?
        .rotate_vector(&outliers::synth_massive_token(&spec));
    let report = outliers::cluster_check(&rotated, &predicted, sigma);
    let expected = d >> dims.len().saturating_sub(1);
    if report.fraction < 0.99 {
        return Err(format!(
            "only {:.4} of entries near a centroid",
            report.fraction
        ));
    }
    if let Some((c, n)) = report.counts.iter().find(|(_, n)| *n != expected) {
        return Err(format!(
            "centroid {c:.4} holds {n} entries, expected {expected}"
        ));
    }
    Ok(format!(
        "d={d}: {} centroids, {:.4} within 4σ, {expected} entries each",
        predicted.len(),
        report.fraction
    ))
}
