//! Acceptance criteria AC-1 to AC-10. Runs as a plain binary so every
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use smoothrot::ingest::{self, Dtype, LayerRecord};
use smoothrot::metrics::{self, DifficultyReport, QuantPair};
use smoothrot::outliers::{self, OutlierTokenSpec};
use smoothrot::quant::{self, Granularity, QuantConfig, Rounding};
use smoothrot::rng::NoiseSource;
use smoothrot::suites::{self, MASSIVE_BASIC, SYSTEMATIC};
use smoothrot::tensor::{matmul, Matrix};
use smoothrot::transform::hadamard::{self, HadamardTable};
use smoothrot::transform::{self, TransformKind, TransformSpec};

// Tolerances and budgets.
const AC1_TRIALS: usize = 1000;
const AC1_BUDGET: Duration = Duration::from_secs(5);
const AC2_TOL: f64 = 1e-10;
const AC2_BUDGET: Duration = Duration::from_secs(5);
const AC3_BUDGET: Duration = Duration::from_secs(10);
const AC4_EXACT_TOL: f64 = 1e-9;
const AC4_BAND_SIGMAS: f64 = 3.0;
const AC4_SMOOTH_ROT_TOL: f64 = 0.10;
const AC5_MIN_REDUCTION: f64 = 10.0;
const AC5_EQUALIZE_TOL: f64 = 1e-9;
const AC8_MIN_R: f64 = 0.9;
const AC9_TOL: f64 = 1e-10;
const AC10_FUZZ: usize = 10_000;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn random(noise: &mut NoiseSource, rows: usize, cols: usize, sigma: f64) -> Matrix {
    Matrix::new(rows, cols, noise.normals(rows * cols, sigma)).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < budget, || format!("took {t:.2?}, budget {budget:?}"))?;
    Ok(t)
}

/// Nearest grid point by exhaustive search over every index.
fn brute_force_index(v: f64, step: f64, qmax: i64, rounding: Rounding) -> i64 {
    if step == 0.0 {
        return 0;
    }
    let t = v / step;
    let mut best = -qmax;
    for k in -qmax..=qmax {
        let dk = (t - k as f64).abs();
        let db = (t - best as f64).abs();
        let tie_wins = match rounding {
            Rounding::HalfToEven => k % 2 == 0,
            Rounding::HalfAwayFromZero => k.abs() > best.abs(),
        };
        if dk < db || (dk == db && tie_wins) {
            best = k;
        }
    }
    best
}

fn ac1() -> Outcome {
    let start = Instant::now();
    let mut noise = NoiseSource::new(1, 0);
    let mut checked = 0usize;
    let mut worst_ratio: f64 = 0.0;
    for trial in 0..AC1_TRIALS {
        let bits = [2, 3, 4, 8][trial % 4];
        let granularity = [Granularity::PerToken, Granularity::PerChannel][(trial / 4) % 2];
        let rounding = [Rounding::HalfToEven, Rounding::HalfAwayFromZero][(trial / 8) % 2];
        let cfg = QuantConfig::new(bits, granularity, rounding).unwrap();
        let rows = 1 + (noise.uniform() * 8.0) as usize;
        let cols = 1 + (noise.uniform() * 8.0) as usize;
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| {
                if trial % 5 == 0 {
                    // Multiples of 1/2 put many values exactly on ties.
                    ((noise.uniform() * 32.0).floor() - 16.0) / 2.0
                } else {
                    noise.normal(2.0)
                }
            })
            .collect();
        let x = Matrix::new(rows, cols, data).unwrap();
        let q = quant::quantize_rtn(&x, &cfg).unwrap();
        for r in 0..rows {
            for c in 0..cols {
                let step = match granularity {
                    Granularity::PerToken => q.steps[r],
                    Granularity::PerChannel => q.steps[c],
                };
                let v = x.get(r, c);
                let want = brute_force_index(v, step, cfg.grid_max(), rounding);
                ensure(q.grid_index(r, c) == want, || {
                    format!(
                        "trial {trial} ({bits}-bit {granularity:?} {rounding:?}): {v} -> {} but nearest is {want}",
                        q.grid_index(r, c)
                    )
                })?;
                let err = (q.dequantized.get(r, c) - v).abs();
                if step > 0.0 {
                    worst_ratio = worst_ratio.max(err / step);
                }
                ensure(err <= step / 2.0 * (1.0 + 1e-12), || {
                    format!(
                        "trial {trial}: reconstruction error {err} exceeds Δ/2 = {}",
                        step / 2.0
                    )
                })?;
                checked += 1;
            }
        }
    }
    let t = within_budget(start, AC1_BUDGET)?;
    Ok(format!(
        "{AC1_TRIALS} matrices, {checked} values match exhaustive search; max error {worst_ratio:.3}Δ; {t:.2?}"
    ))
}

fn ac2() -> Outcome {
    let start = Instant::now();
    let mut noise = NoiseSource::new(2, 0);
    let mut worst: f64 = 0.0;
    for c_in in [2, 4, 8, 64] {
        for case in 0..10 {
            let mut x = random(&mut noise, 16, c_in, 1.0);
            if case % 2 == 1 {
                // One channel with large values, as in real activations.
                let mut data = x.into_vec();
                for row in data.chunks_mut(c_in) {
                    row[case % c_in] *= 50.0;
                }
                x = Matrix::new(16, c_in, data).unwrap();
            }
            let w = random(&mut noise, c_in, 8, 0.1);
            for kind in TransformKind::ALL {
                let (xt, wt) =
                    transform::apply_transform(&x, &w, &TransformSpec::of(kind)).unwrap();
                let r = transform::verify_equivalence(&x, &w, &xt, &wt).unwrap();
                ensure(r < AC2_TOL, || {
                    format!("{kind} at c_in={c_in}: residual {r:e}")
                })?;
                worst = worst.max(r);
            }
        }
    }
    let t = within_budget(start, AC2_BUDGET)?;
    Ok(format!(
        "all 4 transforms, c_in ∈ {{2,4,8,64}}: worst residual {worst:.1e}; {t:.2?}"
    ))
}

fn ac3() -> Outcome {
    let start = Instant::now();
    let d = 4096;
    let sigma = 0.01;
    let spec =
        OutlierTokenSpec::new(d, [(10, 900.0), (300, 500.0), (2049, 300.0)], sigma, 3).unwrap();
    ensure(
        outliers::sylvester_patterns_independent(&spec.outlier_dims()),
        || "outlier dimensions are not independent".into(),
    )?;
    let rotated = hadamard::HadamardTable::embedded()
        .rotation(d)
        .unwrap()
        .rotate_vector(&outliers::synth_massive_token(&spec));
    let centroids = outliers::predict_centroids(&spec, d).unwrap();
    ensure(centroids.len() == 4, || {
        format!("{} predicted centroids", centroids.len())
    })?;
    let report = outliers::cluster_check(&rotated, &centroids, sigma);
    ensure(report.fraction == 1.0, || {
        format!(
            "only {:.5} of entries within 4σ of a centroid",
            report.fraction
        )
    })?;
    for (c, n) in &report.counts {
        ensure(*n == 1024, || format!("centroid {c:.4} holds {n} entries"))?;
    }
    let t = within_budget(start, AC3_BUDGET)?;
    let cs: Vec<String> = centroids.iter().map(|c| format!("{c:.4}")).collect();
    Ok(format!(
        "d=4096, centroids [{}] with 1024 entries each; {t:.2?}",
        cs.join(", ")
    ))
}

fn ac4() -> Outcome {
    let table = HadamardTable::embedded();
    let outlier_set = [(1usize, 1000.0), (2, 600.0)];
    let mut lines = Vec::new();
    let mut failures = Vec::new();

    for d in [4usize, 64, 1024] {
        let rot = table.rotation(d).unwrap();
        // σ = 0: exact.
        let spec = OutlierTokenSpec::new(d, outlier_set, 0.0, 0).unwrap();
        let got = rot
            .rotate_vector(&outliers::synth_massive_token(&spec))
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let want = outliers::predict_rot_max(&spec, d);
        let rel = ((got - want) / want).abs();
        if rel > AC4_EXACT_TOL {
            failures.push(format!("σ=0 d={d}: rel {rel:e}"));
        }
        lines.push(format!("σ=0 d={d} rel {rel:.0e}"));

        // σ > 0: within ±3σ.
        let sigma = 0.1;
        let spec = OutlierTokenSpec::new(d, outlier_set, sigma, 0).unwrap();
        let got = rot
            .rotate_vector(&outliers::synth_massive_token(&spec))
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let dev = (got - outliers::predict_rot_max(&spec, d)) / sigma;
        if dev.abs() > AC4_BAND_SIGMAS {
            failures.push(format!("σ=0.1 d={d}: max deviates by {dev:.2}σ"));
        }
        lines.push(format!("σ=0.1 d={d} {dev:+.2}σ"));

        // Smooth-rotate: one massive token among ordinary N(0,1) tokens.
        let sigma = 0.01;
        let tokens = 32;
        let spec = OutlierTokenSpec::new(d, outlier_set, sigma, 0).unwrap();
        let mut noise = NoiseSource::new(0, 1);
        let mut data = noise.normals(tokens * d, 1.0);
        data[..d].copy_from_slice(&outliers::synth_massive_token(&spec));
        let x = Matrix::new(tokens, d, data).unwrap();
        let w = random(&mut noise, d, 64, 0.02);
        let non_outlier_max = (0..d)
            .filter(|j| !spec.outliers().contains_key(j))
            .map(|j| x.column(j).iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .fold(0.0f64, f64::max);
        let min_o = outlier_set
            .iter()
            .map(|o| o.1)
            .fold(f64::INFINITY, f64::min);
        assert!(min_o > 100.0 * sigma && min_o > 10.0 * non_outlier_max);
        let (xs, _) =
            transform::smooth_rotate(&x, &w, &TransformSpec::of(TransformKind::SmoothRotate))
                .unwrap();
        let got = xs.row(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let want = outliers::predict_smooth_rot_max(&spec, &w.row_max_abs(), d).unwrap();
        let rel = (got - want) / want;
        if rel.abs() > AC4_SMOOTH_ROT_TOL {
            failures.push(format!("smooth-rotate d={d}: {:+.1}% off", rel * 100.0));
        }
        lines.push(format!("smooth-rotate d={d} {:+.1}%", rel * 100.0));
    }
    if failures.is_empty() {
        Ok(lines.join("; "))
    } else {
        Err(format!(
            "{} [measured: {}]",
            failures.join("; "),
            lines.join("; ")
        ))
    }
}

fn ac5() -> Outcome {
    let pairs = suites::generate("systematic", 0).unwrap().unwrap();
    let mut parts = Vec::new();
    for (pair, def) in pairs.iter().zip(&SYSTEMATIC) {
        ensure(def.5 == 100.0, || "suite scale changed".into())?;
        let before = metrics::quantization_difficulty(&pair.activation);
        let (xr, _) = transform::rotate(&pair.activation, &pair.weight).unwrap();
        let after = metrics::quantization_difficulty(&xr);
        let ratio = before / after;
        ensure(ratio >= AC5_MIN_REDUCTION, || {
            format!(
                "{}: rotation reduces difficulty only {ratio:.2}x",
                pair.name
            )
        })?;
        let (xs, ws) = transform::smooth(
            &pair.activation,
            &pair.weight,
            &TransformSpec::of(TransformKind::Smooth),
        )
        .unwrap();
        let worst = xs
            .column_max_abs()
            .iter()
            .zip(ws.row_max_abs())
            .map(|(a, b)| ((a - b) / a).abs())
            .fold(0.0, f64::max);
        ensure(worst <= AC5_EQUALIZE_TOL, || {
            format!("{}: channel maxima differ by {worst:e}", pair.name)
        })?;
        parts.push(format!(
            "{} {before:.1}->{after:.3} ({ratio:.0}x), maxima equal to {worst:.0e}",
            pair.name
        ));
    }
    Ok(parts.join("; "))
}

fn massive_rows() -> Vec<DifficultyReport> {
    let pairs = suites::generate("massive-basic", 0).unwrap().unwrap();
    let specs = TransformKind::ALL.map(TransformSpec::of);
    metrics::build_report(&pairs, &QuantPair::new(4, 4).unwrap(), &specs).unwrap()
}

fn error_of(rows: &[DifficultyReport], record: &str, kind: TransformKind) -> f64 {
    rows.iter()
        .find(|r| r.record_name == record && r.transform == kind)
        .map(|r| r.layer_error)
        .unwrap()
}

fn ac6(rows: &[DifficultyReport]) -> Outcome {
    let layer = &MASSIVE_BASIC[0];
    ensure(
        layer.outliers.len() == 1
            && layer.outliers[0].1 == 1000.0
            && layer.dim == 4096
            && layer.noise_sigma == 0.1,
        || format!("suite definition changed: {layer:?}"),
    )?;
    let none = error_of(rows, layer.name, TransformKind::None);
    let rot = error_of(rows, layer.name, TransformKind::Rotate);
    ensure(rot > none, || {
        format!("{}: rotate {rot:.2} <= none {none:.2}", layer.name)
    })?;
    Ok(format!(
        "{}: rotate {rot:.2} > none {none:.2} ({:.2}x)",
        layer.name,
        rot / none
    ))
}

fn ac7(rows: &[DifficultyReport]) -> Outcome {
    let mut parts = Vec::new();
    for layer in &MASSIVE_BASIC {
        let e = |k| error_of(rows, layer.name, k);
        let hybrid = e(TransformKind::SmoothRotate);
        let best_other = [
            TransformKind::None,
            TransformKind::Smooth,
            TransformKind::Rotate,
        ]
        .map(e)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
        ensure(hybrid < best_other, || {
            format!(
                "{}: smooth-rotate {hybrid:.2} >= {best_other:.2}",
                layer.name
            )
        })?;
        parts.push(format!("{} {hybrid:.1} < {best_other:.1}", layer.name));
    }
    Ok(parts.join("; "))
}

fn ac8() -> Outcome {
    let pairs = suites::generate("systematic-graded", 0).unwrap().unwrap();
    ensure(pairs.len() >= 8, || format!("only {} layers", pairs.len()))?;
    let rows = metrics::build_report(
        &pairs,
        &QuantPair::new(4, 4).unwrap(),
        &[TransformSpec::of(TransformKind::None)],
    )
    .unwrap();
    let refs: Vec<&DifficultyReport> = rows.iter().collect();
    let r = metrics::error_difficulty_correlation(&refs).unwrap();
    ensure(r > AC8_MIN_R, || format!("pearson {r:.4} <= {AC8_MIN_R}"))?;
    Ok(format!(
        "{} layers, pearson(layer_error, act_difficulty²) = {r:.4}",
        pairs.len()
    ))
}

fn ac9() -> Outcome {
    let mut worst: f64 = 0.0;
    for d in [2usize, 4, 8, 64, 128, 344] {
        let r = hadamard::hadamard(d).unwrap();
        let rrt = matmul(&r, &r.transpose()).unwrap();
        let res = rrt.sub(&Matrix::identity(d).unwrap()).unwrap().max_abs();
        ensure(res < AC9_TOL, || format!("d={d}: |RRᵀ - I| = {res:e}"))?;
        worst = worst.max(res);
        let c = 1.0 / (d as f64).sqrt();
        ensure(
            r.as_slice().iter().all(|v| (v.abs() - c).abs() < 1e-15),
            || format!("d={d}: entry not ±1/√d"),
        )?;
        let nonzero = (0..d)
            .filter(|&j| r.column(j).iter().sum::<f64>().abs() > 1e-9)
            .count();
        ensure(nonzero <= 1, || {
            format!("d={d}: {nonzero} columns with nonzero sum")
        })?;
    }
    let msg = match hadamard::hadamard(6) {
        Err(e) => e.to_string(),
        Ok(_) => return Err("size 6 unexpectedly has a Hadamard matrix".into()),
    };
    ensure(msg == "no known Hadamard decomposition for size 6", || {
        format!("size 6 error: {msg}")
    })?;
    Ok(format!(
        "d ∈ {{2,4,8,64,128,344}} worst |RRᵀ - I| {worst:.1e}; size 6: \"{msg}\""
    ))
}

fn sample_file() -> Vec<u8> {
    let mut noise = NoiseSource::new(10, 0);
    let records = vec![
        LayerRecord::activation("a", random(&mut noise, 3, 4, 1.0)).stored_as(Dtype::F32),
        LayerRecord::weight("a", random(&mut noise, 4, 2, 1.0)),
        LayerRecord::activation("layer.1.mlp", random(&mut noise, 2, 2, 1.0)),
    ];
    let mut bytes = Vec::new();
    ingest::write_actd(&records, &mut bytes).unwrap();
    bytes
}

fn mutate(base: &[u8], noise: &mut NoiseSource, i: usize) -> Vec<u8> {
    let pick = |noise: &mut NoiseSource, n: usize| (noise.uniform() * n as f64) as usize;
    let mut b = base.to_vec();
    match i % 6 {
        0 => {
            let n = pick(noise, b.len());
            b.truncate(n);
        }
        1 => {
            for _ in 0..1 + pick(noise, 4) {
                let at = pick(noise, b.len());
                b[at] ^= 1 << pick(noise, 8);
            }
        }
        2 => {
            for _ in 0..1 + pick(noise, 8) {
                let at = pick(noise, b.len());
                b[at] = pick(noise, 256) as u8;
            }
        }
        3 => {
            // Forge a huge count, name length, or dimension.
            let at = [8usize, 12, 16, 17, 19, 20, 23, 24][pick(noise, 8)].min(b.len() - 4);
            b[at..at + 4].copy_from_slice(&[0xff, 0xff, 0xff, 0x7f]);
        }
        4 => {
            let n = pick(noise, 64);
            b = (0..n).map(|_| pick(noise, 256) as u8).collect();
            if n >= 4 && pick(noise, 2) == 0 {
                b[..4].copy_from_slice(b"ACTD");
            }
        }
        _ => {
            let extra: Vec<u8> = (0..1 + pick(noise, 16))
                .map(|_| pick(noise, 256) as u8)
                .collect();
            let at = pick(noise, b.len());
            b.splice(at..at, extra);
        }
    }
    b
}

fn ac10() -> Outcome {
    // Round trip, including the synthetic suites.
    let mut files = vec![sample_file()];
    for (suite, dtype) in [("massive-basic", Dtype::F64), ("systematic", Dtype::F32)] {
        let pairs = suites::generate(suite, 0).unwrap().unwrap();
        let mut bytes = Vec::new();
        ingest::write_actd(&ingest::pairs_to_records(&pairs, dtype), &mut bytes).unwrap();
        files.push(bytes);
    }
    for bytes in &files {
        let records = ingest::parse_actd(bytes).map_err(|e| format!("valid file rejected: {e}"))?;
        let mut again = Vec::new();
        ingest::write_actd(&records, &mut again).unwrap();
        ensure(&again == bytes, || "re-serialization differs".into())?;
    }

    let base = files.swap_remove(0);
    let mut noise = NoiseSource::new(10, 1);
    let (mut accepted, mut rejected, mut panics) = (0usize, 0usize, 0usize);
    let hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    for i in 0..AC10_FUZZ {
        let input = mutate(&base, &mut noise, i);
        match panic::catch_unwind(AssertUnwindSafe(|| ingest::parse_actd(&input))) {
            Ok(Ok(_)) => accepted += 1,
            Ok(Err(_)) => rejected += 1,
            Err(_) => panics += 1,
        }
    }
    panic::set_hook(hook);
    ensure(panics == 0, || {
        format!("{panics} of {AC10_FUZZ} fuzzed inputs panicked")
    })?;
    Ok(format!(
        "{} files round-trip byte-identical; {AC10_FUZZ} fuzzed streams: {rejected} rejected, {accepted} accepted, 0 panics",
        files.len() + 1
    ))
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let massive = massive_rows();
    let criteria: Vec<Criterion> = vec![
        ("AC-1 quantizer oracle", Box::new(ac1)),
        ("AC-2 transform equivalence", Box::new(ac2)),
        ("AC-3 centroid clusters", Box::new(ac3)),
        ("AC-4 maximum formulas", Box::new(ac4)),
        ("AC-5 difficulty behavior", Box::new(ac5)),
        ("AC-6 rotation pathology", Box::new(|| ac6(&massive))),
        ("AC-7 smooth-rotate superiority", Box::new(|| ac7(&massive))),
        ("AC-8 error/difficulty correlation", Box::new(ac8)),
        ("AC-9 Hadamard suite", Box::new(ac9)),
        ("AC-10 format robustness", Box::new(ac10)),
    ];
    let mut failed = 0;
    for (name, f) in &criteria {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
