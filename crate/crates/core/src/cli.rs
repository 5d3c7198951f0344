//! The `smoothrot` command line: `synth`, `analyze`, `verify` and `hadamard`.
//!
//! Exit codes are 0 on success, 1 for invalid arguments, configuration or
//! input, and 2 when a computation or check fails.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::chart::{self, Panel, Series};
use crate::ingest::{self, Dtype};
use crate::metrics::{self, DifficultyReport, LayerPair, QuantPair};
use crate::quant::Rounding;
use crate::suites;
use crate::tensor::{channel_magnitudes, matmul, Matrix};
use crate::transform::hadamard::HadamardTable;
use crate::transform::{self, TransformKind, TransformSpec, DEFAULT_ALPHA};
use crate::verify::{self, Level};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_COMPUTE: i32 = 2;

/// A correlation over fewer rows is reported as unavailable.
const MIN_CORRELATION_ROWS: usize = 3;

/// CSV header of the `analyze` report.
pub const REPORT_COLUMNS: [&str; 10] = [
    "record",
    "transform",
    "bits",
    "layer_error",
    "act_difficulty",
    "wt_difficulty",
    "act_kurtosis",
    "wt_kurtosis",
    "act_max_abs",
    "effective_bins_min",
];

#[derive(Debug, Parser)]
#[command(
    name = "smoothrot",
    version,
    about = "Quantization error analysis for smoothing and rotation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic suite of layer records to an ACTD file.
    Synth(SynthArgs),
    /// Transform, quantize and measure every layer; write a CSV report.
    Analyze(AnalyzeArgs),
    /// Run the numerical self-checks.
    Verify(VerifyArgs),
    /// Show (and optionally check) the Hadamard construction for a size.
    Hadamard(HadamardArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RoundingArg {
    HalfEven,
    HalfAway,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LevelArg {
    Fast,
    Full,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Suite name: massive-basic, systematic or systematic-graded.
    #[arg(long)]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Element type stored in the file.
    #[arg(long, value_enum, default_value_t = DtypeArg::F64)]
    dtype: DtypeArg,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// ACTD file to analyze.
    #[arg(long, required_unless_present = "suite", conflicts_with = "suite")]
    input: Option<PathBuf>,
    /// Analyze a synthetic suite instead of a file.
    #[arg(long)]
    suite: Option<String>,
    /// Seed for --suite.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    bits_act: u32,
    #[arg(long, default_value_t = 4)]
    bits_wt: u32,
    /// Comma-separated transforms.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "none,smooth,rotate,smooth-rotate"
    )]
    transform: Vec<TransformKind>,
    /// Smoothing migration strength.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Per-record alpha override, PATTERN=ALPHA. The first matching pattern wins.
    #[arg(long = "alpha-for", value_name = "PATTERN=ALPHA")]
    alpha_for: Vec<String>,
    /// Record-name pattern left out of the correlation summary.
    #[arg(long, value_name = "PATTERN")]
    exclude: Vec<String>,
    #[arg(long, value_enum, default_value_t = RoundingArg::HalfEven)]
    rounding: RoundingArg,
    /// CSV output path.
    #[arg(long)]
    report: PathBuf,
    /// Directory for per-record SVG charts.
    #[arg(long)]
    charts: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = LevelArg::Fast)]
    level: LevelArg,
    /// Load Hadamard base matrices from this directory instead of the built-in set.
    #[arg(long)]
    assets: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct HadamardArgs {
    #[arg(long)]
    size: usize,
    /// Verify orthogonality and entry magnitudes.
    #[arg(long)]
    check: bool,
    /// Load Hadamard base matrices from this directory instead of the built-in set.
    #[arg(long)]
    assets: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Compute(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Compute(_) => EXIT_COMPUTE,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Compute(m) => m,
        }
    }
}

fn config<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Config(e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_CONFIG
                }
            };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a, out),
        Command::Analyze(a) => analyze(a, out, err),
        Command::Verify(a) => verify_cmd(a, out),
        Command::Hadamard(a) => hadamard_cmd(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

fn load_suite(name: &str, seed: u64) -> Result<Vec<LayerPair>, Failure> {
    match suites::generate(name, seed) {
        Some(r) => r.map_err(|e| Failure::Compute(e.to_string())),
        None => Err(Failure::Config(format!(
            "unknown suite {name:?}; available suites: {}",
            suites::SUITES.join(", ")
        ))),
    }
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let pairs = load_suite(&a.suite, a.seed)?;
    let dtype = match a.dtype {
        DtypeArg::F32 => Dtype::F32,
        DtypeArg::F64 => Dtype::F64,
    };
    let records = ingest::pairs_to_records(&pairs, dtype);
    let file = File::create(&a.out).map_err(|e| config(format!("{}: {e}", a.out.display())))?;
    let mut sink = BufWriter::new(file);
    let bytes = ingest::write_actd(&records, &mut sink)
        .and_then(|n| sink.flush().map(|_| n).map_err(Into::into))
        .map_err(|e| config(format!("{}: {e}", a.out.display())))?;
    let _ = writeln!(
        out,
        "wrote {} records ({bytes} bytes) of suite {} to {}",
        records.len(),
        a.suite,
        a.out.display()
    );
    Ok(())
}

/// Matches `name` against `pattern`: `*` matches any run of characters;
/// a pattern without `*` matches as a prefix.
pub fn matches_pattern(pattern: &str, name: &str) -> bool {
    if !pattern.contains('*') {
        return name.starts_with(pattern);
    }
    let parts: Vec<&str> = pattern.split('*').collect();
    let (first, last) = (parts[0], parts[parts.len() - 1]);
    if !name.starts_with(first) || name.len() < first.len() + last.len() || !name.ends_with(last) {
        return false;
    }
    let mut rest = &name[first.len()..name.len() - last.len()];
    for part in &parts[1..parts.len() - 1] {
        match rest.find(part) {
            Some(i) => rest = &rest[i + part.len()..],
            None => return false,
        }
    }
    true
}

fn parse_alpha_overrides(raw: &[String]) -> Result<Vec<(String, f64)>, Failure> {
    raw.iter()
        .map(|s| {
            let (pat, a) = s
                .rsplit_once('=')
                .ok_or_else(|| config(format!("--alpha-for {s:?}: expected PATTERN=ALPHA")))?;
            let alpha: f64 = a
                .trim()
                .parse()
                .map_err(|_| config(format!("--alpha-for {s:?}: {a:?} is not a number")))?;
            TransformSpec::new(TransformKind::Smooth, alpha)
                .map_err(|e| config(format!("--alpha-for {s:?}: {e}")))?;
            Ok((pat.to_string(), alpha))
        })
        .collect()
}

fn format_float(v: f64) -> String {
    format!("{v:e}")
}

fn write_report(path: &Path, rows: &[DifficultyReport]) -> Result<(), Failure> {
    let io = |e: csv::Error| config(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(REPORT_COLUMNS).map_err(io)?;
    for r in rows {
        w.write_record([
            r.record_name.clone(),
            r.transform.to_string(),
            format!("W{}A{}", r.bits_wt, r.bits_act),
            format_float(r.layer_error),
            format_float(r.act_difficulty),
            format_float(r.wt_difficulty),
            format_float(r.act_kurtosis),
            format_float(r.wt_kurtosis),
            format_float(r.act_max_abs),
            r.effective_bins_min.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| config(format!("{}: {e}", path.display())))
}

fn write_chart(dir: &Path, pair: &LayerPair, specs: &[TransformSpec]) -> Result<PathBuf, String> {
    let mut act = Vec::new();
    let mut wt = Vec::new();
    for spec in specs {
        let (x, w) = transform::apply_transform(&pair.activation, &pair.weight, spec)
            .map_err(|e| format!("record {}: {e}", pair.name))?;
        let label = spec.kind.to_string();
        act.push(Series {
            label: label.clone(),
            values: channel_magnitudes(&x),
        });
        wt.push(Series {
            label,
            values: channel_magnitudes(&w.transpose()),
        });
    }
    let svg = chart::render(&[
        Panel {
            title: format!("{} activations", pair.name),
            series: act,
        },
        Panel {
            title: format!("{} weights", pair.name),
            series: wt,
        },
    ]);
    let path = dir.join(format!("{}.svg", chart::file_stem(&pair.name)));
    fs::write(&path, svg).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(path)
}

fn analyze(a: AnalyzeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let mut cfg = QuantPair::new(a.bits_act, a.bits_wt).map_err(config)?;
    if a.bits_act < 2 || a.bits_wt < 2 {
        return Err(config("bit widths must be at least 2"));
    }
    let rounding = match a.rounding {
        RoundingArg::HalfEven => Rounding::HalfToEven,
        RoundingArg::HalfAway => Rounding::HalfAwayFromZero,
    };
    cfg.act = cfg.act.with_rounding(rounding);
    cfg.wt = cfg.wt.with_rounding(rounding);
    if a.transform.is_empty() {
        return Err(config("at least one transform is required"));
    }
    let mut kinds = a.transform.clone();
    kinds.sort_by_key(|k| TransformKind::ALL.iter().position(|x| x == k));
    kinds.dedup();
    TransformSpec::new(TransformKind::Smooth, a.alpha).map_err(config)?;
    let overrides = parse_alpha_overrides(&a.alpha_for)?;
    if let Some(dir) = &a.charts {
        fs::create_dir_all(dir).map_err(|e| config(format!("{}: {e}", dir.display())))?;
    }

    let mut failures = 0usize;
    let pairs = match (&a.input, &a.suite) {
        (Some(path), _) => {
            let file = File::open(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
            let records = ingest::read_actd(BufReader::new(file))
                .map_err(|e| config(format!("{}: {e}", path.display())))?;
            let (pairs, issues) = ingest::pair_records(records);
            for issue in &issues {
                let _ = writeln!(err, "error: {issue}");
            }
            failures += issues.len();
            pairs
        }
        (None, Some(name)) => load_suite(name, a.seed)?,
        (None, None) => return Err(config("either --input or --suite is required")),
    };

    let specs_for = |pair: &LayerPair| -> Vec<TransformSpec> {
        let alpha = overrides
            .iter()
            .find(|(p, _)| matches_pattern(p, &pair.name))
            .map_or(a.alpha, |(_, v)| *v);
        kinds
            .iter()
            .map(|&k| TransformSpec::new(k, alpha).expect("alpha validated"))
            .collect()
    };
    let mut rows = Vec::new();
    for result in metrics::report_records(&pairs, &cfg, specs_for) {
        match result {
            Ok(r) => rows.extend(r),
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                failures += 1;
            }
        }
    }
    rows.sort_by(|x, y| {
        x.record_name.cmp(&y.record_name).then_with(|| {
            let pos = |k: TransformKind| TransformKind::ALL.iter().position(|t| *t == k);
            pos(x.transform).cmp(&pos(y.transform))
        })
    });
    write_report(&a.report, &rows)?;
    let _ = writeln!(out, "wrote {} rows to {}", rows.len(), a.report.display());

    if let Some(dir) = &a.charts {
        for pair in &pairs {
            match write_chart(dir, pair, &specs_for(pair)) {
                Ok(path) => {
                    let _ = writeln!(out, "chart {}", path.display());
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    failures += 1;
                }
            }
        }
    }

    let kept: Vec<&DifficultyReport> = rows
        .iter()
        .filter(|r| !a.exclude.iter().any(|p| matches_pattern(p, &r.record_name)))
        .collect();
    let _ = writeln!(
        out,
        "correlation of layer_error with act_difficulty^2 ({} of {} rows after exclusions):",
        kept.len(),
        rows.len()
    );
    for kind in &kinds {
        let subset: Vec<&DifficultyReport> = kept
            .iter()
            .copied()
            .filter(|r| r.transform == *kind)
            .collect();
        let value = if subset.len() < MIN_CORRELATION_ROWS {
            format!("n/a (fewer than {MIN_CORRELATION_ROWS} rows)")
        } else {
            match metrics::error_difficulty_correlation(&subset) {
                Ok(r) => format!("{r:.4}"),
                Err(e) => format!("n/a ({e})"),
            }
        };
        let _ = writeln!(out, "  {kind:<14} n={:<4} r={value}", subset.len());
    }

    if failures > 0 {
        return Err(Failure::Compute(format!("{failures} record(s) failed")));
    }
    Ok(())
}

fn load_table(assets: Option<&Path>) -> Result<HadamardTable, transform::TransformError> {
    match assets {
        Some(dir) => HadamardTable::from_dir(dir),
        None => Ok(HadamardTable::embedded().clone()),
    }
}

fn verify_cmd(a: VerifyArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let level = match a.level {
        LevelArg::Fast => Level::Fast,
        LevelArg::Full => Level::Full,
    };
    let start = std::time::Instant::now();
    let results = verify::run(level, load_table(a.assets.as_deref()));
    for r in &results {
        let _ = writeln!(out, "{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let _ = writeln!(
        out,
        "{} of {} checks passed in {:.2}s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        return Err(Failure::Compute(format!("{failed} check(s) failed")));
    }
    Ok(())
}

/// Largest size whose `R Rᵀ` is formed densely by `hadamard --check`.
const DENSE_CHECK_LIMIT: usize = 1024;

fn hadamard_cmd(a: HadamardArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let table = load_table(a.assets.as_deref()).map_err(config)?;
    let plan = table.plan(a.size).map_err(config)?;
    let factors: Vec<String> = plan.factors.iter().map(|f| f.to_string()).collect();
    let _ = writeln!(out, "size {}: {}", a.size, factors.join(" x "));
    match plan.base_size() {
        Some(m) => {
            let _ = writeln!(
                out,
                "Sylvester {} (x) base {} from {}",
                plan.power_of_two(),
                m,
                table.base(m).map_or("?", |b| b.name())
            );
        }
        None => {
            let _ = writeln!(out, "Sylvester {}", plan.power_of_two());
        }
    }
    if !a.check {
        return Ok(());
    }
    let d = a.size;
    let compute = |e: transform::TransformError| Failure::Compute(e.to_string());
    let residual = if d <= DENSE_CHECK_LIMIT {
        let r = table.hadamard(d).map_err(compute)?;
        let rrt = matmul(&r, &r.transpose()).map_err(|e| Failure::Compute(e.to_string()))?;
        let eye = Matrix::identity(d).map_err(|e| Failure::Compute(e.to_string()))?;
        let c = 1.0 / (d as f64).sqrt();
        if let Some(v) = r.as_slice().iter().find(|v| (v.abs() - c).abs() > 1e-15) {
            return Err(Failure::Compute(format!("entry {v} is not ±1/√{d}")));
        }
        rrt.sub(&eye)
            .map_err(|e| Failure::Compute(e.to_string()))?
            .max_abs()
    } else {
        // Rows of R are images of basis vectors; check a spread of them
        // against each other through the fast path.
        let rot = table.rotation(d).map_err(compute)?;
        let picks: Vec<usize> = (0..64).map(|k| k * (d - 1) / 63).collect();
        let rows: Vec<Vec<f64>> = picks
            .iter()
            .map(|&i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                rot.rotate_vector(&e)
            })
            .collect();
        let mut worst: f64 = 0.0;
        for (i, ri) in rows.iter().enumerate() {
            for (j, rj) in rows.iter().enumerate() {
                let dot: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - expected).abs());
            }
        }
        worst
    };
    let method = if d <= DENSE_CHECK_LIMIT {
        "dense"
    } else {
        "64 sampled rows"
    };
    if residual > 1e-10 {
        return Err(Failure::Compute(format!(
            "|R Rᵀ - I| = {residual:e} ({method}) exceeds 1e-10"
        )));
    }
    let _ = writeln!(out, "orthogonal: |R Rᵀ - I| = {residual:e} ({method})");
    Ok(())
}
