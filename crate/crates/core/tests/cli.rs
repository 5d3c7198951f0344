use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use smoothrot::cli::{self, EXIT_COMPUTE, EXIT_CONFIG, EXIT_OK, REPORT_COLUMNS};
use smoothrot::ingest::{self, LayerRecord};
use smoothrot::suites;
use smoothrot::tensor::{frobenius_norm, matmul};
use smoothrot::Matrix;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("smoothrot").chain(args.iter().copied());
    let code = cli::run(argv, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn synth(dir: &Path, suite: &str, seed: &str) -> PathBuf {
    let out = dir.join(format!("{suite}-{seed}.actd"));
    let r = run(&[
        "synth",
        "--suite",
        suite,
        "--seed",
        seed,
        "--out",
        path_str(&out),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    out
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = fs::read(synth(dir.path(), "systematic", "3")).unwrap();
    let b_path = dir.path().join("again.actd");
    run(&[
        "synth",
        "--suite",
        "systematic",
        "--seed",
        "3",
        "--out",
        path_str(&b_path),
    ]);
    assert_eq!(a, fs::read(&b_path).unwrap());
    let c = fs::read(synth(dir.path(), "systematic", "4")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn synth_massive_basic_records() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = fs::read(synth(dir.path(), "massive-basic", "0")).unwrap();
    let (pairs, issues) = ingest::pair_records(ingest::parse_actd(&bytes).unwrap());
    assert!(issues.is_empty());
    assert_eq!(pairs.len(), 4);
    let max = pairs
        .iter()
        .map(|p| p.activation.max_abs())
        .fold(0.0, f64::max);
    assert_eq!(max, 1000.0);
}

#[test]
fn unknown_suite_lists_available() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&[
        "synth",
        "--suite",
        "tiny",
        "--out",
        path_str(&dir.path().join("x")),
    ]);
    assert_eq!(r.code, EXIT_CONFIG);
    for s in suites::SUITES {
        assert!(r.err.contains(s), "{}", r.err);
    }
}

#[test]
fn analyze_massive_basic_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "massive-basic", "0");
    let report = dir.path().join("r.csv");
    let charts = dir.path().join("charts");
    let r = run(&[
        "analyze",
        "--input",
        path_str(&input),
        "--bits-act",
        "4",
        "--bits-wt",
        "4",
        "--transform",
        "smooth-rotate,none,rotate,smooth",
        "--alpha",
        "0.5",
        "--report",
        path_str(&report),
        "--charts",
        path_str(&charts),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let (header, rows) = read_csv(&report);
    assert_eq!(header, REPORT_COLUMNS);
    assert_eq!(rows.len(), 16);

    let keys: Vec<(String, String)> = rows.iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    let order = ["none", "smooth", "rotate", "smooth-rotate"];
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| {
            let p = |s: &str| order.iter().position(|o| *o == s);
            p(&a.1).cmp(&p(&b.1))
        })
    });
    assert_eq!(keys, sorted);
    assert!(rows.iter().all(|r| r[2] == "W4A4"));

    for chunk in rows.chunks(4) {
        let err: Vec<f64> = chunk.iter().map(|r| r[3].parse().unwrap()).collect();
        assert_eq!(chunk[3][1], "smooth-rotate");
        assert!(
            err[3] < err[0] && err[3] < err[1] && err[3] < err[2],
            "{chunk:?}"
        );
    }

    let svgs: Vec<_> = fs::read_dir(&charts)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(svgs.len(), 4);
    for p in svgs {
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("<svg") && text.matches("<polyline").count() == 8);
    }
}

#[test]
fn analyze_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "systematic-graded", "1");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let r = run(&[
            "analyze",
            "--input",
            path_str(&input),
            "--report",
            path_str(p),
        ]);
        assert_eq!(r.code, EXIT_OK, "{}", r.err);
    }
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn sixteen_bits_is_near_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.csv");
    let r = run(&[
        "analyze",
        "--suite",
        "systematic-graded",
        "--bits-act",
        "16",
        "--bits-wt",
        "16",
        "--report",
        path_str(&report),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let pairs = suites::generate("systematic-graded", 0).unwrap().unwrap();
    let (_, rows) = read_csv(&report);
    assert_eq!(rows.len(), 32);
    for row in rows {
        let pair = pairs.iter().find(|p| p.name == row[0]).unwrap();
        let energy = frobenius_norm(&matmul(&pair.activation, &pair.weight).unwrap()).powi(2);
        let err: f64 = row[3].parse().unwrap();
        assert!(err < 1e-6 * energy, "{row:?} vs energy {energy}");
        assert_eq!(row[2], "W16A16");
    }
}

fn summary_line<'a>(out: &'a str, kind: &str) -> &'a str {
    out.lines()
        .find(|l| l.trim_start().starts_with(&format!("{kind} ")))
        .unwrap()
}

#[test]
fn exclusion_only_affects_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let all = dir.path().join("all.csv");
    let some = dir.path().join("some.csv");
    let base = [
        "analyze",
        "--suite",
        "systematic-graded",
        "--transform",
        "none",
    ];
    let r1 = run(&[&base[..], &["--report", path_str(&all)]].concat());
    let r2 = run(&[
        &base[..],
        &[
            "--report",
            path_str(&some),
            "--exclude",
            "layer.7",
            "--exclude",
            "*.6.o_proj",
        ],
    ]
    .concat());
    assert_eq!(r1.code, EXIT_OK);
    assert_eq!(r2.code, EXIT_OK);
    assert_eq!(fs::read(&all).unwrap(), fs::read(&some).unwrap());
    assert!(summary_line(&r1.out, "none").contains("n=8"), "{}", r1.out);
    assert!(summary_line(&r2.out, "none").contains("n=6"), "{}", r2.out);
    assert_ne!(summary_line(&r1.out, "none"), summary_line(&r2.out, "none"));
}

#[test]
fn alpha_override_applies_to_matching_records() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let base = ["analyze", "--suite", "systematic", "--transform", "smooth"];
    assert_eq!(
        run(&[&base[..], &["--report", path_str(&a)]].concat()).code,
        EXIT_OK
    );
    let r = run(&[
        &base[..],
        &["--report", path_str(&b), "--alpha-for", "*.k_proj=0.8"],
    ]
    .concat());
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let (_, ra) = read_csv(&a);
    let (_, rb) = read_csv(&b);
    for (x, y) in ra.iter().zip(&rb) {
        if x[0].ends_with("k_proj") {
            assert_ne!(x[3], y[3]);
        } else {
            assert_eq!(x, y);
        }
    }
}

#[test]
fn record_failures_exit_two_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let x = Matrix::from_fn(4, 8, |i, j| (i * 8 + j) as f64 * 0.1 - 1.0).unwrap();
    let w = Matrix::from_fn(8, 3, |i, j| ((i + j) % 3) as f64 - 1.0).unwrap();
    let records = vec![
        LayerRecord::activation("good", x.clone()),
        LayerRecord::weight("good", w),
        LayerRecord::activation("orphan", x),
    ];
    let input = dir.path().join("in.actd");
    ingest::write_actd(&records, fs::File::create(&input).unwrap()).unwrap();
    let report = dir.path().join("r.csv");
    let r = run(&[
        "analyze",
        "--input",
        path_str(&input),
        "--report",
        path_str(&report),
    ]);
    assert_eq!(r.code, EXIT_COMPUTE);
    assert!(r.err.contains("\"orphan\""), "{}", r.err);
    let (_, rows) = read_csv(&report);
    assert_eq!(rows.len(), 4);
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage.actd");
    fs::write(&garbage, b"not an actd file").unwrap();
    let report = dir.path().join("r.csv");
    let rp = path_str(&report);
    let cases: Vec<Vec<&str>> = vec![
        vec!["analyze", "--input", path_str(&garbage), "--report", rp],
        vec![
            "analyze",
            "--input",
            "/nonexistent/file.actd",
            "--report",
            rp,
        ],
        vec![
            "analyze",
            "--suite",
            "systematic",
            "--bits-act",
            "1",
            "--report",
            rp,
        ],
        vec![
            "analyze",
            "--suite",
            "systematic",
            "--alpha",
            "1.5",
            "--report",
            rp,
        ],
        vec![
            "analyze",
            "--suite",
            "systematic",
            "--transform",
            "spin",
            "--report",
            rp,
        ],
        vec![
            "analyze",
            "--suite",
            "systematic",
            "--alpha-for",
            "noequals",
            "--report",
            rp,
        ],
        vec!["hadamard", "--size", "6"],
        vec!["frobnicate"],
    ];
    for args in cases {
        let r = run(&args);
        assert_eq!(r.code, EXIT_CONFIG, "{args:?}: {}", r.err);
        assert!(!r.err.is_empty());
    }
}

#[test]
fn verify_fast_and_full() {
    let fast = run(&["verify"]);
    assert_eq!(fast.code, EXIT_OK, "{}", fast.out);
    assert!(fast.out.lines().filter(|l| l.starts_with("PASS")).count() >= 9);
    let full = run(&["verify", "--level", "full"]);
    assert_eq!(full.code, EXIT_OK, "{}", full.out);
    assert!(full.out.contains("d=4096"), "{}", full.out);
}

#[test]
fn verify_names_a_corrupted_asset() {
    let dir = tempfile::tempdir().unwrap();
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    for entry in fs::read_dir(&src).unwrap() {
        let p = entry.unwrap().path();
        fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
    }
    let target = dir.path().join("hadamard_172.txt");
    let text = fs::read_to_string(&target).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[5] = lines[5].replacen("-1", "+1", 1);
    fs::write(&target, lines.join("\n")).unwrap();

    let r = run(&["verify", "--assets", path_str(dir.path())]);
    assert_eq!(r.code, EXIT_COMPUTE);
    let line = r
        .out
        .lines()
        .find(|l| l.contains("hadamard-assets"))
        .unwrap();
    assert!(
        line.starts_with("FAIL") && line.contains("hadamard_172.txt"),
        "{line}"
    );
}

#[test]
fn hadamard_command() {
    let r = run(&["hadamard", "--size", "11008"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("64 x 172"), "{}", r.out);
    let r = run(&["hadamard", "--size", "344", "--check"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("orthogonal"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_smoothrot");
    let help = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&help.stdout).contains("analyze"));
    let bad = Command::new(bin)
        .args(["analyze", "--report"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_CONFIG));
    let ok = Command::new(bin)
        .args(["hadamard", "--size", "12", "--check"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(EXIT_OK));
}
