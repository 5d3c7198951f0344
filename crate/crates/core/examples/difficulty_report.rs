//! Per-layer difficulty report over a graded family of systematic-outlier
//! layers, and the correlation of layer error with squared activation
//! difficulty.
//!
//! ```text
//! cargo run --release --example difficulty_report
//! ```

use smoothrot::metrics::{self, DifficultyReport, QuantPair};
use smoothrot::suites;
use smoothrot::transform::{TransformKind, TransformSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pairs = suites::generate("systematic-graded", 0).expect("known suite")?;
    let specs: Vec<TransformSpec> = TransformKind::ALL.map(TransformSpec::of).to_vec();
    let rows = metrics::build_report(&pairs, &QuantPair::new(4, 4)?, &specs)?;

    println!(
        "{:<16} {:<14} {:>12} {:>14} {:>13}",
        "record", "transform", "layer_error", "act_difficulty", "act_kurtosis"
    );
    for r in &rows {
        println!(
            "{:<16} {:<14} {:>12.2} {:>14.4} {:>13.2}",
            r.record_name, r.transform, r.layer_error, r.act_difficulty, r.act_kurtosis
        );
    }
    for kind in TransformKind::ALL {
        let subset: Vec<&DifficultyReport> = rows.iter().filter(|r| r.transform == kind).collect();
        let r = metrics::error_difficulty_correlation(&subset)?;
        println!("pearson(layer_error, act_difficulty²) [{kind}] = {r:.4}");
    }
    Ok(())
}
