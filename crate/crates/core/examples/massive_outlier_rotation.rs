//! What a Hadamard rotation does to a token with massive outliers: the
//! rotated entries cluster at predictable centroids, the maximum follows a
//! closed form, and on a layer with one massive token rotation can raise the
//! quantization error while smoothing followed by rotation lowers it.
//!
//! ```text
//! cargo run --release --example massive_outlier_rotation
//! ```

use smoothrot::metrics::{self, QuantPair};
use smoothrot::outliers::{self, OutlierTokenSpec};
use smoothrot::suites::MASSIVE_BASIC;
use smoothrot::transform::hadamard::HadamardTable;
use smoothrot::transform::{TransformKind, TransformSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let d = 4096;
    let sigma = 0.01;
    let spec = OutlierTokenSpec::new(d, [(10, 900.0), (300, 500.0), (2049, 300.0)], sigma, 0)?;
    let token = outliers::synth_massive_token(&spec);
    let rotated = HadamardTable::embedded().rotation(d)?.rotate_vector(&token);

    let centroids = outliers::predict_centroids(&spec, d)?;
    let report = outliers::cluster_check(&rotated, &centroids, sigma);
    println!(
        "outlier dims {:?} independent: {}",
        spec.outlier_dims(),
        outliers::sylvester_patterns_independent(&spec.outlier_dims())
    );
    for (c, n) in &report.counts {
        println!("  centroid {c:>8.4}: {n} entries");
    }
    println!("  within 4σ of a centroid: {:.4}", report.fraction);

    let max = rotated.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (lo, hi) = outliers::rot_max_band(&spec, d);
    println!(
        "max |rotated| = {max:.4}, predicted {:.4} (±3σ band {lo:.4}..{hi:.4})",
        outliers::predict_rot_max(&spec, d)
    );

    let layer = &MASSIVE_BASIC[0];
    let pair = layer.generate(0)?;
    let cfg = QuantPair::new(4, 4)?;
    println!(
        "\n{} (o = 1000, d = {}), W4A4 layer error:",
        layer.name, layer.dim
    );
    for kind in TransformKind::ALL {
        let row = metrics::report_row(&pair, &cfg, &TransformSpec::of(kind))?;
        println!(
            "  {kind:<14} {:>10.2}   max|X̂| {:>9.3}   fewest bins {}",
            row.layer_error, row.act_max_abs, row.effective_bins_min
        );
    }
    Ok(())
}
