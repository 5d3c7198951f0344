//! Symmetric round-to-nearest quantization of a small activation matrix.
//!
//! ```text
//! cargo run --example quantize_rtn
//! ```

use smoothrot::quant::{self, Granularity, QuantConfig, Rounding};
use smoothrot::Matrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = Matrix::from_rows(&[
        [0.9, -0.4, 3.5, 0.1],
        [1.0, 0.5, -2.5, 7.0],
        [0.0, 0.0, 0.0, 0.0],
    ])?;

    for bits in [2, 4, 8] {
        let cfg = QuantConfig::activations(bits)?;
        let q = quant::quantize_rtn(&x, &cfg)?;
        println!("{bits}-bit per-token, grid ±{}", cfg.grid_max());
        for r in 0..x.rows() {
            let idx: Vec<i64> = (0..x.cols()).map(|c| q.grid_index(r, c)).collect();
            println!(
                "  token {r}: Δ = {:.4}  indices {idx:?}  bins used {}",
                q.steps[r],
                quant::effective_bins(x.row(r), q.steps[r])
            );
        }
    }

    // Ties: 2.5 / Δ = 2.5 exactly when Δ = 1.
    let tie = Matrix::from_rows(&[[2.5, -2.5, 0.5, 7.0]])?;
    for rounding in [Rounding::HalfToEven, Rounding::HalfAwayFromZero] {
        let cfg = QuantConfig::new(4, Granularity::PerToken, rounding)?;
        let q = quant::quantize_rtn(&tie, &cfg)?;
        println!("{rounding:?}: {:?}", q.integer_grid);
    }

    let w = Matrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin())?;
    for bits in [2, 4, 8, 16] {
        let err = quant::layer_error(
            &x,
            &w,
            &QuantConfig::activations(bits)?,
            &QuantConfig::weights(bits)?,
        )?;
        println!("W{bits}A{bits} layer error ‖XW − Q(X)Q(W)‖² = {err:.3e}");
    }
    Ok(())
}
