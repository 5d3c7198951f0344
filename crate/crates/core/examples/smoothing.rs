//! Channel-wise smoothing on a layer with one systematic outlier channel,
//! and how the migration strength α trades activation for weight difficulty.
//!
//! ```text
//! cargo run --release --example smoothing
//! ```

use smoothrot::metrics::{self, QuantPair};
use smoothrot::suites;
use smoothrot::transform::{self, TransformKind, TransformSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pair = suites::generate("systematic", 0)
        .expect("known suite")?
        .remove(0);
    let (x, w) = (&pair.activation, &pair.weight);
    println!("{}: X {:?}, W {:?}", pair.name, x.shape(), w.shape());

    let s = transform::smoothing_scale(x, w, 0.5, transform::DEFAULT_EPSILON_CLAMP)?;
    let (xs, ws) = transform::apply_smoothing(x, w, &s)?;
    let (xm, wm) = (xs.column_max_abs(), ws.row_max_abs());
    let worst = xm
        .iter()
        .zip(&wm)
        .map(|(a, b)| ((a - b) / a).abs())
        .fold(0.0, f64::max);
    println!("α = 0.5 equalizes max|X̂_j| and max|Ŵ_j| to {worst:.1e} relative");
    let residual = transform::verify_equivalence(x, w, &xs, &ws)?;
    println!("‖XW − X̂Ŵ‖/‖XW‖ = {residual:.1e}");

    let cfg = QuantPair::new(4, 4)?;
    println!("\n  α    act_difficulty  wt_difficulty  layer_error");
    for alpha in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let spec = TransformSpec::new(TransformKind::Smooth, alpha)?;
        let row = metrics::report_row(&pair, &cfg, &spec)?;
        println!(
            "  {alpha:.1}  {:>14.4}  {:>13.4}  {:>11.2}",
            row.act_difficulty, row.wt_difficulty, row.layer_error
        );
    }
    let none = metrics::report_row(&pair, &cfg, &TransformSpec::of(TransformKind::None))?;
    println!(
        "  none {:>12.4}  {:>13.4}  {:>11.2}",
        none.act_difficulty, none.wt_difficulty, none.layer_error
    );
    Ok(())
}
