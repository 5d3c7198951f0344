//! Hadamard construction plans, the dense matrix and the fast transform.
//!
//! ```text
//! cargo run --example hadamard_plans
//! ```

use smoothrot::tensor::{matmul, Matrix};
use smoothrot::transform::hadamard::{self, HadamardTable};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let table = HadamardTable::embedded();
    println!("embedded base sizes: {:?}", table.base_sizes());
    for size in [2, 8, 12, 48, 344, 4096, 11008, 6, 100] {
        match table.plan(size) {
            Ok(plan) => println!("{size:>6}: factors {:?}", plan.factors),
            Err(e) => println!("{size:>6}: {e}"),
        }
    }

    let r = hadamard::hadamard(4)?;
    println!("\nR_4 = H_4 / 2:");
    for row in r.rows_iter() {
        println!("  {row:?}");
    }

    // The fast path never materializes R.
    let d = 344;
    let x = Matrix::from_fn(2, d, |i, j| ((i + 1) * j) as f64 % 7.0 - 3.0)?;
    let dense = matmul(&x, &table.hadamard(d)?)?;
    let fast = table.rotation(d)?.rotate_rows(&x)?;
    let diff = dense.sub(&fast)?.max_abs();
    println!("\nd = {d}: max |x R_dense - x R_fast| = {diff:.2e}");

    let rot = table.rotation(11008)?;
    let v: Vec<f64> = (0..11008).map(|j| (j as f64).cos()).collect();
    let y = rot.rotate_vector(&v);
    let norm = |a: &[f64]| a.iter().map(|t| t * t).sum::<f64>().sqrt();
    println!("d = 11008: ‖v‖ = {:.6}, ‖vR‖ = {:.6}", norm(&v), norm(&y));
    Ok(())
}
