//! Runs the numerical self-checks that back `smoothrot verify`.
//!
//! ```text
//! cargo run --release --example self_check [full]
//! ```

use smoothrot::transform::hadamard::HadamardTable;
use smoothrot::verify::{self, Level};

fn main() {
    let level = match std::env::args().nth(1).as_deref() {
        Some("full") => Level::Full,
        _ => Level::Fast,
    };
    let results = verify::run(level, Ok(HadamardTable::embedded().clone()));
    for r in &results {
        println!("{r}");
    }
    if results.iter().any(|r| !r.passed) {
        std::process::exit(1);
    }
}
