//! Writing and reading ACTD files, the binary container for captured
//! activation/weight pairs.
//!
//! ```text
//! cargo run --example actd_io
//! ```

use smoothrot::ingest::{self, Dtype, LayerRecord};
use smoothrot::Matrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = Matrix::from_fn(3, 4, |i, j| (i as f64 - j as f64) * 0.25)?;
    let w = Matrix::from_fn(4, 2, |i, j| if i == j { 1.0 } else { 0.1 })?;
    let records = vec![
        LayerRecord::activation("layer.0.q_proj", x.clone()).stored_as(Dtype::F32),
        LayerRecord::weight("layer.0.q_proj", w.clone()),
        LayerRecord::activation("layer.0.k_proj", x),
    ];

    let mut bytes = Vec::new();
    let written = ingest::write_actd(&records, &mut bytes)?;
    println!("wrote {written} bytes, header {:?}", &bytes[..12]);

    let back = ingest::parse_actd(&bytes)?;
    for r in &back {
        println!(
            "  {:<16} {:<10} {:?} stored as {:?}",
            r.name,
            r.kind,
            r.matrix.shape(),
            r.dtype_stored
        );
    }
    let mut again = Vec::new();
    ingest::write_actd(&back, &mut again)?;
    println!("re-serialization identical: {}", again == bytes);

    let (pairs, issues) = ingest::pair_records(back);
    println!("{} complete pair(s)", pairs.len());
    for issue in issues {
        println!("  {issue}");
    }

    for broken in [
        &bytes[..20],
        b"ACTX\x01\x00\x00\x00\x00\x00\x00\x00".as_slice(),
    ] {
        match ingest::parse_actd(broken) {
            Ok(_) => println!("unexpectedly parsed"),
            Err(e) => println!("rejected: {e}"),
        }
    }
    Ok(())
}
