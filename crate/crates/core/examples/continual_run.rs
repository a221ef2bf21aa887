//! One seed of the standard benchmark, with the Macro-AUC matrix and the
//! training log written to a directory.
//!
//! ```text
//! cargo run --release --example continual_run [out-dir]
//! ```

use std::path::PathBuf;

use maucl::harness::{report, run_seed, ExperimentConfig};

fn main() -> maucl::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("maucl-run"), PathBuf::from);
    let cfg = ExperimentConfig::standard_benchmark();
    let r = run_seed(&cfg, 0)?;
    r.write_to(&out)?;
    print!("{}", report(&out)?);
    println!("\nfinal overall {:.4}, written to {}", r.final_overall(), out.display());
    Ok(())
}
