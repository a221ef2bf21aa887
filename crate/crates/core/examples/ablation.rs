//! Six-row ablation grid on the standard synthetic benchmark.
//!
//! ```text
//! cargo run --release --example ablation [seeds]
//! ```

use maucl::harness::{ablate, ablation_csv, AblationCombo, ExperimentConfig};

fn main() -> maucl::Result<()> {
    let mut cfg = ExperimentConfig::standard_benchmark();
    if let Some(n) = std::env::args().nth(1).and_then(|s| s.parse::<u64>().ok()) {
        cfg.seeds = (0..n).collect();
    }
    let rows = ablate(&cfg, &AblationCombo::grid(), true)?;
    print!("{}", ablation_csv(&rows));
    Ok(())
}
