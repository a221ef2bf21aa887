//! Sweeps the margin scale and the memory size on the standard benchmark.
//!
//! ```text
//! cargo run --release --example lambda_sweep [seeds]
//! ```

use maucl::harness::{sweep, sweep_csv, ExperimentConfig, SweepParam};

fn main() -> maucl::Result<()> {
    let mut cfg = ExperimentConfig::standard_benchmark();
    if let Some(n) = std::env::args().nth(1).and_then(|s| s.parse::<u64>().ok()) {
        cfg.seeds = (0..n).collect();
    }
    let lambdas: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    print!("{}", sweep_csv(SweepParam::Lambda, &sweep(&cfg, SweepParam::Lambda, &lambdas, true)?));
    println!();
    let sizes = [20.0, 50.0, 100.0, 150.0, 200.0];
    print!("{}", sweep_csv(SweepParam::MemorySize, &sweep(&cfg, SweepParam::MemorySize, &sizes, true)?));
    Ok(())
}
