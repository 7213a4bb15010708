//! Runs a full declarative experiment from a TOML file, the same way the
//! `mimo-ota run` command does, and prints the grouped summary.
//!
//! cargo run --release --example power_sweep [-- configs/smoke-baseline-compare.toml]

use std::path::PathBuf;

use mimo_ota::experiment::{load_config, summarize, Runner};

fn main() -> mimo_ota::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map_or_else(|| PathBuf::from("configs/smoke-baseline-compare.toml"), PathBuf::from);
    let mut runner = Runner::new(load_config(&path)?)?;
    runner.verbose = true;
    let rows = runner.run()?;
    for g in summarize(&rows) {
        println!(
            "{:<60} lambda {:<6} lambda1 {:<5} acc {:.4} ± {:.4} Pt {}",
            g.scheme,
            g.lambda.map_or("-".into(), |v| v.to_string()),
            g.lambda1.map_or("-".into(), |v| v.to_string()),
            g.accuracy_mean,
            g.accuracy_std,
            g.pt_db_mean.map_or("-".into(), |v| format!("{v:.2} dB")),
        );
    }
    Ok(())
}
