//! Saves a synthetic dataset, validates it, and writes the full report.
//!
//! cargo run --example analyze_report [out_dir]

use fedinet::cli::{self, Config};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let tmp = tempfile::tempdir()?;
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| tmp.path().join("report"));
    let config = Config::default();
    let model = cli::load_model(None, &config)?;
    let data = tmp.path().join("synth");
    cli::cmd_synth(&config, &model, 30, 1, &data)?;

    let violations = cli::cmd_validate(&data, &config)?;
    println!("validate: {} violations", violations.len());

    let report = cli::cmd_analyze(&data, &config, &out)?;
    for (name, bytes) in &report.files {
        println!("{name:<28} {:>7} bytes", bytes.len());
    }
    println!("\ncircle_histogram.csv:\n{}", report.file("circle_histogram.csv").unwrap_or(""));
    println!("written to {}", out.display());
    Ok(())
}
