//! Plants layered ego networks, runs the pipeline on them and compares what
//! comes out with what went in.
//!
//! cargo run --release --example synthetic_recovery [n_egos] [jitter]

use fedinet::circles::{circle_count_distribution, cohort_aggregate};
use fedinet::cli::{self, Config};
use fedinet::report;
use fedinet::synthgen::generate_cohort;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);
    let config = Config::default();
    let mut model = cli::load_model(None, &config)?;
    if let Some(j) = args.next() {
        model.frequency_jitter = j.parse()?;
    }
    println!("planted sizes {:?} at {:?} contacts/yr", model.cumulative_sizes(), model.ring_frequencies);
    let cohort = generate_cohort(&model, n, 42, config.acquisition_date)?;
    let rep = report::analyze(&cohort.dataset, &config)?;
    println!("circle counts: {:?}", circle_count_distribution(&rep.networks));
    let table = cohort_aggregate(&rep.networks);
    for (k, row) in &table.rows {
        let sizes: Vec<String> = row.mean_sizes.iter().map(|s| format!("{s:.1}")).collect();
        let ratios: Vec<String> = row.mean_ratios.iter().map(|s| format!("{s:.2}")).collect();
        println!("k={k} ({:>3} egos) sizes [{}] ratios [{}]", row.egos, sizes.join(", "), ratios.join(", "));
    }
    Ok(())
}
