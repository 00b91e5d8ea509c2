//! Detects nested circles in one ego's contact frequencies.

use fedinet::circles::{build_circles, scaling_ratios, StatsScope};
use fedinet::meanshift::{cluster_frequencies_with, estimate_bandwidth, DEFAULT_QUANTILE};
use fedinet::timeutil::parse_ts;
use fedinet::{AccountRef, TieRecord};

fn main() {
    let ego: AccountRef = "ego@example.social".parse().unwrap();
    let quantile = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(DEFAULT_QUANTILE);
    let tiers = [(150.0, 2), (60.0, 4), (20.0, 10), (6.0, 30), (1.8, 90)];
    let mut ties = Vec::new();
    for (rate, n) in tiers {
        for j in 0..n {
            let wobble = 1.0 + 0.03 * (((j * 7919) % 11) as f64 / 10.0 - 0.5);
            ties.push(TieRecord {
                ego: ego.clone(),
                alter: format!("a{rate}-{j}@example.social").parse().unwrap(),
                contacts: (rate * 1.2) as u32 + 2,
                first_contact: parse_ts("2022-06-01T00:00:00Z").unwrap(),
                last_contact: parse_ts("2023-12-01T00:00:00Z").unwrap(),
                frequency: rate * wobble,
            });
        }
    }
    let freqs: Vec<f64> = ties.iter().map(|t| t.frequency).collect();
    println!("bandwidth at q={quantile}: {:.3}", estimate_bandwidth(&freqs, quantile).unwrap());
    let clusters = cluster_frequencies_with(&ties, quantile).unwrap();
    let net = build_circles(&ego, &ties, &clusters, StatsScope::Cumulative);
    println!("{} circles", net.k);
    for (i, c) in net.circles.iter().enumerate() {
        println!(
            "  circle {}: {:>3} alters, min F {:>6.2}, mean F {:>6.2}",
            i + 1,
            c.cumulative_size,
            c.min_frequency,
            c.mean_frequency
        );
    }
    let ratios: Vec<String> = scaling_ratios(&net).iter().map(|r| format!("{r:.2}")).collect();
    println!("scaling ratios: {}", ratios.join(" "));
}
