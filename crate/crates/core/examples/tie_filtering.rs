//! Aggregates interactions into ties and applies the analysis filter.

use chrono::Duration;
use fedinet::tie_store::{build_ties, filter_active_ties, split_active_network};
use fedinet::timeutil::parse_ts;
use fedinet::{AccountRef, Interaction, InteractionKind};

fn main() {
    let t_end = parse_ts("2023-12-31T00:00:00Z").unwrap();
    let ego: AccountRef = "ego@example.social".parse().unwrap();
    // (alter, contacts, days before t_end of the first contact)
    let plan = [
        ("close", 60, 500),
        ("regular", 12, 400),
        ("recent", 30, 90),
        ("single", 1, 300),
        ("rare", 2, 700),
        ("yearly", 3, 540),
    ];
    let mut interactions = Vec::new();
    for (name, contacts, first_days) in plan {
        let alter: AccountRef = format!("{name}@example.social").parse().unwrap();
        for i in 0..contacts {
            let back = first_days as f64 * (1.0 - i as f64 / contacts as f64);
            interactions.push(Interaction {
                ego: ego.clone(),
                alter: alter.clone(),
                timestamp: t_end - Duration::seconds((back * 86_400.0) as i64),
                kind: InteractionKind::Reply,
                toot_id: format!("{name}-{i}"),
            });
        }
    }
    let ties = build_ties(&interactions, &ego, t_end).unwrap();
    let kept = filter_active_ties(&ties, t_end);
    let (active, inactive) = split_active_network(&ties);
    println!("{:<28} {:>3} {:>8} {:>7}  kept", "alter", "C", "bond(d)", "F/yr");
    for t in &ties {
        println!(
            "{:<28} {:>3} {:>8.1} {:>7.2}  {}",
            t.alter,
            t.contacts,
            t.bond_length_days(),
            t.frequency,
            kept.iter().any(|k| k.alter == t.alter)
        );
    }
    println!("active alters: {}, inactive: {}, analysed: {}", active.len(), inactive.len(), kept.len());
}
