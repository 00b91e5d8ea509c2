//! Daily activity, user categories and lifespan curves on a synthetic
//! cohort, written as CSV to stdout.

use std::collections::BTreeSet;

use fedinet::activity::{categorize_users, category_table, daily_series, lifespan_series};
use fedinet::cli::{self, Config};
use fedinet::synthgen::generate_cohort;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = Config::default();
    let model = cli::load_model(None, &config)?;
    let mut ds = generate_cohort(&model, 25, 7, config.acquisition_date)?.dataset;
    // Every third ego leaves before the acquisition date and every third
    // joins after it, so all three categories show up.
    let cutoff = fedinet::timeutil::start_of_day(config.acquisition_date);
    let index = |t: &fedinet::Toot| t.author.username()[3..].parse::<usize>().unwrap();
    ds.toots.retain(|t| match index(t) % 3 {
        0 => t.created_at < cutoff,
        1 => t.created_at >= cutoff,
        _ => true,
    });

    let cats = categorize_users(&ds.toots, config.acquisition_date);
    for row in category_table(&cats) {
        println!("{:<12} {:>5} {:>6.2}%", row.category.name(), row.count, row.percent);
    }

    println!("\ndate,cumulative,alive,active_directed,active_undirected,ratio_active_registered");
    let daily = daily_series(&ds.toots);
    for r in daily.iter().step_by(30) {
        let ratio = r.ratio_active_registered.map(|v| format!("{v:.3}")).unwrap_or_default();
        println!("{},{},{},{},{},{ratio}", r.date, r.cumulative, r.alive, r.active_directed, r.active_undirected);
    }

    let egos: BTreeSet<_> = ds.accounts.iter().map(|a| a.handle()).collect();
    println!("\nday,users,mean_directed_toots,mean_undirected_toots");
    for r in lifespan_series(&ds.toots, &egos, ds.config.t_end).iter().step_by(60) {
        println!("{},{},{:.3},{:.3}", r.day, r.users, r.mean_directed_toots, r.mean_undirected_toots);
    }
    Ok(())
}
