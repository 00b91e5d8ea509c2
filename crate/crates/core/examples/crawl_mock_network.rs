//! Snowball-crawls an in-process mock Mastodon network, interrupts the crawl
//! half way and resumes it from the checkpoint.
//!
//! cargo run --example crawl_mock_network [users] [target]

use std::sync::Arc;

use fedinet::crawler::{Crawler, StepOutcome};
use fedinet::fedi_client::mock::{random_network, ManualClock, MockServer, NetworkSpec, RateLimit};
use fedinet::timeutil::parse_ts;
use fedinet::FediClient;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args = std::env::args().skip(1);
    let users: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(60);
    let target: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(12);

    let t_end = parse_ts("2023-12-31T00:00:00Z")?;
    let server = Arc::new(MockServer::new(ManualClock::new(parse_ts("2024-01-15T00:00:00Z")?)));
    let handles = random_network(
        &server,
        &NetworkSpec {
            users,
            instances: 5,
            seed: 1,
            window_start: parse_ts("2022-07-01T00:00:00Z")?,
            window_end: t_end,
            extra_alters: 3,
        },
    );
    // A tight per-host limit: the client waits on the virtual clock.
    server.set_rate_limit(Some(RateLimit {
        max_requests: 5,
        window: std::time::Duration::from_secs(300),
        send_headers: true,
    }));
    let client = FediClient::with_clock(server.clone(), server.clock());

    let dir = tempfile::tempdir()?;
    let out = dir.path().join("dataset");
    let acquisition = chrono::NaiveDate::from_ymd_opt(2022, 10, 27).unwrap();
    let mut crawler = Crawler::start(&client, handles[0].as_str(), target, t_end, acquisition, &out)?;
    while crawler.state().collected() < target / 2 {
        match crawler.step()? {
            StepOutcome::Collected { account, toots, enqueued } => {
                println!("collected {account:<28} {toots:>4} toots, {enqueued:>2} new alters")
            }
            StepOutcome::Skipped { account, reason } => println!("skipped   {account:<28} {reason}"),
        }
    }
    let checkpoint = crawler.checkpoint_path().to_owned();
    drop(crawler);
    println!("-- interrupted; resuming from {}", checkpoint.display());

    let resumed = Crawler::resume(&client, &checkpoint)?;
    println!("frontier holds {} accounts", resumed.state().frontier.len());
    let handle = resumed.finish()?;
    let ds = handle.load()?;
    println!(
        "dataset: {} egos, {} toots, {} interactions; {:?} of virtual time spent waiting on rate limits",
        ds.accounts.len(),
        ds.toots.len(),
        ds.interactions.len(),
        server.clock().total_slept()
    );
    let ties = std::fs::read_to_string(handle.path(fedinet::tie_store::TIES_FILE))?;
    for line in ties.lines().take(6) {
        println!("  {line}");
    }
    Ok(())
}
