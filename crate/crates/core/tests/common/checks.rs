//! Criterion checks shared by the integration tests and the acceptance
//! runner. Each returns a short detail string on success.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fedinet::activity::{categorize_users, category_table, daily_series, pearson};
use fedinet::circles::{build_circles, cohort_aggregate, ratios_of, StatsScope};
use fedinet::meanshift::{meanshift_1d, ClusterResult};
use fedinet::tie_store::{build_ties, filter_ties, FilterParams};
use fedinet::{Interaction, InteractionKind, TieRecord};

use super::*;

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// ------------------------------------------------------------ mean shift

pub fn meanshift_oracle(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..instances {
        let n = rng.random_range(1..=32);
        let pts: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.3) {
                    rng.random_range(0..20) as f64 * 2.5
                } else {
                    rng.random_range(0.0..100.0)
                }
            })
            .collect();
        let h = rng.random_range(0.5..25.0);
        let got = meanshift_1d(&pts, h).map_err(|e| e.to_string())?;
        let (labels, centers) = brute_force_meanshift(&pts, h);
        ensure!(
            canonical_partition(&got.labels) == canonical_partition(&labels) && got.k == centers.len(),
            "instance {case}: partition mismatch (n={n}, h={h})"
        );
    }
    Ok(format!("{instances} instances"))
}

// ------------------------------------------------------------- filtering

fn oracle_keeps(c: u32, t0: DateTime<Utc>, t_end: DateTime<Utc>) -> bool {
    let six_months = Duration::milliseconds((182.625 * 86_400_000.0) as i64);
    let secs = (t_end - t0).num_milliseconds() as f64 / 1000.0;
    let f = c as f64 * 365.25 * 86_400.0 / secs.max(86_400.0);
    t0 < t_end - six_months && c >= 2 && f > 1.0
}

fn tie_with(c: u32, t0: DateTime<Utc>, t_end: DateTime<Utc>) -> TieRecord {
    let ego = acct("ego@grid.example");
    let alter = acct("alter@grid.example");
    let ix: Vec<Interaction> = (0..c)
        .map(|i| Interaction {
            ego: ego.clone(),
            alter: alter.clone(),
            timestamp: t0 + (t_end - t0) * i as i32 / (c as i32 + 1),
            kind: InteractionKind::Mention,
            toot_id: i.to_string(),
        })
        .collect();
    build_ties(&ix, &ego, t_end).unwrap().remove(0)
}

pub fn filter_grid() -> Check {
    let t_end = t_end();
    let month = |m: f64| Duration::milliseconds((m * 365.25 / 12.0 * 86_400_000.0).round() as i64);
    let second = Duration::seconds(1);
    let mut offsets: Vec<Duration> = [1.0, 3.0, 6.0, 9.0, 12.0, 18.0].iter().map(|&m| month(m)).collect();
    // Both sides of the six-month edge and of F = 1 for C = 1, 2, 3.
    for m in [6.0, 12.0, 24.0, 36.0] {
        offsets.push(month(m) - second);
        offsets.push(month(m) + second);
    }
    offsets.push(month(24.0));
    offsets.push(month(36.0));
    let params = FilterParams::default();
    let mut cells = 0;
    let mut kept = 0;
    for c in 1..=5u32 {
        for off in &offsets {
            let t0 = t_end - *off;
            let tie = tie_with(c, t0, t_end);
            let want = oracle_keeps(c, t0, t_end);
            let got = filter_ties(std::slice::from_ref(&tie), t_end, &params).len() == 1;
            ensure!(got == want, "C={c}, T0={t0}: filter {got}, oracle {want} (F={})", tie.frequency);
            cells += 1;
            kept += got as usize;
        }
    }
    Ok(format!("{cells} cells, {kept} kept"))
}

// ---------------------------------------------------------- scaling ratio

fn net_with_sizes(name: &str, ring_sizes: &[usize]) -> fedinet::circles::EgoNetwork {
    let ego = acct(&format!("{name}@ratio.example"));
    let mut ties = Vec::new();
    let mut labels = Vec::new();
    let k = ring_sizes.len();
    let centers: Vec<f64> = (0..k).map(|r| 100.0 / 3f64.powi((k - 1 - r) as i32)).collect();
    for (ring, &n) in ring_sizes.iter().enumerate() {
        for j in 0..n {
            ties.push(TieRecord {
                ego: ego.clone(),
                alter: acct(&format!("r{ring}m{j}@ratio.example")),
                contacts: 5,
                first_contact: ts("2022-01-01T00:00:00Z"),
                last_contact: ts("2023-06-01T00:00:00Z"),
                frequency: 100.0 / 3f64.powi(ring as i32),
            });
            labels.push(k - 1 - ring);
        }
    }
    let cr = ClusterResult {
        labels,
        centers,
        k,
        bandwidth: 1.0,
        converged: true,
    };
    build_circles(&ego, &ties, &cr, StatsScope::Cumulative)
}

pub fn scaling_ratio_convention() -> Check {
    // Cumulative sizes 1/3/9 and 4/8/40.
    let nets = vec![net_with_sizes("a", &[1, 2, 6]), net_with_sizes("b", &[4, 4, 32])];
    ensure!(nets[0].sizes() == vec![1, 3, 9], "sizes {:?}", nets[0].sizes());
    ensure!(nets[1].sizes() == vec![4, 8, 40], "sizes {:?}", nets[1].sizes());
    let table = cohort_aggregate(&nets);
    let row = &table.rows[&3];
    let per_ego = [(3.0 + 2.0) / 2.0, (3.0 + 5.0) / 2.0];
    let of_means = ratios_of(&row.mean_sizes);
    ensure!(
        (row.mean_ratios[0] - per_ego[0]).abs() < 1e-12 && (row.mean_ratios[1] - per_ego[1]).abs() < 1e-12,
        "mean ratios {:?}, expected per-ego {:?}",
        row.mean_ratios,
        per_ego
    );
    ensure!(
        (of_means[0] - row.mean_ratios[0]).abs() > 0.1,
        "fixture does not separate conventions"
    );
    Ok(format!("per-ego {:?} vs ratio-of-means {:.3?}", row.mean_ratios, of_means))
}

// --------------------------------------------------------- categorization

pub fn categorization() -> Check {
    let (toots, expected) = category_fixture();
    let cats = categorize_users(&toots, acquisition());
    for (user, want) in &expected {
        let got = cats.get(&acct(user)).map(|c| c.name());
        ensure!(got == Some(want), "{user}: got {got:?}, want {want}");
    }
    let table = category_table(&cats);
    let total: f64 = table.iter().map(|r| r.percent).sum();
    ensure!((total - 100.0).abs() <= 0.01, "percent sum {total}");
    let counts: Vec<usize> = table.iter().map(|r| r.count).collect();
    ensure!(counts == vec![2, 2, 2], "counts {counts:?}");
    Ok(format!("{} users, percents sum to {total}", expected.len()))
}

// ------------------------------------------------------------- activity

pub fn activity_series() -> Check {
    let rows = daily_series(&activity_fixture());
    let want = activity_expected();
    ensure!(rows.len() == 6, "{} rows", rows.len());
    ensure!(rows[0].date == date("2023-01-01"), "first day {}", rows[0].date);
    for (i, r) in rows.iter().enumerate() {
        ensure!(r.cumulative == want.cumulative[i], "day {i}: cumulative {}", r.cumulative);
        ensure!(r.alive == want.alive[i], "day {i}: alive {}", r.alive);
        ensure!(r.active_directed == want.active_directed[i], "day {i}: active_directed {}", r.active_directed);
        ensure!(
            r.active_undirected == want.active_undirected[i],
            "day {i}: active_undirected {}",
            r.active_undirected
        );
        ensure!(
            r.ratio_active_registered.map(f64::to_bits) == want.ratio_active_registered[i].map(f64::to_bits),
            "day {i}: active/registered {:?}",
            r.ratio_active_registered
        );
        ensure!(
            r.ratio_directed_undirected.map(f64::to_bits) == want.ratio_directed_undirected[i].map(f64::to_bits),
            "day {i}: directed/undirected {:?}",
            r.ratio_directed_undirected
        );
    }
    ensure!(rows[5].alive == 0, "alive on final day");
    Ok("6 days".into())
}

// --------------------------------------------------------------- pearson

pub fn pearson_fixtures(n_fixtures: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..n_fixtures {
        let n = rng.random_range(3..60);
        let slope = rng.random_range(-2.0..2.0);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..50.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| slope * v + rng.random_range(-20.0..20.0)).collect();
        let r = pearson(&x, &y).map_err(|e| e.to_string())?.ok_or("zero variance")?;
        let oracle = pearson_oracle(&x, &y);
        worst = worst.max((r - oracle).abs());
        ensure!((r - oracle).abs() <= 1e-9, "fixture {case}: {r} vs {oracle}");
        let (a, b, c, d) = (
            rng.random_range(0.1..10.0) * if rng.random_bool(0.5) { -1.0 } else { 1.0 },
            rng.random_range(-100.0..100.0),
            rng.random_range(0.1..10.0),
            rng.random_range(-100.0..100.0),
        );
        let xa: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let yc: Vec<f64> = y.iter().map(|v| c * v + d).collect();
        let r2 = pearson(&xa, &yc).map_err(|e| e.to_string())?.ok_or("zero variance")?;
        ensure!((r2 - a.signum() * r).abs() <= 1e-9, "fixture {case}: affine {r2} vs {}", a.signum() * r);
    }
    Ok(format!("{n_fixtures} fixtures, max |diff| {worst:.1e}"))
}

// ------------------------------------------------------------ fuzzing

/// Random planted model: 2-6 rings with random sizes and rates.
fn random_model(rng: &mut ChaCha8Rng) -> fedinet::synthgen::PlantedModel {
    let mut m = fedinet::synthgen::PlantedModel::canonical();
    let k = rng.random_range(2..=6);
    let mut f: f64 = rng.random_range(40.0..200.0);
    m.ring_sizes = (0..k).map(|_| rng.random_range(1.0..12.0)).collect();
    m.ring_frequencies = (0..k)
        .map(|_| {
            let v = f;
            f /= rng.random_range(1.5..5.0);
            v.max(1.2)
        })
        .collect();
    for i in 1..k {
        if m.ring_frequencies[i] >= m.ring_frequencies[i - 1] {
            m.ring_frequencies[i] = m.ring_frequencies[i - 1] * 0.9;
        }
    }
    m.frequency_jitter = rng.random_range(0.0..0.4);
    m.undirected_per_year = rng.random_range(0.0..40.0);
    m
}

pub fn structural_fuzz(datasets: usize, seed: u64) -> Check {
    use fedinet::activity::interaction_mix;
    use fedinet::circles::circle_count_distribution;
    use fedinet::cli::Config;
    use fedinet::report::ego_networks;
    use rayon::prelude::*;

    let failures: Vec<String> = (0..datasets)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let model = random_model(&mut rng);
            let n_egos = rng.random_range(1..6);
            let cohort = fedinet::synthgen::generate_cohort(&model, n_egos, rng.random(), acquisition()).ok()?;
            let ds = cohort.dataset;
            let t_end = ds.config.t_end;
            let cfg = Config::default();
            let all_ties = ds.ties(t_end).ok()?;
            let mut filtered: BTreeMap<_, _> = BTreeMap::new();
            for (ego, ties) in &all_ties {
                filtered.insert(ego.clone(), filter_ties(ties, t_end, &cfg.filter()));
            }
            let nets = match ego_networks(&filtered, cfg.bandwidth_quantile, StatsScope::Cumulative) {
                Ok(n) => n,
                Err(e) => return Some(format!("dataset {i}: {e}")),
            };
            let mut problems = Vec::new();
            for (net, _) in &nets {
                problems.extend(net.violations(StatsScope::Cumulative));
                let sizes = net.sizes();
                if sizes.windows(2).any(|w| w[0] >= w[1]) {
                    problems.push(format!("{}: sizes not increasing {sizes:?}", net.ego));
                }
                if net.circles.windows(2).any(|w| w[0].min_frequency <= w[1].min_frequency) {
                    problems.push(format!("{}: frequency does not decrease outward", net.ego));
                }
                for w in net.circles.windows(2) {
                    if !w[0].members.iter().all(|m| w[1].members.binary_search(m).is_ok()) {
                        problems.push(format!("{}: circles not nested", net.ego));
                    }
                }
                let n_filtered = filtered[&net.ego].len();
                if sizes.last().copied().unwrap_or(0) != n_filtered {
                    problems.push(format!("{}: outer circle {} vs {} ties", net.ego, sizes.last().unwrap_or(&0), n_filtered));
                }
            }
            let just_nets: Vec<_> = nets.iter().map(|(n, _)| n.clone()).collect();
            let hist = circle_count_distribution(&just_nets);
            if hist.values().sum::<usize>() != just_nets.len() {
                problems.push("histogram mass".into());
            }
            let cats = categorize_users(&ds.toots, acquisition());
            let mix = interaction_mix(&ds.interactions, &cats);
            for (row, frac) in mix.counts.iter().zip(&mix.fractions) {
                let total: u64 = row.iter().sum();
                match frac {
                    Some(f) if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 => problems.push("mix row sum".into()),
                    None if total > 0 => problems.push("mix row missing".into()),
                    _ => {}
                }
            }
            (!problems.is_empty()).then(|| format!("dataset {i}: {}", problems.join("; ")))
        })
        .collect();
    ensure!(failures.is_empty(), "{} failing datasets, first: {}", failures.len(), failures[0]);
    Ok(format!("{datasets} datasets, 0 violations"))
}

// ---------------------------------------------------------------- golden

pub fn fixture_dataset_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/report_dataset")
}

pub fn golden_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/report_golden")
}

/// Runs the analysis on the committed fixture dataset and compares every
/// output file with the committed goldens. With `UPDATE_GOLDEN=1` the
/// fixture and goldens are regenerated instead.
pub fn golden_report() -> Check {
    use fedinet::cli::{cmd_analyze, Config};
    let (data, golden) = (fixture_dataset_dir(), golden_dir());
    if std::env::var("UPDATE_GOLDEN").is_ok_and(|v| v == "1") {
        let _ = std::fs::remove_dir_all(&data);
        let _ = std::fs::remove_dir_all(&golden);
        fedinet::DatasetHandle::save(&data, &report_fixture()).map_err(|e| e.to_string())?;
        let report = cmd_analyze(&data, &Config::default(), &golden).map_err(|e| e.to_string())?;
        return Ok(format!("regenerated {} golden files", report.files.len()));
    }
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = cmd_analyze(&data, &Config::default(), &out.path().join("report")).map_err(|e| e.to_string())?;
    let committed: BTreeMap<String, Vec<u8>> = dataset_files(&golden);
    ensure!(
        committed.keys().eq(report.files.keys()),
        "file sets differ: golden {:?}, report {:?}",
        committed.keys().collect::<Vec<_>>(),
        report.files.keys().collect::<Vec<_>>()
    );
    for (name, bytes) in &report.files {
        ensure!(&committed[name] == bytes, "{name} differs from golden");
        let written = std::fs::read(out.path().join("report").join(name)).map_err(|e| e.to_string())?;
        ensure!(&written == bytes, "{name} on disk differs from in-memory report");
    }
    Ok(format!("{} files byte-identical", report.files.len()))
}
