//! End-to-end analysis of a dataset into plot-ready CSV tables and a JSON
//! summary, plus dataset invariant checks.
//!
//! A report is assembled in memory as `file name -> bytes` and written by
//! [`write_atomic`] into a sibling temporary directory that is then renamed
//! into place.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::activity::{self, UserCategory};
use crate::circles::{self, CohortTable, EgoNetwork, StatsScope};
use crate::cli::{Cohort, Config};
use crate::crawler::is_active_alter;
use crate::fedi_client::AccountRef;
use crate::interaction_model::{dataset_summary, Interaction, Toot, TootSummary};
use crate::meanshift::{self, ClusterResult};
use crate::tie_store::{
    annual_frequency, filter_ties, split_active_with, Dataset, DatasetHandle, TieRecord,
};
use crate::timeutil;

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Tie(#[from] crate::tie_store::TieError),
    #[error(transparent)]
    Cluster(#[from] meanshift::MeanShiftError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Report files keyed by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub files: BTreeMap<String, Vec<u8>>,
    /// Per-ego circle structure of the analysed cohort.
    pub networks: Vec<EgoNetwork>,
    pub cohort_table: CohortTable,
}

impl Report {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.get(name).and_then(|b| std::str::from_utf8(b).ok())
    }
}

/// Shortest round-trip formatting; missing values become empty cells.
fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

struct Csv(csv::Writer<Vec<u8>>);

impl Csv {
    fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(header.iter().map(|s| s.as_ref())).expect("in-memory write");
        Self(w)
    }

    fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        self.0.write_record(cells.iter().map(|s| s.as_ref())).expect("in-memory write");
    }

    fn finish(self) -> Vec<u8> {
        self.0.into_inner().expect("in-memory flush")
    }
}

/// Dataset-level user and link counts (`table_I` in the summary).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserStats {
    pub ego: usize,
    pub alters: usize,
    pub bot_ego: usize,
    pub bot_alters: usize,
    pub active_alters: usize,
    pub ego_being_alters: usize,
    pub ego_being_active_alters: usize,
    pub directed_links: usize,
    pub all_interactions: usize,
}

pub fn user_stats(
    ds: &Dataset,
    ties: &BTreeMap<AccountRef, Vec<TieRecord>>,
    interactions: usize,
    t_end: chrono::DateTime<chrono::Utc>,
) -> UserStats {
    let egos: BTreeSet<AccountRef> = ds.accounts.iter().map(|a| a.handle()).collect();
    let bots: BTreeSet<AccountRef> = ds.accounts.iter().filter(|a| a.is_bot).map(|a| a.handle()).collect();
    let all: Vec<&TieRecord> = ties.values().flatten().collect();
    let alters: BTreeSet<&AccountRef> = all.iter().map(|t| &t.alter).collect();
    let active: BTreeSet<&AccountRef> = all
        .iter()
        .filter(|t| is_active_alter(t.contacts, t.first_contact, t_end))
        .map(|t| &t.alter)
        .collect();
    UserStats {
        ego: egos.len(),
        alters: alters.len(),
        bot_ego: bots.len(),
        bot_alters: alters.iter().filter(|a| bots.contains(**a)).count(),
        active_alters: active.len(),
        ego_being_alters: egos.iter().filter(|e| alters.contains(e)).count(),
        ego_being_active_alters: egos.iter().filter(|e| active.contains(e)).count(),
        directed_links: all.len(),
        all_interactions: interactions,
    }
}

fn cohort_matches(cohort: Cohort, cat: Option<UserCategory>) -> bool {
    match cohort {
        Cohort::All => true,
        Cohort::Aficionados => cat == Some(UserCategory::Aficionados),
        Cohort::Others1 => cat == Some(UserCategory::Others1),
        Cohort::Others2 => cat == Some(UserCategory::Others2),
    }
}

/// Per-ego clustering of the filtered ties.
pub fn ego_networks(
    filtered: &BTreeMap<AccountRef, Vec<TieRecord>>,
    quantile: f64,
    scope: StatsScope,
) -> Result<Vec<(EgoNetwork, ClusterResult)>, ReportError> {
    let items: Vec<(&AccountRef, &Vec<TieRecord>)> =
        filtered.iter().filter(|(_, t)| !t.is_empty()).collect();
    items
        .into_par_iter()
        .map(|(ego, ties)| {
            let cr = meanshift::cluster_frequencies_with(ties, quantile)?;
            Ok((circles::build_circles(ego, ties, &cr, scope), cr))
        })
        .collect()
}

fn cohort_csv(table: &CohortTable, ratios: bool, pick: impl Fn(&circles::CohortRow) -> &Vec<f64>) -> Vec<u8> {
    let max_k = table.max_k();
    let mut header = vec!["total_circles".to_owned()];
    if ratios {
        header.extend((2..=max_k).map(|j| format!("{}/{}", j, j - 1)));
    } else {
        header.extend((1..=max_k).map(|j| j.to_string()));
    }
    let width = header.len() - 1;
    let mut w = Csv::new(&header);
    for (k, row) in &table.rows {
        let vals = pick(row);
        let mut cells = vec![k.to_string()];
        cells.extend((0..width).map(|j| vals.get(j).map(|v| num(*v)).unwrap_or_default()));
        w.row(&cells);
    }
    w.finish()
}

/// Runs every analysis on `ds`.
pub fn analyze(ds: &Dataset, config: &Config) -> Result<Report, ReportError> {
    let t_end = config.t_end_instant();
    if ds.config.t_end != t_end {
        warn!(
            "config t_end {} differs from the dataset's recorded {}",
            timeutil::format_ts(&t_end),
            timeutil::format_ts(&ds.config.t_end)
        );
    }
    let scope = if config.rings_mode {
        StatsScope::Rings
    } else {
        StatsScope::Cumulative
    };
    let toots: Vec<Toot> = ds.toots.iter().filter(|t| t.created_at <= t_end).cloned().collect();
    let interactions: Vec<&Interaction> = ds.interactions.iter().filter(|i| i.timestamp <= t_end).collect();
    let all_ties = ds.ties(t_end)?;
    let mut files = BTreeMap::new();

    let table_i = user_stats(ds, &all_ties, interactions.len(), t_end);
    let table_ii = dataset_summary(&toots);

    let bots: BTreeSet<AccountRef> = ds.accounts.iter().filter(|a| a.is_bot).map(|a| a.handle()).collect();
    let keep_user = |u: &AccountRef| !(config.exclude_bots && bots.contains(u));
    let human_toots: Vec<Toot> = toots.iter().filter(|t| keep_user(&t.author)).cloned().collect();

    // Categories and the population-level activity views.
    let categories = activity::categorize_users(&human_toots, config.acquisition_date);
    let cat_rows = activity::category_table(&categories);
    let mut w = Csv::new(&["type", "count", "percent"]);
    for c in &cat_rows {
        w.row(&[c.category.name().to_owned(), c.count.to_string(), format!("{:.2}", c.percent)]);
    }
    files.insert("table_IV_categories.csv".to_owned(), w.finish());

    let mut w = Csv::new(&[
        "date",
        "cumulative",
        "alive",
        "active_directed",
        "active_undirected",
        "directed_toots",
        "undirected_toots",
        "mean_toots_per_user",
        "ratio_active_registered",
        "ratio_directed_undirected",
    ]);
    for r in activity::daily_series(&human_toots) {
        w.row(&[
            r.date.to_string(),
            r.cumulative.to_string(),
            r.alive.to_string(),
            r.active_directed.to_string(),
            r.active_undirected.to_string(),
            r.directed_toots.to_string(),
            r.undirected_toots.to_string(),
            num(r.mean_toots_per_user),
            opt(r.ratio_active_registered),
            opt(r.ratio_directed_undirected),
        ]);
    }
    files.insert("fig2_daily.csv".to_owned(), w.finish());

    let mix = activity::interaction_mix(
        interactions.iter().copied().filter(|i| keep_user(&i.ego)),
        &categories,
    );
    let mut w = Csv::new(&["ego_type", "alter_type", "count", "fraction"]);
    for (i, e) in UserCategory::ALL.iter().enumerate() {
        for (j, a) in UserCategory::ALL.iter().enumerate() {
            w.row(&[
                e.name().to_owned(),
                a.name().to_owned(),
                mix.counts[i][j].to_string(),
                opt(mix.fractions[i].map(|r| r[j])),
            ]);
        }
    }
    files.insert("fig3_mix.csv".to_owned(), w.finish());

    // Analysed egos: collected, human (unless disabled), in the cohort.
    let mut seen = BTreeSet::new();
    let egos: Vec<AccountRef> = ds
        .accounts
        .iter()
        .map(|a| a.handle())
        .filter(|e| keep_user(e) && cohort_matches(config.cohort, categories.get(e).copied()))
        .filter(|e| seen.insert(e.clone()))
        .collect();
    let empty = Vec::new();
    let ties_of = |e: &AccountRef| all_ties.get(e).unwrap_or(&empty);
    let filter = config.filter();
    let filtered: BTreeMap<AccountRef, Vec<TieRecord>> = egos
        .iter()
        .map(|e| (e.clone(), filter_ties(ties_of(e), t_end, &filter)))
        .collect();

    let mut w = Csv::new(&["ego", "alters_all", "alters_active"]);
    for e in &egos {
        let (active, _) = split_active_with(ties_of(e), config.active_frequency_threshold);
        w.row(&[e.to_string(), ties_of(e).len().to_string(), active.len().to_string()]);
    }
    files.insert("alters_per_ego.csv".to_owned(), w.finish());

    let mut w = Csv::new(&[
        "ego",
        "filtered",
        "alters",
        "lifespan_days",
        "toots_per_day",
        "directed_per_day",
        "replies_per_day",
    ]);
    let mut correlations = serde_json::Map::new();
    for filtered_flag in [false, true] {
        let counts: BTreeMap<AccountRef, usize> = egos
            .iter()
            .map(|e| {
                let n = if filtered_flag { filtered[e].len() } else { ties_of(e).len() };
                (e.clone(), n)
            })
            .collect();
        let rows = activity::size_activity_table(&egos, &human_toots, &counts, t_end);
        for r in &rows {
            w.row(&[
                r.ego.to_string(),
                filtered_flag.to_string(),
                r.alters.to_string(),
                r.lifespan_days.to_string(),
                num(r.toots_per_day),
                num(r.directed_per_day),
                num(r.replies_per_day),
            ]);
        }
        let x: Vec<f64> = rows.iter().map(|r| r.alters as f64).collect();
        let rho = |y: Vec<f64>| -> Value {
            match activity::pearson(&x, &y) {
                Ok(Some(r)) => json!(r),
                _ => Value::Null,
            }
        };
        correlations.insert(
            if filtered_flag { "filtered" } else { "unfiltered" }.to_owned(),
            json!({
                "all": rho(rows.iter().map(|r| r.toots_per_day).collect()),
                "directed": rho(rows.iter().map(|r| r.directed_per_day).collect()),
                "replies": rho(rows.iter().map(|r| r.replies_per_day).collect()),
            }),
        );
    }
    files.insert("fig4_size_activity.csv".to_owned(), w.finish());

    let cohort_users: BTreeSet<AccountRef> = egos.iter().cloned().collect();
    let mut w = Csv::new(&[
        "day",
        "users",
        "active_directed",
        "active_undirected",
        "mean_directed_toots",
        "mean_undirected_toots",
    ]);
    for r in activity::lifespan_series(&human_toots, &cohort_users, t_end) {
        w.row(&[
            r.day.to_string(),
            r.users.to_string(),
            r.active_directed.to_string(),
            r.active_undirected.to_string(),
            num(r.mean_directed_toots),
            num(r.mean_undirected_toots),
        ]);
    }
    files.insert("fig5_lifespan.csv".to_owned(), w.finish());

    // Structural analysis.
    let clustered = ego_networks(&filtered, config.bandwidth_quantile, scope)?;
    let unconverged = clustered.iter().filter(|(_, c)| !c.converged).count();
    let networks: Vec<EgoNetwork> = clustered.into_iter().map(|(n, _)| n).collect();
    let excluded = egos.len() - networks.len();
    let hist = circles::circle_count_distribution(&networks);
    let table = circles::cohort_aggregate(&networks);

    let mut w = Csv::new(&["circles", "egos"]);
    for (k, n) in &hist {
        w.row(&[k.to_string(), n.to_string()]);
    }
    files.insert("circle_histogram.csv".to_owned(), w.finish());

    let mut w = Csv::new(&["num_circles", "egos", "ego_network_size_active"]);
    for (k, row) in &table.rows {
        w.row(&[k.to_string(), row.egos.to_string(), num(row.network_size())]);
    }
    files.insert("table_V.csv".to_owned(), w.finish());
    files.insert("table_VI.csv".to_owned(), cohort_csv(&table, false, |r| &r.mean_sizes));
    files.insert("table_VII.csv".to_owned(), cohort_csv(&table, true, |r| &r.mean_ratios));
    files.insert("table_VIII.csv".to_owned(), cohort_csv(&table, false, |r| &r.mean_frequencies));
    files.insert("table_IX.csv".to_owned(), cohort_csv(&table, false, |r| &r.mean_bond_lengths));

    let mode = hist.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(k, _)| *k);
    let summary = json!({
        "config": config,
        "dataset": {
            "source": ds.config.source,
            "t_end": timeutil::format_ts(&ds.config.t_end),
        },
        "table_I": table_i,
        "table_II": toot_summary_json(&table_ii),
        "categories": cat_rows.iter().map(|c| json!({
            "type": c.category.name(), "count": c.count, "percent": c.percent,
        })).collect::<Vec<_>>(),
        "interaction_mix_unknown": mix.unknown,
        "analysed_egos": egos.len(),
        "egos_without_filtered_ties": excluded,
        "bot_egos_excluded": if config.exclude_bots { table_i.bot_ego } else { 0 },
        "clustered_egos": networks.len(),
        "unconverged_egos": unconverged,
        "circle_count_mode": mode,
        "pearson": correlations,
    });
    let mut bytes = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    bytes.push(b'\n');
    files.insert(SUMMARY_FILE.to_owned(), bytes);

    info!(
        "analysed {} egos, {} clustered, circle-count mode {:?}",
        egos.len(),
        networks.len(),
        mode
    );
    Ok(Report {
        files,
        networks,
        cohort_table: table,
    })
}

fn toot_summary_json(s: &TootSummary) -> Value {
    let map: serde_json::Map<String, Value> = TootSummary::HEADER
        .iter()
        .zip(s.row())
        .map(|(k, v)| ((*k).to_owned(), json!(v)))
        .collect();
    Value::Object(map)
}

/// Writes the report so that `out` either keeps its previous content or
/// holds the complete new report.
pub fn write_atomic(report: &Report, out: &Path) -> Result<(), ReportError> {
    let io_err = |path: &Path| {
        let path = path.to_owned();
        move |source| ReportError::Io { path, source }
    };
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_owned(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(io_err(&parent))?;
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(io_err(&tmp))?;
    }
    fs::create_dir(&tmp).map_err(io_err(&tmp))?;
    for (file, bytes) in &report.files {
        let p = tmp.join(file);
        fs::write(&p, bytes).map_err(io_err(&p))?;
    }
    if out.exists() {
        let old = parent.join(format!(".{name}.old-{}", std::process::id()));
        fs::rename(out, &old).map_err(io_err(out))?;
        fs::rename(&tmp, out).map_err(io_err(out))?;
        fs::remove_dir_all(&old).map_err(io_err(&old))?;
    } else {
        fs::rename(&tmp, out).map_err(io_err(out))?;
    }
    Ok(())
}

/// Checks a dataset directory; every returned string names one violation.
pub fn validate(handle: &DatasetHandle, config: &Config) -> Vec<String> {
    let mut out = Vec::new();
    let ds = match handle.load() {
        Ok(ds) => ds,
        Err(e) => return vec![format!("dataset unreadable: {e}")],
    };
    let t_end = ds.config.t_end;

    match handle.read_raw_ties() {
        Err(e) => out.push(format!("ties.csv unreadable: {e}")),
        Ok(rows) => {
            for r in &rows {
                let at = format!("ties.csv line {}", r.line);
                if r.contacts < 1 {
                    out.push(format!("{at}: contact count C={} must be >= 1", r.contacts));
                }
                if r.ego.parse::<AccountRef>().is_err() || r.alter.parse::<AccountRef>().is_err() {
                    out.push(format!("{at}: malformed account handle"));
                }
                match (r.first_contact, r.last_contact) {
                    (Some(t0), Some(tl)) => {
                        if !(t0 <= tl && tl <= t_end) {
                            out.push(format!("{at}: contacts must satisfy T0 <= T_last <= T_end"));
                        }
                        if r.contacts >= 1 {
                            match annual_frequency(r.contacts as u32, t0, t_end) {
                                Ok(f) if (f - r.frequency).abs() <= 1e-9 * f.max(1.0) => {}
                                Ok(f) => out.push(format!("{at}: F={} inconsistent with C, T0 (expected {f})", r.frequency)),
                                Err(e) => out.push(format!("{at}: {e}")),
                            }
                        }
                    }
                    _ => out.push(format!("{at}: missing T0 or T_last")),
                }
                if r.frequency.is_nan() || r.frequency <= 0.0 {
                    out.push(format!("{at}: frequency F={} must be positive", r.frequency));
                }
            }
            match handle.rebuild_ties_from_toots() {
                Ok(rebuilt) => {
                    let on_disk = fs::read_to_string(handle.path(crate::tie_store::TIES_FILE)).unwrap_or_default();
                    if rebuilt != on_disk {
                        out.push("ties.csv differs from ties rebuilt from the toots log".to_owned());
                    }
                }
                Err(e) => out.push(format!("cannot rebuild ties from toots: {e}")),
            }
        }
    }

    let derived = ds.interactions_from_toots().len();
    if derived != ds.interactions.len() {
        out.push(format!(
            "interactions.jsonl holds {} records but the toots log yields {derived}",
            ds.interactions.len()
        ));
    }

    // Structural invariants under the given analysis settings.
    let ties = match ds.ties(t_end) {
        Ok(t) => t,
        Err(e) => {
            out.push(format!("tie aggregation failed: {e}"));
            return out;
        }
    };
    let filter = config.filter();
    let mut filtered = BTreeMap::new();
    for (ego, ts) in &ties {
        let (active, inactive) = split_active_with(ts, config.active_frequency_threshold);
        if active.len() + inactive.len() != ts.len() {
            out.push(format!("{ego}: active/inactive split does not partition the ties"));
        }
        let f = filter_ties(ts, t_end, &filter);
        if f.iter().any(|t| t.frequency < config.active_frequency_threshold) {
            out.push(format!("{ego}: filtered tie outside the active set"));
        }
        filtered.insert(ego.clone(), f);
    }
    let scope = if config.rings_mode {
        StatsScope::Rings
    } else {
        StatsScope::Cumulative
    };
    match ego_networks(&filtered, config.bandwidth_quantile, scope) {
        Ok(nets) => {
            for (net, _) in &nets {
                out.extend(net.violations(scope));
                let n = filtered[&net.ego].len();
                if net.size() != n {
                    out.push(format!("{}: outermost circle holds {} of {n} filtered ties", net.ego, net.size()));
                }
            }
            let nets: Vec<EgoNetwork> = nets.into_iter().map(|(n, _)| n).collect();
            let hist = circles::circle_count_distribution(&nets);
            if hist.values().sum::<usize>() != nets.len() {
                out.push("circle histogram mass differs from ego count".to_owned());
            }
        }
        Err(e) => out.push(format!("clustering failed: {e}")),
    }

    let categories = activity::categorize_users(&ds.toots, config.acquisition_date);
    let total: usize = activity::category_table(&categories).iter().map(|c| c.count).sum();
    if total != categories.len() {
        out.push("user categories do not partition the users".to_owned());
    }
    out
}
