//! Activity analyses: user categories around the acquisition date, daily
//! series, category interaction mix, lifespan-aligned activity and
//! size–activity correlation.
//!
//! Days are UTC calendar days. A toot on the acquisition date counts as
//! "after".

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::fedi_client::AccountRef;
use crate::interaction_model::{classify_toot, Interaction, Toot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UserCategory {
    /// Active both before and after the acquisition.
    Aficionados,
    /// Active only before.
    Others1,
    /// Active only after.
    Others2,
}

impl UserCategory {
    pub const ALL: [UserCategory; 3] = [Self::Aficionados, Self::Others1, Self::Others2];

    pub fn name(self) -> &'static str {
        match self {
            Self::Aficionados => "Aficionados",
            Self::Others1 => "Others1",
            Self::Others2 => "Others2",
        }
    }

    /// Row and column of this category in [`InteractionMix`].
    pub fn index(self) -> usize {
        self as usize
    }
}

pub fn categorize_user(first_toot: NaiveDate, last_toot: NaiveDate, acquisition: NaiveDate) -> UserCategory {
    debug_assert!(first_toot <= last_toot);
    match (first_toot < acquisition, last_toot >= acquisition) {
        (true, true) => UserCategory::Aficionados,
        (true, false) => UserCategory::Others1,
        (false, _) => UserCategory::Others2,
    }
}

fn day(ts: &DateTime<Utc>) -> NaiveDate {
    ts.date_naive()
}

/// Per-user first/last toot days.
pub fn activity_spans<'a>(toots: impl IntoIterator<Item = &'a Toot>) -> BTreeMap<AccountRef, (NaiveDate, NaiveDate)> {
    let mut spans: BTreeMap<AccountRef, (NaiveDate, NaiveDate)> = BTreeMap::new();
    for t in toots {
        let d = day(&t.created_at);
        spans
            .entry(t.author.clone())
            .and_modify(|(lo, hi)| {
                *lo = (*lo).min(d);
                *hi = (*hi).max(d);
            })
            .or_insert((d, d));
    }
    spans
}

pub fn categorize_users<'a>(
    toots: impl IntoIterator<Item = &'a Toot>,
    acquisition: NaiveDate,
) -> BTreeMap<AccountRef, UserCategory> {
    activity_spans(toots)
        .into_iter()
        .map(|(u, (lo, hi))| (u, categorize_user(lo, hi, acquisition)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CategoryCount {
    pub category: UserCategory,
    pub count: usize,
    pub percent: f64,
}

/// Count and percentage per category, in [`UserCategory::ALL`] order.
pub fn category_table(categories: &BTreeMap<AccountRef, UserCategory>) -> Vec<CategoryCount> {
    let total = categories.len();
    UserCategory::ALL
        .iter()
        .map(|&c| {
            let count = categories.values().filter(|&&v| v == c).count();
            CategoryCount {
                category: c,
                count,
                percent: if total == 0 {
                    0.0
                } else {
                    100.0 * count as f64 / total as f64
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyRow {
    pub date: NaiveDate,
    /// Users with a toot on or before this day.
    pub cumulative: usize,
    /// Users registered by this day with a toot strictly after it.
    pub alive: usize,
    pub active_directed: usize,
    pub active_undirected: usize,
    pub directed_toots: usize,
    pub undirected_toots: usize,
    /// Toots of the day per user registered so far.
    pub mean_toots_per_user: f64,
    /// `alive / cumulative`; `None` when undefined.
    pub ratio_active_registered: Option<f64>,
    /// `directed_toots / undirected_toots`; `None` when undefined.
    pub ratio_directed_undirected: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// One row per calendar day from the first to the last toot.
pub fn daily_series(toots: &[Toot]) -> Vec<DailyRow> {
    let spans = activity_spans(toots);
    let Some(start) = spans.values().map(|s| s.0).min() else {
        return Vec::new();
    };
    let end = spans.values().map(|s| s.1).max().unwrap();
    let n_days = (end - start).num_days() as usize + 1;
    let idx = |d: NaiveDate| (d - start).num_days() as usize;

    let mut first_count = vec![0usize; n_days];
    let mut last_count = vec![0usize; n_days];
    for (lo, hi) in spans.values() {
        first_count[idx(*lo)] += 1;
        last_count[idx(*hi)] += 1;
    }
    let mut directed_users: Vec<BTreeSet<&AccountRef>> = vec![BTreeSet::new(); n_days];
    let mut undirected_users: Vec<BTreeSet<&AccountRef>> = vec![BTreeSet::new(); n_days];
    let mut directed_toots = vec![0usize; n_days];
    let mut undirected_toots = vec![0usize; n_days];
    for t in toots {
        let i = idx(day(&t.created_at));
        if classify_toot(t).directed {
            directed_users[i].insert(&t.author);
            directed_toots[i] += 1;
        } else {
            undirected_users[i].insert(&t.author);
            undirected_toots[i] += 1;
        }
    }

    let mut cumulative = 0;
    let mut ended = 0;
    (0..n_days)
        .map(|i| {
            cumulative += first_count[i];
            ended += last_count[i];
            // Registered users that post again later.
            let alive = cumulative - ended;
            DailyRow {
                date: start + chrono::Days::new(i as u64),
                cumulative,
                alive,
                active_directed: directed_users[i].len(),
                active_undirected: undirected_users[i].len(),
                directed_toots: directed_toots[i],
                undirected_toots: undirected_toots[i],
                mean_toots_per_user: (directed_toots[i] + undirected_toots[i]) as f64 / cumulative as f64,
                ratio_active_registered: ratio(alive, cumulative),
                ratio_directed_undirected: ratio(directed_toots[i], undirected_toots[i]),
            }
        })
        .collect()
}

/// Ego-category → alter-category interaction counts and row fractions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionMix {
    pub counts: [[u64; 3]; 3],
    /// Row-normalized; `None` for rows without interactions.
    pub fractions: [Option<[f64; 3]>; 3],
    /// Interactions with an uncategorized endpoint.
    pub unknown: u64,
}

pub fn interaction_mix<'a>(
    interactions: impl IntoIterator<Item = &'a Interaction>,
    categories: &BTreeMap<AccountRef, UserCategory>,
) -> InteractionMix {
    let mut counts = [[0u64; 3]; 3];
    let mut unknown = 0;
    for ix in interactions {
        match (categories.get(&ix.ego), categories.get(&ix.alter)) {
            (Some(e), Some(a)) => counts[e.index()][a.index()] += 1,
            _ => unknown += 1,
        }
    }
    let fractions = counts.map(|row| {
        let total: u64 = row.iter().sum();
        (total > 0).then(|| row.map(|c| c as f64 / total as f64))
    });
    InteractionMix {
        counts,
        fractions,
        unknown,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LifespanRow {
    /// 1-based day since the first toot.
    pub day: usize,
    /// Users whose lifespan reaches this day.
    pub users: usize,
    /// Users posting a directed toot on this lifespan day or later.
    pub active_directed: usize,
    pub active_undirected: usize,
    pub mean_directed_toots: f64,
    pub mean_undirected_toots: f64,
}

/// Calendar days from the first toot up to (not including) the day of
/// `t_end`, at least 1.
pub fn lifespan_days(first_toot: NaiveDate, t_end: DateTime<Utc>) -> usize {
    ((day(&t_end) - first_toot).num_days()).max(1) as usize
}

/// Activity aligned on each user's first toot. Entry `x` aggregates users
/// whose lifespan is at least `x` days.
pub fn lifespan_series(toots: &[Toot], users: &BTreeSet<AccountRef>, t_end: DateTime<Utc>) -> Vec<LifespanRow> {
    let spans = activity_spans(toots.iter().filter(|t| users.contains(&t.author)));
    let lifespans: BTreeMap<&AccountRef, (NaiveDate, usize)> = spans
        .iter()
        .map(|(u, (lo, _))| (u, (*lo, lifespan_days(*lo, t_end))))
        .collect();
    let Some(max_len) = lifespans.values().map(|v| v.1).max() else {
        return Vec::new();
    };

    // users(x) = #lifespans >= x, accumulated from the top down.
    let mut with_len = vec![0usize; max_len + 2];
    for (_, len) in lifespans.values() {
        with_len[*len] += 1;
    }
    let mut users_from = vec![0usize; max_len + 2];
    for x in (1..=max_len).rev() {
        users_from[x] = users_from[x + 1] + with_len[x];
    }
    let mut directed = vec![0.0; max_len + 1];
    let mut undirected = vec![0.0; max_len + 1];
    let mut last_directed: BTreeMap<&AccountRef, usize> = BTreeMap::new();
    let mut last_undirected: BTreeMap<&AccountRef, usize> = BTreeMap::new();
    for t in toots {
        let Some((first, len)) = lifespans.get(&t.author) else {
            continue;
        };
        let x = (day(&t.created_at) - *first).num_days() as usize + 1;
        if x > *len {
            continue;
        }
        let (bucket, last) = if classify_toot(t).directed {
            (&mut directed, &mut last_directed)
        } else {
            (&mut undirected, &mut last_undirected)
        };
        bucket[x] += 1.0;
        let e = last.entry(&t.author).or_insert(0);
        *e = (*e).max(x);
    }
    // Users still posting at day x are those whose last toot is at x or later.
    let still_active = |last: &BTreeMap<&AccountRef, usize>| {
        let mut at = vec![0usize; max_len + 2];
        for &l in last.values() {
            at[l] += 1;
        }
        let mut acc = 0;
        let mut out = vec![0usize; max_len + 2];
        for x in (1..=max_len).rev() {
            acc += at[x];
            out[x] = acc;
        }
        out
    };
    let active_directed = still_active(&last_directed);
    let active_undirected = still_active(&last_undirected);

    (1..=max_len)
        .map(|x| (x, users_from[x]))
        .map(|(x, users)| LifespanRow {
            day: x,
            users,
            active_directed: active_directed[x],
            active_undirected: active_undirected[x],
            mean_directed_toots: directed[x] / users as f64,
            mean_undirected_toots: undirected[x] / users as f64,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorrelationError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two pairs, got {0}")]
    TooShort(usize),
}

/// Pearson product-moment correlation. `Ok(None)` when either series has
/// zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>, CorrelationError> {
    if x.len() != y.len() {
        return Err(CorrelationError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(CorrelationError::TooShort(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeActivityRow {
    pub ego: AccountRef,
    pub alters: usize,
    pub lifespan_days: usize,
    pub toots_per_day: f64,
    pub directed_per_day: f64,
    pub replies_per_day: f64,
}

/// Alter counts against mean daily activity. `alter_counts` supplies the
/// (filtered or unfiltered) number of alters per ego.
pub fn size_activity_table(
    egos: &[AccountRef],
    toots: &[Toot],
    alter_counts: &BTreeMap<AccountRef, usize>,
    t_end: DateTime<Utc>,
) -> Vec<SizeActivityRow> {
    let wanted: BTreeSet<&AccountRef> = egos.iter().collect();
    let mut per: BTreeMap<&AccountRef, (NaiveDate, [usize; 3])> = BTreeMap::new();
    for t in toots.iter().filter(|t| wanted.contains(&t.author)) {
        let c = classify_toot(t);
        let e = per.entry(&t.author).or_insert((day(&t.created_at), [0; 3]));
        e.0 = e.0.min(day(&t.created_at));
        e.1[0] += 1;
        e.1[1] += c.directed as usize;
        e.1[2] += c.has_reply as usize;
    }
    egos.iter()
        .filter_map(|ego| {
            let (first, counts) = per.get(ego)?;
            let days = lifespan_days(*first, t_end);
            Some(SizeActivityRow {
                ego: ego.clone(),
                alters: alter_counts.get(ego).copied().unwrap_or(0),
                lifespan_days: days,
                toots_per_day: counts[0] as f64 / days as f64,
                directed_per_day: counts[1] as f64 / days as f64,
                replies_per_day: counts[2] as f64 / days as f64,
            })
        })
        .collect()
}
