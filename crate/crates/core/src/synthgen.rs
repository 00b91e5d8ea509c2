//! Synthetic interaction logs with planted circle structure.
//!
//! Each planted alter belongs to a ring with a nominal contact rate. The
//! alter's own rate is the ring rate times a log-normal jitter factor, and its
//! contacts form a homogeneous Poisson process over the observation window.
//! The first contact is forced before `end - 6 months` and sequences are
//! conditioned on at least two contacts, so every planted alter is meant to
//! survive tie filtering. Rings whose expected contact count over the window
//! is below two are reported as infeasible and their alters flagged in the
//! ground truth.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fedi_client::{Account, AccountRef};
use crate::interaction_model::{extract_interactions, Toot};
use crate::tie_store::{Dataset, DatasetConfig, DatasetHandle, StoreError};
use crate::timeutil::{self, ts_millis, DAYS_PER_YEAR, SIX_MONTHS_DAYS};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const SYNTH_INSTANCE: &str = "synth.example";

/// Tail resamples before falling back to a forced second contact.
const MAX_RESAMPLES: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid planted model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedModel {
    /// Expected alters per ring, innermost first. A fractional part is
    /// realised per ego by rounding up with that probability.
    pub ring_sizes: Vec<f64>,
    /// Contacts per year, strictly decreasing outward.
    pub ring_frequencies: Vec<f64>,
    /// Standard deviation of the log of the per-alter rate multiplier.
    #[serde(default)]
    pub frequency_jitter: f64,
    #[serde(with = "ts_millis")]
    pub window_start: DateTime<Utc>,
    #[serde(with = "ts_millis")]
    pub window_end: DateTime<Utc>,
    #[serde(default)]
    pub rng_seed: u64,
    /// Rate of undirected toots per year for each ego.
    #[serde(default)]
    pub undirected_per_year: f64,
}

impl PlantedModel {
    /// Offline layer model (1.5/5/15/50/150 alters contacted every 5 days,
    /// weekly, monthly, twice a year, yearly) over the 18 months ending
    /// 2023-12-31.
    pub fn canonical() -> Self {
        let end = timeutil::start_of_day(NaiveDate::from_ymd_opt(2023, 12, 31).unwrap());
        Self {
            ring_sizes: vec![1.5, 3.5, 10.0, 35.0, 100.0],
            ring_frequencies: vec![DAYS_PER_YEAR / 5.0, DAYS_PER_YEAR / 7.0, 12.0, 2.0, 1.0],
            frequency_jitter: 0.1,
            window_start: end - timeutil::duration_from_days(1.5 * DAYS_PER_YEAR),
            window_end: end,
            rng_seed: 0,
            undirected_per_year: 52.0,
        }
    }

    pub fn window_years(&self) -> f64 {
        timeutil::years_between(self.window_start, self.window_end)
    }

    /// Cumulative expected circle sizes.
    pub fn cumulative_sizes(&self) -> Vec<f64> {
        self.ring_sizes
            .iter()
            .scan(0.0, |acc, s| {
                *acc += s;
                Some(*acc)
            })
            .collect()
    }

    /// Checks structural validity and returns feasibility warnings.
    pub fn validate(&self) -> Result<Vec<String>, SynthError> {
        let bad = |m: String| Err(SynthError::InvalidModel(m));
        if self.ring_sizes.is_empty() || self.ring_sizes.len() != self.ring_frequencies.len() {
            return bad("ring_sizes and ring_frequencies must be non-empty and equally long".into());
        }
        if self.ring_sizes.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("ring sizes must be positive".into());
        }
        if self.ring_frequencies.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return bad("ring frequencies must be positive".into());
        }
        if self.ring_frequencies.windows(2).any(|w| w[1] >= w[0]) {
            return bad("ring frequencies must be strictly decreasing".into());
        }
        if !(self.frequency_jitter >= 0.0 && self.frequency_jitter.is_finite()) {
            return bad("frequency_jitter must be non-negative".into());
        }
        if !(self.undirected_per_year >= 0.0 && self.undirected_per_year.is_finite()) {
            return bad("undirected_per_year must be non-negative".into());
        }
        if timeutil::days_between(self.window_start, self.window_end) < DAYS_PER_YEAR {
            return bad("window must span at least one year".into());
        }
        let mut warnings = Vec::new();
        let outer = *self.ring_frequencies.last().unwrap();
        if outer < 1.0 {
            warnings.push(format!("outermost ring rate {outer}/yr is below the active threshold"));
        }
        for (ring, f) in self.ring_frequencies.iter().enumerate() {
            let expected = f * self.window_years();
            if expected < 2.0 {
                warnings.push(format!(
                    "ring {ring}: {expected:.2} expected contacts in window, plants conditioned on C >= 2"
                ));
            }
        }
        Ok(warnings)
    }

    fn ring_feasible(&self, ring: usize) -> bool {
        self.ring_frequencies[ring] * self.window_years() >= 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub ego: AccountRef,
    pub alter: AccountRef,
    pub ring: usize,
    pub planted_rate: f64,
    pub contacts: u32,
    /// Whether the ring's nominal rate can yield two contacts in the window.
    pub feasible: bool,
    /// Whether the second contact had to be inserted by hand.
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoPlant {
    pub account: Account,
    /// Chronological.
    pub toots: Vec<Toot>,
    pub truth: Vec<GroundTruthRow>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Per-ego seed, independent of generation order.
pub fn ego_seed(seed: u64, ego_index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(ego_index as u64))
}

pub fn ego_ref(ego_index: usize) -> AccountRef {
    AccountRef::new(&format!("ego{ego_index:04}"), SYNTH_INSTANCE).unwrap()
}

fn sample_contacts(
    rng: &mut ChaCha8Rng,
    rate_per_year: f64,
    start: f64,
    cutoff: f64,
    end: f64,
) -> (Vec<f64>, bool) {
    let rate_per_day = rate_per_year / DAYS_PER_YEAR;
    let exp = Exp::new(rate_per_day).unwrap();
    let mut first = start + exp.sample(rng);
    if first >= cutoff {
        first = rng.random_range(start..cutoff);
    }
    for _ in 0..MAX_RESAMPLES {
        let mut events = vec![first];
        let mut t = first;
        loop {
            t += exp.sample(rng);
            if t > end {
                break;
            }
            events.push(t);
        }
        if events.len() >= 2 {
            return (events, false);
        }
    }
    (vec![first, rng.random_range(first..end)], true)
}

/// Plants one ego. Deterministic in `(model.rng_seed, ego_index)`.
pub fn generate_ego(model: &PlantedModel, ego_index: usize) -> EgoPlant {
    let mut rng = ChaCha8Rng::seed_from_u64(ego_seed(model.rng_seed, ego_index));
    let ego = ego_ref(ego_index);
    let origin = model.window_start;
    let end = timeutil::days_between(origin, model.window_end);
    let cutoff = end - SIX_MONTHS_DAYS;
    let jitter = LogNormal::new(0.0, model.frequency_jitter).unwrap();

    let mut events: Vec<(f64, AccountRef)> = Vec::new();
    let mut truth = Vec::new();
    for (ring, (&size, &rate)) in model
        .ring_sizes
        .iter()
        .zip(&model.ring_frequencies)
        .enumerate()
    {
        let n = size.floor() as usize + rng.random_bool(size.fract()) as usize;
        for j in 0..n {
            let alter =
                AccountRef::new(&format!("ego{ego_index:04}-r{ring}-{j:03}"), SYNTH_INSTANCE).unwrap();
            let planted_rate = if model.frequency_jitter > 0.0 {
                rate * jitter.sample(&mut rng)
            } else {
                rate
            };
            let (times, forced) = sample_contacts(&mut rng, planted_rate, 0.0, cutoff, end);
            truth.push(GroundTruthRow {
                ego: ego.clone(),
                alter: alter.clone(),
                ring,
                planted_rate,
                contacts: times.len() as u32,
                feasible: model.ring_feasible(ring),
                forced,
            });
            events.extend(times.into_iter().map(|t| (t, alter.clone())));
        }
    }
    let mut undirected = Vec::new();
    if model.undirected_per_year > 0.0 {
        let exp = Exp::new(model.undirected_per_year / DAYS_PER_YEAR).unwrap();
        let mut t = exp.sample(&mut rng);
        while t <= end {
            undirected.push(t);
            t += exp.sample(&mut rng);
        }
    }

    let at = |days: f64| timeutil::truncate_millis(origin + timeutil::duration_from_days(days));
    let mut toots: Vec<Toot> = events
        .into_iter()
        .map(|(t, alter)| Toot {
            toot_id: String::new(),
            author: ego.clone(),
            created_at: at(t),
            in_reply_to_account: Some(alter.clone()),
            mentions: vec![alter],
            boost_of_author: None,
            hashtags: Vec::new(),
            urls: Vec::new(),
            media_count: 0,
            char_count: 40,
        })
        .chain(undirected.into_iter().map(|t| Toot {
            toot_id: String::new(),
            author: ego.clone(),
            created_at: at(t),
            in_reply_to_account: None,
            mentions: Vec::new(),
            boost_of_author: None,
            hashtags: Vec::new(),
            urls: Vec::new(),
            media_count: 0,
            char_count: 60,
        }))
        .collect();
    toots.sort_by(|a, b| {
        a.created_at
            .cmp(&b.created_at)
            .then_with(|| a.mentions.cmp(&b.mentions))
    });
    for (seq, t) in toots.iter_mut().enumerate() {
        t.toot_id = (ego_index as u64 * 1_000_000_000 + seq as u64 + 1).to_string();
    }

    EgoPlant {
        account: Account {
            account_id: (ego_index + 1).to_string(),
            username: ego.username().to_owned(),
            instance: SYNTH_INSTANCE.to_owned(),
            is_bot: false,
            created_at: model.window_start - chrono::Duration::days(1),
        },
        toots,
        truth,
    }
}

/// A generated cohort with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub dataset: Dataset,
    pub truth: Vec<GroundTruthRow>,
    pub warnings: Vec<String>,
}

impl SyntheticCohort {
    /// Ground-truth ring of each planted alter, keyed by `(ego, alter)`.
    pub fn truth_map(&self) -> BTreeMap<(AccountRef, AccountRef), usize> {
        self.truth
            .iter()
            .map(|r| ((r.ego.clone(), r.alter.clone()), r.ring))
            .collect()
    }

    pub fn ground_truth_csv(&self) -> String {
        let mut out = String::from("ego,alter,ring,planted_rate,contacts,feasible,forced\n");
        for r in &self.truth {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.ego, r.alter, r.ring, r.planted_rate, r.contacts, r.feasible, r.forced
            ));
        }
        out
    }

    /// Writes the dataset plus `ground_truth.csv` under `root`.
    pub fn save(&self, root: impl AsRef<Path>) -> Result<DatasetHandle, SynthError> {
        let handle = DatasetHandle::save(root, &self.dataset)?;
        fs::write(handle.path(GROUND_TRUTH_FILE), self.ground_truth_csv())?;
        Ok(handle)
    }
}

/// Generates `n_egos` independent egos; `seed` replaces the model's seed.
pub fn generate_cohort(
    model: &PlantedModel,
    n_egos: usize,
    seed: u64,
    acquisition_date: NaiveDate,
) -> Result<SyntheticCohort, SynthError> {
    let warnings = model.validate()?;
    for w in &warnings {
        warn!("{w}");
    }
    let model = PlantedModel {
        rng_seed: seed,
        ..model.clone()
    };
    let plants: Vec<EgoPlant> = (0..n_egos)
        .into_par_iter()
        .map(|i| generate_ego(&model, i))
        .collect();

    let mut dataset = Dataset::new(DatasetConfig::new(model.window_end, acquisition_date, "synth"));
    let mut truth = Vec::new();
    for plant in plants {
        dataset.accounts.push(plant.account);
        dataset
            .interactions
            .extend(plant.toots.iter().flat_map(extract_interactions));
        dataset.toots.extend(plant.toots);
        truth.extend(plant.truth);
    }
    Ok(SyntheticCohort {
        dataset,
        truth,
        warnings,
    })
}
