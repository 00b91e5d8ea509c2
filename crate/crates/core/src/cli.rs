//! Configuration and command implementations behind the `fedinet` binary.
//!
//! One config file (TOML, or JSON when the extension is `.json`) drives every
//! command. Missing keys take their defaults; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::crawler::{CrawlError, Crawler, CHECKPOINT_FILE};
use crate::fedi_client::{FediClient, Transport};
use crate::report::{self, ReportError};
use crate::synthgen::{self, PlantedModel, SynthError};
use crate::tie_store::{DatasetHandle, FilterParams, StoreError};
use crate::timeutil;

pub const DATA_DIR_ENV: &str = "FEDINET_DATA_DIR";

/// Which user category the per-ego analyses cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    #[default]
    All,
    Aficionados,
    Others1,
    Others2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    #[serde(deserialize_with = "date_de")]
    pub t_end: NaiveDate,
    #[serde(deserialize_with = "date_de")]
    pub acquisition_date: NaiveDate,
    pub target_n: usize,
    pub bandwidth_quantile: f64,
    pub min_contacts: u32,
    pub min_relationship_age_days: f64,
    /// Ties need `F >` this to be analysed; alters with `F >=` it are active.
    pub active_frequency_threshold: f64,
    pub exclude_bots: bool,
    pub rings_mode: bool,
    pub cohort: Cohort,
}

/// Accepts `"YYYY-MM-DD"` strings as well as bare TOML dates.
fn date_de<'de, D: serde::Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Text(String),
        Toml(toml::value::Datetime),
    }
    let text = match Repr::deserialize(d)? {
        Repr::Text(s) => s,
        Repr::Toml(dt) => dt.to_string(),
    };
    NaiveDate::parse_from_str(&text, "%Y-%m-%d").map_err(serde::de::Error::custom)
}

impl Default for Config {
    fn default() -> Self {
        Self {
            t_end: NaiveDate::from_ymd_opt(2023, 12, 31).unwrap(),
            acquisition_date: NaiveDate::from_ymd_opt(2022, 10, 27).unwrap(),
            target_n: 2000,
            bandwidth_quantile: crate::meanshift::DEFAULT_QUANTILE,
            min_contacts: 2,
            min_relationship_age_days: timeutil::SIX_MONTHS_DAYS,
            active_frequency_threshold: 1.0,
            exclude_bots: true,
            rings_mode: false,
            cohort: Cohort::All,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("invalid config key `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

impl Config {
    pub fn t_end_instant(&self) -> DateTime<Utc> {
        timeutil::start_of_day(self.t_end)
    }

    pub fn filter(&self) -> FilterParams {
        FilterParams {
            min_contacts: self.min_contacts,
            min_relationship_age_days: self.min_relationship_age_days,
            min_frequency: self.active_frequency_threshold,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key, message: &str| {
            Err(ConfigError::Invalid {
                key,
                message: message.to_owned(),
            })
        };
        if self.acquisition_date >= self.t_end {
            return bad("acquisition_date", "must be before t_end");
        }
        if self.target_n == 0 {
            return bad("target_n", "must be at least 1");
        }
        if !(self.bandwidth_quantile > 0.0 && self.bandwidth_quantile <= 1.0) {
            return bad("bandwidth_quantile", "must lie in (0, 1]");
        }
        if self.min_contacts == 0 {
            return bad("min_contacts", "must be positive");
        }
        if !(self.min_relationship_age_days > 0.0 && self.min_relationship_age_days.is_finite()) {
            return bad("min_relationship_age_days", "must be positive");
        }
        if !(self.active_frequency_threshold > 0.0 && self.active_frequency_threshold.is_finite()) {
            return bad("active_frequency_threshold", "must be positive");
        }
        Ok(())
    }

    pub fn from_str_with_format(text: &str, json: bool, path: &Path) -> Result<Self, ConfigError> {
        let parsed: Result<Config, String> = if json {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        };
        let cfg = parsed.map_err(|message| ConfigError::Syntax {
            path: path.to_owned(),
            message,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::from_str_with_format(&text, json, path)
    }
}

/// Resolves a relative output path against `FEDINET_DATA_DIR` when set.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_owned(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Crawl(#[from] CrawlError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{0}")]
    Usage(String),
}

/// Crawls from `seed`, or continues from `resume` when given.
pub fn cmd_crawl<T: Transport>(
    config: &Config,
    client: &FediClient<T>,
    seed: Option<&str>,
    out: &Path,
    resume: Option<&Path>,
) -> Result<DatasetHandle, CommandError> {
    let crawler = match (resume, seed) {
        (Some(cp), _) => {
            let c = Crawler::resume(client, cp)?;
            if c.state().target_n != config.target_n || c.state().t_end != config.t_end_instant() {
                warn!("checkpoint settings take precedence over the config for target_n and t_end");
            }
            c
        }
        (None, Some(seed)) => Crawler::start(
            client,
            seed,
            config.target_n,
            config.t_end_instant(),
            config.acquisition_date,
            out,
        )?,
        (None, None) => return Err(CommandError::Usage("crawl needs --seed or --resume".into())),
    };
    let handle = crawler.finish()?;
    info!(
        "crawl finished; dataset at {}, checkpoint {}",
        handle.root().display(),
        handle.path(CHECKPOINT_FILE).display()
    );
    Ok(handle)
}

/// Loads a planted model from TOML/JSON, falling back to the canonical one.
pub fn load_model(path: Option<&Path>, config: &Config) -> Result<PlantedModel, CommandError> {
    let Some(path) = path else {
        let mut m = PlantedModel::canonical();
        let span = m.window_end - m.window_start;
        m.window_end = config.t_end_instant();
        m.window_start = m.window_end - span;
        return Ok(m);
    };
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_owned(),
        source,
    })?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed: Result<PlantedModel, String> = if json {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|message| {
        CommandError::Config(ConfigError::Syntax {
            path: path.to_owned(),
            message,
        })
    })
}

pub fn cmd_synth(
    config: &Config,
    model: &PlantedModel,
    n_egos: usize,
    seed: u64,
    out: &Path,
) -> Result<DatasetHandle, CommandError> {
    let cohort = synthgen::generate_cohort(model, n_egos, seed, config.acquisition_date)?;
    Ok(cohort.save(out)?)
}

pub fn cmd_analyze(dataset: &Path, config: &Config, out: &Path) -> Result<report::Report, CommandError> {
    let handle = DatasetHandle::open(dataset)?;
    let ds = handle.load()?;
    let rep = report::analyze(&ds, config)?;
    report::write_atomic(&rep, out)?;
    Ok(rep)
}

/// Returns every invariant violation found in the dataset.
pub fn cmd_validate(dataset: &Path, config: &Config) -> Result<Vec<String>, CommandError> {
    let handle = DatasetHandle::open(dataset)?;
    Ok(report::validate(&handle, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_toml(s: &str) -> Result<Config, ConfigError> {
        Config::from_str_with_format(s, false, Path::new("c.toml"))
    }

    #[test]
    fn defaults_fill_missing_keys() {
        let c = parse_toml("target_n = 10\n").unwrap();
        assert_eq!(c.target_n, 10);
        assert_eq!(c.t_end, NaiveDate::from_ymd_opt(2023, 12, 31).unwrap());
        assert_eq!(c.min_relationship_age_days, 182.625);
        assert!(c.exclude_bots);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse_toml("bandwith_quantile = 0.3\n").unwrap_err().to_string();
        assert!(e.contains("bandwith_quantile"), "{e}");
    }

    #[test]
    fn invalid_value_names_key() {
        let e = parse_toml("bandwidth_quantile = 0.0\n").unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { key: "bandwidth_quantile", .. }));
        let e = parse_toml("acquisition_date = 2024-01-01\n").unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { key: "acquisition_date", .. }));
    }

    #[test]
    fn json_config() {
        let c = Config::from_str_with_format(
            r#"{"t_end": "2023-06-30", "cohort": "others2"}"#,
            true,
            Path::new("c.json"),
        )
        .unwrap();
        assert_eq!(c.cohort, Cohort::Others2);
        assert_eq!(c.t_end_instant().to_rfc3339(), "2023-06-30T00:00:00+00:00");
    }
}
