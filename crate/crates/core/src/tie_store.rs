//! Dataset persistence and ego–alter tie aggregation.
//!
//! A dataset directory holds append-only JSONL logs (`accounts.jsonl`,
//! `toots.jsonl`, `interactions.jsonl`), a derived `ties.csv` and the
//! immutable `config.json` snapshot. Ties can always be regenerated from the
//! toots log.
//!
//! Contact frequency is contacts per year measured up to the end of
//! observation: `F = C / ((T_end - T0) / 365.25 days)`, with durations under a
//! day clamped to one day.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::fedi_client::{Account, AccountRef};
use crate::interaction_model::{extract_interactions, Interaction, Toot};
use crate::timeutil::{self, ts_millis, DAYS_PER_YEAR, SIX_MONTHS_DAYS};

pub const ACCOUNTS_FILE: &str = "accounts.jsonl";
pub const TOOTS_FILE: &str = "toots.jsonl";
pub const INTERACTIONS_FILE: &str = "interactions.jsonl";
pub const TIES_FILE: &str = "ties.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const TIES_HEADER: &str = "ego,alter,C,T0,T_last,F";

#[derive(Debug, thiserror::Error)]
pub enum TieError {
    #[error("first contact {first} is not before observation end {t_end}")]
    FirstContactNotBeforeEnd { first: String, t_end: String },
    #[error("contact count must be at least 1")]
    NoContacts,
    #[error("interaction for ego {found} passed to tie building for {expected}")]
    WrongEgo { expected: String, found: String },
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Tie(#[from] TieError),
    #[error("dataset already exists at {0}")]
    AlreadyExists(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Aggregated relationship between an ego and one alter.
#[derive(Debug, Clone, PartialEq)]
pub struct TieRecord {
    pub ego: AccountRef,
    pub alter: AccountRef,
    pub contacts: u32,
    pub first_contact: DateTime<Utc>,
    pub last_contact: DateTime<Utc>,
    /// Contacts per year.
    pub frequency: f64,
}

impl TieRecord {
    /// Days between first and last contact.
    pub fn bond_length_days(&self) -> f64 {
        timeutil::days_between(self.first_contact, self.last_contact)
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.ego,
            self.alter,
            self.contacts,
            timeutil::format_ts(&self.first_contact),
            timeutil::format_ts(&self.last_contact),
            self.frequency
        )
    }
}

fn clamped_years(first: DateTime<Utc>, t_end: DateTime<Utc>) -> f64 {
    timeutil::days_between(first, t_end).max(1.0) / DAYS_PER_YEAR
}

pub fn annual_frequency(
    contacts: u32,
    first: DateTime<Utc>,
    t_end: DateTime<Utc>,
) -> Result<f64, TieError> {
    if contacts == 0 {
        return Err(TieError::NoContacts);
    }
    if first >= t_end {
        return Err(TieError::FirstContactNotBeforeEnd {
            first: timeutil::format_ts(&first),
            t_end: timeutil::format_ts(&t_end),
        });
    }
    Ok(contacts as f64 / clamped_years(first, t_end))
}

/// Aggregates one ego's interactions into per-alter ties, sorted by alter.
/// A contact exactly at `t_end` is treated like one a moment earlier.
pub fn build_ties<'a>(
    interactions: impl IntoIterator<Item = &'a Interaction>,
    ego: &AccountRef,
    t_end: DateTime<Utc>,
) -> Result<Vec<TieRecord>, TieError> {
    let mut acc: BTreeMap<&AccountRef, (u32, DateTime<Utc>, DateTime<Utc>)> = BTreeMap::new();
    for ix in interactions {
        if ix.ego != *ego {
            return Err(TieError::WrongEgo {
                expected: ego.to_string(),
                found: ix.ego.to_string(),
            });
        }
        if ix.timestamp > t_end {
            return Err(TieError::FirstContactNotBeforeEnd {
                first: timeutil::format_ts(&ix.timestamp),
                t_end: timeutil::format_ts(&t_end),
            });
        }
        let e = acc
            .entry(&ix.alter)
            .or_insert((0, ix.timestamp, ix.timestamp));
        e.0 += 1;
        e.1 = e.1.min(ix.timestamp);
        e.2 = e.2.max(ix.timestamp);
    }
    Ok(acc
        .into_iter()
        .map(|(alter, (c, first, last))| TieRecord {
            ego: ego.clone(),
            alter: alter.clone(),
            contacts: c,
            first_contact: first,
            last_contact: last,
            frequency: c as f64 / clamped_years(first, t_end),
        })
        .collect())
}

/// Thresholds for keeping a tie in the analysed ego network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub min_contacts: u32,
    pub min_relationship_age_days: f64,
    /// Kept ties need a frequency strictly above this.
    pub min_frequency: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            min_contacts: 2,
            min_relationship_age_days: SIX_MONTHS_DAYS,
            min_frequency: 1.0,
        }
    }
}

impl FilterParams {
    pub fn keeps(&self, tie: &TieRecord, t_end: DateTime<Utc>) -> bool {
        let cutoff = t_end - timeutil::duration_from_days(self.min_relationship_age_days);
        tie.first_contact < cutoff
            && tie.contacts >= self.min_contacts
            && tie.frequency > self.min_frequency
    }
}

/// Keeps ties older than six months with at least two contacts and more than
/// one contact per year.
pub fn filter_active_ties(ties: &[TieRecord], t_end: DateTime<Utc>) -> Vec<TieRecord> {
    filter_ties(ties, t_end, &FilterParams::default())
}

pub fn filter_ties(ties: &[TieRecord], t_end: DateTime<Utc>, params: &FilterParams) -> Vec<TieRecord> {
    ties.iter()
        .filter(|t| params.keeps(t, t_end))
        .cloned()
        .collect()
}

/// Partitions ties into active (`F >= 1`) and inactive alters.
pub fn split_active_network(ties: &[TieRecord]) -> (Vec<TieRecord>, Vec<TieRecord>) {
    split_active_with(ties, 1.0)
}

pub fn split_active_with(ties: &[TieRecord], threshold: f64) -> (Vec<TieRecord>, Vec<TieRecord>) {
    ties.iter().cloned().partition(|t| t.frequency >= threshold)
}

/// Immutable parameters recorded when a dataset is created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(with = "ts_millis")]
    pub t_end: DateTime<Utc>,
    pub acquisition_date: NaiveDate,
    pub filter: FilterParams,
    pub active_frequency_threshold: f64,
    /// Where the data came from (`crawl`, `synth`, `fixture`, ...).
    pub source: String,
}

impl DatasetConfig {
    pub fn new(t_end: DateTime<Utc>, acquisition_date: NaiveDate, source: &str) -> Self {
        Self {
            t_end,
            acquisition_date,
            filter: FilterParams::default(),
            active_frequency_threshold: 1.0,
            source: source.to_owned(),
        }
    }
}

/// A fully loaded dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    /// Egos, in collection order.
    pub accounts: Vec<Account>,
    pub toots: Vec<Toot>,
    pub interactions: Vec<Interaction>,
}

impl Dataset {
    pub fn new(config: DatasetConfig) -> Self {
        Self {
            config,
            accounts: Vec::new(),
            toots: Vec::new(),
            interactions: Vec::new(),
        }
    }

    /// Re-derives the interaction log from the toots log.
    pub fn interactions_from_toots(&self) -> Vec<Interaction> {
        self.toots.iter().flat_map(extract_interactions).collect()
    }

    /// Interactions grouped by ego, skipping any after `t_end`.
    pub fn interactions_by_ego(&self, t_end: DateTime<Utc>) -> BTreeMap<&AccountRef, Vec<&Interaction>> {
        let mut by_ego: BTreeMap<&AccountRef, Vec<&Interaction>> = BTreeMap::new();
        for ix in self.interactions.iter().filter(|ix| ix.timestamp <= t_end) {
            by_ego.entry(&ix.ego).or_default().push(ix);
        }
        by_ego
    }

    /// Unfiltered ties of every ego, built in parallel.
    pub fn ties(&self, t_end: DateTime<Utc>) -> Result<BTreeMap<AccountRef, Vec<TieRecord>>, TieError> {
        let grouped: Vec<(&AccountRef, Vec<&Interaction>)> =
            self.interactions_by_ego(t_end).into_iter().collect();
        grouped
            .into_par_iter()
            .map(|(ego, ixs)| Ok((ego.clone(), build_ties(ixs, ego, t_end)?)))
            .collect()
    }

    pub fn ties_csv(&self, t_end: DateTime<Utc>) -> Result<String, TieError> {
        let mut out = String::from(TIES_HEADER);
        out.push('\n');
        for ties in self.ties(t_end)?.values() {
            for t in ties {
                out.push_str(&t.to_csv_line());
                out.push('\n');
            }
        }
        Ok(out)
    }
}

/// One row of `ties.csv` as written, before any validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTieRow {
    pub line: usize,
    pub ego: String,
    pub alter: String,
    pub contacts: i64,
    pub first_contact: Option<DateTime<Utc>>,
    pub last_contact: Option<DateTime<Utc>>,
    pub frequency: f64,
}

/// Handle to a dataset directory on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetHandle {
    root: PathBuf,
}

impl DatasetHandle {
    /// Creates the directory (which must be absent or empty) and writes the
    /// config snapshot plus empty logs.
    pub fn create(root: impl AsRef<Path>, config: &DatasetConfig) -> Result<Self, StoreError> {
        let root = root.as_ref().to_owned();
        if root.join(CONFIG_FILE).exists() {
            return Err(StoreError::AlreadyExists(root));
        }
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let handle = Self { root };
        let cfg = handle.path(CONFIG_FILE);
        let json = serde_json::to_string_pretty(config).expect("config serializes");
        fs::write(&cfg, json + "\n").map_err(io_err(&cfg))?;
        for f in [ACCOUNTS_FILE, TOOTS_FILE, INTERACTIONS_FILE] {
            let p = handle.path(f);
            File::create(&p).map_err(io_err(&p))?;
        }
        Ok(handle)
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_owned();
        let cfg = root.join(CONFIG_FILE);
        if !cfg.is_file() {
            return Err(StoreError::Io {
                path: cfg,
                source: io::Error::new(io::ErrorKind::NotFound, "not a dataset directory"),
            });
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }

    pub fn config(&self) -> Result<DatasetConfig, StoreError> {
        let p = self.path(CONFIG_FILE);
        let raw = fs::read_to_string(&p).map_err(io_err(&p))?;
        serde_json::from_str(&raw).map_err(|e| StoreError::Parse {
            path: p,
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn writer(&self) -> Result<DatasetWriter, StoreError> {
        DatasetWriter::open(self)
    }

    pub fn load(&self) -> Result<Dataset, StoreError> {
        Ok(Dataset {
            config: self.config()?,
            accounts: read_jsonl(&self.path(ACCOUNTS_FILE))?,
            toots: read_jsonl(&self.path(TOOTS_FILE))?,
            interactions: read_jsonl(&self.path(INTERACTIONS_FILE))?,
        })
    }

    /// Writes every log of an in-memory dataset into a new directory.
    pub fn save(root: impl AsRef<Path>, dataset: &Dataset) -> Result<Self, StoreError> {
        let handle = Self::create(root, &dataset.config)?;
        let mut w = handle.writer()?;
        for a in &dataset.accounts {
            w.append_account(a)?;
        }
        for t in &dataset.toots {
            w.append_toot(t)?;
        }
        for ix in &dataset.interactions {
            w.append_interaction(ix)?;
        }
        w.flush()?;
        handle.write_ties(dataset)?;
        Ok(handle)
    }

    /// Derives `ties.csv` from the interaction log.
    pub fn write_ties(&self, dataset: &Dataset) -> Result<(), StoreError> {
        let csv = dataset.ties_csv(dataset.config.t_end)?;
        let p = self.path(TIES_FILE);
        fs::write(&p, csv).map_err(io_err(&p))
    }

    /// Regenerates interactions and ties from the toots log alone and returns
    /// the resulting `ties.csv` contents.
    pub fn rebuild_ties_from_toots(&self) -> Result<String, StoreError> {
        let mut ds = self.load()?;
        ds.interactions = ds.interactions_from_toots();
        Ok(ds.ties_csv(ds.config.t_end)?)
    }

    /// Parses `ties.csv` leniently so that invalid values can be reported.
    pub fn read_raw_ties(&self) -> Result<Vec<RawTieRow>, StoreError> {
        let p = self.path(TIES_FILE);
        let file = File::open(&p).map_err(io_err(&p))?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| StoreError::Parse {
                path: p.clone(),
                line,
                message: e.to_string(),
            })?;
            let field = |k: usize| rec.get(k).unwrap_or("").to_owned();
            let bad = |what: &str| StoreError::Parse {
                path: p.clone(),
                line,
                message: format!("unparsable {what}"),
            };
            rows.push(RawTieRow {
                line,
                ego: field(0),
                alter: field(1),
                contacts: field(2).trim().parse().map_err(|_| bad("C"))?,
                first_contact: timeutil::parse_ts(&field(3)).ok(),
                last_contact: timeutil::parse_ts(&field(4)).ok(),
                frequency: field(5).trim().parse().map_err(|_| bad("F"))?,
            });
        }
        Ok(rows)
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| StoreError::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Byte lengths of the three logs; used to roll back to a checkpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogOffsets {
    pub accounts: u64,
    pub toots: u64,
    pub interactions: u64,
}

/// Single-writer appender for a dataset's JSONL logs.
pub struct DatasetWriter {
    root: PathBuf,
    accounts: BufWriter<File>,
    toots: BufWriter<File>,
    interactions: BufWriter<File>,
    offsets: LogOffsets,
}

impl DatasetWriter {
    fn open(handle: &DatasetHandle) -> Result<Self, StoreError> {
        let open = |f: &str| -> Result<(BufWriter<File>, u64), StoreError> {
            let p = handle.path(f);
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&p)
                .map_err(io_err(&p))?;
            let len = file.metadata().map_err(io_err(&p))?.len();
            Ok((BufWriter::new(file), len))
        };
        let (accounts, a) = open(ACCOUNTS_FILE)?;
        let (toots, t) = open(TOOTS_FILE)?;
        let (interactions, i) = open(INTERACTIONS_FILE)?;
        Ok(Self {
            root: handle.root.clone(),
            accounts,
            toots,
            interactions,
            offsets: LogOffsets {
                accounts: a,
                toots: t,
                interactions: i,
            },
        })
    }

    /// Truncates the logs back to `offsets` and reopens for appending.
    pub fn rollback(handle: &DatasetHandle, offsets: LogOffsets) -> Result<Self, StoreError> {
        for (f, len) in [
            (ACCOUNTS_FILE, offsets.accounts),
            (TOOTS_FILE, offsets.toots),
            (INTERACTIONS_FILE, offsets.interactions),
        ] {
            let p = handle.path(f);
            let file = OpenOptions::new().write(true).open(&p).map_err(io_err(&p))?;
            let current = file.metadata().map_err(io_err(&p))?.len();
            if current < len {
                return Err(StoreError::Parse {
                    path: p,
                    line: 0,
                    message: format!("log is {current} bytes, checkpoint expects {len}"),
                });
            }
            file.set_len(len).map_err(io_err(&p))?;
        }
        DatasetWriter::open(handle)
    }

    fn append<T: Serialize>(w: &mut BufWriter<File>, offset: &mut u64, root: &Path, v: &T) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(v).expect("record serializes");
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io_err(root))?;
        *offset += line.len() as u64;
        Ok(())
    }

    pub fn append_account(&mut self, a: &Account) -> Result<(), StoreError> {
        Self::append(&mut self.accounts, &mut self.offsets.accounts, &self.root, a)
    }

    pub fn append_toot(&mut self, t: &Toot) -> Result<(), StoreError> {
        Self::append(&mut self.toots, &mut self.offsets.toots, &self.root, t)
    }

    pub fn append_interaction(&mut self, ix: &Interaction) -> Result<(), StoreError> {
        Self::append(
            &mut self.interactions,
            &mut self.offsets.interactions,
            &self.root,
            ix,
        )
    }

    pub fn flush(&mut self) -> Result<(), StoreError> {
        for w in [&mut self.accounts, &mut self.toots, &mut self.interactions] {
            w.flush().map_err(io_err(&self.root))?;
        }
        Ok(())
    }

    /// Offsets after everything appended so far (flush first for durability).
    pub fn offsets(&self) -> LogOffsets {
        self.offsets
    }
}
