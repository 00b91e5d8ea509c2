//! Snowball sampling over the public Mastodon API.
//!
//! Starting from a seed account, each visit fetches the account's timeline up
//! to `t_end`, persists its toots and interactions, and appends the alters
//! not seen before to a FIFO frontier: active alters first, then the rest,
//! each group by descending contact count and then handle. Accounts that
//! cannot be fetched are skipped without consuming the target budget.
//!
//! After every visit the crawl state is checkpointed as versioned JSON
//! together with the byte offsets of the dataset logs, so an interrupted
//! crawl resumes exactly where the last checkpoint left it.

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::fedi_client::{AccountRef, ClientError, FediClient, Transport};
use crate::interaction_model::{extract_interactions, Interaction};
use crate::tie_store::{
    annual_frequency, build_ties, DatasetConfig, DatasetHandle, DatasetWriter, LogOffsets,
    StoreError, TieRecord,
};
use crate::timeutil::ts_millis;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
const CHECKPOINT_FORMAT: &str = "fedinet-crawl-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CrawlError {
    #[error("target_n must be at least 1")]
    ZeroTarget,
    #[error("seed account {seed} could not be fetched: {source}")]
    Seed {
        seed: AccountRef,
        #[source]
        source: ClientError,
    },
    #[error("frontier is empty")]
    EmptyFrontier,
    #[error("target of {0} accounts already reached")]
    TargetReached(usize),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// True when the ego–alter summary would pass the active-alter rule:
/// at least two contacts and at least one contact per year.
pub fn is_active_alter(contacts: u32, first_contact: DateTime<Utc>, t_end: DateTime<Utc>) -> bool {
    contacts >= 2 && annual_frequency(contacts, first_contact, t_end).is_ok_and(|f| f >= 1.0)
}

/// Orders an ego's ties for enqueueing.
pub fn frontier_order(ties: &[TieRecord], t_end: DateTime<Utc>) -> Vec<AccountRef> {
    let mut ranked: Vec<(bool, u32, &AccountRef)> = ties
        .iter()
        .map(|t| (is_active_alter(t.contacts, t.first_contact, t_end), t.contacts, &t.alter))
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(b.2)));
    ranked.into_iter().map(|(_, _, a)| a.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrawlState {
    pub seed: AccountRef,
    pub target_n: usize,
    #[serde(with = "ts_millis")]
    pub t_end: DateTime<Utc>,
    pub frontier: VecDeque<AccountRef>,
    /// Collected accounts in visit order.
    pub visited: Vec<AccountRef>,
    /// Accounts dequeued but not collected.
    pub skipped: Vec<AccountRef>,
    pub offsets: LogOffsets,
}

impl CrawlState {
    pub fn new(seed: AccountRef, target_n: usize, t_end: DateTime<Utc>) -> Self {
        Self {
            frontier: VecDeque::from([seed.clone()]),
            seed,
            target_n,
            t_end,
            visited: Vec::new(),
            skipped: Vec::new(),
            offsets: LogOffsets::default(),
        }
    }

    pub fn collected(&self) -> usize {
        self.visited.len()
    }

    pub fn is_done(&self) -> bool {
        self.collected() >= self.target_n || self.frontier.is_empty()
    }

    fn seen(&self) -> BTreeSet<&AccountRef> {
        self.frontier
            .iter()
            .chain(&self.visited)
            .chain(&self.skipped)
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    dataset: PathBuf,
    state: CrawlState,
}

pub fn checkpoint_bytes(state: &CrawlState, dataset: &Path) -> Vec<u8> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        dataset: dataset.to_owned(),
        state: state.clone(),
    };
    let mut out = serde_json::to_vec_pretty(&file).expect("checkpoint serializes");
    out.push(b'\n');
    out
}

/// Parses a checkpoint, returning the dataset directory and crawl state.
pub fn parse_checkpoint(bytes: &[u8], path: &Path) -> Result<(PathBuf, CrawlState), CrawlError> {
    let bad = |message: String| CrawlError::Checkpoint {
        path: path.to_owned(),
        message,
    };
    let file: CheckpointFile = serde_json::from_slice(bytes).map_err(|e| bad(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(bad(format!("unknown format {:?}", file.format)));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {}", file.version)));
    }
    let s = &file.state;
    let seen = s.seen();
    if seen.len() != s.frontier.len() + s.visited.len() + s.skipped.len() {
        return Err(bad("an account appears twice in the crawl state".into()));
    }
    if s.target_n == 0 || s.visited.len() > s.target_n {
        return Err(bad("visited count exceeds target".into()));
    }
    Ok((file.dataset, file.state))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes)?;
    fs::File::open(&tmp)?.sync_all()?;
    fs::rename(&tmp, path)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Collected { account: AccountRef, toots: usize, enqueued: usize },
    Skipped { account: AccountRef, reason: String },
}

/// A crawl bound to a client and a dataset directory.
pub struct Crawler<'c, T: Transport> {
    client: &'c FediClient<T>,
    handle: DatasetHandle,
    writer: DatasetWriter,
    state: CrawlState,
    checkpoint_path: PathBuf,
}

impl<'c, T: Transport> Crawler<'c, T> {
    /// Creates a fresh dataset at `out_dir` and checkpoints the initial state.
    pub fn start(
        client: &'c FediClient<T>,
        seed: &str,
        target_n: usize,
        t_end: DateTime<Utc>,
        acquisition_date: NaiveDate,
        out_dir: impl AsRef<Path>,
    ) -> Result<Self, CrawlError> {
        if target_n == 0 {
            return Err(CrawlError::ZeroTarget);
        }
        let seed: AccountRef = seed.parse()?;
        let config = DatasetConfig::new(t_end, acquisition_date, &format!("crawl:{seed}"));
        let handle = DatasetHandle::create(out_dir, &config)?;
        let writer = handle.writer()?;
        let checkpoint_path = handle.path(CHECKPOINT_FILE);
        let crawler = Self {
            client,
            writer,
            state: CrawlState::new(seed, target_n, t_end),
            checkpoint_path,
            handle,
        };
        crawler.checkpoint()?;
        Ok(crawler)
    }

    /// Reopens a crawl from its checkpoint, discarding log data written after
    /// it was taken.
    pub fn resume(client: &'c FediClient<T>, checkpoint: impl AsRef<Path>) -> Result<Self, CrawlError> {
        let path = checkpoint.as_ref();
        let bytes = fs::read(path).map_err(|e| CrawlError::Checkpoint {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let (dataset, state) = parse_checkpoint(&bytes, path)?;
        let handle = DatasetHandle::open(&dataset)?;
        let writer = DatasetWriter::rollback(&handle, state.offsets)?;
        info!(
            "resuming crawl from {}: {}/{} collected, {} queued",
            path.display(),
            state.collected(),
            state.target_n,
            state.frontier.len()
        );
        Ok(Self {
            client,
            handle,
            writer,
            state,
            checkpoint_path: path.to_owned(),
        })
    }

    pub fn state(&self) -> &CrawlState {
        &self.state
    }

    pub fn handle(&self) -> &DatasetHandle {
        &self.handle
    }

    pub fn checkpoint_path(&self) -> &Path {
        &self.checkpoint_path
    }

    fn checkpoint(&self) -> Result<(), CrawlError> {
        write_atomic(
            &self.checkpoint_path,
            &checkpoint_bytes(&self.state, self.handle.root()),
        )
        .map_err(|e| CrawlError::Checkpoint {
            path: self.checkpoint_path.clone(),
            message: e.to_string(),
        })
    }

    /// Visits the next frontier account.
    pub fn step(&mut self) -> Result<StepOutcome, CrawlError> {
        if self.state.collected() >= self.state.target_n {
            return Err(CrawlError::TargetReached(self.state.target_n));
        }
        let Some(next) = self.state.frontier.pop_front() else {
            return Err(CrawlError::EmptyFrontier);
        };
        let is_seed = self.state.visited.is_empty() && next == self.state.seed;
        let fetched = self.client.lookup_account(next.as_str()).and_then(|account| {
            self.client
                .fetch_full_timeline(&account, self.state.t_end)
                .map(|toots| (account, toots))
                .map_err(|e| {
                    debug!("dropping {} partial toots of {next}", e.partial.len());
                    e.source
                })
        });
        let (account, toots) = match fetched {
            Ok(v) => v,
            Err(source) if is_seed => return Err(CrawlError::Seed { seed: next, source }),
            Err(e) => {
                warn!("skipping {next}: {e}");
                self.state.skipped.push(next.clone());
                self.checkpoint()?;
                return Ok(StepOutcome::Skipped {
                    account: next,
                    reason: e.to_string(),
                });
            }
        };

        let ego = account.handle();
        // Logs are kept oldest first.
        let toots: Vec<_> = toots.into_iter().rev().collect();
        let interactions: Vec<Interaction> = toots.iter().flat_map(extract_interactions).collect();
        let ties = build_ties(&interactions, &ego, self.state.t_end)
            .expect("fetched toots respect t_end and belong to the ego");
        let seen = self.state.seen();
        let fresh: Vec<AccountRef> = frontier_order(&ties, self.state.t_end)
            .into_iter()
            .filter(|a| *a != next && !seen.contains(a))
            .collect();
        let enqueued = fresh.len();

        self.writer.append_account(&account)?;
        for t in &toots {
            self.writer.append_toot(t)?;
        }
        for ix in &interactions {
            self.writer.append_interaction(ix)?;
        }
        self.writer.flush()?;

        self.state.frontier.extend(fresh);
        self.state.visited.push(next.clone());
        self.state.offsets = self.writer.offsets();
        self.checkpoint()?;
        info!(
            "collected {next} ({}/{}): {} toots, {enqueued} new alters",
            self.state.collected(),
            self.state.target_n,
            toots.len()
        );
        Ok(StepOutcome::Collected {
            account: next,
            toots: toots.len(),
            enqueued,
        })
    }

    /// Steps until the target is met, the frontier drains, or `max_visits`
    /// accounts have been collected in this call.
    pub fn run_for(&mut self, max_visits: Option<usize>) -> Result<(), CrawlError> {
        let mut collected = 0;
        while !self.state.is_done() && max_visits.is_none_or(|m| collected < m) {
            if let StepOutcome::Collected { .. } = self.step()? {
                collected += 1;
            }
        }
        Ok(())
    }

    /// Runs to completion and writes `ties.csv`.
    pub fn finish(mut self) -> Result<DatasetHandle, CrawlError> {
        self.run_for(None)?;
        if self.state.collected() < self.state.target_n {
            warn!(
                "reachable component exhausted: collected {} of {} requested accounts",
                self.state.collected(),
                self.state.target_n
            );
        }
        let ds = self.handle.load()?;
        self.handle.write_ties(&ds)?;
        Ok(self.handle)
    }
}

/// Crawls from `seed` into a new dataset directory.
pub fn run<T: Transport>(
    client: &FediClient<T>,
    seed: &str,
    target_n: usize,
    t_end: DateTime<Utc>,
    acquisition_date: NaiveDate,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetHandle, CrawlError> {
    Crawler::start(client, seed, target_n, t_end, acquisition_date, out_dir)?.finish()
}
