//! Minimal Mastodon REST client: account lookup and paginated timeline
//! retrieval with rate-limit handling.
//!
//! Requests go through an injected [`Transport`], so the same client runs
//! against real instances ([`HttpsTransport`]) and against the in-process
//! [`mock::MockServer`]. Requests to one host are serialized; the per-host
//! limiter honours `X-RateLimit-Remaining`/`X-RateLimit-Reset` before sending
//! and retries HTTP 429 with exponential backoff seeded from `Retry-After`.

pub mod api;
pub mod mock;
mod transport;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use log::{debug, warn};
use serde::{Deserialize, Serialize};

pub use transport::{Clock, HttpResponse, SystemClock, Transport, TransportError};
#[cfg(feature = "https")]
pub use transport::HttpsTransport;

use crate::interaction_model::Toot;
use crate::timeutil::{self, ts_millis};
use api::{ApiAccount, ApiStatus};

/// Mastodon's maximum `limit` for account statuses.
pub const PAGE_SIZE: usize = 40;

/// Canonical `username@instance` reference to a Fediverse account.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AccountRef(String);

impl AccountRef {
    pub fn new(username: &str, instance: &str) -> Result<Self, ClientError> {
        Self::from_str(&format!("{username}@{instance}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn username(&self) -> &str {
        self.0.split_once('@').unwrap().0
    }

    pub fn instance(&self) -> &str {
        self.0.split_once('@').unwrap().1
    }

    /// Resolves an `acct` field as seen from `serving_host`.
    pub fn from_acct(acct: &str, serving_host: &str) -> Result<Self, ClientError> {
        if acct.contains('@') {
            acct.parse()
        } else {
            Self::new(acct, serving_host)
        }
    }
}

impl FromStr for AccountRef {
    type Err = ClientError;

    fn from_str(handle: &str) -> Result<Self, Self::Err> {
        let trimmed = handle.strip_prefix('@').unwrap_or(handle);
        let mut parts = trimmed.split('@');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(user), Some(host), None)
                if !user.is_empty()
                    && !host.is_empty()
                    && !user.chars().any(char::is_whitespace)
                    && !host.chars().any(|c| c.is_whitespace() || c == '/') =>
            {
                Ok(Self(format!(
                    "{}@{}",
                    user.to_lowercase(),
                    host.to_lowercase()
                )))
            }
            _ => Err(ClientError::InvalidHandle(handle.to_owned())),
        }
    }
}

impl TryFrom<String> for AccountRef {
    type Error = ClientError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<AccountRef> for String {
    fn from(r: AccountRef) -> String {
        r.0
    }
}

impl fmt::Display for AccountRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&self.0)
    }
}

/// A Fediverse user as resolved on its home instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    /// Instance-local id; only meaningful together with `instance`.
    pub account_id: String,
    pub username: String,
    pub instance: String,
    pub is_bot: bool,
    #[serde(with = "ts_millis")]
    pub created_at: DateTime<Utc>,
}

impl Account {
    pub fn handle(&self) -> AccountRef {
        AccountRef(format!("{}@{}", self.username, self.instance))
    }

    fn from_api(api: &ApiAccount, instance: &str) -> Result<Self, ClientError> {
        let handle = AccountRef::new(&api.username, instance)?;
        Ok(Self {
            account_id: api.id.clone(),
            username: handle.username().to_owned(),
            instance: handle.instance().to_owned(),
            is_bot: api.bot,
            created_at: timeutil::truncate_millis(api.created_at),
        })
    }
}

/// Position in an account timeline. `max_id: None` is the newest end.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageCursor {
    pub max_id: Option<String>,
}

impl PageCursor {
    pub fn start() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    /// Newest first.
    pub toots: Vec<Toot>,
    /// `None` once the end of the timeline has been reached.
    pub next: Option<PageCursor>,
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("invalid account handle {0:?}, expected user@instance")]
    InvalidHandle(String),
    #[error("account not found")]
    NotFound,
    #[error("access forbidden by instance")]
    Forbidden,
    #[error("account gone")]
    Gone,
    #[error("rate limited, retry after {retry_after:?}")]
    RateLimited { retry_after: Duration },
    #[error("unexpected HTTP status {0}")]
    Http(u16),
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("pagination cursor did not advance past {0}")]
    CursorStalled(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// A timeline fetch that failed part-way; `partial` holds every toot
/// retrieved before the failing page.
#[derive(Debug, thiserror::Error)]
#[error("timeline fetch failed after {} toots: {source}", partial.len())]
pub struct TimelineError {
    pub partial: Vec<Toot>,
    #[source]
    pub source: ClientError,
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Used when a 429 carries no usable `Retry-After`.
    pub fallback_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            fallback_delay: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Default)]
struct HostState {
    /// Earliest instant at which the next request may be sent.
    blocked_until: Option<DateTime<Utc>>,
}

/// Compares Mastodon status ids. Ids are opaque but in practice decimal
/// snowflakes, so numeric strings compare by length first.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    let numeric = |s: &str| !s.is_empty() && s.bytes().all(|c| c.is_ascii_digit());
    if numeric(a) && numeric(b) {
        let (a, b) = (a.trim_start_matches('0'), b.trim_start_matches('0'));
        a.len().cmp(&b.len()).then_with(|| a.cmp(b))
    } else {
        a.cmp(b)
    }
}

fn percent_encode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(b as char)
            }
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

fn parse_retry_after(value: &str, now: DateTime<Utc>) -> Option<Duration> {
    let value = value.trim();
    if let Ok(secs) = value.parse::<f64>() {
        return (secs >= 0.0 && secs.is_finite()).then(|| Duration::from_secs_f64(secs));
    }
    let at = DateTime::parse_from_rfc2822(value)
        .or_else(|_| DateTime::parse_from_rfc3339(value))
        .ok()?
        .with_timezone(&Utc);
    Some((at - now).to_std().unwrap_or(Duration::ZERO))
}

pub struct FediClient<T: Transport> {
    transport: T,
    clock: Arc<dyn Clock>,
    hosts: Mutex<HashMap<String, Arc<Mutex<HostState>>>>,
    retry: RetryPolicy,
}

impl<T: Transport> FediClient<T> {
    pub fn new(transport: T) -> Self {
        Self::with_clock(transport, Arc::new(SystemClock))
    }

    pub fn with_clock(transport: T, clock: Arc<dyn Clock>) -> Self {
        Self {
            transport,
            clock,
            hosts: Mutex::new(HashMap::new()),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn host_state(&self, host: &str) -> Arc<Mutex<HostState>> {
        let mut hosts = self.hosts.lock().unwrap();
        hosts.entry(host.to_owned()).or_default().clone()
    }

    /// Sends one GET, waiting out rate limits. Holds the host lock for the
    /// whole exchange so requests to a host never overlap.
    fn get(&self, host: &str, path: &str) -> Result<HttpResponse, ClientError> {
        let state = self.host_state(host);
        let mut state = state.lock().unwrap();
        let mut last_hint = self.retry.fallback_delay;
        for attempt in 0..self.retry.max_attempts {
            if let Some(until) = state.blocked_until.take() {
                if let Ok(wait) = (until - self.clock.now()).to_std() {
                    debug!("{host}: waiting {wait:?} for rate-limit reset");
                    self.clock.sleep(wait);
                }
            }
            let resp = self.transport.get(host, path)?;
            let now = self.clock.now();
            if resp.status == 429 {
                let hint = resp
                    .header("Retry-After")
                    .and_then(|v| parse_retry_after(v, now))
                    .unwrap_or(self.retry.fallback_delay);
                last_hint = hint;
                let wait = hint * 2u32.saturating_pow(attempt);
                warn!("{host}: 429 on {path}, attempt {}, backing off {wait:?}", attempt + 1);
                state.blocked_until = Some(now + chrono::Duration::from_std(wait).unwrap());
                continue;
            }
            if resp.header("X-RateLimit-Remaining").map(str::trim) == Some("0") {
                state.blocked_until = resp
                    .header("X-RateLimit-Reset")
                    .and_then(|v| timeutil::parse_ts(v.trim()).ok());
            }
            return Ok(resp);
        }
        Err(ClientError::RateLimited {
            retry_after: last_hint,
        })
    }

    /// Resolves `user@instance` on the account's home instance.
    pub fn lookup_account(&self, handle: &str) -> Result<Account, ClientError> {
        let handle: AccountRef = handle.parse()?;
        let path = format!(
            "/api/v1/accounts/lookup?acct={}",
            percent_encode(handle.username())
        );
        let resp = self.get(handle.instance(), &path)?;
        match resp.status {
            200 => {
                let api: ApiAccount = serde_json::from_str(&resp.body)
                    .map_err(|e| ClientError::Decode(e.to_string()))?;
                Account::from_api(&api, handle.instance())
            }
            404 | 410 => Err(ClientError::NotFound),
            401 | 403 => Err(ClientError::Forbidden),
            other => Err(ClientError::Http(other)),
        }
    }

    /// Fetches one page of `account`'s statuses older than `cursor`, keeping
    /// only those created at or before `until`.
    pub fn fetch_statuses(
        &self,
        account: &Account,
        cursor: &PageCursor,
        until: DateTime<Utc>,
    ) -> Result<Page, ClientError> {
        if until > self.clock.now() {
            return Err(ClientError::Precondition(format!(
                "until {} is in the future",
                timeutil::format_ts(&until)
            )));
        }
        let mut path = format!(
            "/api/v1/accounts/{}/statuses?limit={PAGE_SIZE}",
            percent_encode(&account.account_id)
        );
        if let Some(max_id) = &cursor.max_id {
            path.push_str("&max_id=");
            path.push_str(&percent_encode(max_id));
        }
        let resp = self.get(&account.instance, &path)?;
        let raw: Vec<ApiStatus> = match resp.status {
            200 => serde_json::from_str(&resp.body)
                .map_err(|e| ClientError::Decode(e.to_string()))?,
            404 | 410 => return Err(ClientError::Gone),
            401 | 403 => return Err(ClientError::Forbidden),
            other => return Err(ClientError::Http(other)),
        };

        let fresh: Vec<&ApiStatus> = raw
            .iter()
            .filter(|s| match &cursor.max_id {
                Some(max) => compare_ids(&s.id, max) == Ordering::Less,
                None => true,
            })
            .collect();
        if fresh.len() < raw.len() {
            warn!(
                "{}: dropped {} statuses not older than cursor",
                account.handle(),
                raw.len() - fresh.len()
            );
        }
        let next = if raw.len() < PAGE_SIZE {
            None
        } else {
            let oldest = fresh
                .iter()
                .map(|s| s.id.as_str())
                .min_by(|a, b| compare_ids(a, b))
                .ok_or_else(|| {
                    ClientError::CursorStalled(cursor.max_id.clone().unwrap_or_default())
                })?;
            Some(PageCursor {
                max_id: Some(oldest.to_owned()),
            })
        };

        let mut toots = Vec::with_capacity(fresh.len());
        for status in fresh {
            let toot = Toot::from_api(status, &account.instance)?;
            if toot.created_at <= until {
                toots.push(toot);
            }
        }
        sort_newest_first(&mut toots);
        Ok(Page { toots, next })
    }

    /// Walks the whole timeline. Toots are returned in strictly descending
    /// `(created_at, toot_id)` order without duplicates.
    pub fn fetch_full_timeline(
        &self,
        account: &Account,
        until: DateTime<Utc>,
    ) -> Result<Vec<Toot>, TimelineError> {
        let mut all = Vec::new();
        let mut cursor = PageCursor::start();
        loop {
            match self.fetch_statuses(account, &cursor, until) {
                Ok(page) => {
                    all.extend(page.toots);
                    match page.next {
                        Some(next) => cursor = next,
                        None => break,
                    }
                }
                Err(source) => {
                    sort_newest_first(&mut all);
                    all.dedup_by(|a, b| a.toot_id == b.toot_id);
                    return Err(TimelineError {
                        partial: all,
                        source,
                    });
                }
            }
        }
        sort_newest_first(&mut all);
        all.dedup_by(|a, b| a.toot_id == b.toot_id);
        Ok(all)
    }
}

fn sort_newest_first(toots: &mut [Toot]) {
    toots.sort_by(|a, b| {
        b.created_at
            .cmp(&a.created_at)
            .then_with(|| compare_ids(&b.toot_id, &a.toot_id))
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn handle_parsing() {
        let r: AccountRef = "Alice@Mastodon.Social".parse().unwrap();
        assert_eq!(r.as_str(), "alice@mastodon.social");
        assert_eq!(r.username(), "alice");
        assert_eq!(r.instance(), "mastodon.social");
        assert!("@bob@example.org".parse::<AccountRef>().is_ok());
        for bad in ["alice", "alice@", "@host", "a@b@c", "", "a b@host"] {
            assert!(
                matches!(bad.parse::<AccountRef>(), Err(ClientError::InvalidHandle(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn acct_resolution_is_relative_to_serving_host() {
        let local = AccountRef::from_acct("bob", "a.example").unwrap();
        let remote = AccountRef::from_acct("bob@b.example", "a.example").unwrap();
        assert_eq!(local.as_str(), "bob@a.example");
        assert_eq!(remote.as_str(), "bob@b.example");
    }

    #[test]
    fn id_ordering() {
        assert_eq!(compare_ids("9", "10"), Ordering::Less);
        assert_eq!(compare_ids("110", "109"), Ordering::Greater);
        assert_eq!(compare_ids("007", "7"), Ordering::Equal);
        assert_eq!(compare_ids("abc", "abd"), Ordering::Less);
    }

    #[test]
    fn retry_after_forms() {
        let now = timeutil::parse_ts("2024-01-01T00:00:00Z").unwrap();
        assert_eq!(parse_retry_after("30", now), Some(Duration::from_secs(30)));
        assert_eq!(
            parse_retry_after("Mon, 01 Jan 2024 00:00:10 GMT", now),
            Some(Duration::from_secs(10))
        );
        assert_eq!(
            parse_retry_after("2024-01-01T00:01:00Z", now),
            Some(Duration::from_secs(60))
        );
        assert_eq!(parse_retry_after("soon", now), None);
    }

    #[test]
    fn percent_encoding() {
        assert_eq!(percent_encode("a@b c"), "a%40b%20c");
        assert_eq!(percent_encode("109876"), "109876");
    }
}
