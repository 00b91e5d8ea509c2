//! In-process Mastodon server for deterministic tests and examples.
//!
//! [`MockServer`] implements [`Transport`] and serves the two endpoints the
//! client uses, rendering statuses with the same JSON shape (and HTML content
//! conventions) as a real instance. Time is driven by a [`ManualClock`]
//! shared with the client, so rate-limit waits advance virtual time instead
//! of sleeping.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::api::{ApiAccount, ApiCard, ApiMention, ApiStatus, ApiTag};
use super::{AccountRef, Clock, HttpResponse, Transport, TransportError, PAGE_SIZE};
use crate::timeutil;

/// Virtual clock: `sleep` advances time instantly.
#[derive(Debug)]
pub struct ManualClock {
    now: Mutex<DateTime<Utc>>,
    slept: Mutex<Duration>,
}

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Arc<Self> {
        Arc::new(Self {
            now: Mutex::new(start),
            slept: Mutex::new(Duration::ZERO),
        })
    }

    pub fn advance(&self, d: Duration) {
        let mut now = self.now.lock().unwrap();
        *now += chrono::Duration::from_std(d).unwrap();
    }

    /// Total time spent in `sleep`.
    pub fn total_slept(&self) -> Duration {
        *self.slept.lock().unwrap()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        *self.slept.lock().unwrap() += d;
        self.advance(d);
    }
}

/// A status as authored on the mock; rendered to API JSON on request.
#[derive(Debug, Clone, Default)]
pub struct MockStatus {
    pub created_at: Option<DateTime<Utc>>,
    pub text: String,
    pub reply_to: Option<AccountRef>,
    pub mentions: Vec<AccountRef>,
    /// Original author of a boosted status. Boosts carry no own text.
    pub boost_of: Option<AccountRef>,
    pub tags: Vec<String>,
    pub urls: Vec<String>,
    pub media: usize,
}

impl MockStatus {
    pub fn text(at: DateTime<Utc>, text: &str) -> Self {
        Self {
            created_at: Some(at),
            text: text.to_owned(),
            ..Default::default()
        }
    }

    pub fn reply(at: DateTime<Utc>, to: &AccountRef) -> Self {
        Self {
            created_at: Some(at),
            text: "reply".into(),
            reply_to: Some(to.clone()),
            ..Default::default()
        }
    }

    pub fn mention(at: DateTime<Utc>, who: &[AccountRef]) -> Self {
        Self {
            created_at: Some(at),
            text: "hello".into(),
            mentions: who.to_vec(),
            ..Default::default()
        }
    }

    pub fn boost(at: DateTime<Utc>, of: &AccountRef) -> Self {
        Self {
            created_at: Some(at),
            boost_of: Some(of.clone()),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RateLimit {
    pub max_requests: u32,
    pub window: Duration,
    /// Whether to emit `X-RateLimit-*` headers. Without them the client only
    /// learns about the limit from 429 responses.
    pub send_headers: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestRecord {
    pub host: String,
    pub path: String,
    pub status: u16,
}

#[derive(Debug)]
struct StoredStatus {
    id: String,
    created_at: DateTime<Utc>,
    spec: MockStatus,
}

#[derive(Debug)]
struct MockAccount {
    id: String,
    handle: AccountRef,
    bot: bool,
    created_at: DateTime<Utc>,
    suspended: bool,
    gone_after_pages: Option<usize>,
    pages_served: usize,
    /// Newest first.
    statuses: Vec<StoredStatus>,
}

#[derive(Debug, Default)]
struct MockState {
    accounts: BTreeMap<AccountRef, MockAccount>,
    by_id: HashMap<String, AccountRef>,
    forbidden_hosts: BTreeSet<String>,
    rate_limit: Option<RateLimit>,
    windows: HashMap<String, (DateTime<Utc>, u32)>,
    log: Vec<RequestRecord>,
    next_account: u64,
    next_seq: u64,
}

pub struct MockServer {
    state: Mutex<MockState>,
    clock: Arc<ManualClock>,
}

impl MockServer {
    pub fn new(clock: Arc<ManualClock>) -> Self {
        Self {
            state: Mutex::new(MockState {
                next_account: 100,
                ..Default::default()
            }),
            clock,
        }
    }

    pub fn clock(&self) -> Arc<ManualClock> {
        self.clock.clone()
    }

    /// Registers an account and returns its id.
    pub fn add_account(&self, handle: &AccountRef, created_at: DateTime<Utc>, bot: bool) -> String {
        let mut st = self.state.lock().unwrap();
        let id = st.next_account.to_string();
        st.next_account += 1;
        st.by_id.insert(id.clone(), handle.clone());
        st.accounts.insert(
            handle.clone(),
            MockAccount {
                id: id.clone(),
                handle: handle.clone(),
                bot,
                created_at,
                suspended: false,
                gone_after_pages: None,
                pages_served: 0,
                statuses: Vec::new(),
            },
        );
        id
    }

    /// Adds a status to `author`'s timeline and returns its snowflake id.
    pub fn add_status(&self, author: &AccountRef, status: MockStatus) -> String {
        let mut st = self.state.lock().unwrap();
        let created_at = timeutil::truncate_millis(
            status.created_at.expect("mock status needs created_at"),
        );
        let seq = st.next_seq;
        st.next_seq += 1;
        let id = (((created_at.timestamp_millis() as u64) << 16) | (seq & 0xffff)).to_string();
        let acct = st
            .accounts
            .get_mut(author)
            .unwrap_or_else(|| panic!("unknown mock author {author}"));
        acct.statuses.push(StoredStatus {
            id: id.clone(),
            created_at,
            spec: status,
        });
        acct.statuses
            .sort_by(|a, b| super::compare_ids(&b.id, &a.id));
        id
    }

    /// Lookups return 404 from now on, as for a suspended account.
    pub fn suspend(&self, handle: &AccountRef) {
        let mut st = self.state.lock().unwrap();
        if let Some(a) = st.accounts.get_mut(handle) {
            a.suspended = true;
        }
    }

    /// After `pages` successful status pages, the account disappears.
    pub fn gone_after_pages(&self, handle: &AccountRef, pages: usize) {
        let mut st = self.state.lock().unwrap();
        if let Some(a) = st.accounts.get_mut(handle) {
            a.gone_after_pages = Some(pages);
        }
    }

    pub fn forbid_host(&self, host: &str) {
        self.state.lock().unwrap().forbidden_hosts.insert(host.to_owned());
    }

    pub fn set_rate_limit(&self, limit: Option<RateLimit>) {
        self.state.lock().unwrap().rate_limit = limit;
    }

    pub fn requests(&self) -> Vec<RequestRecord> {
        self.state.lock().unwrap().log.clone()
    }

    pub fn accounts(&self) -> Vec<AccountRef> {
        self.state.lock().unwrap().accounts.keys().cloned().collect()
    }

    /// Ids of every status on `handle`'s timeline, newest first.
    pub fn status_ids(&self, handle: &AccountRef) -> Vec<String> {
        let st = self.state.lock().unwrap();
        st.accounts
            .get(handle)
            .map(|a| a.statuses.iter().map(|s| s.id.clone()).collect())
            .unwrap_or_default()
    }

    /// Alters referenced by `handle`'s statuses (reply targets, mentions,
    /// boost origins), excluding itself.
    pub fn referenced_accounts(&self, handle: &AccountRef) -> BTreeSet<AccountRef> {
        let st = self.state.lock().unwrap();
        let mut out = BTreeSet::new();
        if let Some(a) = st.accounts.get(handle) {
            for s in &a.statuses {
                out.extend(s.spec.reply_to.iter().cloned());
                out.extend(s.spec.mentions.iter().cloned());
                out.extend(s.spec.boost_of.iter().cloned());
            }
        }
        out.remove(handle);
        out
    }

    fn respond(&self, host: &str, path: &str) -> HttpResponse {
        let mut st = self.state.lock().unwrap();
        let now = self.clock.now();
        let mut headers = Vec::new();
        if let Some(limit) = st.rate_limit {
            let window = chrono::Duration::from_std(limit.window).unwrap();
            let entry = st.windows.entry(host.to_owned()).or_insert((now, 0));
            if now >= entry.0 + window {
                *entry = (now, 0);
            }
            let reset = entry.0 + window;
            if entry.1 >= limit.max_requests {
                let secs = ((reset - now).num_milliseconds() as f64 / 1000.0).ceil() as u64;
                let mut headers = vec![("Retry-After".to_owned(), secs.to_string())];
                if limit.send_headers {
                    headers.push(("X-RateLimit-Remaining".into(), "0".into()));
                    headers.push(("X-RateLimit-Reset".into(), timeutil::format_ts(&reset)));
                }
                return HttpResponse {
                    status: 429,
                    headers,
                    body: r#"{"error":"Too many requests"}"#.into(),
                };
            }
            entry.1 += 1;
            if limit.send_headers {
                headers.push(("X-RateLimit-Limit".into(), limit.max_requests.to_string()));
                headers.push((
                    "X-RateLimit-Remaining".into(),
                    (limit.max_requests - entry.1).to_string(),
                ));
                headers.push(("X-RateLimit-Reset".into(), timeutil::format_ts(&reset)));
            }
        }
        let (status, body) = route(&mut st, host, path);
        HttpResponse {
            status,
            headers,
            body,
        }
    }
}

impl Transport for MockServer {
    fn get(&self, host: &str, path_and_query: &str) -> Result<HttpResponse, TransportError> {
        let resp = self.respond(host, path_and_query);
        self.state.lock().unwrap().log.push(RequestRecord {
            host: host.to_owned(),
            path: path_and_query.to_owned(),
            status: resp.status,
        });
        Ok(resp)
    }
}

fn not_found() -> (u16, String) {
    (404, r#"{"error":"Record not found"}"#.into())
}

fn query_param<'a>(query: &'a str, key: &str) -> Option<&'a str> {
    query
        .split('&')
        .filter_map(|kv| kv.split_once('='))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v)
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let Ok(b) = u8::from_str_radix(&s[i + 1..i + 3], 16) {
                out.push(b);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

fn route(st: &mut MockState, host: &str, path: &str) -> (u16, String) {
    if st.forbidden_hosts.contains(host) {
        return (403, r#"{"error":"This action is not allowed"}"#.into());
    }
    let (route, query) = path.split_once('?').unwrap_or((path, ""));
    if route == "/api/v1/accounts/lookup" {
        let Some(acct) = query_param(query, "acct").map(percent_decode) else {
            return (400, r#"{"error":"missing acct"}"#.into());
        };
        let Ok(handle) = AccountRef::from_acct(&acct, host) else {
            return not_found();
        };
        return match st.accounts.get(&handle) {
            Some(a) if !a.suspended && a.handle.instance() == host => {
                (200, serde_json::to_string(&api_account(a, host)).unwrap())
            }
            _ => not_found(),
        };
    }
    let Some(id) = route
        .strip_prefix("/api/v1/accounts/")
        .and_then(|r| r.strip_suffix("/statuses"))
        .map(percent_decode)
    else {
        return not_found();
    };
    let limit = query_param(query, "limit")
        .and_then(|l| l.parse::<usize>().ok())
        .unwrap_or(20)
        .min(PAGE_SIZE);
    let max_id = query_param(query, "max_id").map(percent_decode);
    let Some(handle) = st.by_id.get(&id).cloned() else {
        return not_found();
    };
    let snapshot: Vec<(String, AccountRef)> = st
        .by_id
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let ids: HashMap<AccountRef, String> = snapshot.into_iter().map(|(k, v)| (v, k)).collect();
    let acct = st.accounts.get_mut(&handle).unwrap();
    if acct.handle.instance() != host || acct.suspended {
        return not_found();
    }
    if let Some(limit_pages) = acct.gone_after_pages {
        if acct.pages_served >= limit_pages {
            return not_found();
        }
    }
    acct.pages_served += 1;
    let page: Vec<ApiStatus> = acct
        .statuses
        .iter()
        .filter(|s| match &max_id {
            Some(m) => super::compare_ids(&s.id, m) == std::cmp::Ordering::Less,
            None => true,
        })
        .take(limit)
        .map(|s| render_status(acct, s, host, &ids))
        .collect();
    (200, serde_json::to_string(&page).unwrap())
}

fn api_account(a: &MockAccount, serving_host: &str) -> ApiAccount {
    ApiAccount {
        id: a.id.clone(),
        username: a.handle.username().to_owned(),
        acct: acct_for(&a.handle, serving_host),
        bot: a.bot,
        created_at: a.created_at,
        url: Some(format!(
            "https://{}/@{}",
            a.handle.instance(),
            a.handle.username()
        )),
    }
}

fn acct_for(handle: &AccountRef, serving_host: &str) -> String {
    if handle.instance() == serving_host {
        handle.username().to_owned()
    } else {
        handle.as_str().to_owned()
    }
}

fn account_id(ids: &HashMap<AccountRef, String>, handle: &AccountRef) -> String {
    ids.get(handle)
        .cloned()
        .unwrap_or_else(|| format!("ext-{}", handle.as_str().replace(['@', '.'], "-")))
}

fn stub_account(handle: &AccountRef, ids: &HashMap<AccountRef, String>, host: &str) -> ApiAccount {
    ApiAccount {
        id: account_id(ids, handle),
        username: handle.username().to_owned(),
        acct: acct_for(handle, host),
        bot: false,
        created_at: DateTime::from_timestamp(1_500_000_000, 0).unwrap(),
        url: None,
    }
}

fn mention_html(handle: &AccountRef) -> String {
    format!(
        r#"<span class="h-card"><a href="https://{}/@{}" class="u-url mention">@<span>{}</span></a></span>"#,
        handle.instance(),
        handle.username(),
        handle.username()
    )
}

fn render_status(
    author: &MockAccount,
    s: &StoredStatus,
    host: &str,
    ids: &HashMap<AccountRef, String>,
) -> ApiStatus {
    let owner = api_account(author, host);
    if let Some(orig) = &s.spec.boost_of {
        let inner = ApiStatus {
            id: format!("{}1", s.id),
            created_at: s.created_at - chrono::Duration::hours(1),
            in_reply_to_id: None,
            in_reply_to_account_id: None,
            account: stub_account(orig, ids, host),
            content: format!("<p>{}</p>", s.spec.text),
            mentions: Vec::new(),
            tags: Vec::new(),
            media_attachments: Vec::new(),
            card: None,
            reblog: None,
        };
        return ApiStatus {
            id: s.id.clone(),
            created_at: s.created_at,
            in_reply_to_id: None,
            in_reply_to_account_id: None,
            account: owner,
            content: String::new(),
            mentions: Vec::new(),
            tags: Vec::new(),
            media_attachments: Vec::new(),
            card: None,
            reblog: Some(Box::new(inner)),
        };
    }

    // A reply implicitly mentions its target, as Mastodon clients do.
    let mut mentioned: Vec<AccountRef> = Vec::new();
    if let Some(to) = &s.spec.reply_to {
        if to != &author.handle {
            mentioned.push(to.clone());
        }
    }
    for m in &s.spec.mentions {
        if !mentioned.contains(m) {
            mentioned.push(m.clone());
        }
    }
    let mut html = String::from("<p>");
    for m in &mentioned {
        html.push_str(&mention_html(m));
        html.push(' ');
    }
    html.push_str(&s.spec.text);
    for t in &s.spec.tags {
        html.push_str(&format!(
            r#" <a href="https://{host}/tags/{t}" class="mention hashtag" rel="tag">#<span>{t}</span></a>"#
        ));
    }
    for u in &s.spec.urls {
        html.push_str(&format!(
            r#" <a href="{u}" target="_blank" rel="nofollow noopener noreferrer">{u}</a>"#
        ));
    }
    html.push_str("</p>");

    ApiStatus {
        id: s.id.clone(),
        created_at: s.created_at,
        in_reply_to_id: s.spec.reply_to.as_ref().map(|_| "1".to_owned()),
        in_reply_to_account_id: s.spec.reply_to.as_ref().map(|to| account_id(ids, to)),
        account: owner,
        content: html,
        mentions: mentioned
            .iter()
            .map(|m| ApiMention {
                id: account_id(ids, m),
                username: m.username().to_owned(),
                acct: acct_for(m, host),
                url: None,
            })
            .collect(),
        tags: s
            .spec
            .tags
            .iter()
            .map(|t| ApiTag { name: t.clone() })
            .collect(),
        media_attachments: (0..s.spec.media)
            .map(|i| serde_json::json!({"id": i.to_string(), "type": "image"}))
            .collect(),
        card: s.spec.urls.first().map(|u| ApiCard { url: u.clone() }),
        reblog: None,
    }
}

/// Parameters for [`random_network`].
#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub users: usize,
    pub instances: usize,
    pub seed: u64,
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
    /// Extra contacts per user beyond the spanning tree edge.
    pub extra_alters: usize,
}

/// Builds a random interaction network on `server`. Every user is reachable
/// from `user0` through directed contacts. Some statuses fall after
/// `window_end` so date filtering is exercised.
pub fn random_network(server: &MockServer, spec: &NetworkSpec) -> Vec<AccountRef> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let users: Vec<AccountRef> = (0..spec.users)
        .map(|i| {
            AccountRef::new(&format!("user{i}"), &format!("inst{}.example", i % spec.instances.max(1)))
                .unwrap()
        })
        .collect();
    for (i, u) in users.iter().enumerate() {
        let created = spec.window_start - chrono::Duration::days(30 + i as i64);
        server.add_account(u, created, i % 17 == 16);
    }
    let span_ms = (spec.window_end - spec.window_start).num_milliseconds();
    let at = |rng: &mut ChaCha8Rng| {
        spec.window_start + chrono::Duration::milliseconds(rng.random_range(0..span_ms))
    };
    // A random tree rooted at user0 keeps every user reachable.
    let parent: Vec<usize> = (0..spec.users)
        .map(|j| if j == 0 { 0 } else { rng.random_range(0..j) })
        .collect();
    for (i, u) in users.iter().enumerate() {
        let mut alters: Vec<usize> = (1..spec.users).filter(|&j| parent[j] == i).collect();
        for _ in 0..spec.extra_alters {
            let j = rng.random_range(0..spec.users);
            if j != i && !alters.contains(&j) {
                alters.push(j);
            }
        }
        // A contact outside the hosted network exercises lookup failures.
        if rng.random_bool(0.2) {
            let ghost = AccountRef::new(&format!("ghost{i}"), "gone.example").unwrap();
            server.add_status(u, MockStatus::mention(at(&mut rng), &[ghost]));
        }
        for j in alters {
            let contacts = rng.random_range(1..=8);
            for _ in 0..contacts {
                let t = at(&mut rng);
                let status = match rng.random_range(0..3) {
                    0 => MockStatus::reply(t, &users[j]),
                    1 => MockStatus::mention(t, &[users[j].clone()]),
                    _ => MockStatus::boost(t, &users[j]),
                };
                server.add_status(u, status);
            }
        }
        for _ in 0..rng.random_range(0..6) {
            let mut s = MockStatus::text(at(&mut rng), "just posting");
            if rng.random_bool(0.3) {
                s.tags.push("fediverse".into());
            }
            if rng.random_bool(0.2) {
                s.urls.push("https://example.com/article".into());
            }
            if rng.random_bool(0.2) {
                s.media = 1;
            }
            server.add_status(u, s);
        }
        let late = spec.window_end + chrono::Duration::days(rng.random_range(1..20));
        server.add_status(u, MockStatus::text(late, "after the window"));
    }
    users
}
