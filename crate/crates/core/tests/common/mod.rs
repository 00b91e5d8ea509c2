//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance runner.

#![allow(dead_code)]

pub mod checks;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fedinet::fedi_client::mock::{random_network, ManualClock, MockServer, NetworkSpec};
use fedinet::interaction_model::extract_interactions;
use fedinet::timeutil::{parse_ts, start_of_day};
use fedinet::{Account, AccountRef, Dataset, DatasetConfig, FediClient, Toot};

pub fn ts(s: &str) -> DateTime<Utc> {
    parse_ts(s).unwrap()
}

pub fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

pub fn acct(s: &str) -> AccountRef {
    s.parse().unwrap()
}

pub fn t_end() -> DateTime<Utc> {
    start_of_day(date("2023-12-31"))
}

pub fn acquisition() -> NaiveDate {
    date("2022-10-27")
}

// ---------------------------------------------------------------- mean shift

/// Relabels so that labels appear in order of first occurrence.
pub fn canonical_partition(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Straightforward O(n^2) flat-kernel mean shift following the textbook
/// fixed-point iteration, with the same stopping, merging and labelling
/// rules as the library but none of its code.
pub fn brute_force_meanshift(points: &[f64], h: f64) -> (Vec<usize>, Vec<f64>) {
    let tol = 1e-6 * h;
    let in_window = |x: f64| points.iter().filter(move |p| (*p - x).abs() <= h);
    let mut modes = Vec::new();
    for &start in points {
        let mut x = start;
        for _ in 0..300 {
            let sel: Vec<f64> = in_window(x).copied().collect();
            let mut sorted = sel.clone();
            sorted.sort_by(f64::total_cmp);
            let m = sorted.iter().sum::<f64>() / sorted.len() as f64;
            if (m - x).abs() < tol {
                break;
            }
            x = m;
        }
        modes.push(x);
    }
    let mut cands: Vec<(usize, f64)> = modes.iter().map(|&m| (in_window(m).count(), m)).collect();
    cands.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.total_cmp(&b.1)));
    let mut kept: Vec<f64> = Vec::new();
    for (_, c) in cands {
        if kept.iter().all(|k| (k - c).abs() > h) {
            kept.push(c);
        }
    }
    kept.sort_by(f64::total_cmp);
    let labels = modes
        .iter()
        .map(|&m| {
            let mut best = 0;
            for i in 1..kept.len() {
                if (kept[i] - m).abs() < (kept[best] - m).abs() {
                    best = i;
                }
            }
            best
        })
        .collect();
    (labels, kept)
}

/// Mean distance to the `ceil(q (n - 1))`-th nearest other point, by full
/// sort of every distance row.
pub fn brute_force_bandwidth(points: &[f64], q: f64) -> f64 {
    let n = points.len();
    let rank = ((q * (n - 1) as f64 - 1e-9).ceil() as usize).clamp(1, n - 1);
    let total: f64 = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (points[i] - points[j]).abs())
                .collect();
            d.sort_by(f64::total_cmp);
            d[rank - 1]
        })
        .sum();
    let bw = total / n as f64;
    if bw > 0.0 {
        bw
    } else {
        1e-9
    }
}

// ------------------------------------------------------------------ pearson

/// Raw-moment formula, algebraically equal to the centred definition.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

// ------------------------------------------------------------------- toots

pub enum Kind {
    Plain,
    Reply(&'static str),
    Mention(&'static str),
    Boost(&'static str),
}

pub fn toot(id: u64, author: &str, at: &str, kind: Kind) -> Toot {
    let mut t = Toot {
        toot_id: id.to_string(),
        author: acct(author),
        created_at: ts(at),
        in_reply_to_account: None,
        mentions: vec![],
        boost_of_author: None,
        hashtags: vec![],
        urls: vec![],
        media_count: 0,
        char_count: 10,
    };
    match kind {
        Kind::Plain => {}
        Kind::Reply(a) => {
            t.in_reply_to_account = Some(acct(a));
            t.mentions.push(acct(a));
        }
        Kind::Mention(a) => t.mentions.push(acct(a)),
        Kind::Boost(a) => t.boost_of_author = Some(acct(a)),
    }
    t
}

// ------------------------------------------------------------- mock network

pub struct MockNet {
    pub server: Arc<MockServer>,
    pub users: Vec<AccountRef>,
}

impl MockNet {
    pub fn new(users: usize, seed: u64) -> Self {
        let clock = ManualClock::new(ts("2024-02-01T00:00:00Z"));
        let server = Arc::new(MockServer::new(clock));
        let users = random_network(
            &server,
            &NetworkSpec {
                users,
                instances: 4,
                seed,
                window_start: ts("2022-06-01T00:00:00Z"),
                window_end: t_end(),
                extra_alters: 2,
            },
        );
        Self { server, users }
    }

    pub fn client(&self) -> FediClient<Arc<MockServer>> {
        FediClient::with_clock(self.server.clone(), self.server.clock())
    }
}

/// Every regular file under `dir` except the checkpoint, as name -> bytes.
pub fn dataset_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && p.file_name().unwrap() != fedinet::crawler::CHECKPOINT_FILE)
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

// ---------------------------------------------------------- report fixture

/// Small hand-shaped dataset covering every report table: egos in all three
/// categories, a bot, ego-to-ego contacts, several frequency tiers and
/// undirected toots with hashtags, links and media.
pub fn report_fixture() -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let end = t_end();
    let n_egos = 12;
    let egos: Vec<AccountRef> = (0..n_egos).map(|i| acct(&format!("ego{i:02}@fixture.example"))).collect();
    let mut ds = Dataset::new(DatasetConfig::new(end, acquisition(), "fixture"));
    let mut seq = 0u64;
    for (i, ego) in egos.iter().enumerate() {
        let (start, stop) = match i % 4 {
            0 => (ts("2022-01-10T00:00:00Z"), ts("2022-10-20T00:00:00Z")),
            1 => (ts("2022-05-01T00:00:00Z"), ts("2023-12-30T00:00:00Z")),
            _ => (ts("2022-11-15T00:00:00Z"), ts("2023-12-30T00:00:00Z")),
        };
        ds.accounts.push(Account {
            account_id: (i + 1).to_string(),
            username: ego.username().to_owned(),
            instance: ego.instance().to_owned(),
            is_bot: i == n_egos - 1,
            created_at: start,
        });
        let span = (stop - start).num_seconds() as f64;
        let mut alters: Vec<(AccountRef, f64)> = Vec::new();
        for (tier, (count, rate)) in [(1, 24.0), (3, 8.0), (4, 3.0), (6, 1.5)].into_iter().enumerate() {
            let count = count + rng.random_range(0..=i % 3);
            for j in 0..count {
                alters.push((acct(&format!("a{i:02}t{tier}n{j}@far.example")), rate));
            }
        }
        for k in 1..=3 {
            alters.push((egos[(i + k * 5) % n_egos].clone(), 6.0));
        }
        alters.push((acct(&format!("once{i:02}@far.example")), 0.3));
        let mut toots: Vec<Toot> = Vec::new();
        for (alter, rate) in &alters {
            let per_sec = rate / (365.25 * 86_400.0);
            let mut t = -(1.0 - rng.random::<f64>()).ln() / per_sec;
            let mut n = 0;
            while t < span || n == 0 {
                let at = start + chrono::Duration::seconds(t.min(span - 1.0) as i64);
                let mut tt = toot(0, ego.as_str(), "2000-01-01T00:00:00Z", Kind::Plain);
                tt.created_at = at;
                match rng.random_range(0..3) {
                    0 => {
                        tt.in_reply_to_account = Some(alter.clone());
                        tt.mentions.push(alter.clone());
                    }
                    1 => tt.mentions.push(alter.clone()),
                    _ => tt.boost_of_author = Some(alter.clone()),
                }
                toots.push(tt);
                n += 1;
                t += -(1.0 - rng.random::<f64>()).ln() / per_sec;
            }
        }
        let plain = 5 + rng.random_range(0..15);
        for _ in 0..plain {
            let mut tt = toot(0, ego.as_str(), "2000-01-01T00:00:00Z", Kind::Plain);
            tt.created_at = start + chrono::Duration::seconds(rng.random_range(0..span as i64));
            if rng.random_bool(0.3) {
                tt.hashtags.push("mastodon".into());
            }
            if rng.random_bool(0.2) {
                tt.urls.push("https://example.org/".into());
            }
            if rng.random_bool(0.15) {
                tt.media_count = 1;
            }
            toots.push(tt);
        }
        toots.sort_by_key(|t| t.created_at);
        for t in &mut toots {
            seq += 1;
            t.toot_id = seq.to_string();
        }
        ds.interactions.extend(toots.iter().flat_map(extract_interactions));
        ds.toots.extend(toots);
    }
    ds
}

/// Hand-computed activity fixture: five users over six days.
pub fn activity_fixture() -> Vec<Toot> {
    vec![
        toot(1, "a@x.example", "2023-01-01T10:00:00Z", Kind::Plain),
        toot(2, "e@x.example", "2023-01-01T11:00:00Z", Kind::Reply("a@x.example")),
        toot(3, "b@x.example", "2023-01-02T09:00:00Z", Kind::Boost("c@x.example")),
        toot(4, "b@x.example", "2023-01-02T10:00:00Z", Kind::Plain),
        toot(5, "c@x.example", "2023-01-02T23:59:59Z", Kind::Plain),
        toot(6, "a@x.example", "2023-01-03T00:00:00Z", Kind::Mention("d@x.example")),
        toot(7, "d@x.example", "2023-01-04T12:00:00Z", Kind::Reply("a@x.example")),
        toot(8, "d@x.example", "2023-01-06T12:00:00Z", Kind::Mention("e@x.example")),
        toot(9, "e@x.example", "2023-01-06T13:00:00Z", Kind::Plain),
    ]
}

/// Expected fixture series, computed by hand from the definitions.
pub struct DailyExpect {
    pub cumulative: [usize; 6],
    pub alive: [usize; 6],
    pub active_directed: [usize; 6],
    pub active_undirected: [usize; 6],
    pub ratio_active_registered: [Option<f64>; 6],
    pub ratio_directed_undirected: [Option<f64>; 6],
}

pub fn activity_expected() -> DailyExpect {
    DailyExpect {
        cumulative: [2, 4, 4, 5, 5, 5],
        alive: [2, 2, 1, 2, 2, 0],
        active_directed: [1, 1, 1, 1, 0, 1],
        active_undirected: [1, 2, 0, 0, 0, 1],
        ratio_active_registered: [Some(1.0), Some(0.5), Some(0.25), Some(0.4), Some(0.4), Some(0.0)],
        ratio_directed_undirected: [Some(1.0), Some(0.5), None, None, None, Some(1.0)],
    }
}

/// Six users around the acquisition date with their expected categories.
pub fn category_fixture() -> (Vec<Toot>, Vec<(&'static str, &'static str)>) {
    let toots = vec![
        toot(1, "before@x.example", "2022-01-01T12:00:00Z", Kind::Plain),
        toot(2, "before@x.example", "2022-10-26T23:59:59Z", Kind::Plain),
        toot(3, "after@x.example", "2022-11-01T00:00:00Z", Kind::Plain),
        toot(4, "after@x.example", "2023-05-01T00:00:00Z", Kind::Plain),
        toot(5, "straddle@x.example", "2021-05-01T00:00:00Z", Kind::Plain),
        toot(6, "straddle@x.example", "2023-03-01T00:00:00Z", Kind::Plain),
        toot(7, "ondate@x.example", "2022-10-27T00:00:00Z", Kind::Plain),
        toot(8, "single@x.example", "2020-06-01T00:00:00Z", Kind::Plain),
        toot(9, "lastondate@x.example", "2022-09-01T00:00:00Z", Kind::Plain),
        toot(10, "lastondate@x.example", "2022-10-27T23:00:00Z", Kind::Plain),
    ];
    let expected = vec![
        ("before@x.example", "Others1"),
        ("after@x.example", "Others2"),
        ("straddle@x.example", "Aficionados"),
        ("ondate@x.example", "Others2"),
        ("single@x.example", "Others1"),
        ("lastondate@x.example", "Aficionados"),
    ];
    (toots, expected)
}

/// Crawls a fresh copy of the seeded mock network into `out`. With
/// `interrupt = Some(n)` the crawl stops after `n` visits, leaves a torn write
/// behind in the toots log, and is then resumed from its checkpoint.
pub fn crawl_mock(out: &Path, users: usize, net_seed: u64, target: usize, interrupt: Option<usize>) -> Vec<AccountRef> {
    use fedinet::crawler::Crawler;
    use std::io::Write;
    let net = MockNet::new(users, net_seed);
    let client = net.client();
    let seed = net.users[0].to_string();
    let mut crawler = Crawler::start(&client, &seed, target, t_end(), acquisition(), out).unwrap();
    if let Some(n) = interrupt {
        crawler.run_for(Some(n)).unwrap();
        let checkpoint = crawler.checkpoint_path().to_owned();
        drop(crawler);
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(out.join(fedinet::tie_store::TOOTS_FILE))
            .unwrap();
        f.write_all(b"{\"toot_id\":\"torn").unwrap();
        crawler = Crawler::resume(&client, checkpoint).unwrap();
    }
    let handle = crawler.finish().unwrap();
    handle.load().unwrap().accounts.iter().map(|a| a.handle()).collect()
}
