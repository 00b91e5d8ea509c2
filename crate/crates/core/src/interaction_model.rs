//! Toot taxonomy and ego→alter interaction extraction.
//!
//! A toot is *directed* when it replies to, mentions or boosts another
//! account; everything else is *undirected*. Repeatable features count once
//! per toot. Self-references never count: a self-reply or a boost of one's
//! own toot carries no tie information.

use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use log::debug;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::fedi_client::api::ApiStatus;
use crate::fedi_client::{AccountRef, ClientError};
use crate::timeutil::{self, ts_millis};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toot {
    pub toot_id: String,
    pub author: AccountRef,
    #[serde(with = "ts_millis")]
    pub created_at: DateTime<Utc>,
    pub in_reply_to_account: Option<AccountRef>,
    pub mentions: Vec<AccountRef>,
    pub boost_of_author: Option<AccountRef>,
    pub hashtags: Vec<String>,
    pub urls: Vec<String>,
    pub media_count: u32,
    pub char_count: u32,
}

fn anchor_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"<a\s+([^>]*)>"#).unwrap())
}

fn attr_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"([a-zA-Z-]+)="([^"]*)""#).unwrap())
}

fn tag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[^>]*>").unwrap())
}

/// Plain-text length of a status' HTML content.
fn text_length(html: &str) -> u32 {
    let text = tag_re().replace_all(html, "");
    let text = text
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&amp;", "&");
    text.trim().chars().count() as u32
}

/// Links in the content that are neither mentions nor hashtags.
fn content_urls(html: &str) -> Vec<String> {
    let mut out = Vec::new();
    for cap in anchor_re().captures_iter(html) {
        let mut href = None;
        let mut class = "";
        for attr in attr_re().captures_iter(&cap[1]) {
            match attr.get(1).unwrap().as_str() {
                "href" => href = Some(attr.get(2).unwrap().as_str()),
                "class" => class = attr.get(2).unwrap().as_str(),
                _ => {}
            }
        }
        if class.split_whitespace().any(|c| c == "mention" || c == "hashtag") {
            continue;
        }
        if let Some(h) = href {
            out.push(h.replace("&amp;", "&"));
        }
    }
    out
}

fn push_unique<T: PartialEq>(v: &mut Vec<T>, item: T) {
    if !v.contains(&item) {
        v.push(item);
    }
}

impl Toot {
    /// Converts an API status fetched from `serving_host`.
    pub fn from_api(status: &ApiStatus, serving_host: &str) -> Result<Self, ClientError> {
        let author = AccountRef::from_acct(&status.account.acct, serving_host)?;
        let created_at = timeutil::truncate_millis(status.created_at);

        if let Some(orig) = &status.reblog {
            return Ok(Self {
                toot_id: status.id.clone(),
                author,
                created_at,
                in_reply_to_account: None,
                mentions: Vec::new(),
                boost_of_author: Some(AccountRef::from_acct(&orig.account.acct, serving_host)?),
                hashtags: Vec::new(),
                urls: Vec::new(),
                media_count: 0,
                char_count: 0,
            });
        }

        let mut mentions = Vec::new();
        for m in &status.mentions {
            push_unique(&mut mentions, AccountRef::from_acct(&m.acct, serving_host)?);
        }
        let in_reply_to_account = match &status.in_reply_to_account_id {
            None => None,
            Some(id) if *id == status.account.id => Some(author.clone()),
            Some(id) => match status.mentions.iter().find(|m| &m.id == id) {
                Some(m) => Some(AccountRef::from_acct(&m.acct, serving_host)?),
                None => {
                    debug!("status {}: reply target {id} not resolvable", status.id);
                    None
                }
            },
        };
        let mut hashtags = Vec::new();
        for t in &status.tags {
            push_unique(&mut hashtags, t.name.to_lowercase());
        }
        let mut urls = Vec::new();
        for u in content_urls(&status.content) {
            push_unique(&mut urls, u);
        }
        if let Some(card) = &status.card {
            push_unique(&mut urls, card.url.clone());
        }
        Ok(Self {
            toot_id: status.id.clone(),
            author,
            created_at,
            in_reply_to_account,
            mentions,
            boost_of_author: None,
            hashtags,
            urls,
            media_count: status.media_attachments.len() as u32,
            char_count: text_length(&status.content),
        })
    }

    fn replies_to_other(&self) -> bool {
        self.in_reply_to_account
            .as_ref()
            .is_some_and(|a| *a != self.author)
    }

    fn mentions_other(&self) -> bool {
        self.mentions.iter().any(|m| *m != self.author)
    }

    fn boosts_other(&self) -> bool {
        self.boost_of_author
            .as_ref()
            .is_some_and(|a| *a != self.author)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TootClass {
    pub directed: bool,
    pub has_reply: bool,
    pub has_mention: bool,
    pub has_boost: bool,
    pub has_hashtag: bool,
    pub has_url: bool,
    pub has_media: bool,
    pub is_plaintext: bool,
}

pub fn classify_toot(toot: &Toot) -> TootClass {
    let has_reply = toot.replies_to_other();
    let has_mention = toot.mentions_other();
    let has_boost = toot.boosts_other();
    let directed = has_reply || has_mention || has_boost;
    let has_hashtag = !toot.hashtags.is_empty();
    let has_url = !toot.urls.is_empty();
    let has_media = toot.media_count > 0;
    TootClass {
        directed,
        has_reply,
        has_mention,
        has_boost,
        has_hashtag,
        has_url,
        has_media,
        is_plaintext: !directed && !has_hashtag && !has_url && !has_media,
    }
}

/// Declared in precedence order: when one toot references an alter in
/// several ways the interaction takes the lowest variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    Reply,
    Boost,
    Mention,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub ego: AccountRef,
    pub alter: AccountRef,
    #[serde(with = "ts_millis")]
    pub timestamp: DateTime<Utc>,
    pub kind: InteractionKind,
    pub toot_id: String,
}

/// One interaction per distinct non-self alter referenced by `toot`.
pub fn extract_interactions(toot: &Toot) -> Vec<Interaction> {
    let mut refs: Vec<(&AccountRef, InteractionKind)> = Vec::new();
    let candidates = toot
        .in_reply_to_account
        .iter()
        .map(|a| (a, InteractionKind::Reply))
        .chain(toot.boost_of_author.iter().map(|a| (a, InteractionKind::Boost)))
        .chain(toot.mentions.iter().map(|a| (a, InteractionKind::Mention)));
    for (alter, kind) in candidates {
        if *alter == toot.author {
            continue;
        }
        match refs.iter_mut().find(|(a, _)| *a == alter) {
            Some(existing) => existing.1 = existing.1.min(kind),
            None => refs.push((alter, kind)),
        }
    }
    refs.into_iter()
        .map(|(alter, kind)| Interaction {
            ego: toot.author.clone(),
            alter: alter.clone(),
            timestamp: toot.created_at,
            kind,
            toot_id: toot.toot_id.clone(),
        })
        .collect()
}

/// Per-feature toot counts; each toot counts at most once per column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TootSummary {
    pub toots: u64,
    pub directed: u64,
    pub undirected: u64,
    pub plaintext: u64,
    pub replies: u64,
    pub with_hashtags: u64,
    pub with_mentions: u64,
    pub with_urls: u64,
    pub boosts: u64,
    pub with_multimedia: u64,
}

impl TootSummary {
    pub const HEADER: [&'static str; 10] = [
        "toots",
        "dir_toots",
        "undir_toots",
        "plaintxt_no_dir",
        "replies",
        "toots_w_hashtags",
        "toots_w_mentions",
        "toots_w_urls",
        "boosts",
        "toots_w_multimedia",
    ];

    pub fn row(&self) -> [u64; 10] {
        [
            self.toots,
            self.directed,
            self.undirected,
            self.plaintext,
            self.replies,
            self.with_hashtags,
            self.with_mentions,
            self.with_urls,
            self.boosts,
            self.with_multimedia,
        ]
    }
}

pub fn dataset_summary<'a>(toots: impl IntoIterator<Item = &'a Toot>) -> TootSummary {
    let mut s = TootSummary::default();
    for toot in toots {
        let c = classify_toot(toot);
        s.toots += 1;
        s.directed += c.directed as u64;
        s.undirected += !c.directed as u64;
        s.plaintext += c.is_plaintext as u64;
        s.replies += c.has_reply as u64;
        s.with_hashtags += c.has_hashtag as u64;
        s.with_mentions += c.has_mention as u64;
        s.with_urls += c.has_url as u64;
        s.boosts += c.has_boost as u64;
        s.with_multimedia += c.has_media as u64;
    }
    s
}
