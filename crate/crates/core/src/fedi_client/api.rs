//! Subset of the public Mastodon v1 JSON schema consumed by the client.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiAccount {
    pub id: String,
    pub username: String,
    /// `username` for accounts local to the serving instance, `username@host`
    /// otherwise.
    pub acct: String,
    #[serde(default)]
    pub bot: bool,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiMention {
    pub id: String,
    pub username: String,
    pub acct: String,
    #[serde(default)]
    pub url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiTag {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiCard {
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiStatus {
    pub id: String,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub in_reply_to_id: Option<String>,
    #[serde(default)]
    pub in_reply_to_account_id: Option<String>,
    pub account: ApiAccount,
    #[serde(default)]
    pub content: String,
    #[serde(default)]
    pub mentions: Vec<ApiMention>,
    #[serde(default)]
    pub tags: Vec<ApiTag>,
    #[serde(default)]
    pub media_attachments: Vec<serde_json::Value>,
    #[serde(default)]
    pub card: Option<ApiCard>,
    #[serde(default)]
    pub reblog: Option<Box<ApiStatus>>,
}
