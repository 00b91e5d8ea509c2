//! Collection and analysis of Mastodon interaction data as Dunbar-style ego
//! networks.
//!
//! The crate is organised as a pipeline:
//!
//! - [`fedi_client`] talks to the Mastodon REST API (or the in-process
//!   [`fedi_client::mock`] server) with pagination and rate-limit handling.
//! - [`interaction_model`] classifies toots and extracts directed ego→alter
//!   interactions.
//! - [`crawler`] snowball-samples users starting from a seed account.
//! - [`tie_store`] persists datasets and aggregates interactions into ties with
//!   annual contact frequencies.
//! - [`meanshift`] and [`circles`] detect nested social circles and compute
//!   the structural tables.
//! - [`activity`] computes the daily, categorical and lifespan activity series.
//! - [`synthgen`] plants known circle structure into synthetic datasets.
//! - [`report`] and [`cli`] tie everything into batch commands.
//!
//! Runnable walkthroughs for each stage live in this crate's `examples/`
//! directory.

pub mod activity;
pub mod circles;
pub mod cli;
pub mod crawler;
pub mod fedi_client;
pub mod interaction_model;
pub mod meanshift;
pub mod report;
pub mod synthgen;
pub mod tie_store;
pub mod timeutil;

pub use fedi_client::{Account, AccountRef, FediClient};
pub use interaction_model::{Interaction, InteractionKind, Toot, TootClass};
pub use tie_store::{Dataset, DatasetConfig, DatasetHandle, TieRecord};
