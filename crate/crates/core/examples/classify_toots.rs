//! Classifies a handful of toots and extracts the directed interactions
//! they carry.

use fedinet::interaction_model::{classify_toot, dataset_summary, extract_interactions, TootSummary};
use fedinet::timeutil::parse_ts;
use fedinet::{AccountRef, Toot};

fn toot(id: &str, text_kind: &str) -> Toot {
    let me: AccountRef = "alice@example.social".parse().unwrap();
    let bob: AccountRef = "bob@other.example".parse().unwrap();
    let carol: AccountRef = "carol@third.example".parse().unwrap();
    let mut t = Toot {
        toot_id: id.into(),
        author: me.clone(),
        created_at: parse_ts("2023-05-01T12:00:00Z").unwrap(),
        in_reply_to_account: None,
        mentions: vec![],
        boost_of_author: None,
        hashtags: vec![],
        urls: vec![],
        media_count: 0,
        char_count: 40,
    };
    match text_kind {
        "reply" => {
            t.in_reply_to_account = Some(bob.clone());
            t.mentions = vec![bob, carol];
        }
        "boost" => t.boost_of_author = Some(carol),
        "self-reply" => t.in_reply_to_account = Some(me),
        "hashtag" => t.hashtags.push("rustlang".into()),
        "link+photo" => {
            t.urls.push("https://example.org/post".into());
            t.media_count = 1;
        }
        _ => {}
    }
    t
}

fn main() {
    let kinds = ["plain", "reply", "boost", "self-reply", "hashtag", "link+photo"];
    let toots: Vec<Toot> = kinds.iter().enumerate().map(|(i, k)| toot(&i.to_string(), k)).collect();
    for (kind, t) in kinds.iter().zip(&toots) {
        let c = classify_toot(t);
        let ix: Vec<String> = extract_interactions(t)
            .iter()
            .map(|i| format!("{}:{:?}", i.alter, i.kind))
            .collect();
        println!(
            "{kind:<11} directed={:<5} plaintext={:<5} interactions=[{}]",
            c.directed,
            c.is_plaintext,
            ix.join(", ")
        );
    }
    let summary = dataset_summary(&toots);
    for (name, v) in TootSummary::HEADER.iter().zip(summary.row()) {
        println!("{name:>20} {v}");
    }
}
