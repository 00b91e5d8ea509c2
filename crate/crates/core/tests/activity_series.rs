mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{activity_fixture, acct, ts};
use fedinet::activity::{interaction_mix, lifespan_series, size_activity_table, categorize_users, UserCategory};

#[test]
fn lifespan_series_hand_check() {
    let toots = activity_fixture();
    let users: BTreeSet<_> = toots.iter().map(|t| t.author.clone()).collect();
    let rows = lifespan_series(&toots, &users, ts("2023-01-07T00:00:00Z"));
    let got: Vec<(usize, usize, usize, usize, f64, f64)> = rows
        .iter()
        .map(|r| (r.day, r.users, r.active_directed, r.active_undirected, r.mean_directed_toots, r.mean_undirected_toots))
        .collect();
    assert_eq!(
        got,
        vec![
            (1, 5, 4, 4, 0.6, 0.6),
            (2, 5, 2, 1, 0.0, 0.0),
            (3, 5, 2, 1, 0.4, 0.0),
            (4, 4, 0, 1, 0.0, 0.0),
            (5, 4, 0, 1, 0.0, 0.0),
            (6, 2, 0, 1, 0.0, 0.5),
        ]
    );
}

#[test]
fn lifespan_restricted_to_cohort() {
    let toots = activity_fixture();
    let users: BTreeSet<_> = [acct("d@x.example")].into();
    let rows = lifespan_series(&toots, &users, ts("2023-01-07T00:00:00Z"));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.users == 1));
    assert_eq!(rows[2].mean_directed_toots, 1.0);
}

#[test]
fn size_activity_rates() {
    let toots = activity_fixture();
    let egos = vec![acct("d@x.example"), acct("b@x.example"), acct("missing@x.example")];
    let counts: BTreeMap<_, _> = [(acct("d@x.example"), 7usize)].into();
    let rows = size_activity_table(&egos, &toots, &counts, ts("2023-01-07T00:00:00Z"));
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0].alters, rows[0].lifespan_days), (7, 3));
    assert_eq!(rows[0].toots_per_day, 2.0 / 3.0);
    assert_eq!(rows[0].replies_per_day, 1.0 / 3.0);
    assert_eq!((rows[1].alters, rows[1].lifespan_days), (0, 5));
    assert_eq!(rows[1].directed_per_day, 0.2);
}

#[test]
fn mix_counts_by_category() {
    let toots = activity_fixture();
    let mut cats = categorize_users(&toots, common::date("2023-01-03"));
    cats.remove(&acct("c@x.example"));
    let ix: Vec<_> = toots.iter().flat_map(fedinet::interaction_model::extract_interactions).collect();
    let mix = interaction_mix(&ix, &cats);
    // a, e straddle the date; b ends before it; d starts after it.
    let (afi, o1, o2) = (UserCategory::Aficionados.index(), UserCategory::Others1.index(), UserCategory::Others2.index());
    assert_eq!(mix.counts[afi][afi], 1);
    assert_eq!(mix.counts[afi][o2], 1);
    assert_eq!(mix.counts[o2][afi], 2);
    assert_eq!(mix.unknown, 1);
    assert!(mix.fractions[o1].is_none());
    assert_eq!(mix.fractions[afi], Some([0.5, 0.0, 0.5]));
}
