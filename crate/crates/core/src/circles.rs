//! Nested social circles and the structural cohort tables.
//!
//! Clusters are ordered by descending center frequency and accumulated, so
//! circle `i` holds every alter of clusters `0..=i`. Frequency and bond-length
//! statistics use the cumulative member set unless [`StatsScope::Rings`] is
//! selected, in which case they use only the alters added by that circle.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::fedi_client::AccountRef;
use crate::meanshift::ClusterResult;
use crate::tie_store::TieRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum StatsScope {
    #[default]
    Cumulative,
    Rings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Circle {
    /// Sorted.
    pub members: Vec<AccountRef>,
    pub cumulative_size: usize,
    /// Lowest frequency among the members.
    pub min_frequency: f64,
    pub mean_frequency: f64,
    pub mean_bond_length_days: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EgoNetwork {
    pub ego: AccountRef,
    /// Innermost first.
    pub circles: Vec<Circle>,
    pub k: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// `cluster.labels` must be aligned with `ties`.
pub fn build_circles(
    ego: &AccountRef,
    ties: &[TieRecord],
    cluster: &ClusterResult,
    scope: StatsScope,
) -> EgoNetwork {
    assert_eq!(ties.len(), cluster.labels.len(), "labels must cover all ties");
    let mut order: Vec<usize> = (0..cluster.k).collect();
    order.sort_by(|&a, &b| cluster.centers[b].total_cmp(&cluster.centers[a]));
    let mut by_cluster: Vec<Vec<&TieRecord>> = vec![Vec::new(); cluster.k];
    for (tie, &label) in ties.iter().zip(&cluster.labels) {
        by_cluster[label].push(tie);
    }

    let mut circles = Vec::with_capacity(cluster.k);
    let mut cumulative: Vec<&TieRecord> = Vec::new();
    for &c in &order {
        let ring = &by_cluster[c];
        cumulative.extend(ring.iter().copied());
        let stats: &[&TieRecord] = match scope {
            StatsScope::Cumulative => &cumulative,
            StatsScope::Rings => ring,
        };
        let mut members: Vec<AccountRef> = cumulative.iter().map(|t| t.alter.clone()).collect();
        members.sort();
        circles.push(Circle {
            cumulative_size: cumulative.len(),
            members,
            min_frequency: cumulative
                .iter()
                .map(|t| t.frequency)
                .fold(f64::INFINITY, f64::min),
            mean_frequency: mean(stats.iter().map(|t| t.frequency)),
            mean_bond_length_days: mean(stats.iter().map(|t| t.bond_length_days())),
        });
    }
    EgoNetwork {
        ego: ego.clone(),
        k: circles.len(),
        circles,
    }
}

impl EgoNetwork {
    pub fn sizes(&self) -> Vec<usize> {
        self.circles.iter().map(|c| c.cumulative_size).collect()
    }

    /// Outermost circle size, i.e. the active network.
    pub fn size(&self) -> usize {
        self.circles.last().map_or(0, |c| c.cumulative_size)
    }

    /// Structural invariant violations, if any.
    pub fn violations(&self, scope: StatsScope) -> Vec<String> {
        let mut out = Vec::new();
        if self.k != self.circles.len() {
            out.push(format!("{}: k={} but {} circles", self.ego, self.k, self.circles.len()));
        }
        for (i, w) in self.circles.windows(2).enumerate() {
            let (inner, outer) = (&w[0], &w[1]);
            if outer.cumulative_size <= inner.cumulative_size {
                out.push(format!("{}: circle {} does not grow", self.ego, i + 2));
            }
            if !inner.members.iter().all(|m| outer.members.binary_search(m).is_ok()) {
                out.push(format!("{}: circle {} not nested in circle {}", self.ego, i + 1, i + 2));
            }
            if outer.min_frequency >= inner.min_frequency {
                out.push(format!("{}: min frequency not decreasing at circle {}", self.ego, i + 2));
            }
            if scope == StatsScope::Cumulative && outer.mean_frequency >= inner.mean_frequency {
                out.push(format!("{}: mean frequency not decreasing at circle {}", self.ego, i + 2));
            }
        }
        out
    }
}

/// Adjacent size ratios `size[i+1] / size[i]`; empty when `k < 2`.
pub fn scaling_ratios(net: &EgoNetwork) -> Vec<f64> {
    ratios_of(&net.sizes().iter().map(|&s| s as f64).collect::<Vec<_>>())
}

pub fn ratios_of(sizes: &[f64]) -> Vec<f64> {
    sizes.windows(2).map(|w| w[1] / w[0]).collect()
}

/// Number of egos per circle count.
pub fn circle_count_distribution(nets: &[EgoNetwork]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for n in nets {
        *hist.entry(n.k).or_insert(0) += 1;
    }
    hist
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortRow {
    pub egos: usize,
    pub mean_sizes: Vec<f64>,
    /// Per-ego ratios averaged over the cohort.
    pub mean_ratios: Vec<f64>,
    pub mean_frequencies: Vec<f64>,
    pub mean_bond_lengths: Vec<f64>,
}

impl CohortRow {
    /// Mean active network size (the outermost circle).
    pub fn network_size(&self) -> f64 {
        *self.mean_sizes.last().unwrap()
    }
}

/// Rows keyed by total circle count.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct CohortTable {
    pub rows: BTreeMap<usize, CohortRow>,
}

impl CohortTable {
    pub fn max_k(&self) -> usize {
        self.rows.keys().copied().max().unwrap_or(0)
    }
}

fn column_means(rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    (0..width)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
        .collect()
}

pub fn cohort_aggregate(nets: &[EgoNetwork]) -> CohortTable {
    let mut groups: BTreeMap<usize, Vec<&EgoNetwork>> = BTreeMap::new();
    for n in nets.iter().filter(|n| n.k > 0) {
        groups.entry(n.k).or_default().push(n);
    }
    let rows = groups
        .into_iter()
        .map(|(k, members)| {
            let collect = |f: &dyn Fn(&EgoNetwork) -> Vec<f64>| -> Vec<Vec<f64>> {
                members.iter().map(|n| f(n)).collect()
            };
            let sizes = collect(&|n| n.sizes().iter().map(|&s| s as f64).collect());
            let ratios = collect(&scaling_ratios);
            let freqs = collect(&|n| n.circles.iter().map(|c| c.mean_frequency).collect());
            let bonds = collect(&|n| n.circles.iter().map(|c| c.mean_bond_length_days).collect());
            (
                k,
                CohortRow {
                    egos: members.len(),
                    mean_sizes: column_means(&sizes, k),
                    mean_ratios: column_means(&ratios, k - 1),
                    mean_frequencies: column_means(&freqs, k),
                    mean_bond_lengths: column_means(&bonds, k),
                },
            )
        })
        .collect();
    CohortTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeutil::{duration_from_days, parse_ts};

    fn tie(alter: &str, freq: f64, bond_days: f64) -> TieRecord {
        let first = parse_ts("2023-01-01T00:00:00Z").unwrap();
        TieRecord {
            ego: "ego@a.example".parse().unwrap(),
            alter: format!("{alter}@a.example").parse().unwrap(),
            contacts: 2,
            first_contact: first,
            last_contact: first + duration_from_days(bond_days),
            frequency: freq,
        }
    }

    fn clustered(ties: &[TieRecord], centers: Vec<f64>) -> ClusterResult {
        let labels = ties
            .iter()
            .map(|t| crate::meanshift::nearest(&centers, t.frequency))
            .collect();
        ClusterResult {
            labels,
            k: centers.len(),
            centers,
            bandwidth: 1.0,
            converged: true,
        }
    }

    fn ego() -> AccountRef {
        "ego@a.example".parse().unwrap()
    }

    #[test]
    fn two_clusters_cumulative() {
        let mut ties = Vec::new();
        for i in 0..3 {
            ties.push(tie(&format!("in{i}"), 50.0 + i as f64, 200.0));
        }
        for i in 0..12 {
            ties.push(tie(&format!("out{i}"), 5.0 + i as f64 * 0.1, 100.0));
        }
        let cr = clustered(&ties, vec![5.5, 51.0]);
        let net = build_circles(&ego(), &ties, &cr, StatsScope::Cumulative);
        assert_eq!(net.sizes(), vec![3, 15]);
        assert!((net.circles[0].mean_frequency - 51.0).abs() < 1e-12);
        assert!((net.circles[0].mean_bond_length_days - 200.0).abs() < 1e-9);
        assert!((net.circles[1].mean_bond_length_days - (3.0 * 200.0 + 12.0 * 100.0) / 15.0).abs() < 1e-9);
        assert!(net.violations(StatsScope::Cumulative).is_empty());

        let rings = build_circles(&ego(), &ties, &cr, StatsScope::Rings);
        assert_eq!(rings.sizes(), vec![3, 15]);
        assert!((rings.circles[1].mean_bond_length_days - 100.0).abs() < 1e-9);
    }

    #[test]
    fn single_cluster_is_whole_network() {
        let ties = vec![tie("a", 3.0, 10.0), tie("b", 4.0, 10.0)];
        let cr = clustered(&ties, vec![3.5]);
        let net = build_circles(&ego(), &ties, &cr, StatsScope::Cumulative);
        assert_eq!(net.k, 1);
        assert_eq!(net.size(), 2);
        assert!(scaling_ratios(&net).is_empty());
    }

    #[test]
    fn canonical_ratios() {
        let r = ratios_of(&[1.5, 5.0, 15.0, 50.0, 150.0]);
        let expected = [10.0 / 3.0, 3.0, 10.0 / 3.0, 3.0];
        for (a, b) in r.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let mean = r.iter().sum::<f64>() / 4.0;
        assert!((mean - 3.1666).abs() < 1e-3);
        assert_eq!(ratios_of(&[1.0, 2.0]), vec![2.0]);
    }

    #[test]
    fn histogram_single_bar() {
        let ties = vec![tie("a", 3.0, 10.0)];
        let cr = clustered(&ties, vec![3.0]);
        let net = build_circles(&ego(), &ties, &cr, StatsScope::Cumulative);
        let hist = circle_count_distribution(&[net.clone(), net.clone(), net]);
        assert_eq!(hist, BTreeMap::from([(1, 3)]));
    }

    #[test]
    fn one_ego_cohort_matches_ego() {
        let ties = vec![tie("a", 30.0, 50.0), tie("b", 3.0, 20.0), tie("c", 3.2, 10.0)];
        let cr = clustered(&ties, vec![3.1, 30.0]);
        let net = build_circles(&ego(), &ties, &cr, StatsScope::Cumulative);
        let table = cohort_aggregate(std::slice::from_ref(&net));
        let row = &table.rows[&2];
        assert_eq!(row.egos, 1);
        assert_eq!(row.mean_sizes, vec![1.0, 3.0]);
        assert_eq!(row.mean_ratios, vec![3.0]);
        assert_eq!(
            row.mean_frequencies,
            net.circles.iter().map(|c| c.mean_frequency).collect::<Vec<_>>()
        );
    }

    #[test]
    fn detects_broken_nesting() {
        let ties = vec![tie("a", 30.0, 50.0), tie("b", 3.0, 20.0)];
        let cr = clustered(&ties, vec![3.0, 30.0]);
        let mut net = build_circles(&ego(), &ties, &cr, StatsScope::Cumulative);
        net.circles[1].members.retain(|m| m.username() != "a");
        net.circles[1].cumulative_size = 1;
        let v = net.violations(StatsScope::Cumulative);
        assert!(v.iter().any(|m| m.contains("not nested")));
        assert!(v.iter().any(|m| m.contains("does not grow")));
    }
}
