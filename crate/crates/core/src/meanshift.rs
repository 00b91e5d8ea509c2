//! One-dimensional flat-kernel mean shift with k-NN bandwidth estimation.
//!
//! Every point seeds its own trajectory `x <- mean{p : |p - x| <= h}`. A
//! trajectory stops at the first `x` whose window mean lies within
//! `1e-6 * h` of `x`, so every reported mode is a fixed point to that
//! tolerance. Converged positions are then merged greedily: modes are ranked
//! by support (points within `h`), ties going to the lower position, and a
//! mode is kept only if it lies farther than `h` from every stronger kept
//! mode. Points take the label of the kept center nearest their converged
//! position.

use log::warn;
use serde::Serialize;

use crate::tie_store::TieRecord;

pub const DEFAULT_QUANTILE: f64 = 0.3;
/// Bandwidth returned when all neighbour distances are zero.
pub const DEGENERATE_BANDWIDTH: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 300;
/// Convergence tolerance relative to the bandwidth.
pub const RELATIVE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeanShiftError {
    #[error("bandwidth estimation needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("quantile must lie in (0, 1], got {0}")]
    InvalidQuantile(f64),
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("no points to cluster")]
    Empty,
    #[error("ego network has no ties after filtering")]
    EmptyEgoNetwork,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterResult {
    /// Cluster index per input point, in input order.
    pub labels: Vec<usize>,
    /// Mode positions, ascending.
    pub centers: Vec<f64>,
    pub k: usize,
    pub bandwidth: f64,
    /// False if some trajectory hit the iteration cap.
    pub converged: bool,
}

fn check_finite(points: &[f64]) -> Result<(), MeanShiftError> {
    if points.iter().all(|p| p.is_finite()) {
        Ok(())
    } else {
        Err(MeanShiftError::NonFinite)
    }
}

fn sorted(points: &[f64]) -> Vec<f64> {
    let mut s = points.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Neighbour rank used for a given quantile and sample size.
pub fn neighbour_rank(n: usize, quantile: f64) -> usize {
    // The small offset keeps products such as 0.3 * 10 from rounding up.
    (((quantile * (n - 1) as f64) - 1e-9).ceil() as usize).clamp(1, n - 1)
}

/// Mean distance from each point to its `ceil(quantile * (n - 1))`-th
/// nearest neighbour.
pub fn estimate_bandwidth(points: &[f64], quantile: f64) -> Result<f64, MeanShiftError> {
    if points.len() < 2 {
        return Err(MeanShiftError::TooFewPoints(points.len()));
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(MeanShiftError::InvalidQuantile(quantile));
    }
    check_finite(points)?;
    let s = sorted(points);
    let n = s.len();
    let rank = neighbour_rank(n, quantile);
    let mut total = 0.0;
    for i in 0..n {
        // Merge the left and right neighbour sequences until `rank` are taken.
        let (mut l, mut r) = (i as isize - 1, i + 1);
        let mut dist = 0.0;
        for _ in 0..rank {
            let dl = (l >= 0).then(|| s[i] - s[l as usize]);
            let dr = (r < n).then(|| s[r] - s[i]);
            match (dl, dr) {
                (Some(a), Some(b)) if a <= b => {
                    dist = a;
                    l -= 1;
                }
                (Some(_), Some(b)) | (None, Some(b)) => {
                    dist = b;
                    r += 1;
                }
                (Some(a), None) => {
                    dist = a;
                    l -= 1;
                }
                (None, None) => unreachable!("rank < n"),
            }
        }
        total += dist;
    }
    let bw = total / n as f64;
    Ok(if bw > 0.0 { bw } else { DEGENERATE_BANDWIDTH })
}

/// Index range of the sorted points with `|p - x| <= h`. The binary search
/// is only a starting guess; the bounds are settled with the exact predicate
/// so that rounding in `x - h` cannot move a boundary point.
fn window(sorted: &[f64], x: f64, h: f64) -> (usize, usize) {
    let inside = |p: f64| (p - x).abs() <= h;
    let mut lo = sorted.partition_point(|&p| p < x - h);
    while lo > 0 && inside(sorted[lo - 1]) {
        lo -= 1;
    }
    while lo < sorted.len() && sorted[lo] < x && !inside(sorted[lo]) {
        lo += 1;
    }
    let mut hi = sorted.partition_point(|&p| p <= x + h).max(lo);
    while hi < sorted.len() && inside(sorted[hi]) {
        hi += 1;
    }
    while hi > lo && sorted[hi - 1] > x && !inside(sorted[hi - 1]) {
        hi -= 1;
    }
    (lo, hi)
}

/// Mean of the sorted points within `h` of `x`, if any.
fn window_mean(sorted: &[f64], x: f64, h: f64) -> Option<f64> {
    let (lo, hi) = window(sorted, x, h);
    (hi > lo).then(|| sorted[lo..hi].iter().sum::<f64>() / (hi - lo) as f64)
}

fn support(sorted: &[f64], x: f64, h: f64) -> usize {
    let (lo, hi) = window(sorted, x, h);
    hi - lo
}

/// Follows one trajectory; returns the converged position and whether it
/// converged within the iteration cap.
fn climb(sorted: &[f64], start: f64, h: f64) -> (f64, bool) {
    let tol = RELATIVE_TOLERANCE * h;
    let mut x = start;
    for _ in 0..MAX_ITERATIONS {
        match window_mean(sorted, x, h) {
            Some(m) if (m - x).abs() >= tol => x = m,
            _ => return (x, true),
        }
    }
    (x, false)
}

pub fn meanshift_1d(points: &[f64], bandwidth: f64) -> Result<ClusterResult, MeanShiftError> {
    if points.is_empty() {
        return Err(MeanShiftError::Empty);
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(MeanShiftError::InvalidBandwidth(bandwidth));
    }
    check_finite(points)?;
    let s = sorted(points);
    let h = bandwidth;

    let mut converged = true;
    let modes: Vec<f64> = points
        .iter()
        .map(|&p| {
            let (x, ok) = climb(&s, p, h);
            converged &= ok;
            x
        })
        .collect();
    if !converged {
        warn!("mean shift hit the {MAX_ITERATIONS}-iteration cap (n={}, h={h})", points.len());
    }

    let mut candidates = sorted(&modes);
    candidates.dedup();
    let mut ranked: Vec<(usize, f64)> = candidates
        .into_iter()
        .map(|c| (support(&s, c, h), c))
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.total_cmp(&b.1)));
    let mut centers: Vec<f64> = Vec::new();
    for (_, c) in ranked {
        if centers.iter().all(|k| (c - k).abs() > h) {
            centers.push(c);
        }
    }
    centers.sort_by(f64::total_cmp);

    let labels = modes
        .iter()
        .map(|&m| nearest(&centers, m))
        .collect();
    Ok(ClusterResult {
        labels,
        k: centers.len(),
        centers,
        bandwidth: h,
        converged,
    })
}

/// Index of the center closest to `x`; the lower index wins exact ties.
pub fn nearest(centers: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (i, c) in centers.iter().enumerate().skip(1) {
        if (c - x).abs() < (centers[best] - x).abs() {
            best = i;
        }
    }
    best
}

/// Clusters raw values with an estimated bandwidth; a single value forms a
/// single cluster.
pub fn cluster_values(values: &[f64], quantile: f64) -> Result<ClusterResult, MeanShiftError> {
    match values.len() {
        0 => Err(MeanShiftError::EmptyEgoNetwork),
        1 => {
            check_finite(values)?;
            Ok(ClusterResult {
                labels: vec![0],
                centers: vec![values[0]],
                k: 1,
                bandwidth: DEGENERATE_BANDWIDTH,
                converged: true,
            })
        }
        _ => {
            let h = estimate_bandwidth(values, quantile)?;
            meanshift_1d(values, h)
        }
    }
}

/// Clusters the annual contact frequencies of an ego's (filtered) ties.
/// Labels follow the order of `ties`.
pub fn cluster_frequencies(ties: &[TieRecord]) -> Result<ClusterResult, MeanShiftError> {
    cluster_frequencies_with(ties, DEFAULT_QUANTILE)
}

pub fn cluster_frequencies_with(
    ties: &[TieRecord],
    quantile: f64,
) -> Result<ClusterResult, MeanShiftError> {
    let freqs: Vec<f64> = ties.iter().map(|t| t.frequency).collect();
    cluster_values(&freqs, quantile)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_bandwidth() {
        assert_eq!(estimate_bandwidth(&[0.0, 1.0], 1.0).unwrap(), 1.0);
    }

    #[test]
    fn identical_points_degenerate() {
        let pts = [3.0; 7];
        let h = estimate_bandwidth(&pts, 0.3).unwrap();
        assert_eq!(h, DEGENERATE_BANDWIDTH);
        let r = meanshift_1d(&pts, h).unwrap();
        assert_eq!(r.k, 1);
        assert_eq!(r.centers, vec![3.0]);
    }

    #[test]
    fn bandwidth_errors() {
        assert_eq!(
            estimate_bandwidth(&[1.0], 0.3),
            Err(MeanShiftError::TooFewPoints(1))
        );
        assert!(matches!(
            estimate_bandwidth(&[1.0, 2.0], 0.0),
            Err(MeanShiftError::InvalidQuantile(_))
        ));
        assert!(matches!(
            estimate_bandwidth(&[1.0, f64::NAN], 0.5),
            Err(MeanShiftError::NonFinite)
        ));
        assert!(meanshift_1d(&[1.0], 0.0).is_err());
        assert!(meanshift_1d(&[], 1.0).is_err());
    }

    #[test]
    fn neighbour_rank_avoids_float_roundup() {
        assert_eq!(neighbour_rank(11, 0.3), 3);
        assert_eq!(neighbour_rank(10, 0.3), 3);
        assert_eq!(neighbour_rank(2, 0.3), 1);
        assert_eq!(neighbour_rank(5, 1.0), 4);
    }

    #[test]
    fn single_point_is_identity() {
        let r = meanshift_1d(&[4.2], 1.0).unwrap();
        assert_eq!((r.k, r.centers.clone(), r.labels.clone()), (1, vec![4.2], vec![0]));
        let r = cluster_values(&[4.2], 0.3).unwrap();
        assert_eq!(r.k, 1);
    }

    #[test]
    fn two_groups() {
        let pts = [0.9, 1.0, 1.1, 9.9, 10.0, 10.1];
        let r = meanshift_1d(&pts, 1.0).unwrap();
        assert_eq!(r.k, 2);
        assert!((r.centers[0] - 1.0).abs() < 1e-9);
        assert!((r.centers[1] - 10.0).abs() < 1e-9);
        assert_eq!(r.labels, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn empty_ties_signal() {
        assert_eq!(cluster_frequencies(&[]), Err(MeanShiftError::EmptyEgoNetwork));
    }

    #[test]
    fn nearest_prefers_lower_on_tie() {
        assert_eq!(nearest(&[0.0, 2.0], 1.0), 0);
        assert_eq!(nearest(&[0.0, 2.0], 1.5), 1);
    }
}
