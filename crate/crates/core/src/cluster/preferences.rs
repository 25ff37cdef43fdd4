use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::Distance;
use crate::profile::Label;

/// Ranked preference lists for both sides of the admission game.
///
/// `centroid_pref[c]` lists every point, most preferred first.
/// `point_pref[p]` lists every centroid, most preferred first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceProfile {
    pub centroid_pref: Vec<Vec<usize>>,
    pub point_pref: Vec<Vec<usize>>,
}

impl PreferenceProfile {
    pub fn num_points(&self) -> usize {
        self.point_pref.len()
    }

    pub fn num_centroids(&self) -> usize {
        self.centroid_pref.len()
    }

    /// `rank[c][p]` is the position of point `p` in centroid `c`'s list.
    pub fn centroid_ranks(&self) -> Vec<Vec<usize>> {
        self.centroid_pref
            .iter()
            .map(|list| {
                let mut rank = vec![0; list.len()];
                for (pos, &p) in list.iter().enumerate() {
                    rank[p] = pos;
                }
                rank
            })
            .collect()
    }
}

/// Label counts per cluster under an assignment.
#[derive(Debug, Clone)]
pub(crate) struct LabelCounts {
    counts: Vec<[u64; 2]>,
}

impl LabelCounts {
    pub(crate) fn tally(assignment: &[usize], labels: &[Label], k: usize) -> Self {
        let mut counts = vec![[0u64; 2]; k];
        for (&c, label) in assignment.iter().zip(labels) {
            counts[c][label.index()] += 1;
        }
        LabelCounts { counts }
    }

    pub(crate) fn size(&self, c: usize) -> u64 {
        self.counts[c][0] + self.counts[c][1]
    }

    /// Purity of cluster `c` for `label` as an exact fraction; empty
    /// clusters have purity 0.
    pub(crate) fn purity(&self, c: usize, label: Label) -> (u64, u64) {
        let size = self.size(c);
        if size == 0 {
            (0, 1)
        } else {
            (self.counts[c][label.index()], size)
        }
    }
}

fn cmp_fraction((a, b): (u64, u64), (c, d): (u64, u64)) -> Ordering {
    (u128::from(a) * u128::from(d)).cmp(&(u128::from(c) * u128::from(b)))
}

/// Centroids rank points by ascending distance. Points rank centroids by
/// descending purity for their own label under `previous`, then ascending
/// distance; without a previous assignment points rank by distance alone.
/// Remaining ties go to the lower index.
pub fn build_preferences(
    features: &[f64],
    labels: &[Label],
    centroids: &[f64],
    previous: Option<&[usize]>,
    distance: Distance,
) -> PreferenceProfile {
    let order = feature_order(features);
    build_preferences_sorted(features, &order, labels, centroids, previous, distance)
}

/// Point indices sorted by `(feature, index)`.
pub(crate) fn feature_order(features: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| features[a].total_cmp(&features[b]).then(a.cmp(&b)));
    order
}

/// Points by ascending `dist`, ties by index. Distance grows monotonically
/// walking away from the centroid in feature order, so this is a two-way
/// merge outward from `split` rather than a sort.
fn distance_ranking(order: &[usize], dist: &[f64], split: usize) -> Vec<usize> {
    let n = order.len();
    let same = |a: f64, b: f64| a.total_cmp(&b) == Ordering::Equal;
    let mut out = Vec::with_capacity(n);
    let mut group = Vec::new();
    let (mut l, mut r) = (split, split);
    while l > 0 || r < n {
        let d = match (l > 0, r < n) {
            (true, true) => {
                let (a, b) = (dist[order[l - 1]], dist[order[r]]);
                if a.total_cmp(&b).is_le() { a } else { b }
            }
            (true, false) => dist[order[l - 1]],
            _ => dist[order[r]],
        };
        group.clear();
        while l > 0 && same(dist[order[l - 1]], d) {
            group.push(order[l - 1]);
            l -= 1;
        }
        while r < n && same(dist[order[r]], d) {
            group.push(order[r]);
            r += 1;
        }
        group.sort_unstable();
        out.extend_from_slice(&group);
    }
    out
}

/// [`build_preferences`] with the feature order precomputed.
pub(crate) fn build_preferences_sorted(
    features: &[f64],
    order: &[usize],
    labels: &[Label],
    centroids: &[f64],
    previous: Option<&[usize]>,
    distance: Distance,
) -> PreferenceProfile {
    let k = centroids.len();
    let dist: Vec<Vec<f64>> = centroids
        .iter()
        .map(|&c| features.iter().map(|&x| distance.eval(x, c)).collect())
        .collect();

    let centroid_pref = centroids
        .iter()
        .zip(&dist)
        .map(|(&c, row)| {
            let split = order.partition_point(|&i| features[i] <= c);
            distance_ranking(order, row, split)
        })
        .collect();

    // purity_rank[label][c] counts the clusters strictly purer than c for
    // that label, so equal purities share a rank
    let purity_rank: Vec<Vec<usize>> = match previous {
        Some(assignment) => {
            let counts = LabelCounts::tally(assignment, labels, k);
            [Label::RegimeA, Label::RegimeB]
                .iter()
                .map(|&label| {
                    (0..k)
                        .map(|c| {
                            (0..k)
                                .filter(|&d| {
                                    cmp_fraction(counts.purity(d, label), counts.purity(c, label)) == Ordering::Greater
                                })
                                .count()
                        })
                        .collect()
                })
                .collect()
        }
        None => vec![vec![0; k]; 2],
    };
    let point_pref = (0..features.len())
        .map(|p| {
            let rank = &purity_rank[labels[p].index()];
            let before = |a: usize, b: usize| (rank[a], dist[a][p], a) < (rank[b], dist[b][p], b);
            // insertion sort: k is small
            let mut order: Vec<usize> = (0..k).collect();
            for i in 1..k {
                let mut j = i;
                while j > 0 && before(order[j], order[j - 1]) {
                    order.swap(j, j - 1);
                    j -= 1;
                }
            }
            order
        })
        .collect();

    PreferenceProfile {
        centroid_pref,
        point_pref,
    }
}
