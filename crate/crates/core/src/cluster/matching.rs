use std::collections::BinaryHeap;

use super::PreferenceProfile;
use crate::error::{Error, Result};

/// Point-proposing deferred acceptance with per-centroid capacities.
///
/// Each free point proposes to its best centroid that has not yet rejected
/// it; a centroid keeps its `quota` most preferred applicants and rejects the
/// rest. The result is the point-optimal stable matching, returned as
/// `assignment[point] = centroid`.
pub fn deferred_acceptance(profile: &PreferenceProfile, quotas: &[usize]) -> Result<Vec<usize>> {
    let n = profile.num_points();
    let k = profile.num_centroids();
    if quotas.len() != k {
        return Err(Error::domain(format!("{} quotas for {k} centroids", quotas.len())));
    }
    if quotas.iter().sum::<usize>() < n {
        return Err(Error::domain("total quota is below the number of points"));
    }
    if profile.point_pref.iter().any(|list| list.len() != k) {
        return Err(Error::domain("point preference lists must rank every centroid"));
    }

    let rank = profile.centroid_ranks();
    let mut next = vec![0usize; n];
    let mut held: Vec<BinaryHeap<(usize, usize)>> = vec![BinaryHeap::new(); k];
    let mut free: Vec<usize> = (0..n).rev().collect();

    while let Some(p) = free.pop() {
        // capacity covers every point, so no point exhausts its list
        let c = profile.point_pref[p][next[p]];
        next[p] += 1;
        held[c].push((rank[c][p], p));
        if held[c].len() > quotas[c] {
            let (_, rejected) = held[c].pop().expect("non-empty heap");
            free.push(rejected);
        }
    }

    let mut assignment = vec![usize::MAX; n];
    for (c, heap) in held.into_iter().enumerate() {
        for (_, p) in heap {
            assignment[p] = c;
        }
    }
    Ok(assignment)
}
