//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::path::PathBuf;

use micromobility::cluster::PreferenceProfile;
use micromobility::{AnalysisDataset, Granularity, Label, LabeledPoint, PeriodKey, PeriodMode, VehicleType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures/austin_synthetic_10k.csv")
}

/// Every (point, centroid) pair that blocks `assignment`: the point strictly
/// prefers the centroid to its match, and the centroid either has spare
/// capacity or strictly prefers the point to someone it holds.
pub fn blocking_pairs(profile: &PreferenceProfile, quotas: &[usize], assignment: &[usize]) -> Vec<(usize, usize)> {
    let n = profile.point_pref.len();
    let k = profile.centroid_pref.len();
    let pos = |list: &[usize], x: usize| list.iter().position(|&y| y == x).expect("complete list");
    let mut out = Vec::new();
    for p in 0..n {
        let mine = assignment[p];
        for c in 0..k {
            if c == mine {
                continue;
            }
            let point_list = &profile.point_pref[p];
            if pos(point_list, c) >= pos(point_list, mine) {
                continue;
            }
            let held: Vec<usize> = (0..n).filter(|&q| assignment[q] == c).collect();
            let centroid_list = &profile.centroid_pref[c];
            let spare = held.len() < quotas[c];
            let prefers = held.iter().any(|&q| pos(centroid_list, p) < pos(centroid_list, q));
            if spare || prefers {
                out.push((p, c));
            }
        }
    }
    out
}

pub fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
    v
}

fn choose(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, r, &mut Vec::new(), &mut out);
    out
}

/// Two-sided permutation p-value by listing every split of the pooled
/// ranks into groups of sizes `a.len()` and `b.len()`.
pub fn brute_force_ranksum_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let rank = |v: f64| pooled.iter().filter(|&&x| x < v).count() as f64 + 1.0;
    let ranks: Vec<f64> = pooled.iter().map(|&v| rank(v)).collect();
    let n1 = a.len();
    let observed: f64 = ranks[..n1].iter().sum();
    let splits = choose(pooled.len(), n1);
    let sums: Vec<f64> = splits
        .iter()
        .map(|s| s.iter().map(|&i| ranks[i]).sum())
        .collect();
    let total = sums.len() as f64;
    let le = sums.iter().filter(|&&s| s <= observed).count() as f64;
    let ge = sums.iter().filter(|&&s| s >= observed).count() as f64;
    (2.0 * le.min(ge) / total).min(1.0)
}

pub fn points(features: &[f64], labels: &[Label]) -> Vec<LabeledPoint> {
    features
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (&feature, &label))| LabeledPoint {
            feature,
            label,
            period: PeriodKey::new(PeriodMode::DayOfWeek, (i % 7) as u8).unwrap(),
            weight: 1.0,
        })
        .collect()
}

pub fn dataset(features: &[f64], labels: &[Label]) -> AnalysisDataset {
    AnalysisDataset::new(VehicleType::Bicycle, PeriodMode::DayOfWeek, Granularity::PerTrip, points(features, labels))
        .unwrap()
}

/// Two 1-D Gaussian blobs; the first half is labeled regime A.
pub fn two_blobs(seed: u64, per_blob: usize, means: (f64, f64), std: f64) -> AnalysisDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (Normal::new(means.0, std).unwrap(), Normal::new(means.1, std).unwrap());
    let mut features = Vec::with_capacity(2 * per_blob);
    let mut labels = Vec::with_capacity(2 * per_blob);
    for _ in 0..per_blob {
        features.push(lo.sample(&mut rng));
        labels.push(Label::RegimeA);
    }
    for _ in 0..per_blob {
        features.push(hi.sample(&mut rng));
        labels.push(Label::RegimeB);
    }
    dataset(&features, &labels)
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<Label> {
    (0..n)
        .map(|_| if rng.random_bool(0.5) { Label::RegimeA } else { Label::RegimeB })
        .collect()
}
