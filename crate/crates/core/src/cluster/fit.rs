use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::preferences::{build_preferences_sorted, feature_order, LabelCounts};
use super::{deferred_acceptance, ClusterConfig, ClusterModel, ClusterStats, Distance, PreferenceProfile};
use crate::error::{Error, Result};
use crate::profile::{weighted_mean_std, AnalysisDataset, Label};

/// Greedy farthest-point seeding from a seeded random start.
///
/// Each further centroid is the unchosen point with the largest distance to
/// its nearest chosen centroid, ties to the lower index. Duplicate points are
/// still chosen by distinct index, so centroids may coincide in value.
pub fn initialize_centroids(features: &[f64], k: usize, seed: u64, distance: Distance) -> Result<Vec<f64>> {
    let n = features.len();
    if n < k {
        return Err(Error::domain(format!("cannot seed {k} centroids from {n} points")));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..n);

    let mut chosen = vec![false; n];
    chosen[start] = true;
    let mut picks = vec![start];
    let mut nearest: Vec<f64> = features
        .iter()
        .map(|&x| distance.eval(x, features[start]))
        .collect();

    while picks.len() < k {
        let next = (0..n)
            .filter(|&i| !chosen[i])
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if nearest[b] >= nearest[i] => Some(b),
                _ => Some(i),
            })
            .expect("n >= k leaves an unchosen point");
        chosen[next] = true;
        picks.push(next);
        for (i, &x) in features.iter().enumerate() {
            nearest[i] = nearest[i].min(distance.eval(x, features[next]));
        }
    }
    Ok(picks.into_iter().map(|i| features[i]).collect())
}

/// Weighted mean of each cluster's members. An empty cluster moves to the
/// point farthest from its previous centroid.
pub fn update_centroids(
    features: &[f64],
    weights: &[f64],
    assignment: &[usize],
    previous: &[f64],
    distance: Distance,
) -> Vec<f64> {
    let k = previous.len();
    let mut sw = vec![0.0; k];
    let mut swx = vec![0.0; k];
    for ((&x, &w), &c) in features.iter().zip(weights).zip(assignment) {
        sw[c] += w;
        swx[c] += w * x;
    }
    (0..k)
        .map(|c| {
            if sw[c] > 0.0 {
                swx[c] / sw[c]
            } else {
                farthest_from(features, previous[c], distance).unwrap_or(previous[c])
            }
        })
        .collect()
}

fn farthest_from(features: &[f64], from: f64, distance: Distance) -> Option<f64> {
    features
        .iter()
        .fold(None, |best: Option<(f64, f64)>, &x| {
            let d = distance.eval(x, from);
            match best {
                Some((bd, _)) if bd >= d => best,
                _ => Some((d, x)),
            }
        })
        .map(|(_, x)| x)
}

/// One outer iteration of [`fit_traced`].
#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub profile: PreferenceProfile,
    pub quotas: Vec<usize>,
    pub assignment: Vec<usize>,
    pub centroids: Vec<f64>,
}

pub fn fit(dataset: &AnalysisDataset, config: &ClusterConfig) -> Result<ClusterModel> {
    fit_inner(dataset, config, |_| {})
}

/// [`fit`], also returning every outer iteration's preferences and matching.
pub fn fit_traced(dataset: &AnalysisDataset, config: &ClusterConfig) -> Result<(ClusterModel, Vec<IterationTrace>)> {
    let mut trace = Vec::new();
    let model = fit_inner(dataset, config, |it| trace.push(it))?;
    Ok((model, trace))
}

fn fit_inner(
    dataset: &AnalysisDataset,
    config: &ClusterConfig,
    mut observe: impl FnMut(IterationTrace),
) -> Result<ClusterModel> {
    config.validate()?;
    let n = dataset.len();
    let k = config.k;
    if n < k {
        return Err(Error::domain(format!("{n} points cannot form {k} clusters")));
    }
    let features = dataset.features();
    let labels = dataset.labels();
    let weights = dataset.weights();
    let quotas = config.quota_policy.quotas(n, k);
    let order = feature_order(&features);

    let mut centroids = initialize_centroids(&features, k, config.seed, config.distance)?;
    let mut previous: Option<Vec<usize>> = None;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_outer_iters {
        iterations += 1;
        let profile =
            build_preferences_sorted(&features, &order, &labels, &centroids, previous.as_deref(), config.distance);
        let assignment = deferred_acceptance(&profile, &quotas)?;
        centroids = update_centroids(&features, &weights, &assignment, &centroids, config.distance);
        observe(IterationTrace {
            profile,
            quotas: quotas.clone(),
            assignment: assignment.clone(),
            centroids: centroids.clone(),
        });
        let unchanged = previous.as_ref() == Some(&assignment);
        previous = Some(assignment);
        if unchanged {
            converged = true;
            break;
        }
    }

    let assignment = previous.expect("at least one outer iteration");
    let clusters = cluster_stats(&features, &weights, &labels, &assignment, &centroids);
    Ok(ClusterModel {
        config: *config,
        centroids,
        assignment,
        clusters,
        outer_iterations: iterations,
        converged,
    })
}

fn cluster_stats(
    features: &[f64],
    weights: &[f64],
    labels: &[Label],
    assignment: &[usize],
    centroids: &[f64],
) -> Vec<ClusterStats> {
    let k = centroids.len();
    let counts = LabelCounts::tally(assignment, labels, k);
    let mut members: Vec<Vec<(f64, f64)>> = vec![Vec::new(); k];
    for ((&x, &w), &c) in features.iter().zip(weights).zip(assignment) {
        members[c].push((x, w));
    }
    members
        .into_iter()
        .enumerate()
        .map(|(c, values)| {
            let size = values.len();
            if size == 0 {
                return ClusterStats {
                    cluster: c,
                    mean: centroids[c],
                    std: 0.0,
                    size: 0,
                    weight: 0.0,
                    purity: 0.0,
                    majority_label: None,
                };
            }
            let (mean, std, weight) = weighted_mean_std(values.iter().copied());
            let (a, _) = counts.purity(c, Label::RegimeA);
            let (b, _) = counts.purity(c, Label::RegimeB);
            let (majority, top) = if a >= b { (Label::RegimeA, a) } else { (Label::RegimeB, b) };
            ClusterStats {
                cluster: c,
                mean,
                std,
                size,
                weight,
                purity: top as f64 / size as f64,
                majority_label: Some(majority),
            }
        })
        .collect()
}

/// Colors each period with the cluster holding the plurality of its weight,
/// ties to the lower cluster index.
pub fn majority_period_coloring(model: &ClusterModel, dataset: &AnalysisDataset) -> BTreeMap<u8, usize> {
    let k = model.k();
    let mut weight: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for (p, &c) in dataset.points.iter().zip(&model.assignment) {
        weight.entry(p.period.index).or_insert_with(|| vec![0.0; k])[c] += p.weight;
    }
    weight
        .into_iter()
        .map(|(period, w)| {
            let best = (0..k).fold(0, |best, c| if w[c] > w[best] { c } else { best });
            (period, best)
        })
        .collect()
}
