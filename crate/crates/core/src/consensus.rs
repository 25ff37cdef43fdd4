//! Resampling-based consensus clustering for choosing the number of clusters.
//!
//! For each candidate k the dataset is subsampled H times (stratified by
//! label), each subsample is clustered, and co-assignment is accumulated into
//! a consensus matrix. The area under the empirical CDF of the matrix entries
//! gives a consensus index A(k); its relative growth Δ(k) drives selection.

use std::collections::BTreeMap;

use log::warn;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{fit, ClusterConfig};
use crate::error::{Error, Result};
use crate::profile::{AnalysisDataset, Label};

pub const DEFAULT_FLATNESS_THRESHOLD: f64 = 0.025;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub resamples: usize,
    pub subsample_fraction: f64,
    pub seed: u64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            k_min: 2,
            k_max: 6,
            resamples: 50,
            subsample_fraction: 0.8,
            seed: 42,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_min < 2 || self.k_min > self.k_max {
            return Err(Error::config("consensus needs 2 <= k_min <= k_max"));
        }
        if self.resamples < 2 {
            return Err(Error::config("consensus needs at least 2 resamples"));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::config("subsample fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Pairwise co-clustering frequencies over the resampling runs. Pairs are
/// stored once, as a packed strict upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusMatrix {
    pub k: usize,
    n: usize,
    sampled: Vec<u32>,
    co_sampled: Vec<u32>,
    co_clustered: Vec<u32>,
}

fn packed(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Per-point and per-pair sampling counts, shared by every k because the
/// subsamples are.
fn sampling_counts(n: usize, subsamples: &[Vec<usize>]) -> (Vec<u32>, Vec<u32>) {
    let mut sampled = vec![0u32; n];
    let mut co_sampled = vec![0u32; n * n.saturating_sub(1) / 2];
    for members in subsamples {
        for (a, &i) in members.iter().enumerate() {
            sampled[i] += 1;
            for &j in &members[a + 1..] {
                co_sampled[packed(n, i, j)] += 1;
            }
        }
    }
    (sampled, co_sampled)
}

impl ConsensusMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of runs in which both `i` and `j` were sampled.
    pub fn co_sample_count(&self, i: usize, j: usize) -> u32 {
        if i == j {
            self.sampled[i]
        } else {
            self.co_sampled[packed(self.n, i, j)]
        }
    }

    pub fn co_cluster_count(&self, i: usize, j: usize) -> u32 {
        if i == j {
            self.sampled[i]
        } else {
            self.co_clustered[packed(self.n, i, j)]
        }
    }

    /// Consensus value, or `None` if the pair was never sampled together.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let co = self.co_sample_count(i, j);
        (co > 0).then(|| f64::from(self.co_cluster_count(i, j)) / f64::from(co))
    }

    /// Defined strictly-upper-triangle entries, row-major.
    pub fn upper_entries(&self) -> Vec<f64> {
        self.co_sampled
            .iter()
            .zip(&self.co_clustered)
            .filter(|(&co, _)| co > 0)
            .map(|(&co, &same)| f64::from(same) / f64::from(co))
            .collect()
    }

    pub fn undefined_pairs(&self) -> usize {
        self.co_sampled.iter().filter(|&&co| co == 0).count()
    }

    /// Adds one run; `members` are point indices, `assignment` their clusters.
    fn record(&mut self, members: &[usize], assignment: &[usize]) {
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); self.k];
        for (&i, &c) in members.iter().zip(assignment) {
            groups[c].push(i);
        }
        for group in &groups {
            for (a, &i) in group.iter().enumerate() {
                for &j in &group[a + 1..] {
                    self.co_clustered[packed(self.n, i, j)] += 1;
                }
            }
        }
    }
}

/// One point of the consensus curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub area: f64,
    pub delta: f64,
    pub undefined_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusCurve {
    pub points: Vec<CurvePoint>,
    pub chosen_k: usize,
    pub flatness_threshold: f64,
    pub warnings: Vec<String>,
}

/// One clustering run, in original point indices. `seed` drew the
/// subsample; the fit itself used `fit_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub k: usize,
    pub run: usize,
    pub seed: u64,
    pub fit_seed: u64,
    pub members: Vec<usize>,
    pub assignment: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ConsensusOutcome {
    pub matrices: Vec<ConsensusMatrix>,
    pub curve: ConsensusCurve,
    pub runs: Vec<RunLog>,
}

/// Area under the empirical CDF of `entries`:
/// `Σ_{i≥2} (x_i − x_{i−1}) · CDF(x_i)` over the sorted distinct values.
pub fn cdf_area(entries: &[f64]) -> f64 {
    if entries.is_empty() {
        return 0.0;
    }
    let mut sorted = entries.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total = sorted.len() as f64;
    let mut area = 0.0;
    let mut prev: Option<f64> = None;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        while i < sorted.len() && sorted[i] == x {
            i += 1;
        }
        if let Some(p) = prev {
            area += (x - p) * (i as f64 / total);
        }
        prev = Some(x);
    }
    area
}

/// Δ(k_min) = A(k_min); afterwards the relative change over the previous k.
/// A zero predecessor makes Δ the absolute area.
pub fn relative_deltas(areas: &[f64]) -> Vec<f64> {
    areas
        .iter()
        .enumerate()
        .map(|(i, &a)| match i {
            0 => a,
            _ if areas[i - 1] > 0.0 => (a - areas[i - 1]) / areas[i - 1],
            _ => a,
        })
        .collect()
}

/// Smallest k whose successor's Δ falls below `threshold`; if none does,
/// the k with the largest Δ (lowest k on ties).
pub fn select_model_order(points: &[CurvePoint], threshold: f64) -> Result<usize> {
    let first = points
        .first()
        .ok_or_else(|| Error::domain("empty consensus curve"))?;
    if let Some(w) = points.windows(2).find(|w| w[1].delta < threshold) {
        return Ok(w[0].k);
    }
    Ok(points
        .iter()
        .fold(first, |best, p| if p.delta > best.delta { p } else { best })
        .k)
}

/// Stable ordering by (feature, label, period, weight) so that results do
/// not depend on input order.
fn canonical_order(dataset: &AnalysisDataset) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&dataset.points[a], &dataset.points[b]);
        pa.feature
            .total_cmp(&pb.feature)
            .then(pa.label.cmp(&pb.label))
            .then(pa.period.cmp(&pb.period))
            .then(pa.weight.total_cmp(&pb.weight))
            .then(a.cmp(&b))
    });
    order
}

/// Draws `ceil(fraction * n)` positions without replacement, allocated over
/// the labels by largest remainder, returned ascending.
pub fn stratified_subsample(labels: &[Label], fraction: f64, seed: u64) -> Vec<usize> {
    let n = labels.len();
    let target = ((fraction * n as f64).ceil() as usize).min(n);
    let mut groups: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut alloc: Vec<(Label, usize, f64)> = groups
        .iter()
        .map(|(&l, g)| {
            let exact = target as f64 * g.len() as f64 / n as f64;
            (l, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut remaining = target - alloc.iter().map(|a| a.1).sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..alloc.len()).collect();
    by_remainder.sort_by(|&a, &b| alloc[b].2.total_cmp(&alloc[a].2).then(a.cmp(&b)));
    for &i in by_remainder.iter().cycle() {
        if remaining == 0 {
            break;
        }
        if alloc[i].1 < groups[&alloc[i].0].len() {
            alloc[i].1 += 1;
            remaining -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(target);
    for (label, take, _) in alloc {
        let group = &groups[&label];
        picked.extend(sample(&mut rng, group.len(), take).into_iter().map(|i| group[i]));
    }
    picked.sort_unstable();
    picked
}

pub fn run_consensus(
    dataset: &AnalysisDataset,
    template: &ClusterConfig,
    config: &ConsensusConfig,
    flatness_threshold: f64,
) -> Result<ConsensusOutcome> {
    config.validate()?;
    let n = dataset.len();
    if n < config.k_max {
        return Err(Error::domain(format!("{n} points cannot support k_max = {}", config.k_max)));
    }
    let order = canonical_order(dataset);
    let canonical = dataset.subset(&order);
    let labels = canonical.labels();

    let subsamples: Vec<(u64, Vec<usize>)> = (0..config.resamples)
        .map(|h| {
            let seed = config.seed.wrapping_add(h as u64);
            (seed, stratified_subsample(&labels, config.subsample_fraction, seed))
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (config.k_min..=config.k_max)
        .flat_map(|k| (0..config.resamples).map(move |h| (k, h)))
        .collect();
    let fitted: Vec<(usize, usize, Vec<usize>)> = jobs
        .par_iter()
        .map(|&(k, h)| {
            // the fit seed is shared so that identical subsamples give
            // identical runs; variation comes from the subsample alone
            let members = &subsamples[h].1;
            let run_config = ClusterConfig { k, ..*template };
            let model = fit(&canonical.subset(members), &run_config)?;
            Ok((k, h, model.assignment))
        })
        .collect::<Result<_>>()?;

    // counts are kept in original point indices
    let originals: Vec<Vec<usize>> = subsamples
        .iter()
        .map(|(_, members)| members.iter().map(|&i| order[i]).collect())
        .collect();
    let (sampled, co_sampled) = sampling_counts(n, &originals);
    let mut matrices: Vec<ConsensusMatrix> = (config.k_min..=config.k_max)
        .map(|k| ConsensusMatrix {
            k,
            n,
            sampled: sampled.clone(),
            co_sampled: co_sampled.clone(),
            co_clustered: vec![0; co_sampled.len()],
        })
        .collect();
    let mut runs = Vec::with_capacity(fitted.len());
    for (k, h, assignment) in fitted {
        let members = &originals[h];
        matrices[k - config.k_min].record(members, &assignment);
        runs.push(RunLog {
            k,
            run: h,
            seed: subsamples[h].0,
            fit_seed: template.seed,
            members: members.clone(),
            assignment,
        });
    }

    let mut warnings = Vec::new();
    let areas: Vec<f64> = matrices.iter().map(|m| cdf_area(&m.upper_entries())).collect();
    let deltas = relative_deltas(&areas);
    let points: Vec<CurvePoint> = matrices
        .iter()
        .zip(areas.iter().zip(&deltas))
        .map(|(m, (&area, &delta))| {
            let undefined = m.undefined_pairs();
            if undefined > 0 {
                let msg = format!("k={}: {undefined} pairs never co-sampled, excluded from the CDF", m.k);
                warn!("{msg}");
                warnings.push(msg);
            }
            CurvePoint {
                k: m.k,
                area,
                delta,
                undefined_pairs: undefined,
            }
        })
        .collect();
    let chosen_k = select_model_order(&points, flatness_threshold)?;
    Ok(ConsensusOutcome {
        matrices,
        curve: ConsensusCurve {
            points,
            chosen_k,
            flatness_threshold,
            warnings,
        },
        runs,
    })
}
