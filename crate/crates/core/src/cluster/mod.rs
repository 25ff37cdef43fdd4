//! Supervised clustering by college-admission matching.
//!
//! Centroids and labeled points play a two-sided admission game. Centroids
//! rank points by distance; points rank centroids by how pure the centroid's
//! current membership is for the point's own label, then by distance. A
//! point-proposing deferred-acceptance round under per-centroid quotas gives
//! a stable assignment, centroids move to their members' weighted mean, and
//! the loop repeats until the assignment stops changing.

mod fit;
mod matching;
mod preferences;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::Label;

pub use fit::{fit, fit_traced, initialize_centroids, majority_period_coloring, update_centroids, IterationTrace};
pub use matching::deferred_acceptance;
pub use preferences::{build_preferences, PreferenceProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    SquaredEuclidean,
    Absolute,
}

impl Distance {
    pub fn eval(self, a: f64, b: f64) -> f64 {
        match self {
            Distance::SquaredEuclidean => (a - b) * (a - b),
            Distance::Absolute => (a - b).abs(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Distance::SquaredEuclidean => "squared_euclidean",
            Distance::Absolute => "absolute",
        }
    }
}

impl FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "squared_euclidean" | "sqeuclidean" => Ok(Distance::SquaredEuclidean),
            "absolute" | "abs" => Ok(Distance::Absolute),
            other => Err(Error::config(format!("unknown distance {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuotaPolicy {
    /// Every centroid admits at most `ceil(n / k)` points.
    Balanced,
    /// Every centroid may admit all `n` points.
    UnboundedCap,
}

impl QuotaPolicy {
    pub fn quotas(self, n: usize, k: usize) -> Vec<usize> {
        let q = match self {
            QuotaPolicy::Balanced => n.div_ceil(k),
            QuotaPolicy::UnboundedCap => n,
        };
        vec![q; k]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QuotaPolicy::Balanced => "balanced",
            QuotaPolicy::UnboundedCap => "unbounded",
        }
    }
}

impl FromStr for QuotaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "balanced" => Ok(QuotaPolicy::Balanced),
            "unbounded" | "unbounded_cap" => Ok(QuotaPolicy::UnboundedCap),
            other => Err(Error::config(format!("unknown quota policy {other:?}"))),
        }
    }
}

impl fmt::Display for QuotaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub k: usize,
    pub quota_policy: QuotaPolicy,
    pub max_outer_iters: usize,
    pub seed: u64,
    pub distance: Distance,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            k: 2,
            quota_policy: QuotaPolicy::Balanced,
            max_outer_iters: 100,
            seed: 42,
            distance: Distance::SquaredEuclidean,
        }
    }
}

impl ClusterConfig {
    pub fn with_k(k: usize) -> Self {
        ClusterConfig {
            k,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::config("k must be at least 2"));
        }
        if self.max_outer_iters < 1 {
            return Err(Error::config("max_outer_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub cluster: usize,
    /// Weighted mean of member features.
    pub mean: f64,
    /// Frequency-weighted sample standard deviation of member features.
    pub std: f64,
    /// Number of member points.
    pub size: usize,
    /// Total member weight.
    pub weight: f64,
    /// Fraction of members carrying the majority label.
    pub purity: f64,
    pub majority_label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub config: ClusterConfig,
    pub centroids: Vec<f64>,
    pub assignment: Vec<usize>,
    pub clusters: Vec<ClusterStats>,
    pub outer_iterations: usize,
    pub converged: bool,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Relabels clusters in ascending order of mean, ties by old index.
    pub fn canonicalized(&self) -> ClusterModel {
        let mut order: Vec<usize> = (0..self.k()).collect();
        order.sort_by(|&a, &b| {
            self.clusters[a]
                .mean
                .total_cmp(&self.clusters[b].mean)
                .then(a.cmp(&b))
        });
        let mut new_id = vec![0; self.k()];
        for (new, &old) in order.iter().enumerate() {
            new_id[old] = new;
        }
        ClusterModel {
            config: self.config,
            centroids: order.iter().map(|&c| self.centroids[c]).collect(),
            assignment: self.assignment.iter().map(|&c| new_id[c]).collect(),
            clusters: order
                .iter()
                .enumerate()
                .map(|(new, &old)| ClusterStats {
                    cluster: new,
                    ..self.clusters[old].clone()
                })
                .collect(),
            outer_iterations: self.outer_iterations,
            converged: self.converged,
        }
    }

    /// Member indices of each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k()];
        for (p, &c) in self.assignment.iter().enumerate() {
            members[c].push(p);
        }
        members
    }
}
