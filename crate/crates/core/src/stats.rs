//! Two-sided Wilcoxon rank-sum (Mann-Whitney U) test.
//!
//! Small untied samples (combined size up to [`EXACT_MAX_N`]) use the exact
//! permutation distribution of U; everything else uses the normal
//! approximation with tie-corrected variance and a 0.5 continuity correction.
//! Weighted observations count as `weight` tied copies of the value, which is
//! equivalent to expanding them but never materializes the expansion.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub const EXACT_MAX_N: f64 = 20.0;

/// Exact distributions are only tabulated up to this many observations.
const EXACT_HARD_LIMIT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// Mann-Whitney U of the first sample.
    #[serde(rename = "U")]
    pub u: f64,
    /// Rank sum of the first sample.
    #[serde(rename = "W")]
    pub w: f64,
    /// Standardized statistic; only set on the normal path.
    pub z: Option<f64>,
    pub p: f64,
    pub method: Method,
    pub n1: f64,
    pub n2: f64,
}

/// Mid-ranks (1-based); tied values share the mean of their positions.
pub fn rank_with_ties(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::domain("cannot rank an empty sequence"));
    }
    let weighted: Vec<(f64, f64)> = values.iter().map(|&v| (v, 1.0)).collect();
    Ok(weighted_ranks(&weighted)?.ranks)
}

struct Ranking {
    ranks: Vec<f64>,
    tie_term: f64,
    has_ties: bool,
}

fn weighted_ranks(values: &[(f64, f64)]) -> Result<Ranking> {
    for &(v, w) in values {
        if !v.is_finite() {
            return Err(Error::domain(format!("non-finite value {v}")));
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::domain(format!("weight {w} must be positive")));
        }
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].0.total_cmp(&values[b].0));

    let mut ranks = vec![0.0; values.len()];
    let mut tie_term = 0.0;
    let mut has_ties = false;
    let mut before = 0.0;
    let mut i = 0;
    while i < order.len() {
        let v = values[order[i]].0;
        let mut j = i;
        let mut t = 0.0;
        while j < order.len() && values[order[j]].0 == v {
            t += values[order[j]].1;
            j += 1;
        }
        let mid = before + (t + 1.0) / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = mid;
        }
        if t > 1.0 {
            has_ties = true;
            tie_term += t * t * t - t;
        }
        before += t;
        i = j;
    }
    Ok(Ranking {
        ranks,
        tie_term,
        has_ties,
    })
}

pub fn ranksum_test(sample_a: &[f64], sample_b: &[f64]) -> Result<RankSumResult> {
    let a: Vec<(f64, f64)> = sample_a.iter().map(|&v| (v, 1.0)).collect();
    let b: Vec<(f64, f64)> = sample_b.iter().map(|&v| (v, 1.0)).collect();
    ranksum_test_weighted(&a, &b)
}

/// Rank-sum test over `(value, weight)` observations.
pub fn ranksum_test_weighted(sample_a: &[(f64, f64)], sample_b: &[(f64, f64)]) -> Result<RankSumResult> {
    ranksum_inner(sample_a, sample_b, None)
}

/// Forces a path. The exact path requires untied unit-weight samples.
pub fn ranksum_test_with(sample_a: &[f64], sample_b: &[f64], method: Method) -> Result<RankSumResult> {
    let a: Vec<(f64, f64)> = sample_a.iter().map(|&v| (v, 1.0)).collect();
    let b: Vec<(f64, f64)> = sample_b.iter().map(|&v| (v, 1.0)).collect();
    ranksum_inner(&a, &b, Some(method))
}

fn ranksum_inner(a: &[(f64, f64)], b: &[(f64, f64)], forced: Option<Method>) -> Result<RankSumResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("rank-sum test needs two non-empty samples"));
    }
    let combined: Vec<(f64, f64)> = a.iter().chain(b).copied().collect();
    let ranking = weighted_ranks(&combined)?;
    let n1: f64 = a.iter().map(|&(_, w)| w).sum();
    let n2: f64 = b.iter().map(|&(_, w)| w).sum();
    let w: f64 = a
        .iter()
        .zip(&ranking.ranks)
        .map(|(&(_, weight), &r)| weight * r)
        .sum();
    let u = w - n1 * (n1 + 1.0) / 2.0;

    let method = forced.unwrap_or(if n1 + n2 <= EXACT_MAX_N && !ranking.has_ties {
        Method::Exact
    } else {
        Method::NormalApprox
    });

    let (p, z) = match method {
        Method::Exact => {
            if ranking.has_ties {
                return Err(Error::domain("exact rank-sum path requires untied samples"));
            }
            if a.len() + b.len() > EXACT_HARD_LIMIT {
                return Err(Error::domain("sample too large for the exact rank-sum path"));
            }
            (exact_p(a.len(), b.len(), u), None)
        }
        Method::NormalApprox => {
            let (p, z) = normal_p(n1, n2, u, ranking.tie_term);
            (p, Some(z))
        }
    };
    Ok(RankSumResult {
        u,
        w,
        z,
        p,
        method,
        n1,
        n2,
    })
}

/// Counts of U = 0..=m*n over all C(m+n, m) arrangements, via
/// f(m, n, u) = f(m-1, n, u-n) + f(m, n-1, u).
fn u_distribution(m: usize, n: usize) -> Vec<f64> {
    // table[j][i] holds the distribution for sizes (i, j)
    let mut prev: Vec<Vec<f64>> = (0..=m).map(|_| vec![1.0]).collect(); // n = 0
    for j in 1..=n {
        let mut cur: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        cur.push(vec![1.0]);
        for i in 1..=m {
            let mut dist = vec![0.0; i * j + 1];
            for (u, &c) in cur[i - 1].iter().enumerate() {
                dist[u + j] += c;
            }
            for (u, &c) in prev[i].iter().enumerate() {
                dist[u] += c;
            }
            cur.push(dist);
        }
        prev = cur;
    }
    prev.pop().expect("m + 1 entries")
}

fn exact_p(m: usize, n: usize, u: f64) -> f64 {
    let dist = u_distribution(m, n);
    let total: f64 = dist.iter().sum();
    let u = u.round() as usize;
    let lower: f64 = dist[..=u].iter().sum();
    let upper: f64 = dist[u..].iter().sum();
    (2.0 * lower.min(upper) / total).min(1.0)
}

fn normal_p(n1: f64, n2: f64, u: f64, tie_term: f64) -> (f64, f64) {
    let n = n1 + n2;
    let mean = n1 * n2 / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if !(var > 0.0) {
        return (1.0, 0.0);
    }
    let d = u - mean;
    let z = d.signum() * (d.abs() - 0.5).max(0.0) / var.sqrt();
    // erfc(|z|/√2) = 2·(1 − Φ(|z|)); floored so p stays strictly positive
    let p = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(f64::MIN_POSITIVE, 1.0);
    (p, z)
}
