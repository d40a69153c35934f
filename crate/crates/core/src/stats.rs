//! Mann-Whitney U test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Largest per-sample size for the exact method.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("exact method requested but samples contain ties")]
    TiesInExact,
    #[error("exact method supports at most {EXACT_MAX_N} values per sample (got {n1} and {n2})")]
    TooLargeForExact { n1: usize, n2: usize },
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    /// First sample tends to be larger.
    Greater,
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    NormalApprox,
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    /// U of the first sample.
    pub u: f64,
    pub p_value: f64,
    /// Either `Exact` or `NormalApprox`, never `Auto`.
    pub method: Method,
    pub alternative: Alternative,
    pub n1: usize,
    pub n2: usize,
    pub ties: bool,
}

fn check(a: &[f64], b: &[f64]) -> Result<(), StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Pooled values sorted ascending with a sample tag (0 = a).
fn pooled(a: &[f64], b: &[f64]) -> Vec<(f64, u8)> {
    let mut v: Vec<(f64, u8)> = a.iter().map(|&x| (x, 0)).chain(b.iter().map(|&x| (x, 1))).collect();
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    v
}

/// Rank sums per sample with midranks, plus the tie sizes.
fn rank_sums(a: &[f64], b: &[f64]) -> ([f64; 2], Vec<usize>) {
    let v = pooled(a, b);
    let mut sums = [0.0; 2];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1].0 == v[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1
        let mid = (i + j + 2) as f64 / 2.0;
        for item in &v[i..=j] {
            sums[item.1 as usize] += mid;
        }
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (sums, ties)
}

/// `(U_a, U_b)` from midranks; `U_a` counts pairs with `a > b`, ties as one half.
pub fn u_statistic(a: &[f64], b: &[f64]) -> Result<(f64, f64), StatsError> {
    check(a, b)?;
    let (sums, _) = rank_sums(a, b);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let ua = sums[0] - n1 * (n1 + 1.0) / 2.0;
    let ub = sums[1] - n2 * (n2 + 1.0) / 2.0;
    Ok((ua, ub))
}

/// Number of label assignments giving each U value, for sample sizes m and n.
/// Index u holds the count for U = u (0..=m·n).
pub fn u_null_counts(m: usize, n: usize) -> Vec<u64> {
    // f(i, j)[u] = f(i-1, j)[u - j] + f(i, j-1)[u]
    // with the largest pooled value going to sample a (adds j to U) or b.
    let mut prev_row: Vec<Vec<u64>> = (0..=n).map(|_| vec![1]).collect();
    for i in 1..=m {
        let mut row: Vec<Vec<u64>> = Vec::with_capacity(n + 1);
        row.push(vec![1]);
        for j in 1..=n {
            let mut cur = vec![0u64; i * j + 1];
            for (u, &c) in prev_row[j].iter().enumerate() {
                cur[u + j] += c;
            }
            for (u, &c) in row[j - 1].iter().enumerate() {
                cur[u] += c;
            }
            row.push(cur);
        }
        prev_row = row;
    }
    prev_row.swap_remove(n)
}

fn exact_tails(u: f64, n1: usize, n2: usize) -> (f64, f64) {
    let counts = u_null_counts(n1, n2);
    let total: u64 = counts.iter().sum();
    let u = u as usize;
    let le: u64 = counts[..=u].iter().sum();
    let ge: u64 = counts[u..].iter().sum();
    (ge as f64 / total as f64, le as f64 / total as f64)
}

fn normal_tails(ua: f64, n1: usize, n2: usize, ties: &[usize]) -> (f64, f64) {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let n = n1f + n2f;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = n1f * n2f / 12.0 * ((n + 1.0) - tie_term);
    if var <= 0.0 {
        return (1.0, 1.0);
    }
    let sd = var.sqrt();
    let mu = n1f * n2f / 2.0;
    let phi = Normal::standard();
    // mu - U_a is exactly U_b - mu, so swapping the samples swaps the tails bit for bit
    let greater = phi.cdf((0.5 + (mu - ua)) / sd);
    let less = phi.cdf((0.5 + (ua - mu)) / sd);
    (greater, less)
}

pub fn mann_whitney(a: &[f64], b: &[f64], alternative: Alternative, method: Method) -> Result<UTestResult, StatsError> {
    check(a, b)?;
    let (n1, n2) = (a.len(), b.len());
    let (sums, ties) = rank_sums(a, b);
    let ua = sums[0] - (n1 * (n1 + 1)) as f64 / 2.0;
    let has_ties = !ties.is_empty();
    let small = n1 <= EXACT_MAX_N && n2 <= EXACT_MAX_N;
    let method = match method {
        Method::Auto if !has_ties && small => Method::Exact,
        Method::Auto => Method::NormalApprox,
        Method::Exact if has_ties => return Err(StatsError::TiesInExact),
        Method::Exact if !small => return Err(StatsError::TooLargeForExact { n1, n2 }),
        m => m,
    };
    let (greater, less) = match method {
        Method::Exact => exact_tails(ua, n1, n2),
        _ => normal_tails(ua, n1, n2, &ties),
    };
    let p = match alternative {
        Alternative::Greater => greater,
        Alternative::Less => less,
        Alternative::TwoSided => (2.0 * greater.min(less)).min(1.0),
    };
    Ok(UTestResult { u: ua, p_value: p.clamp(0.0, 1.0), method, alternative, n1, n2, ties: has_ties })
}

/// p-values between every ordered pair of groups; `p[i][j]` tests group i
/// against group j. The diagonal is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueMatrix {
    pub labels: Vec<String>,
    pub alternative: Alternative,
    pub p: Vec<Vec<Option<f64>>>,
}

impl PValueMatrix {
    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == row)?;
        let j = self.labels.iter().position(|l| l == col)?;
        self.p[i][j]
    }
}

pub fn pairwise_matrix(
    groups: &[(String, Vec<f64>)],
    alternative: Alternative,
    method: Method,
) -> Result<PValueMatrix, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    let mut p = vec![vec![None; groups.len()]; groups.len()];
    for (i, (_, a)) in groups.iter().enumerate() {
        for (j, (_, b)) in groups.iter().enumerate() {
            if i != j {
                p[i][j] = Some(mann_whitney(a, b, alternative, method)?.p_value);
            }
        }
    }
    Ok(PValueMatrix { labels: groups.iter().map(|(l, _)| l.clone()).collect(), alternative, p })
}
