//! Friedman test and Nemenyi post hoc comparison over an error matrix.
//!
//! Rows are blocks (days), columns are methods; lower errors rank better.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{chi2_sf, mean_ranks};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Mean rank of each column (1 = lowest error).
    pub mean_ranks: Vec<f64>,
    pub blocks: usize,
    pub methods: usize,
}

fn check_shape(errors: &[Vec<f64>]) -> Result<(usize, usize)> {
    let n = errors.len();
    let k = errors.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(Error::argument(format!("need at least 2x2 errors, got {n}x{k}")));
    }
    if errors.iter().any(|row| row.len() != k) {
        return Err(Error::argument("error matrix rows differ in length"));
    }
    if errors.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::argument("error matrix contains NaN"));
    }
    Ok((n, k))
}

/// Classic Friedman chi-squared statistic with mid-ranks for ties.
///
/// No tie correction is applied to the statistic.
pub fn friedman_test(errors: &[Vec<f64>]) -> Result<FriedmanResult> {
    let (n, k) = check_shape(errors)?;
    let mut rank_sums = vec![0.0; k];
    for row in errors {
        for (sum, r) in rank_sums.iter_mut().zip(mean_ranks(row)) {
            *sum += r;
        }
    }
    let (nf, kf) = (n as f64, k as f64);
    let sum_sq: f64 = rank_sums.iter().map(|r| r * r).sum();
    let statistic = (12.0 / (nf * kf * (kf + 1.0)) * sum_sq - 3.0 * nf * (kf + 1.0)).max(0.0);
    Ok(FriedmanResult {
        statistic,
        p_value: chi2_sf(statistic, kf - 1.0),
        mean_ranks: rank_sums.iter().map(|r| r / nf).collect(),
        blocks: n,
        methods: k,
    })
}

/// Critical values `q_alpha / sqrt(2)` of the Studentized range for the
/// Nemenyi test with k = 2..=10 groups.
const Q_005: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];
const Q_010: [f64; 9] = [1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920];

/// Shipped Nemenyi critical value for `k` methods at `alpha` (0.05 or 0.10).
pub fn nemenyi_q(k: usize, alpha: f64) -> Option<f64> {
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &Q_005
    } else if (alpha - 0.10).abs() < 1e-12 {
        &Q_010
    } else {
        return None;
    };
    (2..=10).contains(&k).then(|| table[k - 2])
}

/// `q * sqrt(k (k + 1) / (6 n))`.
pub fn critical_difference(q: f64, k: usize, n: usize) -> f64 {
    let (k, n) = (k as f64, n as f64);
    q * (k * (k + 1.0) / (6.0 * n)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairVerdict {
    FirstBetter,
    SecondBetter,
    Tie,
}

impl PairVerdict {
    pub fn flipped(self) -> PairVerdict {
        match self {
            PairVerdict::FirstBetter => PairVerdict::SecondBetter,
            PairVerdict::SecondBetter => PairVerdict::FirstBetter,
            PairVerdict::Tie => PairVerdict::Tie,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub first: usize,
    pub second: usize,
    pub rank_difference: f64,
    pub verdict: PairVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NemenyiResult {
    pub friedman: FriedmanResult,
    pub alpha: f64,
    pub friedman_significant: bool,
    pub q: f64,
    pub critical_difference: f64,
    /// One entry per unordered pair `first < second`.
    pub pairs: Vec<PairComparison>,
}

impl NemenyiResult {
    /// Verdict of method `i` against method `j`.
    pub fn verdict(&self, i: usize, j: usize) -> PairVerdict {
        if i == j {
            return PairVerdict::Tie;
        }
        let (a, b) = (i.min(j), i.max(j));
        let v = self
            .pairs
            .iter()
            .find(|p| p.first == a && p.second == b)
            .map_or(PairVerdict::Tie, |p| p.verdict);
        if i == a {
            v
        } else {
            v.flipped()
        }
    }

    /// Methods that no other method beats significantly.
    pub fn best(&self) -> Vec<usize> {
        let k = self.friedman.methods;
        (0..k)
            .filter(|&i| (0..k).all(|j| self.verdict(i, j) != PairVerdict::SecondBetter))
            .collect()
    }
}

/// Pairwise Nemenyi comparison, gated on the Friedman test at `alpha`.
///
/// `q` defaults to the shipped table value for the matrix width.
pub fn nemenyi_posthoc(errors: &[Vec<f64>], alpha: f64, q: Option<f64>) -> Result<NemenyiResult> {
    let friedman = friedman_test(errors)?;
    let k = friedman.methods;
    let q = match q.or_else(|| nemenyi_q(k, alpha)) {
        Some(q) => q,
        None => {
            return Err(Error::argument(format!(
                "no Nemenyi critical value shipped for k={k}, alpha={alpha}; supply one"
            )))
        }
    };
    let cd = critical_difference(q, k, friedman.blocks);
    let significant = friedman.p_value < alpha;
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let diff = friedman.mean_ranks[i] - friedman.mean_ranks[j];
            let verdict = if !significant || diff.abs() <= cd {
                PairVerdict::Tie
            } else if diff < 0.0 {
                PairVerdict::FirstBetter
            } else {
                PairVerdict::SecondBetter
            };
            pairs.push(PairComparison {
                first: i,
                second: j,
                rank_difference: diff,
                verdict,
            });
        }
    }
    Ok(NemenyiResult {
        friedman,
        alpha,
        friedman_significant: significant,
        q,
        critical_difference: cd,
        pairs,
    })
}
