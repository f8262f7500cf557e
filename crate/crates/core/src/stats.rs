//! Seed aggregation, bootstrap intervals, Wilcoxon signed-rank test and
//! Cohen's d.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("paired samples differ in length ({0} vs {1})")]
    Unpaired(usize, usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// Sample mean and `(n - 1)`-denominator standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance; 0 for a single value.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

pub fn aggregate_seed_stats(values: &[f64]) -> Result<SeedStats, StatsError> {
    if values.is_empty() {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    Ok(SeedStats {
        mean: mean(values),
        std: sample_variance(values).sqrt(),
        n: values.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub low: f64,
    pub high: f64,
    pub level: f64,
    /// All values identical; the interval is the point itself.
    pub degenerate: bool,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap interval of the mean: `iterations` resamples of
/// size N with replacement.
pub fn bootstrap_ci(
    values: &[f64],
    iterations: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapCi, StatsError> {
    let n = values.len();
    if n < 2 {
        return Err(StatsError::TooFew { needed: 2, got: n });
    }
    if !(level > 0.0 && level < 1.0) || iterations == 0 {
        return Err(StatsError::Invalid(format!(
            "level {level} must be in (0, 1) and iterations > 0"
        )));
    }
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if min == max {
        return Ok(BootstrapCi {
            low: min,
            high: max,
            level,
            degenerate: true,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..iterations)
        .map(|_| {
            let s: f64 = (0..n).map(|_| values[rng.gen_range(0..n)]).sum();
            (s / n as f64).clamp(min, max)
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tail = (1.0 - level) / 2.0;
    Ok(BootstrapCi {
        low: quantile(&means, tail),
        high: quantile(&means, 1.0 - tail),
        level,
        degenerate: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WilcoxonMethod {
    /// Exact when at most 25 non-zero differences remain.
    Auto,
    Exact,
    Normal,
}

pub const EXACT_LIMIT: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(W+, W-)`.
    pub statistic: f64,
    /// Non-zero differences used.
    pub n: usize,
    pub p_value: f64,
    pub exact: bool,
    /// Every difference was zero.
    pub degenerate: bool,
}

/// Average ranks (1-based) of `values`, ties sharing their mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided signed-rank test of `a - b`. Zero differences are dropped.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, StatsError> {
    wilcoxon_with(a, b, WilcoxonMethod::Auto)
}

pub fn wilcoxon_with(
    a: &[f64],
    b: &[f64],
    method: WilcoxonMethod,
) -> Result<WilcoxonResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Unpaired(a.len(), b.len()));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            w_plus: 0.0,
            w_minus: 0.0,
            statistic: 0.0,
            n: 0,
            p_value: 1.0,
            exact: true,
            degenerate: true,
        });
    }
    let ranks = average_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let exact = match method {
        WilcoxonMethod::Auto => n <= EXACT_LIMIT,
        WilcoxonMethod::Exact => true,
        WilcoxonMethod::Normal => false,
    };
    let p_value = if exact {
        exact_p(&ranks, w_plus)
    } else {
        normal_p(&ranks, w_plus)
    };
    Ok(WilcoxonResult {
        w_plus,
        w_minus,
        statistic: w_plus.min(w_minus),
        n,
        p_value,
        exact,
        degenerate: false,
    })
}

/// Null distribution of W+ by counting sign assignments. Ranks are
/// multiples of 1/2, so doubled ranks index an integer table.
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let all = 2f64.powi(ranks.len() as i32);
    let w = (2.0 * w_plus).round() as usize;
    let lower: f64 = counts[..=w].iter().sum();
    let upper: f64 = counts[w..].iter().sum();
    (2.0 * lower.min(upper) / all).min(1.0)
}

/// Normal approximation with tie-corrected variance and continuity
/// correction.
fn normal_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mu = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mu).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// `(mean_a - mean_b) / pooled_sd`.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    let (na, nb) = (a.len(), b.len());
    if na == 0 || nb == 0 || na + nb < 3 {
        return Err(StatsError::TooFew {
            needed: 3,
            got: na + nb,
        });
    }
    let pooled = (((na - 1) as f64 * sample_variance(a) + (nb - 1) as f64 * sample_variance(b))
        / (na + nb - 2) as f64)
        .sqrt();
    let diff = mean(a) - mean(b);
    if diff == 0.0 {
        return Ok(0.0);
    }
    Ok(diff / pooled)
}

/// `*`, `**`, `***` at 0.05, 0.01, 0.001.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_stats_fixtures() {
        let s = aggregate_seed_stats(&[0.0, 1.0]).unwrap();
        assert_eq!(s.mean, 0.5);
        assert!((s.std - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(aggregate_seed_stats(&[0.3, 0.3, 0.3]).unwrap().std, 0.0);
    }

    #[test]
    fn wilcoxon_all_positive_five() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).unwrap();
        assert_eq!(r.w_minus, 0.0);
        assert_eq!(r.p_value, 0.0625);
        assert!(r.exact);
    }

    #[test]
    fn wilcoxon_identical_is_degenerate() {
        let r = wilcoxon_signed_rank(&[0.4, 0.5], &[0.4, 0.5]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn ties_share_ranks() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn cohens_d_fixture() {
        let d = cohens_d(&[2.0, 4.0], &[1.0, 3.0]).unwrap();
        assert!((d - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(cohens_d(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn bootstrap_constant_is_degenerate() {
        let ci = bootstrap_ci(&[0.7; 10], 1000, 0.95, 1).unwrap();
        assert_eq!((ci.low, ci.high), (0.7, 0.7));
        assert!(ci.degenerate);
        assert!(bootstrap_ci(&[], 10, 0.95, 1).is_err());
    }
}
