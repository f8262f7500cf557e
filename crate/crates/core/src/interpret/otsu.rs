use serde::{Deserialize, Serialize};

use super::InterpretError;
use crate::data::BinaryMask;

pub const OTSU_BINS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtsuResult {
    /// Values in bins `>= bin` are foreground.
    pub bin: usize,
    /// Lower edge of `bin`, in map units.
    pub threshold: f64,
    pub bins: usize,
    pub min: f64,
    pub max: f64,
    /// Constant map; `threshold` is that value and nothing is foreground.
    pub degenerate: bool,
}

impl OtsuResult {
    /// Histogram bin of `v` over `[min, max]`.
    pub fn bin_of(&self, v: f64) -> usize {
        bin_of(v, self.min, self.max, self.bins)
    }

    pub fn is_foreground(&self, v: f64) -> bool {
        !self.degenerate && self.bin_of(v) >= self.bin
    }
}

fn bin_of(v: f64, min: f64, max: f64, bins: usize) -> usize {
    (((v - min) / (max - min) * bins as f64) as usize).min(bins - 1)
}

/// Threshold maximising the between-class variance `w0 w1 (mu0 - mu1)^2`
/// over the bin boundaries `1..bins` of a histogram spanning the map's own
/// `[min, max]`. Class means use the raw values. Ties go to the lowest
/// boundary.
pub fn otsu_threshold(values: &[f64], bins: usize) -> Result<OtsuResult, InterpretError> {
    if values.is_empty() || bins < 2 {
        return Err(InterpretError::EmptyMap);
    }
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if min == max {
        return Ok(OtsuResult {
            bin: bins,
            threshold: min,
            bins,
            min,
            max,
            degenerate: true,
        });
    }
    let mut count = vec![0usize; bins];
    let mut sum = vec![0.0; bins];
    for &v in values {
        let b = bin_of(v, min, max, bins);
        count[b] += 1;
        sum[b] += v;
    }
    let n = values.len() as f64;
    let total: f64 = sum.iter().sum();
    let (mut n0, mut s0) = (0usize, 0.0);
    let (mut best_bin, mut best_var) = (1, f64::NEG_INFINITY);
    for k in 1..bins {
        n0 += count[k - 1];
        s0 += sum[k - 1];
        let n1 = values.len() - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let (w0, w1) = (n0 as f64 / n, n1 as f64 / n);
        let (mu0, mu1) = (s0 / n0 as f64, (total - s0) / n1 as f64);
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if var > best_var {
            best_var = var;
            best_bin = k;
        }
    }
    let threshold = min + (max - min) * best_bin as f64 / bins as f64;
    Ok(OtsuResult {
        bin: best_bin,
        threshold,
        bins,
        min,
        max,
        degenerate: false,
    })
}

pub fn otsu_binarize(values: &[f64], height: usize, width: usize, otsu: &OtsuResult) -> BinaryMask {
    BinaryMask::from_bools(
        height,
        width,
        &values
            .iter()
            .map(|&v| otsu.is_foreground(v))
            .collect::<Vec<_>>(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bimodal_split() {
        let mut v = vec![0.1; 50];
        v.extend(vec![0.9; 50]);
        let r = otsu_threshold(&v, OTSU_BINS).unwrap();
        assert!(r.threshold > 0.1 && r.threshold < 0.9);
        let m = otsu_binarize(&v, 10, 10, &r);
        assert_eq!(m.count(), 50);
        assert!(v.iter().zip(m.values()).all(|(&x, b)| b == (x > 0.5)));
    }

    #[test]
    fn constant_map_is_degenerate() {
        let r = otsu_threshold(&[0.3; 16], OTSU_BINS).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.threshold, 0.3);
        assert!(otsu_threshold(&[], OTSU_BINS).is_err());
    }
}
