use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, DatasetManifest, Label, Split};

/// Integer apportionment of `total` by `fractions`: floors first, then the
/// leftover units go to the largest fractional parts (lower index on ties).
pub fn largest_remainder(total: usize, fractions: &[f64]) -> Vec<usize> {
    let ideal: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut out: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (ideal[a] - ideal[a].floor(), ideal[b] - ideal[b].floor());
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

fn check_fractions(fractions: &[f64]) -> Result<(), DataError> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(DataError::InvalidFractions(format!(
            "{fractions:?} must each lie in [0, 1]"
        )));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(DataError::InvalidFractions(format!(
            "{fractions:?} sum to {sum}, not 1"
        )));
    }
    Ok(())
}

/// Class-by-split count table whose row sums are the class totals, whose
/// column sums are `sizes`, and whose cells are each the floor or ceiling of
/// `n_c * size_s / N`. Such a rounding always exists; among the candidates
/// the one closest to the ideal table (squared error) is taken.
fn controlled_rounding(class_totals: &[usize], sizes: &[usize]) -> Vec<Vec<usize>> {
    let n: usize = class_totals.iter().sum();
    let ideal: Vec<Vec<f64>> = class_totals
        .iter()
        .map(|&c| {
            sizes
                .iter()
                .map(|&s| c as f64 * s as f64 / n as f64)
                .collect()
        })
        .collect();
    let floor: Vec<Vec<usize>> = ideal
        .iter()
        .map(|r| r.iter().map(|v| v.floor() as usize).collect())
        .collect();
    let free: Vec<(usize, usize)> = (0..class_totals.len())
        .flat_map(|c| (0..sizes.len()).map(move |s| (c, s)))
        .filter(|&(c, s)| ideal[c][s] > floor[c][s] as f64)
        .collect();
    assert!(
        free.len() < 24,
        "too many classes for exhaustive controlled rounding"
    );

    let mut best: Option<(f64, Vec<Vec<usize>>)> = None;
    for bits in 0u32..(1 << free.len()) {
        let mut table = floor.clone();
        for (k, &(c, s)) in free.iter().enumerate() {
            table[c][s] += ((bits >> k) & 1) as usize;
        }
        let rows_ok = table
            .iter()
            .zip(class_totals)
            .all(|(r, &t)| r.iter().sum::<usize>() == t);
        let cols_ok =
            (0..sizes.len()).all(|s| table.iter().map(|r| r[s]).sum::<usize>() == sizes[s]);
        if !(rows_ok && cols_ok) {
            continue;
        }
        let err: f64 = table
            .iter()
            .zip(&ideal)
            .flat_map(|(r, i)| r.iter().zip(i).map(|(&a, &b)| (a as f64 - b).powi(2)))
            .sum();
        if best.as_ref().is_none_or(|(e, _)| err < *e - 1e-12) {
            best = Some((err, table));
        }
    }
    best.expect("controlled rounding exists for any integer margins")
        .1
}

/// Assigns every record to train/val/test. Split sizes come from
/// largest-remainder rounding of `N`; per-class counts are a controlled
/// rounding of the proportional table, so every class deviates from the
/// global proportions by less than one image in every split. Memberships are
/// a seeded shuffle within each class.
pub fn stratified_split(
    manifest: &DatasetManifest,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetManifest, DataError> {
    let fr = [fractions.0, fractions.1, fractions.2];
    check_fractions(&fr)?;
    let n = manifest.len();
    let counts = manifest.class_counts();
    let sizes = largest_remainder(n, &fr);
    let needed = fr.iter().filter(|&&f| f > 0.0).count();
    for label in Label::ALL {
        let c = counts.get(label);
        if c > 0 && c < needed {
            return Err(DataError::ClassTooSmall {
                label,
                count: c,
                needed,
            });
        }
    }
    let mut out = manifest.clone();
    out.split_assignment.clear();
    if n == 0 {
        return Ok(out);
    }
    let table = controlled_rounding(&counts.0, &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for label in Label::ALL {
        let mut ids: Vec<&str> = manifest
            .entries
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.id.as_str())
            .collect();
        ids.shuffle(&mut rng);
        let mut it = ids.into_iter();
        for (s, split) in Split::ALL.into_iter().enumerate() {
            for id in it.by_ref().take(table[label.index()][s]) {
                out.split_assignment.insert(id.to_string(), split);
            }
        }
    }
    Ok(out)
}

/// Train/test membership for one adaptation fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationSplit {
    pub fraction: f64,
    pub train: Vec<String>,
    /// Every record not in `train`.
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationSplitSpec {
    pub fractions: Vec<f64>,
    /// Populated by [`make_adaptation_splits`], in `fractions` order.
    pub splits: Vec<AdaptationSplit>,
}

impl Default for AdaptationSplitSpec {
    fn default() -> Self {
        AdaptationSplitSpec::new(vec![0.05, 0.10, 0.20, 0.50])
    }
}

impl AdaptationSplitSpec {
    pub fn new(fractions: Vec<f64>) -> Self {
        AdaptationSplitSpec {
            fractions,
            splits: Vec::new(),
        }
    }

    pub fn split(&self, fraction: f64) -> Option<&AdaptationSplit> {
        self.splits
            .iter()
            .find(|s| (s.fraction - fraction).abs() < 1e-12)
    }
}

/// `round(f * N)` with halves rounded up.
fn round_half_up(f: f64, n: usize) -> usize {
    (f * n as f64 + 0.5 + 1e-9).floor() as usize
}

/// Per-class allocation of `target` images, proportional to class size,
/// never below the allocation of the previous (smaller) fraction.
fn nested_allocation(totals: &[usize; 3], target: usize, lower: &[usize; 3]) -> [usize; 3] {
    let n: usize = totals.iter().sum();
    let ideal: Vec<f64> = totals
        .iter()
        .map(|&c| c as f64 * target as f64 / n as f64)
        .collect();
    let mut alloc = [0usize; 3];
    for c in 0..3 {
        alloc[c] = (ideal[c].floor() as usize).max(lower[c]).min(totals[c]);
    }
    while alloc.iter().sum::<usize>() < target {
        let c = (0..3)
            .filter(|&c| alloc[c] < totals[c])
            .max_by(|&a, &b| {
                (ideal[a] - alloc[a] as f64)
                    .partial_cmp(&(ideal[b] - alloc[b] as f64))
                    .unwrap()
                    .then(b.cmp(&a))
            })
            .expect("target never exceeds N");
        alloc[c] += 1;
    }
    while alloc.iter().sum::<usize>() > target {
        let c = (0..3)
            .filter(|&c| alloc[c] > lower[c])
            .min_by(|&a, &b| {
                (ideal[a] - alloc[a] as f64)
                    .partial_cmp(&(ideal[b] - alloc[b] as f64))
                    .unwrap()
                    .then(a.cmp(&b))
            })
            .expect("lower bounds sum to at most target");
        alloc[c] -= 1;
    }
    alloc
}

/// Builds nested, class-stratified training subsets: each fraction takes
/// `round(f * N)` records (halves up), and the training set of a smaller
/// fraction is contained in that of every larger one.
pub fn make_adaptation_splits(
    manifest: &DatasetManifest,
    spec: &AdaptationSplitSpec,
    seed: u64,
) -> Result<AdaptationSplitSpec, DataError> {
    if spec.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(DataError::InvalidFractions(format!(
            "{:?} must each lie in [0, 1]",
            spec.fractions
        )));
    }
    let n = manifest.len();
    let totals = manifest.class_counts().0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orders: Vec<Vec<&str>> = Label::ALL
        .iter()
        .map(|&l| {
            let mut ids: Vec<&str> = manifest
                .entries
                .iter()
                .filter(|e| e.label == l)
                .map(|e| e.id.as_str())
                .collect();
            ids.shuffle(&mut rng);
            ids
        })
        .collect();

    let mut ascending: Vec<usize> = (0..spec.fractions.len()).collect();
    ascending.sort_by(|&a, &b| spec.fractions[a].partial_cmp(&spec.fractions[b]).unwrap());
    let mut allocs = vec![[0usize; 3]; spec.fractions.len()];
    let mut lower = [0usize; 3];
    for &i in &ascending {
        let f = spec.fractions[i];
        let alloc = if n == 0 {
            [0; 3]
        } else {
            nested_allocation(&totals, round_half_up(f, n), &lower)
        };
        for label in Label::ALL {
            if f > 0.0 && totals[label.index()] > 0 && alloc[label.index()] == 0 {
                warn!("fraction {f} selects no {label} images");
            }
        }
        allocs[i] = alloc;
        lower = alloc;
    }

    let splits = spec
        .fractions
        .iter()
        .zip(&allocs)
        .map(|(&fraction, alloc)| {
            let mut train: Vec<String> = orders
                .iter()
                .zip(alloc)
                .flat_map(|(ids, &k)| ids[..k].iter().map(|s| s.to_string()))
                .collect();
            train.sort();
            let test = manifest
                .entries
                .iter()
                .map(|e| e.id.clone())
                .filter(|id| train.binary_search(id).is_err())
                .collect();
            AdaptationSplit {
                fraction,
                train,
                test,
            }
        })
        .collect();
    Ok(AdaptationSplitSpec {
        fractions: spec.fractions.clone(),
        splits,
    })
}
