//! Train/test splits: exhaustive enumeration and uniform sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::binomial;
use crate::seed::rng_from_seed;

/// Exact enumeration is refused beyond this many splits.
pub const ENUMERATION_CAP: u64 = 1_000_000;

/// Disjoint train/test index sets covering `0..n`. Indices are 0-based in
/// memory; [`Split::one_based`] gives the external convention.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Builds the split whose test set is `test` (sorted, distinct, `< n`).
    pub fn from_test(n: usize, test: Vec<usize>) -> Split {
        let mut in_test = vec![false; n];
        for &i in &test {
            in_test[i] = true;
        }
        let train = (0..n).filter(|&i| !in_test[i]).collect();
        Split { train, test }
    }

    pub fn n(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn one_based(&self) -> Split {
        Split {
            train: self.train.iter().map(|i| i + 1).collect(),
            test: self.test.iter().map(|i| i + 1).collect(),
        }
    }
}

fn check_p(n: usize, p: usize) -> Result<()> {
    if n == 0 || p == 0 || p > n {
        return Err(Error::invalid(format!("need 1 <= p <= n, got n = {n}, p = {p}")));
    }
    Ok(())
}

/// Errors unless `C(n, p)` is within [`ENUMERATION_CAP`].
pub fn check_enumeration(n: usize, p: usize) -> Result<u64> {
    check_p(n, p)?;
    let count = binomial(n, p);
    if count > ENUMERATION_CAP as f64 {
        return Err(Error::EnumerationCap { n, p, count, cap: ENUMERATION_CAP });
    }
    Ok(count as u64)
}

/// Lexicographic iterator over the `k`-subsets of `0..n`.
#[derive(Clone, Debug)]
pub struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        let current = (k <= n).then(|| (0..k).collect());
        Self { n, current }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        let advanced = loop {
            if i == 0 {
                break false;
            }
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                break true;
            }
        };
        self.current = advanced.then_some(next);
        Some(out)
    }
}

/// All `C(n, p)` splits with `|test| = p`, ordered lexicographically by test set.
pub fn enumerate_splits(n: usize, p: usize) -> Result<Vec<Split>> {
    check_enumeration(n, p)?;
    Ok(Combinations::new(n, p).map(|test| Split::from_test(n, test)).collect())
}

/// Uniformly random split with `|test| = p` drawn from `rng`.
pub fn sample_split_with<R: Rng + ?Sized>(rng: &mut R, n: usize, p: usize) -> Result<Split> {
    check_p(n, p)?;
    let mut test = rand::seq::index::sample(rng, n, p).into_vec();
    test.sort_unstable();
    Ok(Split::from_test(n, test))
}

/// Uniformly random split with `|test| = p`, deterministic in `seed`.
pub fn sample_split(n: usize, p: usize, seed: u64) -> Result<Split> {
    sample_split_with(&mut rng_from_seed(seed), n, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedStream;
    use std::collections::{HashMap, HashSet};

    #[test]
    fn enumerate_small_cases() {
        let s = enumerate_splits(3, 1).unwrap();
        let tests: Vec<_> = s.iter().map(|s| s.one_based().test).collect();
        assert_eq!(tests, vec![vec![1], vec![2], vec![3]]);
        assert_eq!(s[0].train, vec![1, 2]);
        assert_eq!(enumerate_splits(4, 2).unwrap().len(), 6);
        let total: usize = (1..=5).map(|p| enumerate_splits(5, p).unwrap().len()).sum();
        assert_eq!(total, 31);
    }

    #[test]
    fn enumeration_counts_and_uniqueness_up_to_12() {
        for n in 1..=12 {
            for p in 1..=n {
                let splits = enumerate_splits(n, p).unwrap();
                assert_eq!(splits.len() as f64, binomial(n, p));
                let distinct: HashSet<_> = splits.iter().map(|s| s.test.clone()).collect();
                assert_eq!(distinct.len(), splits.len());
                for s in &splits {
                    assert_eq!(s.test.len(), p);
                    assert_eq!(s.n(), n);
                }
                assert!(splits.windows(2).all(|w| w[0].test < w[1].test));
            }
        }
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(enumerate_splits(30, 15), Err(Error::EnumerationCap { .. })));
        assert!(enumerate_splits(4, 0).is_err());
        assert!(enumerate_splits(4, 5).is_err());
        assert!(check_enumeration(20, 10).is_ok());
    }

    #[test]
    fn sample_split_edge_cases() {
        for seed in 0..20 {
            let s = sample_split(2, 1, seed).unwrap();
            assert!(s.test == vec![0] || s.test == vec![1]);
            assert_eq!(sample_split(5, 5, seed).unwrap().test, vec![0, 1, 2, 3, 4]);
        }
        assert_eq!(sample_split(9, 4, 77).unwrap(), sample_split(9, 4, 77).unwrap());
    }

    #[test]
    fn sample_split_is_uniform_over_5_choose_2() {
        let stream = SeedStream::new(2024);
        let draws = 100_000;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for t in 0..draws {
            let s = sample_split_with(&mut stream.rng(t), 5, 2).unwrap();
            *counts.entry(s.test).or_default() += 1;
        }
        assert_eq!(counts.len(), 10);
        let expected = draws as f64 / 10.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 9 degrees of freedom, 0.999 quantile
        assert!(chi2 < 27.88, "chi-square {chi2}");
        for &c in counts.values() {
            assert!((c as f64 / draws as f64 - 0.1).abs() < 0.01);
        }
    }
}
