use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PipeError, Result};

/// Sequence ids assigned to each split. Splitting happens per sequence, so no
/// window of one storm lands in two splits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.7, 0.15, 0.15);

/// `train = floor(r0 n)`, `val = floor(r1 n)`, test takes the remainder.
pub fn split_counts(n: usize, ratios: (f64, f64, f64)) -> (usize, usize, usize) {
    // the epsilon absorbs products like 0.7 * 10 = 7.000000000000001 or 6.9999...
    let train = (ratios.0 * n as f64 + 1e-9).floor() as usize;
    let val = (ratios.1 * n as f64 + 1e-9).floor() as usize;
    let train = train.min(n);
    let val = val.min(n - train);
    (train, val, n - train - val)
}

pub fn split_dataset(ids: &[String], ratios: (f64, f64, f64), seed: u64) -> Result<Split> {
    if ids.len() < 3 {
        return Err(PipeError::Data(format!(
            "need at least 3 sequences to split, got {}",
            ids.len()
        )));
    }
    let sum = ratios.0 + ratios.1 + ratios.2;
    if ratios.0 < 0.0 || ratios.1 < 0.0 || ratios.2 < 0.0 || (sum - 1.0).abs() > 1e-6 {
        return Err(PipeError::Config(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, val, _) = split_counts(ids.len(), ratios);
    let test = shuffled.split_off(train + val);
    let val = shuffled.split_off(train);
    Ok(Split {
        train: shuffled,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("S{i}")).collect()
    }

    #[test]
    fn counts_follow_floor_rule() {
        assert_eq!(split_counts(20, DEFAULT_RATIOS), (14, 3, 3));
        assert_eq!(split_counts(10, DEFAULT_RATIOS), (7, 1, 2));
        assert_eq!(split_counts(50, DEFAULT_RATIOS), (35, 7, 8));
        let s = split_dataset(&ids(10), DEFAULT_RATIOS, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 1, 2));
    }

    #[test]
    fn partition_is_disjoint_and_complete() {
        for n in 3..40 {
            let all = ids(n);
            let s = split_dataset(&all, DEFAULT_RATIOS, n as u64).unwrap();
            let mut seen = HashSet::new();
            for id in s.train.iter().chain(&s.val).chain(&s.test) {
                assert!(seen.insert(id.clone()), "duplicate {id}");
            }
            assert_eq!(seen, all.into_iter().collect());
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let all = ids(20);
        assert_eq!(
            split_dataset(&all, DEFAULT_RATIOS, 9).unwrap(),
            split_dataset(&all, DEFAULT_RATIOS, 9).unwrap()
        );
        assert!(split_dataset(&ids(2), DEFAULT_RATIOS, 0).is_err());
        assert!(split_dataset(&all, (0.5, 0.5, 0.5), 0).is_err());
    }
}
