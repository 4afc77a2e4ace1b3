//! Dataset partitioning: chronological hold-out and seeded random splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::WindowSample;

/// Anything with a start timestamp.
pub trait Timed {
    fn start_time(&self) -> f64;
}

impl Timed for WindowSample {
    fn start_time(&self) -> f64 {
        self.start_time
    }
}

impl Timed for f64 {
    fn start_time(&self) -> f64 {
        *self
    }
}

/// Splits time-sorted samples at `boundary`: earlier samples go to the first
/// part, samples starting at or after the boundary to the second.
pub fn split_by_time<T: Timed>(samples: Vec<T>, boundary: f64) -> Result<(Vec<T>, Vec<T>)> {
    let cut = samples.partition_point(|s| s.start_time() < boundary);
    let mut train_val = samples;
    let test = train_val.split_off(cut);
    if train_val.is_empty() {
        return Err(Error::EmptyPartition("train/validation"));
    }
    if test.is_empty() {
        return Err(Error::EmptyPartition("test"));
    }
    Ok((train_val, test))
}

/// Seeded shuffle, then the first `round(ratio·n)` items form the first part.
pub fn random_split<T>(samples: Vec<T>, ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::config("split.ratio", format!("must lie in (0, 1), got {ratio}")));
    }
    let n = samples.len();
    let n_first = (ratio * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut slots: Vec<Option<T>> = samples.into_iter().map(Some).collect();
    let mut first = Vec::with_capacity(n_first);
    let mut second = Vec::with_capacity(n - n_first);
    for (k, &i) in order.iter().enumerate() {
        let item = slots[i].take().expect("each index visited once");
        if k < n_first {
            first.push(item);
        } else {
            second.push(item);
        }
    }
    Ok((first, second))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn time_split_counts() {
        let t: Vec<f64> = (0..10).map(f64::from).collect();
        let (a, b) = split_by_time(t, 5.0).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        assert!(a.iter().all(|&x| x < 5.0) && b.iter().all(|&x| x >= 5.0));
    }

    #[test]
    fn time_split_before_everything_is_empty_partition() {
        let t: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(matches!(split_by_time(t.clone(), -1.0), Err(Error::EmptyPartition(_))));
        assert!(matches!(split_by_time(t, 100.0), Err(Error::EmptyPartition(_))));
    }

    #[test]
    fn random_split_sizes_and_determinism() {
        let v: Vec<u32> = (0..10).collect();
        let (a, b) = random_split(v.clone(), 0.8, 42).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        let (a2, b2) = random_split(v, 0.8, 42).unwrap();
        assert_eq!((a, b), (a2, b2));
    }

    #[test]
    fn random_split_rejects_degenerate_ratio() {
        assert!(random_split(vec![1, 2, 3], 1.0, 0).is_err());
        assert!(random_split(vec![1, 2, 3], 0.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn splits_conserve_the_multiset(n in 0usize..200, ratio in 0.05f64..0.95, seed: u64, boundary in -5.0f64..210.0) {
            let v: Vec<u32> = (0..n as u32).map(|i| i % 17).collect();
            let (a, b) = random_split(v.clone(), ratio, seed).unwrap();
            let mut joined: Vec<u32> = a.into_iter().chain(b).collect();
            joined.sort_unstable();
            let mut sorted = v;
            sorted.sort_unstable();
            prop_assert_eq!(joined, sorted);

            let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
            if let Ok((x, y)) = split_by_time(t.clone(), boundary) {
                let joined: Vec<f64> = x.into_iter().chain(y).collect();
                prop_assert_eq!(joined, t);
            }
        }
    }
}
