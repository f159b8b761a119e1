use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Seeded shuffle followed by a contiguous `(train, val, test)` split.
///
/// Sizes are `round(f0 * n)`, `round(f1 * n)` and the remainder.
pub fn split<T>(items: Vec<T>, fractions: [f64; 3], seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::invalid("cannot split an empty sample list"));
    }
    if fractions.iter().any(|&f| !(f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions must be positive and sum to 1, got {fractions:?}"
        )));
    }
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);

    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    let mut take = |idx: &[usize]| -> Vec<T> {
        idx.iter()
            .map(|&i| slots[i].take().expect("index used once"))
            .collect()
    };
    let train = take(&order[..n_train]);
    let val = take(&order[n_train..n_train + n_val]);
    let test = take(&order[n_train + n_val..]);
    Ok((train, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_samples_eight_one_one() {
        let (a, b, c) = split((0..10).collect(), [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
    }

    #[test]
    fn same_seed_same_assignment() {
        let run = || split((0..100).collect::<Vec<_>>(), [0.6, 0.2, 0.2], 42).unwrap();
        assert_eq!(run(), run());
        let other = split((0..100).collect::<Vec<_>>(), [0.6, 0.2, 0.2], 43).unwrap();
        assert_ne!(run(), other);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(split(Vec::<u8>::new(), [0.5, 0.25, 0.25], 0).is_err());
        assert!(split(vec![1], [0.5, 0.5, 0.0], 0).is_err());
        assert!(split(vec![1], [0.5, 0.3, 0.3], 0).is_err());
    }

    proptest! {
        #[test]
        fn partition_law(n in 1usize..300, seed in any::<u64>(), f0 in 0.05f64..0.9) {
            let rest = 1.0 - f0;
            let fr = [f0, rest / 2.0, rest - rest / 2.0];
            let (a, b, c) = split((0..n).collect::<Vec<_>>(), fr, seed).unwrap();
            let mut all: Vec<usize> = a.into_iter().chain(b).chain(c).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
