//! Deterministic selection of probe points and items.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Items are taken exhaustively up to this count, seeded-uniformly above.
pub const EXHAUSTIVE_LIMIT: usize = 64;

/// Indices into `0..len`: all of them when `len <= limit`, otherwise a
/// seeded uniform sample of `limit` distinct indices, sorted.
pub fn sample_indices(len: usize, limit: usize, seed: u64) -> Vec<usize> {
    if len <= limit {
        return (0..len).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, len, limit).into_vec();
    picked.sort_unstable();
    picked
}

/// `count` evenly spaced picks from `items`, both ends included.
pub fn evenly_spaced<T: Copy>(items: &[T], count: usize) -> Vec<T> {
    if items.len() <= count || count < 2 {
        return items.to_vec();
    }
    let last = items.len() - 1;
    (0..count)
        .map(|j| items[(j * last + (count - 1) / 2) / (count - 1)])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sets_are_exhaustive() {
        assert_eq!(sample_indices(5, 64, 1), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn large_sets_are_seeded() {
        let a = sample_indices(1000, 64, 3);
        assert_eq!(a.len(), 64);
        assert_eq!(a, sample_indices(1000, 64, 3));
        assert_ne!(a, sample_indices(1000, 64, 4));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn evenly_spaced_keeps_ends() {
        let items: Vec<usize> = (0..101).collect();
        let picks = evenly_spaced(&items, 5);
        assert_eq!(picks.first(), Some(&0));
        assert_eq!(picks.last(), Some(&100));
        assert_eq!(picks.len(), 5);
    }
}
