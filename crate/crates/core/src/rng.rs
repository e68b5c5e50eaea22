//! Seeded randomness shared by splitting, shuffling and initialization.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub type SeededRng = Xoshiro256StarStar;

pub fn seeded(seed: u64) -> SeededRng {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// In-place Fisher–Yates shuffle, walking from the last element down.
pub fn fisher_yates<T, R: Rng + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_is_a_seeded_permutation() {
        let mut a: Vec<usize> = (0..50).collect();
        let mut b = a.clone();
        fisher_yates(&mut a, &mut seeded(9));
        fisher_yates(&mut b, &mut seeded(9));
        assert_eq!(a, b);
        assert_ne!(a, (0..50).collect::<Vec<_>>());
        a.sort_unstable();
        assert_eq!(a, (0..50).collect::<Vec<_>>());
    }
}
