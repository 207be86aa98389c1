use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A split of the base classes into a pseudo-base and a pseudo-new side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoPartition {
    pub pseudo_base: Vec<usize>,
    pub pseudo_new: Vec<usize>,
}

impl PseudoPartition {
    pub fn is_pseudo_base(&self, class: usize) -> bool {
        self.pseudo_base.contains(&class)
    }

    fn normalize(&mut self) {
        self.pseudo_base.sort_unstable();
        self.pseudo_new.sort_unstable();
    }
}

/// `k` random partitions of `0..c_base`. With `k >= 2` every class lands on
/// the pseudo-base side of some partition.
pub fn make_partitions(c_base: usize, k: usize, seed: u64) -> Result<Vec<PseudoPartition>> {
    if c_base < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 base classes to partition, got {c_base}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("number of partitions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = c_base.div_ceil(2).min(c_base - 1);
    let mut parts: Vec<PseudoPartition> = (0..k)
        .map(|_| {
            let mut classes: Vec<usize> = (0..c_base).collect();
            classes.shuffle(&mut rng);
            let pseudo_new = classes.split_off(half);
            PseudoPartition {
                pseudo_base: classes,
                pseudo_new,
            }
        })
        .collect();

    if k >= 2 {
        let mut cursor = 0;
        for class in 0..c_base {
            if parts.iter().any(|p| p.is_pseudo_base(class)) {
                continue;
            }
            // some class appears on >= 2 pseudo-base sides, so a swap exists
            // that keeps coverage of everything already handled
            let mut swapped = false;
            for step in 0..k {
                let idx = (cursor + step) % k;
                let donor = parts[idx]
                    .pseudo_base
                    .iter()
                    .position(|&d| parts.iter().filter(|p| p.is_pseudo_base(d)).count() >= 2);
                if let Some(pos) = donor {
                    let part = &mut parts[idx];
                    let out = part.pseudo_base[pos];
                    let slot = part
                        .pseudo_new
                        .iter()
                        .position(|&c| c == class)
                        .expect("uncovered class is pseudo-new");
                    part.pseudo_base[pos] = class;
                    part.pseudo_new[slot] = out;
                    cursor = idx + 1;
                    swapped = true;
                    break;
                }
            }
            if !swapped {
                return Err(Error::InvalidArgument(format!(
                    "cannot cover {c_base} classes with {k} partitions"
                )));
            }
        }
    }
    for p in &mut parts {
        p.normalize();
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(make_partitions(1, 3, 0).is_err());
        assert!(make_partitions(4, 0, 0).is_err());
    }

    #[test]
    fn deterministic() {
        assert_eq!(make_partitions(7, 3, 5).unwrap(), make_partitions(7, 3, 5).unwrap());
    }

    proptest! {
        #[test]
        fn partitions_are_valid(c_base in 2usize..20, k in 1usize..6, seed in any::<u64>()) {
            let parts = make_partitions(c_base, k, seed).unwrap();
            prop_assert_eq!(parts.len(), k);
            for p in &parts {
                prop_assert!(!p.pseudo_base.is_empty());
                prop_assert!(!p.pseudo_new.is_empty());
                let mut all: Vec<usize> = p.pseudo_base.iter().chain(&p.pseudo_new).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..c_base).collect::<Vec<_>>());
            }
            if k >= 2 {
                for class in 0..c_base {
                    prop_assert!(parts.iter().any(|p| p.is_pseudo_base(class)));
                }
            }
        }
    }
}
