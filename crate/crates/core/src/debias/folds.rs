use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Random balanced partition of `0..n0` into `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold label of every position.
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// Positions in fold `f`, ascending.
    pub fn fold(&self, f: usize) -> Vec<usize> {
        self.assignments.iter().enumerate().filter(|(_, a)| **a == f).map(|(i, _)| i).collect()
    }

    /// Positions outside fold `f`, ascending.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        self.assignments.iter().enumerate().filter(|(_, a)| **a != f).map(|(i, _)| i).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }
}

pub fn make_folds(n0: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n0 {
        return Err(Error::InvalidInput(format!("fold count must satisfy 2 <= K <= n0 (K={k}, n0={n0})")));
    }
    let mut order: Vec<usize> = (0..n0).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignments = vec![0; n0];
    for (slot, &i) in order.iter().enumerate() {
        assignments[i] = slot % k;
    }
    Ok(FoldPlan { k, assignments, seed })
}
