use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::rng::{rng_for, Stream};

/// Assignment of record indices to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Fold index for every record.
    pub assignment: Vec<usize>,
}

/// Seeded shuffle, then contiguous chunks. The first `n % k` folds get one
/// extra record.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 || k > n {
        return Err(EvalError::FoldCount { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, Stream::Folds, 0));
    let mut assignment = vec![0; n];
    let (base, extra) = (n / k, n % k);
    let mut at = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &i in &order[at..at + size] {
            assignment[i] = fold;
        }
        at += size;
    }
    Ok(FoldPlan {
        k,
        seed,
        assignment,
    })
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Ascending record indices held out in `fold`.
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    /// Ascending record indices used for training when `fold` is held out.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}
