use rand::seq::SliceRandom;

use crate::error::{IdidError, Result};
use crate::rng;

/// Shuffled partition of `n` rows into `k` folds of near-equal size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    seed: u64,
    /// 1-based fold of each row; 0 everywhere when `k == 1`.
    assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k == 0 || k > n {
            return Err(IdidError::Domain(format!(
                "need 1 ≤ K ≤ n, got K={k}, n={n}"
            )));
        }
        if k == 1 {
            return Ok(FoldPlan {
                k,
                seed,
                assignment: vec![0; n],
            });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(seed, &[n as u64, k as u64]));
        let mut assignment = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            assignment[i] = pos % k + 1;
        }
        Ok(FoldPlan {
            k,
            seed,
            assignment,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// (training rows, held-out rows) for each fold. With a single fold both
    /// are the whole sample.
    pub fn splits(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        let all: Vec<usize> = (0..self.assignment.len()).collect();
        if self.k == 1 {
            return vec![(all.clone(), all)];
        }
        (1..=self.k)
            .map(|f| {
                let (test, train): (Vec<usize>, Vec<usize>) =
                    all.iter().partition(|&&i| self.assignment[i] == f);
                (train, test)
            })
            .collect()
    }
}
