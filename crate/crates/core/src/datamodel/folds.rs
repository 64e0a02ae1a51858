use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, VgaError};
use crate::tensorcore::derive_seed;

/// Fraction of each fold's training complement held out for early stopping.
pub const VALIDATION_FRACTION: f64 = 0.2;

/// Indices into the dataset for one cross-validation round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub test: Vec<usize>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    /// `assignment[i]` is the fold that holds claim `i` out.
    pub assignment: Vec<usize>,
    pub splits: Vec<FoldSplit>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.splits.len()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        self.splits.iter().map(|s| s.test.len()).collect()
    }
}

/// Validation count for a complement of `m` items: `round(0.2·m)`, kept within `1..m`.
pub fn validation_count(m: usize) -> usize {
    ((m as f64 * VALIDATION_FRACTION).round() as usize).clamp(1, m.saturating_sub(1).max(1))
}

/// Seeded shuffle of `n` items into `k` near-equal folds (the first `n mod k` folds get one
/// extra), with each fold's complement shuffled again and split 8:2 into train and validation.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(VgaError::config(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(VgaError::config(format!(
            "{k} folds requested for {n} claims"
        )));
    }
    if n - n.div_ceil(k) < 2 {
        return Err(VgaError::config(format!(
            "{n} claims in {k} folds leave fewer than 2 for train plus validation"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "folds")));

    let (base, extra) = (n / k, n % k);
    let mut assignment = vec![0; n];
    let mut splits = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut test = order[start..start + size].to_vec();
        test.sort_unstable();
        for &i in &test {
            assignment[i] = f;
        }
        let mut rest: Vec<usize> = order[..start]
            .iter()
            .chain(&order[start + size..])
            .copied()
            .collect();
        rest.sort_unstable();
        rest.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            seed,
            &format!("fold{f}.split"),
        )));
        let nval = validation_count(rest.len());
        let mut validation = rest[..nval].to_vec();
        let mut train = rest[nval..].to_vec();
        validation.sort_unstable();
        train.sort_unstable();
        splits.push(FoldSplit {
            test,
            train,
            validation,
        });
        start += size;
    }
    Ok(FoldPlan { assignment, splits })
}
