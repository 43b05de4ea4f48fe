use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Partition of material ids into `k` disjoint test sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    pub fn test(&self, fold: usize) -> &[String] {
        &self.folds[fold]
    }

    /// Every id outside `fold`, in fold order.
    pub fn train(&self, fold: usize) -> Vec<String> {
        self.folds
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != fold)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect()
    }
}

/// Seeded shuffle, then contiguous folds whose sizes differ by at most one.
pub fn kfold_split(ids: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > ids.len() {
        return Err(Error::InvalidK {
            k,
            constraint: format!("2 <= folds <= {}", ids.len()),
        });
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut stream_rng(seed, Stream::Folds, 0));
    let base = ids.len() / k;
    let extra = ids.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        folds.push(shuffled[start..start + len].to_vec());
        start += len;
    }
    Ok(FoldPlan { k, seed, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn ten_into_five() {
        let plan = kfold_split(&ids(10), 5, 1).unwrap();
        assert!(plan.folds.iter().all(|f| f.len() == 2));
    }

    #[test]
    fn seeded_and_disjoint() {
        let a = kfold_split(&ids(151), 10, 7).unwrap();
        assert_eq!(a, kfold_split(&ids(151), 10, 7).unwrap());
        assert_ne!(a, kfold_split(&ids(151), 10, 8).unwrap());
        let sizes: BTreeSet<usize> = a.folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().all(|s| *s == 15 || *s == 16));
        let all: BTreeSet<&String> = a.folds.iter().flatten().collect();
        assert_eq!(all.len(), 151);
        assert_eq!(a.train(3).len() + a.test(3).len(), 151);
        assert!(a.train(3).iter().all(|id| !a.test(3).contains(id)));
    }

    #[test]
    fn invalid_fold_counts() {
        assert!(kfold_split(&ids(5), 1, 0).is_err());
        assert!(kfold_split(&ids(5), 6, 0).is_err());
    }
}
