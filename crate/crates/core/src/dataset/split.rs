use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::rng::{fisher_yates, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Validation => "validation",
            SplitTag::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(SplitTag::Train),
            "validation" => Some(SplitTag::Validation),
            "test" => Some(SplitTag::Test),
            _ => None,
        }
    }
}

/// Disjoint, sorted entry-index sets covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitAssignment {
    pub fn tag_of(&self, index: usize) -> Option<SplitTag> {
        if self.train.binary_search(&index).is_ok() {
            Some(SplitTag::Train)
        } else if self.validation.binary_search(&index).is_ok() {
            Some(SplitTag::Validation)
        } else if self.test.binary_search(&index).is_ok() {
            Some(SplitTag::Test)
        } else {
            None
        }
    }
}

/// 70/20/10 sizes: validation and test are rounded to nearest, the
/// training set takes whatever remains.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let validation = (n as f64 * 0.2).round() as usize;
    let test = (n as f64 * 0.1).round() as usize;
    (n - validation - test, validation, test)
}

/// Seeded random 70/20/10 partition of `n` entries (xoshiro256** driving a
/// Fisher–Yates shuffle).
pub fn split_dataset(n: usize, seed: u64) -> Result<SplitAssignment, DatasetError> {
    if n < 10 {
        return Err(DatasetError::Parameter(format!(
            "need at least 10 entries to split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    fisher_yates(&mut order, &mut seeded(seed));
    let (n_train, n_val, _) = split_sizes(n);
    let mut train = order[..n_train].to_vec();
    let mut validation = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(SplitAssignment {
        train,
        validation,
        test,
    })
}

/// Balanced weights `N / (C · N_c)` over `C = counts.len()` classes.
pub fn class_weights(counts: &[usize]) -> Result<Vec<f64>, DatasetError> {
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(DatasetError::Config(format!(
            "class {c} has no training samples"
        )));
    }
    let total: usize = counts.iter().sum();
    let classes = counts.len() as f64;
    Ok(counts
        .iter()
        .map(|&n| total as f64 / (classes * n as f64))
        .collect())
}
