use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SeededRng;

pub const N_FOLDS: usize = 5;

/// Student-level partition: a held-out test group (20%) and five
/// cross-validation folds covering the rest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub test_students: Vec<String>,
    pub folds: Vec<Vec<String>>,
}

impl DatasetSplit {
    /// Students of every fold except `fold`.
    pub fn train_students(&self, fold: usize) -> Vec<String> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fold)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect()
    }
}

/// Partitions `students` deterministically given `seed`. The input order does
/// not matter: ids are sorted before shuffling.
pub fn split(students: &[String], seed: u64) -> Result<DatasetSplit> {
    if students.len() < N_FOLDS {
        return Err(Error::TooFewStudents { needed: N_FOLDS, got: students.len() });
    }
    let mut ids = students.to_vec();
    ids.sort();
    ids.dedup();
    let mut rng = SeededRng::new(seed);
    ids.shuffle(&mut rng);
    let n_test = ids.len() / 5;
    let rest = ids.split_off(n_test);
    let mut folds = vec![Vec::new(); N_FOLDS];
    for (i, s) in rest.into_iter().enumerate() {
        folds[i % N_FOLDS].push(s);
    }
    Ok(DatasetSplit { test_students: ids, folds })
}
