use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabelMatrix;
use crate::error::{Error, Result};

/// Class-based partition into original/incremental data plus a per-class
/// query/retrieval split.
///
/// `original_indices` and `incremental_indices` partition the retrieval
/// set. An instance carrying any incremental class is incremental, even if
/// it also carries original classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub original_indices: Vec<usize>,
    pub incremental_indices: Vec<usize>,
    pub query_indices: Vec<usize>,
    pub retrieval_indices: Vec<usize>,
    pub original_classes: Vec<usize>,
    pub incremental_classes: Vec<usize>,
    pub seed: u64,
    /// Incremental instances that also carry original classes.
    pub mixed_label_instances: usize,
}

impl DatasetSplit {
    pub fn m(&self) -> usize {
        self.original_indices.len()
    }

    pub fn n(&self) -> usize {
        self.incremental_indices.len()
    }

    /// Queries whose labels are all original classes.
    pub fn original_class_queries(&self, labels: &LabelMatrix) -> Vec<usize> {
        let inc: BTreeSet<usize> = self.incremental_classes.iter().copied().collect();
        self.query_indices
            .iter()
            .copied()
            .filter(|&q| !labels.row_classes(q).any(|c| inc.contains(&c)))
            .collect()
    }
}

/// Splits by class: the last `incremental_class_count` classes form the
/// incremental set. `query_fraction` of each class's instances (rounded,
/// at least one) is held out as queries.
pub fn make_split(
    labels: &LabelMatrix,
    incremental_class_count: usize,
    query_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    let classes = labels.classes();
    if incremental_class_count >= classes {
        return Err(Error::Config(format!(
            "incremental class count {incremental_class_count} must be below the class count {classes}"
        )));
    }
    if !(query_fraction > 0.0 && query_fraction < 1.0) {
        return Err(Error::Config(format!("query fraction {query_fraction} not in (0, 1)")));
    }
    let rows = labels.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut is_query = vec![false; rows];
    for class in 0..classes {
        let mut members: Vec<usize> = (0..rows).filter(|&r| labels.has(r, class)).collect();
        if members.is_empty() {
            return Err(Error::Data(format!("class {class} has no instances")));
        }
        let target = ((members.len() as f64 * query_fraction).round() as usize).max(1);
        let already = members.iter().filter(|&&r| is_query[r]).count();
        members.retain(|&r| !is_query[r]);
        members.shuffle(&mut rng);
        for &r in members.iter().take(target.saturating_sub(already)) {
            is_query[r] = true;
        }
    }

    let query_indices: Vec<usize> = (0..rows).filter(|&r| is_query[r]).collect();
    let retrieval_indices: Vec<usize> = (0..rows).filter(|&r| !is_query[r]).collect();
    for class in 0..classes {
        if !retrieval_indices.iter().any(|&r| labels.has(r, class)) {
            return Err(Error::Data(format!("class {class} would be empty in the retrieval set")));
        }
    }

    let first_incremental = classes - incremental_class_count;
    let is_incremental = |r: usize| labels.row_classes(r).any(|c| c >= first_incremental);
    let is_mixed = |r: usize| labels.row_classes(r).any(|c| c < first_incremental);
    let (incremental_indices, original_indices): (Vec<usize>, Vec<usize>) =
        retrieval_indices.iter().partition(|&&r| is_incremental(r));
    let mixed_label_instances = incremental_indices.iter().filter(|&&r| is_mixed(r)).count();

    Ok(DatasetSplit {
        original_indices,
        incremental_indices,
        query_indices,
        retrieval_indices,
        original_classes: (0..first_incremental).collect(),
        incremental_classes: (first_incremental..classes).collect(),
        seed,
        mixed_label_instances,
    })
}
