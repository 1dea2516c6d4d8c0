use std::collections::BTreeMap;

use super::rng;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_per_class: usize,
    pub seed: u64,
}

/// Disjoint, exhaustive index sets, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Draw `train_per_class` training indices from every class.
///
/// Classes are visited in ascending label order; within a class the sample
/// indices (ascending) are Fisher–Yates shuffled with one shared generator
/// seeded from `spec.seed`, and the first `train_per_class` go to training.
pub fn stratified_split(labels: &[usize], spec: &SplitSpec) -> Result<Split> {
    if spec.train_per_class == 0 {
        return Err(Error::param("train_per_class", "must be >= 1"));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    if by_class.is_empty() {
        return Err(Error::InvalidData("cannot split an empty label set".into()));
    }
    if let Some((c, members)) = by_class.iter().find(|(_, v)| v.len() <= spec.train_per_class) {
        return Err(Error::InvalidData(format!(
            "class {c} has {} samples; need at least {} for {} training samples per class",
            members.len(),
            spec.train_per_class + 1,
            spec.train_per_class
        )));
    }

    let mut gen = rng::seeded(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for members in by_class.values_mut() {
        rng::shuffle(&mut gen, members);
        train.extend_from_slice(&members[..spec.train_per_class]);
        test.extend_from_slice(&members[spec.train_per_class..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}
