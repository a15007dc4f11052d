//! Minibatch construction.
//!
//! Balanced batches draw the same number of frames from every non-empty
//! intensity class, so the head sees a uniform label distribution no matter
//! how skewed the training split is. Draws are with replacement.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    #[default]
    Balanced,
    Uniform,
}

/// Dataset positions partitioned by label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassIndex {
    per_class: Vec<Vec<usize>>,
}

impl ClassIndex {
    pub fn class(&self, label: usize) -> &[usize] {
        &self.per_class[label]
    }

    pub fn num_classes(&self) -> usize {
        self.per_class.len()
    }

    /// Labels with at least one member.
    pub fn non_empty_classes(&self) -> Vec<usize> {
        (0..self.per_class.len())
            .filter(|&k| !self.per_class[k].is_empty())
            .collect()
    }

    pub fn total(&self) -> usize {
        self.per_class.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub positions: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

pub fn build_class_index(dataset: &Dataset) -> ClassIndex {
    let mut per_class = vec![Vec::new(); dataset.num_classes()];
    for (i, s) in dataset.samples().iter().enumerate() {
        per_class[s.label].push(i);
    }
    ClassIndex { per_class }
}

/// Draws `batch_size / K'` positions from each of the `K'` non-empty classes.
pub fn next_balanced_batch<R: Rng + ?Sized>(
    index: &ClassIndex,
    batch_size: usize,
    rng: &mut R,
) -> Result<Batch> {
    let classes = index.non_empty_classes();
    if classes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if batch_size == 0 || !batch_size.is_multiple_of(classes.len()) {
        return Err(Error::Config(format!(
            "batch size {batch_size} is not a positive multiple of the {} non-empty classes",
            classes.len()
        )));
    }
    let quota = batch_size / classes.len();
    let mut positions = Vec::with_capacity(batch_size);
    for k in classes {
        let members = &index.per_class[k];
        positions.extend((0..quota).map(|_| members[rng.random_range(0..members.len())]));
    }
    Ok(Batch { positions })
}

/// Draws `batch_size` positions uniformly with replacement from `0..dataset_size`.
pub fn next_uniform_batch<R: Rng + ?Sized>(
    dataset_size: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Batch> {
    if dataset_size == 0 {
        return Err(Error::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    Ok(Batch {
        positions: (0..batch_size)
            .map(|_| rng.random_range(0..dataset_size))
            .collect(),
    })
}
