//! Labeled datasets and the MNIST IDX reader.

pub mod mnist;

use crate::error::{invalid, Result};

/// Inputs with integer class labels in `[0, classes)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.len() != labels.len() {
            return invalid(format!("{} inputs but {} labels", inputs.len(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return invalid(format!("label {bad} outside [0, {classes})"));
        }
        Ok(Dataset {
            inputs,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// Splits off the last `n` examples, returning `(head, tail)`.
    pub fn split_tail(mut self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let cut = self.len() - n;
        let tail = Dataset {
            inputs: self.inputs.split_off(cut),
            labels: self.labels.split_off(cut),
            classes: self.classes,
        };
        (self, tail)
    }

    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        self.subset(&(0..n).collect::<Vec<_>>())
    }
}

/// Class-stratified calibration indices: the first `per_class` examples of
/// each class in dataset order, interleaved class by class.
pub fn stratified_indices(labels: &[usize], classes: usize, per_class: usize) -> Vec<usize> {
    let mut buckets = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        if buckets[l].len() < per_class {
            buckets[l].push(i);
        }
    }
    let mut out = Vec::with_capacity(per_class * classes);
    for r in 0..per_class {
        for b in &buckets {
            if let Some(&i) = b.get(r) {
                out.push(i);
            }
        }
    }
    out
}

/// A calibration set of exactly `total` examples (when available), taken in
/// the class-interleaved order of [`stratified_indices`].
pub fn calibration_subset(data: &Dataset, total: usize) -> Result<Dataset> {
    if total == 0 {
        return invalid("calibration set must not be empty");
    }
    let per_class = total.div_ceil(data.classes.max(1));
    let mut idx = stratified_indices(&data.labels, data.classes, per_class);
    idx.truncate(total);
    if idx.is_empty() {
        return invalid("dataset has no examples to calibrate on");
    }
    Ok(data.subset(&idx))
}
