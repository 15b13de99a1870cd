use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Channel-major (`C x H x W`) layout of a flattened tiny image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, c: usize, row: usize, col: usize) -> usize {
        (c * self.height + row) * self.width + col
    }
}

/// Labeled, group-annotated samples stored as a row-major `n x dim` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedDataset {
    pub num_classes: usize,
    pub num_groups: usize,
    pub dim: usize,
    pub split: Split,
    pub image: Option<ImageShape>,
    pub samples: Vec<f64>,
    pub labels: Vec<usize>,
    pub groups: Vec<usize>,
    pub group_known: Vec<bool>,
}

impl GroupedDataset {
    pub fn empty(num_classes: usize, num_groups: usize, dim: usize, split: Split) -> Self {
        GroupedDataset {
            num_classes,
            num_groups,
            dim,
            split,
            image: None,
            samples: Vec::new(),
            labels: Vec::new(),
            groups: Vec::new(),
            group_known: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, x: &[f64], label: usize, group: usize) {
        debug_assert_eq!(x.len(), self.dim);
        self.samples.extend_from_slice(x);
        self.labels.push(label);
        self.groups.push(group);
        self.group_known.push(true);
    }

    /// Checks the structural invariants: parallel arrays, label/group ranges, and group
    /// balance for test splits.
    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.samples.len() != n * self.dim {
            return Err(Error::Dimension {
                expected: n * self.dim,
                got: self.samples.len(),
            });
        }
        if self.groups.len() != n || self.group_known.len() != n {
            return Err(Error::config("labels, groups and group_known lengths differ"));
        }
        if let Some(shape) = self.image {
            if shape.len() != self.dim {
                return Err(Error::Dimension {
                    expected: self.dim,
                    got: shape.len(),
                });
            }
        }
        for &y in &self.labels {
            if y >= self.num_classes {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    classes: self.num_classes,
                });
            }
        }
        if let Some(&a) = self.groups.iter().find(|&&a| a >= self.num_groups) {
            return Err(Error::config(format!(
                "group {a} out of range for {} groups",
                self.num_groups
            )));
        }
        if self.split == Split::Test && !self.is_group_balanced() {
            return Err(Error::config("test split is not group-balanced"));
        }
        Ok(())
    }

    /// `counts[y][a]` = number of samples with label `y` and group `a`.
    pub fn cell_counts(&self) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0; self.num_groups]; self.num_classes];
        for (&y, &a) in self.labels.iter().zip(&self.groups) {
            counts[y][a] += 1;
        }
        counts
    }

    /// True when, in every class, all groups present in that class have equal counts.
    pub fn is_group_balanced(&self) -> bool {
        self.cell_counts().iter().all(|row| {
            let mut present = row.iter().filter(|&&c| c > 0);
            match present.next() {
                Some(first) => present.all(|c| c == first),
                None => true,
            }
        })
    }

    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    pub fn cell_indices(&self, class: usize, group: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i] == class && self.groups[i] == group)
            .collect()
    }

    /// Subset keeping only the listed rows, in order.
    pub fn select(&self, indices: &[usize]) -> GroupedDataset {
        let mut out = GroupedDataset {
            samples: Vec::with_capacity(indices.len() * self.dim),
            labels: Vec::with_capacity(indices.len()),
            groups: Vec::with_capacity(indices.len()),
            group_known: Vec::with_capacity(indices.len()),
            ..GroupedDataset::empty(self.num_classes, self.num_groups, self.dim, self.split)
        };
        out.image = self.image;
        for &i in indices {
            out.samples.extend_from_slice(self.sample(i));
            out.labels.push(self.labels[i]);
            out.groups.push(self.groups[i]);
            out.group_known.push(self.group_known[i]);
        }
        out
    }

    /// Mean of the samples at `indices`.
    pub fn mean_of(&self, indices: &[usize]) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for &i in indices {
            for (acc, v) in m.iter_mut().zip(self.sample(i)) {
                *acc += v;
            }
        }
        let n = indices.len().max(1) as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balance_ignores_absent_groups() {
        let mut ds = GroupedDataset::empty(2, 3, 1, Split::Test);
        for a in 0..2 {
            ds.push(&[0.0], 0, a);
        }
        ds.push(&[0.0], 1, 2);
        assert!(ds.is_group_balanced());
        ds.push(&[0.0], 0, 0);
        assert!(!ds.is_group_balanced());
        assert!(ds.validate().is_err());
    }

    #[test]
    fn validate_catches_bad_labels() {
        let mut ds = GroupedDataset::empty(2, 2, 1, Split::Train);
        ds.push(&[1.0], 2, 0);
        assert!(matches!(ds.validate(), Err(Error::LabelOutOfRange { .. })));
    }
}
