use rand::seq::index;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datagen::{GroupedDataset, ImageShape, Split};
use crate::nets::LabeledData;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitPolicy {
    /// Copies of randomly chosen real samples of the class.
    #[default]
    Real,
    /// Standard normal vectors, or uniform [0, 1] pixels for image data.
    Noise,
}

/// `ipc` learnable samples per class, stored class-major; labels are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSet {
    pub num_classes: usize,
    pub dim: usize,
    pub ipc: usize,
    #[serde(default)]
    pub image: Option<ImageShape>,
    pub samples: Vec<f64>,
    labels: Vec<usize>,
    pub init: InitPolicy,
    pub init_seed: u64,
    /// Outer iterations applied so far.
    pub iterations: usize,
}

impl SyntheticSet {
    pub fn new(
        num_classes: usize,
        dim: usize,
        ipc: usize,
        samples: Vec<f64>,
        init: InitPolicy,
        init_seed: u64,
    ) -> Result<Self> {
        if samples.len() != num_classes * ipc * dim {
            return Err(Error::Dimension {
                expected: num_classes * ipc * dim,
                got: samples.len(),
            });
        }
        let labels = (0..num_classes).flat_map(|y| std::iter::repeat_n(y, ipc)).collect();
        Ok(SyntheticSet {
            num_classes,
            dim,
            ipc,
            image: None,
            samples,
            labels,
            init,
            init_seed,
            iterations: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.num_classes * self.ipc
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Flat rows of class `y`.
    pub fn class_samples(&self, y: usize) -> &[f64] {
        let w = self.ipc * self.dim;
        &self.samples[y * w..(y + 1) * w]
    }

    pub fn class_samples_mut(&mut self, y: usize) -> &mut [f64] {
        let w = self.ipc * self.dim;
        &mut self.samples[y * w..(y + 1) * w]
    }

    pub fn class_mean(&self, y: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for row in self.class_samples(y).chunks(self.dim) {
            m.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        }
        m.iter_mut().for_each(|v| *v /= self.ipc as f64);
        m
    }

    /// The set as a one-group training dataset (group attributes unknown).
    pub fn to_dataset(&self) -> GroupedDataset {
        GroupedDataset {
            num_classes: self.num_classes,
            num_groups: 1,
            dim: self.dim,
            split: Split::Train,
            image: self.image,
            samples: self.samples.clone(),
            labels: self.labels.clone(),
            groups: vec![0; self.len()],
            group_known: vec![false; self.len()],
        }
    }

    /// Rebuilds a set from a class-major dataset with equal class counts.
    pub fn from_dataset(ds: &GroupedDataset) -> Result<Self> {
        let c = ds.num_classes;
        if c == 0 || !ds.len().is_multiple_of(c) {
            return Err(Error::config("synthetic dump must hold the same count for every class"));
        }
        let ipc = ds.len() / c;
        let mut set = SyntheticSet::new(c, ds.dim, ipc, ds.samples.clone(), InitPolicy::Real, 0)?;
        if set.labels != ds.labels {
            return Err(Error::config("synthetic dump is not stored class-major"));
        }
        set.image = ds.image;
        Ok(set)
    }
}

impl LabeledData for SyntheticSet {
    fn dim(&self) -> usize {
        self.dim
    }
    fn len(&self) -> usize {
        SyntheticSet::len(self)
    }
    fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }
    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }
    fn flat(&self) -> &[f64] {
        &self.samples
    }
    fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// `ipc` samples per class, initialized from real samples or noise.
pub fn init_synthetic(ds: &GroupedDataset, ipc: usize, policy: InitPolicy, seed: u64) -> Result<SyntheticSet> {
    if ipc == 0 {
        return Err(Error::config("ipc must be at least 1"));
    }
    let mut samples = Vec::with_capacity(ds.num_classes * ipc * ds.dim);
    for y in 0..ds.num_classes {
        match policy {
            InitPolicy::Real => {
                let rows = ds.class_indices(y);
                if rows.len() < ipc {
                    return Err(Error::config(format!(
                        "class {y} has {} samples, fewer than ipc={ipc}",
                        rows.len()
                    )));
                }
                let mut r = rng::stream(seed, "init-real", y as u64);
                for k in index::sample(&mut r, rows.len(), ipc) {
                    samples.extend_from_slice(ds.sample(rows[k]));
                }
            }
            InitPolicy::Noise => {
                let mut r = rng::stream(seed, "init-noise", y as u64);
                for _ in 0..ipc * ds.dim {
                    samples.push(if ds.image.is_some() {
                        r.random_range(0.0..1.0)
                    } else {
                        r.sample(StandardNormal)
                    });
                }
            }
        }
    }
    let mut set = SyntheticSet::new(ds.num_classes, ds.dim, ipc, samples, policy, seed)?;
    set.image = ds.image;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_gaussian_groups, BiasConfig};

    fn data() -> GroupedDataset {
        gen_gaussian_groups(&BiasConfig {
            num_classes: 3,
            num_groups: 2,
            dim: 6,
            skew: 0.8,
            separation: 1.0,
            n_per_class: 20,
            seed: 2,
            noise_std: 0.5,
        })
        .unwrap()
    }

    #[test]
    fn real_init_copies_class_samples() {
        let ds = data();
        let s = init_synthetic(&ds, 4, InitPolicy::Real, 9).unwrap();
        assert_eq!(s.len(), 12);
        for i in 0..s.len() {
            let y = s.label(i);
            assert!(ds.class_indices(y).iter().any(|&j| ds.sample(j) == s.row(i)));
        }
    }

    #[test]
    fn sizes_and_determinism() {
        let ds = data();
        assert_eq!(init_synthetic(&ds, 1, InitPolicy::Noise, 0).unwrap().len(), 3);
        for p in [InitPolicy::Real, InitPolicy::Noise] {
            assert_eq!(
                init_synthetic(&ds, 3, p, 5).unwrap(),
                init_synthetic(&ds, 3, p, 5).unwrap()
            );
        }
    }

    #[test]
    fn too_small_class_is_rejected() {
        assert!(init_synthetic(&data(), 21, InitPolicy::Real, 0).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let s = init_synthetic(&data(), 2, InitPolicy::Noise, 1).unwrap();
        let back = SyntheticSet::from_dataset(&s.to_dataset()).unwrap();
        assert_eq!(back.samples, s.samples);
        assert_eq!(back.labels(), s.labels());
    }
}
