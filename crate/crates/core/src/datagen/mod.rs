//! Synthetic group-biased datasets.
//!
//! Class `y` has majority group `y % G`; the remaining samples of the class are split as
//! evenly as possible over the other groups. Group offsets live in the coordinates
//! `C..C+G`, orthogonal to the class anchors which occupy coordinates `0..C`.

mod colored;
mod corruption;
mod dataset;
mod gaussian;
mod io;
mod labels;
mod offset;

pub use colored::{gen_colored_patterns, palette, shape_mask, TintMode, PALETTE_SIZE};
pub use corruption::{apply_corruption, CorruptionParams};
pub use dataset::{GroupedDataset, ImageShape, Split};
pub use gaussian::{class_anchor, gen_gaussian_groups, group_offset, make_balanced_test};
pub use io::{load_dataset, save_dataset};
pub use labels::{
    corrupt_group_labels, impute_groups_kmeans, impute_groups_kmeans_with, mask_group_labels, KMeansSettings,
};
pub use offset::apply_semantic_offset;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which sampler produces the raw samples of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Gaussian,
    Colored { mode: TintMode, pixel_noise: f64 },
}

impl Generator {
    /// Training split for this generator.
    pub fn generate(&self, config: &BiasConfig) -> Result<GroupedDataset> {
        match self {
            Generator::Gaussian => gen_gaussian_groups(config),
            Generator::Colored { mode, pixel_noise } => gen_colored_patterns(config, *mode, *pixel_noise),
        }
    }

    pub fn is_image(&self) -> bool {
        matches!(self, Generator::Colored { .. })
    }
}

fn default_noise_std() -> f64 {
    0.5
}

/// Knobs controlling how biased a generated dataset is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasConfig {
    pub num_classes: usize,
    pub num_groups: usize,
    pub dim: usize,
    /// Fraction of each class drawn from its majority group.
    pub skew: f64,
    /// Scale of the per-group mean offsets within a class.
    pub separation: f64,
    pub n_per_class: usize,
    #[serde(default)]
    pub seed: u64,
    /// Isotropic noise standard deviation. Class anchors sit `6 * noise_std` apart.
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
}

impl BiasConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.num_groups == 0 {
            return Err(Error::config("num_classes and num_groups must be positive"));
        }
        // A single group has no minority; skew is meaningless there.
        if self.num_groups > 1 {
            let floor = 1.0 / self.num_groups as f64;
            if !(self.skew >= floor - 1e-12 && self.skew < 1.0) {
                return Err(Error::config(format!(
                    "skew {} outside [1/G, 1) = [{floor}, 1)",
                    self.skew
                )));
            }
        }
        if !(self.separation >= 0.0) {
            return Err(Error::config("separation must be non-negative"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::config("noise_std must be non-negative"));
        }
        if self.n_per_class < self.num_groups {
            return Err(Error::config(format!(
                "n_per_class {} smaller than num_groups {}",
                self.n_per_class, self.num_groups
            )));
        }
        Ok(())
    }

    /// The group holding the majority of class `class`.
    pub fn majority_group(&self, class: usize) -> usize {
        class % self.num_groups
    }

    /// Per-group sample counts for one class under the skew rule.
    pub fn group_counts(&self, class: usize) -> Vec<usize> {
        let g = self.num_groups;
        let n = self.n_per_class;
        if g == 1 {
            return vec![n];
        }
        let major = self.majority_group(class);
        let n_major = ((self.skew * n as f64).round() as usize).min(n);
        let rest = n - n_major;
        let base = rest / (g - 1);
        let mut extra = rest % (g - 1);
        let mut counts = vec![0; g];
        for (a, c) in counts.iter_mut().enumerate() {
            if a == major {
                *c = n_major;
            } else {
                *c = base;
                if extra > 0 {
                    *c += 1;
                    extra -= 1;
                }
            }
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(g: usize, skew: f64, n: usize) -> BiasConfig {
        BiasConfig {
            num_classes: 2,
            num_groups: g,
            dim: 8,
            skew,
            separation: 0.0,
            n_per_class: n,
            seed: 0,
            noise_std: 0.5,
        }
    }

    #[test]
    fn skew_counts_follow_rounding_rule() {
        assert_eq!(cfg(2, 0.9, 100).group_counts(0), vec![90, 10]);
        assert_eq!(cfg(2, 0.9, 100).group_counts(1), vec![10, 90]);
        assert_eq!(cfg(3, 0.5, 11).group_counts(0), vec![6, 3, 2]);
        assert_eq!(cfg(3, 0.5, 11).group_counts(0).iter().sum::<usize>(), 11);
    }

    #[test]
    fn skew_below_uniform_is_rejected() {
        assert!(cfg(2, 0.4, 100).validate().is_err());
        assert!(cfg(2, 1.0, 100).validate().is_err());
        assert!(cfg(2, 0.5, 100).validate().is_ok());
        assert!(cfg(4, 0.25, 100).validate().is_ok());
    }

    #[test]
    fn too_few_samples_per_class_is_rejected() {
        assert!(cfg(3, 0.5, 2).validate().is_err());
    }
}
