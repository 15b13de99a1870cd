//! Small ReLU MLPs with exact reverse-mode gradients.
//!
//! Parameters are stored flat, layer by layer: for each linear layer the weight matrix
//! (`out x in`, row-major) followed by the bias vector.

mod io;
mod mlp;
mod train;

pub use io::{load_params, save_params};
pub use mlp::{Batch, ForwardCache, LossGrads};
pub use train::{record_trajectory, train_classifier, train_classifier_weighted, LrDecay, OptimizerConfig, Trajectory};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::GroupedDataset;
use crate::{rng, Error, Result};

/// Layer widths `[d, h1, ..., C]` of a ReLU MLP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub widths: Vec<usize>,
    /// Index of the activation used as the embedding (1 = first hidden layer). Defaults to
    /// the last hidden layer.
    #[serde(default)]
    pub embedding_layer: Option<usize>,
}

impl Architecture {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        let arch = Architecture {
            widths,
            embedding_layer: None,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Input dim, hidden widths, class count.
    pub fn mlp(dim: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(dim);
        widths.extend_from_slice(hidden);
        widths.push(classes);
        Architecture::new(widths)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 3 {
            return Err(Error::config("an architecture needs at least one hidden layer"));
        }
        if self.widths.contains(&0) {
            return Err(Error::config("layer widths must be positive"));
        }
        let e = self.embedding_index();
        if e == 0 || e >= self.num_layers() {
            return Err(Error::config(format!(
                "embedding layer {e} must be a hidden layer (1..={})",
                self.num_layers() - 1
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    /// Number of linear layers.
    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn embedding_index(&self) -> usize {
        self.embedding_layer.unwrap_or(self.widths.len() - 2)
    }

    pub fn embedding_dim(&self) -> usize {
        self.widths[self.embedding_index()]
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Offset of layer `l`'s weight block; its bias follows at `offset + out * in`.
    pub fn layer_offset(&self, layer: usize) -> usize {
        self.widths[..=layer].windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub arch: Architecture,
    pub theta: Vec<f64>,
}

impl NetworkParams {
    pub fn from_flat(arch: Architecture, theta: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if theta.len() != arch.param_count() {
            return Err(Error::Dimension {
                expected: arch.param_count(),
                got: theta.len(),
            });
        }
        Ok(NetworkParams { arch, theta })
    }

    pub fn zeros(arch: Architecture) -> Self {
        let n = arch.param_count();
        NetworkParams {
            arch,
            theta: vec![0.0; n],
        }
    }

    /// Weight matrix (row-major `out x in`) and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (fan_in, fan_out) = (self.arch.widths[l], self.arch.widths[l + 1]);
        let off = self.arch.layer_offset(l);
        let w = &self.theta[off..off + fan_in * fan_out];
        let b = &self.theta[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
        (w, b)
    }

    /// Per-layer `(weights, bias)` copies; `from_layers` inverts this.
    pub fn unflatten(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        (0..self.arch.num_layers())
            .map(|l| {
                let (w, b) = self.layer(l);
                (w.to_vec(), b.to_vec())
            })
            .collect()
    }

    pub fn from_layers(arch: Architecture, layers: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let theta: Vec<f64> = layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect();
        NetworkParams::from_flat(arch, theta)
    }
}

/// Deterministic scaled-uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for
/// weights and biases alike.
pub fn init_network(arch: &Architecture, seed: u64) -> Result<NetworkParams> {
    arch.validate()?;
    let mut r = rng::stream(seed, "init-network", 0);
    let mut theta = Vec::with_capacity(arch.param_count());
    for w in arch.widths.windows(2) {
        let bound = 1.0 / (w[0] as f64).sqrt();
        for _ in 0..(w[0] * w[1] + w[1]) {
            theta.push(r.random_range(-bound..bound));
        }
    }
    Ok(NetworkParams {
        arch: arch.clone(),
        theta,
    })
}

/// Anything with labeled fixed-length rows.
pub trait LabeledData {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn row(&self, i: usize) -> &[f64];
    fn label(&self, i: usize) -> usize;
    fn flat(&self) -> &[f64];
    fn labels(&self) -> &[usize];
    fn is_test_split(&self) -> bool {
        false
    }
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl LabeledData for GroupedDataset {
    fn dim(&self) -> usize {
        self.dim
    }
    fn len(&self) -> usize {
        GroupedDataset::len(self)
    }
    fn row(&self, i: usize) -> &[f64] {
        self.sample(i)
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
    fn is_test_split(&self) -> bool {
        self.split == crate::datagen::Split::Test
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_for_small_net() {
        let arch = Architecture::new(vec![4, 8, 2]).unwrap();
        assert_eq!(arch.param_count(), 4 * 8 + 8 + 8 * 2 + 2);
        assert_eq!(arch.param_count(), 58);
        assert_eq!(arch.layer_offset(1), 40);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let arch = Architecture::new(vec![4, 8, 2]).unwrap();
        let a = init_network(&arch, 3).unwrap();
        let b = init_network(&arch, 3).unwrap();
        let c = init_network(&arch, 4).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_ne!(a.theta, c.theta);
        assert_eq!(a.theta.len(), 58);
    }

    #[test]
    fn flatten_unflatten_round_trip() {
        let arch = Architecture::new(vec![3, 5, 4, 2]).unwrap();
        let p = init_network(&arch, 1).unwrap();
        let q = NetworkParams::from_layers(arch, &p.unflatten()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn invalid_architectures_are_rejected() {
        assert!(Architecture::new(vec![4, 2]).is_err());
        assert!(Architecture::new(vec![4, 0, 2]).is_err());
        let bad = Architecture {
            widths: vec![4, 8, 2],
            embedding_layer: Some(2),
        };
        assert!(bad.validate().is_err());
        let wrong_len = NetworkParams::from_flat(Architecture::new(vec![4, 8, 2]).unwrap(), vec![0.0; 3]);
        assert!(matches!(wrong_len, Err(Error::Dimension { .. })));
    }
}
