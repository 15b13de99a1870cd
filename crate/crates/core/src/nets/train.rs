use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{init_network, Architecture, Batch, LabeledData, NetworkParams};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrDecay {
    /// Multiplier applied every `every` epochs.
    pub factor: f64,
    pub every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    #[serde(default)]
    pub decay: Option<LrDecay>,
    #[serde(default)]
    pub momentum: f64,
    /// `None` trains full-batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn full_batch(lr: f64, epochs: usize, seed: u64) -> Self {
        OptimizerConfig {
            lr,
            decay: None,
            momentum: 0.0,
            batch_size: None,
            epochs,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::config("learning rate must be finite and non-negative"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if let Some(d) = self.decay {
            if d.every == 0 || !(d.factor > 0.0) {
                return Err(Error::config("decay needs every >= 1 and factor > 0"));
            }
        }
        Ok(())
    }

    /// Step size for epoch `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.decay {
            Some(d) => self.lr * d.factor.powi((epoch / d.every) as i32),
            None => self.lr,
        }
    }
}

/// Parameter snapshots recorded at increasing epochs of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub arch: Architecture,
    pub epochs: Vec<usize>,
    pub snapshots: Vec<Vec<f64>>,
    #[serde(default)]
    pub group: Option<usize>,
    pub optimizer: OptimizerConfig,
}

impl Trajectory {
    pub fn snapshot_at(&self, epoch: usize) -> Option<&[f64]> {
        self.epochs
            .iter()
            .position(|&e| e == epoch)
            .map(|i| self.snapshots[i].as_slice())
    }
}

struct Sgd<'a, D: LabeledData + ?Sized> {
    params: NetworkParams,
    velocity: Vec<f64>,
    data: &'a D,
    weights: Option<&'a [f64]>,
    opt: &'a OptimizerConfig,
    rng: rng::Rng,
    order: Vec<usize>,
    xbuf: Vec<f64>,
    ybuf: Vec<usize>,
    wbuf: Vec<f64>,
}

impl<'a, D: LabeledData + ?Sized> Sgd<'a, D> {
    fn new(params: NetworkParams, data: &'a D, weights: Option<&'a [f64]>, opt: &'a OptimizerConfig) -> Self {
        let n = params.theta.len();
        Sgd {
            params,
            velocity: vec![0.0; n],
            data,
            weights,
            opt,
            rng: rng::stream(opt.seed, "sgd-order", 0),
            order: (0..data.len()).collect(),
            xbuf: Vec::new(),
            ybuf: Vec::new(),
            wbuf: Vec::new(),
        }
    }

    fn epoch(&mut self, epoch: usize) -> Result<()> {
        let n = self.data.len();
        let bs = self.opt.batch_size.unwrap_or(n).min(n);
        if bs < n {
            self.order.shuffle(&mut self.rng);
        }
        let lr = self.opt.lr_at(epoch);
        let d = self.data.dim();
        for chunk in 0..n.div_ceil(bs) {
            let idx = &self.order[chunk * bs..((chunk + 1) * bs).min(n)];
            let lg = if bs == n {
                let batch = match self.weights {
                    Some(w) => Batch::weighted(self.data.flat(), self.data.labels(), w),
                    None => Batch::new(self.data.flat(), self.data.labels()),
                };
                self.params.loss_and_grads(&batch, false)?
            } else {
                self.xbuf.clear();
                self.ybuf.clear();
                self.wbuf.clear();
                for &i in idx {
                    self.xbuf.extend_from_slice(self.data.row(i));
                    self.ybuf.push(self.data.label(i));
                    if let Some(w) = self.weights {
                        self.wbuf.push(w[i]);
                    }
                }
                debug_assert_eq!(self.xbuf.len(), idx.len() * d);
                let batch = if self.weights.is_some() {
                    Batch::weighted(&self.xbuf, &self.ybuf, &self.wbuf)
                } else {
                    Batch::new(&self.xbuf, &self.ybuf)
                };
                self.params.loss_and_grads(&batch, false)?
            };
            let mu = self.opt.momentum;
            for ((t, v), g) in self.params.theta.iter_mut().zip(&mut self.velocity).zip(&lg.grad) {
                *v = mu * *v + g;
                *t -= lr * *v;
            }
        }
        Ok(())
    }
}

fn check_data<D: LabeledData + ?Sized>(params: &NetworkParams, data: &D) -> Result<()> {
    if data.is_test_split() {
        return Err(Error::config("refusing to train on a test split"));
    }
    if data.is_empty() {
        return Err(Error::config("cannot train on an empty dataset"));
    }
    if data.dim() != params.arch.input_dim() {
        return Err(Error::Dimension {
            expected: params.arch.input_dim(),
            got: data.dim(),
        });
    }
    Ok(())
}

/// SGD (with optional momentum) on mean cross-entropy; returns the final parameters.
pub fn train_classifier<D: LabeledData + ?Sized>(
    params: &NetworkParams,
    data: &D,
    opt: &OptimizerConfig,
) -> Result<NetworkParams> {
    opt.validate()?;
    check_data(params, data)?;
    let mut sgd = Sgd::new(params.clone(), data, None, opt);
    for e in 0..opt.epochs {
        sgd.epoch(e)?;
    }
    Ok(sgd.params)
}

/// As [`train_classifier`] with per-sample loss weights.
pub fn train_classifier_weighted<D: LabeledData + ?Sized>(
    params: &NetworkParams,
    data: &D,
    weights: &[f64],
    opt: &OptimizerConfig,
) -> Result<NetworkParams> {
    opt.validate()?;
    check_data(params, data)?;
    if weights.len() != data.len() {
        return Err(Error::Dimension {
            expected: data.len(),
            got: weights.len(),
        });
    }
    let mut sgd = Sgd::new(params.clone(), data, Some(weights), opt);
    for e in 0..opt.epochs {
        sgd.epoch(e)?;
    }
    Ok(sgd.params)
}

/// Trains from `init_network(arch, opt.seed)` and snapshots the parameters at each listed
/// epoch (epoch 0 is the initialization).
pub fn record_trajectory<D: LabeledData + ?Sized>(
    data: &D,
    arch: &Architecture,
    opt: &OptimizerConfig,
    snapshot_epochs: &[usize],
    weights: Option<&[f64]>,
) -> Result<Trajectory> {
    opt.validate()?;
    if snapshot_epochs.is_empty() {
        return Err(Error::Trajectory("no snapshot epochs requested".into()));
    }
    if snapshot_epochs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Trajectory("snapshot epochs must be strictly increasing".into()));
    }
    let last = *snapshot_epochs.last().expect("non-empty");
    if last > opt.epochs {
        return Err(Error::Trajectory(format!(
            "snapshot epoch {last} beyond the {} training epochs",
            opt.epochs
        )));
    }
    let init = init_network(arch, opt.seed)?;
    check_data(&init, data)?;
    if let Some(w) = weights {
        if w.len() != data.len() {
            return Err(Error::Dimension {
                expected: data.len(),
                got: w.len(),
            });
        }
    }
    let mut sgd = Sgd::new(init, data, weights, opt);
    let mut snapshots = Vec::with_capacity(snapshot_epochs.len());
    let mut next = snapshot_epochs.iter().peekable();
    for e in 0..=last {
        if next.peek() == Some(&&e) {
            snapshots.push(sgd.params.theta.clone());
            next.next();
        }
        if e < last {
            sgd.epoch(e)?;
        }
    }
    Ok(Trajectory {
        arch: arch.clone(),
        epochs: snapshot_epochs.to_vec(),
        snapshots,
        group: None,
        optimizer: opt.clone(),
    })
}
