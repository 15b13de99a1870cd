//! Synthetic-set optimization by distribution matching (DM), gradient matching (DC) and
//! trajectory matching (MTT), each against any [`TargetMode`].

mod dc;
mod dm;
mod io;
mod mtt;
mod synthetic;

pub use dc::{dc_class_gradient, distill_dc};
pub use dm::{distill_dm, dm_class_gradient};
pub use io::{load_sidecar, save_distilled, Sidecar};
pub use mtt::{barycentric_checkpoint, build_experts, distill_mtt, mtt_matching_loss, ExpertBuffer};
pub use synthetic::{init_synthetic, InitPolicy, SyntheticSet};

use serde::{Deserialize, Serialize};

use crate::datagen::GroupedDataset;
use crate::nets::Architecture;
use crate::targets::{
    class_aggregate, class_barycenter, class_statistics, fairdd_target_loss, BarycenterDiscrepancy, BatchPolicy,
    ClassStatistics, MatchDistance, PassCounter, StatisticMap, TargetMode,
};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Dm,
    Dc,
    Mtt,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::Dm, Objective::Dc, Objective::Mtt];

    pub fn as_str(&self) -> &'static str {
        match self {
            Objective::Dm => "dm",
            Objective::Dc => "dc",
            Objective::Mtt => "mtt",
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown objective `{s}`")))
    }
}

/// Feature map used by DM.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMap {
    /// Embedding of a freshly sampled random network.
    #[default]
    Network,
    /// Raw inputs.
    Identity,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmSettings {
    /// A new random network is drawn every `reinit_period` iterations.
    #[serde(default = "one")]
    pub reinit_period: usize,
    #[serde(default)]
    pub feature: FeatureMap,
}

impl Default for DmSettings {
    fn default() -> Self {
        DmSettings {
            reinit_period: 1,
            feature: FeatureMap::Network,
        }
    }
}

fn default_surrogate_lr() -> f64 {
    0.01
}
fn default_dc_reinit() -> Option<usize> {
    Some(10)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcSettings {
    /// Synthetic matching steps per outer iteration.
    #[serde(default = "one")]
    pub match_steps: usize,
    /// Full-batch surrogate training steps on the synthetic set after matching.
    #[serde(default = "one")]
    pub surrogate_steps: usize,
    #[serde(default = "default_surrogate_lr")]
    pub surrogate_lr: f64,
    /// Surrogate re-initialization period in outer iterations; `None` keeps one network.
    #[serde(default = "default_dc_reinit")]
    pub reinit_period: Option<usize>,
}

impl Default for DcSettings {
    fn default() -> Self {
        DcSettings {
            match_steps: 1,
            surrogate_steps: 1,
            surrogate_lr: default_surrogate_lr(),
            reinit_period: default_dc_reinit(),
        }
    }
}

fn default_expert_epochs() -> usize {
    20
}
fn default_max_start() -> usize {
    10
}
fn default_k() -> usize {
    5
}
fn default_student_lr() -> f64 {
    0.1
}
fn default_fd_eps() -> f64 {
    1e-3
}
fn default_expert_lr() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MttSettings {
    /// Full-batch epochs of each expert run; every epoch is snapshotted.
    #[serde(default = "default_expert_epochs")]
    pub expert_epochs: usize,
    #[serde(default = "default_expert_lr")]
    pub expert_lr: f64,
    /// Start epochs are drawn uniformly from `0..=max_start_epoch`.
    #[serde(default = "default_max_start")]
    pub max_start_epoch: usize,
    /// Student steps on the synthetic set; matched against the expert `k` epochs later.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_student_lr")]
    pub student_lr: f64,
    /// Forward-difference step for the synthetic-coordinate gradient.
    #[serde(default = "default_fd_eps")]
    pub fd_eps: f64,
}

impl Default for MttSettings {
    fn default() -> Self {
        MttSettings {
            expert_epochs: default_expert_epochs(),
            expert_lr: default_expert_lr(),
            max_start_epoch: default_max_start(),
            k: default_k(),
            student_lr: default_student_lr(),
            fd_eps: default_fd_eps(),
        }
    }
}

fn default_ipc() -> usize {
    10
}
fn default_iterations() -> usize {
    200
}
fn default_lr() -> f64 {
    1.0
}
fn default_hidden() -> Vec<usize> {
    vec![32]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    pub objective: Objective,
    #[serde(default = "default_mode")]
    pub mode: TargetMode,
    /// Barycenter discrepancy used by the cobra mode.
    #[serde(default)]
    pub discrepancy: BarycenterDiscrepancy,
    #[serde(default)]
    pub distance: MatchDistance,
    #[serde(default = "default_ipc")]
    pub ipc: usize,
    #[serde(default)]
    pub init: InitPolicy,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Step size of the plain gradient descent on synthetic samples.
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Hidden widths of the feature / surrogate / student networks.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Rows per real-side reduction; all rows when absent.
    #[serde(default)]
    pub real_batch: Option<usize>,
    #[serde(default)]
    pub dm: DmSettings,
    #[serde(default)]
    pub dc: DcSettings,
    #[serde(default)]
    pub mtt: MttSettings,
    #[serde(default)]
    pub seed: u64,
}

fn default_mode() -> TargetMode {
    TargetMode::Vanilla
}

impl DistillConfig {
    pub fn new(objective: Objective, mode: TargetMode) -> Self {
        DistillConfig {
            objective,
            mode,
            discrepancy: BarycenterDiscrepancy::default(),
            distance: MatchDistance::Mse,
            ipc: default_ipc(),
            init: InitPolicy::Real,
            iterations: default_iterations(),
            lr: default_lr(),
            hidden: default_hidden(),
            real_batch: None,
            dm: DmSettings::default(),
            dc: DcSettings::default(),
            mtt: MttSettings::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ipc == 0 {
            return Err(Error::config("ipc must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config("synthetic step size must be positive"));
        }
        if self.real_batch == Some(0) {
            return Err(Error::config("real_batch must be at least 1"));
        }
        if self.dm.reinit_period == 0 {
            return Err(Error::config("dm.reinit_period must be at least 1"));
        }
        if self.dc.match_steps == 0 || self.dc.reinit_period == Some(0) {
            return Err(Error::config("dc needs match_steps >= 1 and reinit_period >= 1"));
        }
        let m = &self.mtt;
        if m.k == 0 {
            return Err(Error::config("mtt.k must be at least 1"));
        }
        if m.max_start_epoch + m.k > m.expert_epochs {
            return Err(Error::Trajectory(format!(
                "start epoch up to {} plus k={} exceeds the {} expert epochs",
                m.max_start_epoch, m.k, m.expert_epochs
            )));
        }
        if !(m.fd_eps > 0.0) || !(m.student_lr >= 0.0) {
            return Err(Error::config("mtt needs fd_eps > 0 and student_lr >= 0"));
        }
        if self.mode == TargetMode::Cobra {
            self.discrepancy.validate()?;
        }
        Ok(())
    }

    pub(crate) fn arch(&self, dim: usize, classes: usize) -> Result<Architecture> {
        Architecture::mlp(dim, &self.hidden, classes)
    }

    pub(crate) fn batch_policy(&self, iteration: usize) -> BatchPolicy {
        match self.real_batch {
            None => BatchPolicy::Full,
            Some(size) => BatchPolicy::Sample {
                size,
                seed: rng::derive(self.seed, "real-batch", iteration as u64),
            },
        }
    }
}

/// Result of a distillation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillOutcome {
    pub set: SyntheticSet,
    /// Objective value recorded at every outer iteration.
    pub log: Vec<f64>,
    pub passes: PassCounter,
    pub notes: Vec<String>,
}

/// Initializes a synthetic set and runs the configured objective on `ds`.
pub fn distill(ds: &GroupedDataset, cfg: &DistillConfig) -> Result<DistillOutcome> {
    cfg.validate()?;
    let set = init_synthetic(ds, cfg.ipc, cfg.init, cfg.seed)?;
    match cfg.objective {
        Objective::Dm => distill_dm(ds, set, cfg),
        Objective::Dc => distill_dc(ds, set, cfg),
        Objective::Mtt => {
            let experts = build_experts(ds, cfg)?;
            distill_mtt(&experts, set, cfg)
        }
    }
}

/// Real-side matching target of one class.
pub(crate) enum RealTarget {
    Point(Vec<f64>),
    /// Group-averaged loss over the class's subgroup statistics.
    Groups(ClassStatistics),
}

impl RealTarget {
    /// Matching loss against the synthetic statistic and its gradient in `phi_s`.
    pub(crate) fn loss(&self, phi_s: &[f64], distance: MatchDistance) -> Result<(f64, Vec<f64>)> {
        match self {
            RealTarget::Point(m) => distance.eval(m, phi_s),
            RealTarget::Groups(c) => fairdd_target_loss(c, phi_s, distance),
        }
    }
}

/// Builds the real-side target of class `y` under `cfg.mode`. `weights` are the
/// group-balanced sample weights used by the reweight mode.
pub(crate) fn real_target(
    map: &dyn StatisticMap,
    ds: &GroupedDataset,
    class: usize,
    weights: &[f64],
    cfg: &DistillConfig,
    policy: BatchPolicy,
    counter: &mut PassCounter,
) -> Result<RealTarget> {
    Ok(match cfg.mode {
        TargetMode::Vanilla => RealTarget::Point(class_aggregate(map, ds, class, None, policy, counter)?),
        TargetMode::Reweight => RealTarget::Point(class_aggregate(map, ds, class, Some(weights), policy, counter)?),
        TargetMode::Cobra => {
            let stats = class_statistics(map, ds, class, policy, counter)?;
            RealTarget::Point(class_barycenter(&stats, &cfg.discrepancy)?)
        }
        TargetMode::FairDd => RealTarget::Groups(class_statistics(map, ds, class, policy, counter)?),
    })
}

pub(crate) fn check_finite(iteration: usize, what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            iteration,
            detail: what.to_string(),
        })
    }
}

pub(crate) fn check_compatible(ds: &GroupedDataset, set: &SyntheticSet) -> Result<()> {
    if ds.dim != set.dim {
        return Err(Error::Dimension {
            expected: ds.dim,
            got: set.dim,
        });
    }
    if ds.num_classes != set.num_classes {
        return Err(Error::config(format!(
            "synthetic set has {} classes, data has {}",
            set.num_classes, ds.num_classes
        )));
    }
    if ds.split == crate::datagen::Split::Test {
        return Err(Error::config("refusing to distill from a test split"));
    }
    Ok(())
}

pub(crate) fn mode_notes(cfg: &DistillConfig) -> Vec<String> {
    let mut notes = vec![format!("objective={} mode={}", cfg.objective, cfg.mode.label())];
    if cfg.mode == TargetMode::FairDd {
        notes.push(
            "FairDD-analog: loss-averaged form, (1/G) sum_a D(phi_a, phi_S) for DM/DC and the mean of per-group normalized trajectory losses for MTT"
                .into(),
        );
    }
    if cfg.objective == Objective::Mtt {
        notes.push(format!(
            "synthetic gradients by forward differences, eps={}",
            cfg.mtt.fd_eps
        ));
    }
    notes
}
