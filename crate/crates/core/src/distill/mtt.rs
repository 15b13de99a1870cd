use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_finite, mode_notes, DistillConfig, DistillOutcome, Objective, SyntheticSet};
use crate::datagen::GroupedDataset;
use crate::nets::{record_trajectory, Architecture, Batch, NetworkParams, OptimizerConfig, Trajectory};
use crate::targets::{group_balanced_weights, TargetMode};
use crate::{rng, Error, Result};

/// Expert trajectories for one target mode: a single all-data run (vanilla), a single
/// group-balanced weighted run (reweight), or one run per group (cobra, fairdd). All runs
/// share one initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertBuffer {
    pub mode: TargetMode,
    pub trajectories: Vec<Trajectory>,
}

impl ExpertBuffer {
    fn validate(&self) -> Result<()> {
        let first = self
            .trajectories
            .first()
            .ok_or_else(|| Error::Trajectory("expert buffer is empty".into()))?;
        for t in &self.trajectories[1..] {
            if t.epochs != first.epochs {
                return Err(Error::Trajectory("expert snapshot epochs differ across groups".into()));
            }
            if t.arch != first.arch {
                return Err(Error::Trajectory("expert architectures differ across groups".into()));
            }
        }
        Ok(())
    }

    pub fn arch(&self) -> &Architecture {
        &self.trajectories[0].arch
    }
}

/// `theta_bar_t = (1/G) sum_g theta_{g,t}`, evaluated as `theta_0 + mean(theta_g - theta_0)`
/// so that identical trajectories average to themselves exactly.
pub fn barycentric_checkpoint(trajectories: &[Trajectory], epoch: usize) -> Result<Vec<f64>> {
    let snaps = trajectories
        .iter()
        .map(|t| {
            t.snapshot_at(epoch)
                .ok_or_else(|| Error::Trajectory(format!("no snapshot at epoch {epoch}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let base = *snaps
        .first()
        .ok_or_else(|| Error::Trajectory("no trajectories".into()))?;
    if let Some(s) = snaps.iter().find(|s| s.len() != base.len()) {
        return Err(Error::Dimension {
            expected: base.len(),
            got: s.len(),
        });
    }
    let g = snaps.len() as f64;
    Ok((0..base.len())
        .map(|i| base[i] + snaps.iter().map(|s| s[i] - base[i]).sum::<f64>() / g)
        .collect())
}

/// Records the expert runs required by `cfg.mode`.
pub fn build_experts(ds: &GroupedDataset, cfg: &DistillConfig) -> Result<ExpertBuffer> {
    let arch = cfg.arch(ds.dim, ds.num_classes)?;
    let m = &cfg.mtt;
    let opt = OptimizerConfig::full_batch(m.expert_lr, m.expert_epochs, rng::derive(cfg.seed, "mtt-expert", 0));
    let epochs: Vec<usize> = (0..=m.expert_epochs).collect();
    let trajectories = match cfg.mode {
        TargetMode::Vanilla => vec![record_trajectory(ds, &arch, &opt, &epochs, None)?],
        TargetMode::Reweight => {
            let w = group_balanced_weights(ds);
            vec![record_trajectory(ds, &arch, &opt, &epochs, Some(&w))?]
        }
        TargetMode::Cobra | TargetMode::FairDd => {
            let mut out = Vec::new();
            for g in 0..ds.num_groups {
                let rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.groups[i] == g).collect();
                if rows.is_empty() {
                    continue;
                }
                let mut t = record_trajectory(&ds.select(&rows), &arch, &opt, &epochs, None)?;
                t.group = Some(g);
                out.push(t);
            }
            out
        }
    };
    Ok(ExpertBuffer {
        mode: cfg.mode,
        trajectories,
    })
}

/// `k` full-batch student steps from `start`, scored against `end`.
fn segment_loss(
    arch: &Architecture,
    samples: &[f64],
    labels: &[usize],
    start: &[f64],
    end: &[f64],
    k: usize,
    lr: f64,
) -> Result<f64> {
    let denom: f64 = start.iter().zip(end).map(|(a, b)| (a - b).powi(2)).sum();
    if denom == 0.0 {
        return Err(Error::Trajectory("expert segment has zero length".into()));
    }
    let mut student = NetworkParams::from_flat(arch.clone(), start.to_vec())?;
    for _ in 0..k {
        let lg = student.loss_and_grads(&Batch::new(samples, labels), false)?;
        student.theta.iter_mut().zip(&lg.grad).for_each(|(t, g)| *t -= lr * g);
    }
    let num: f64 = student.theta.iter().zip(end).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(num / denom)
}

struct Segments {
    /// (start, end) parameter pairs; the loss is their mean.
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

fn segments(experts: &ExpertBuffer, start_epoch: usize, k: usize) -> Result<Segments> {
    let end_epoch = start_epoch + k;
    let pairs = if experts.mode == TargetMode::FairDd {
        experts
            .trajectories
            .iter()
            .map(|t| {
                let s = barycentric_checkpoint(std::slice::from_ref(t), start_epoch)?;
                let e = barycentric_checkpoint(std::slice::from_ref(t), end_epoch)?;
                Ok((s, e))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![(
            barycentric_checkpoint(&experts.trajectories, start_epoch)?,
            barycentric_checkpoint(&experts.trajectories, end_epoch)?,
        )]
    };
    Ok(Segments { pairs })
}

fn segments_loss(
    arch: &Architecture,
    seg: &Segments,
    samples: &[f64],
    labels: &[usize],
    cfg: &DistillConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for (s, e) in &seg.pairs {
        total += segment_loss(arch, samples, labels, s, e, cfg.mtt.k, cfg.mtt.student_lr)?;
    }
    Ok(total / seg.pairs.len() as f64)
}

/// Normalized trajectory-matching loss of `set` for the segment starting at `start_epoch`.
pub fn mtt_matching_loss(
    experts: &ExpertBuffer,
    set: &SyntheticSet,
    cfg: &DistillConfig,
    start_epoch: usize,
) -> Result<f64> {
    experts.validate()?;
    let seg = segments(experts, start_epoch, cfg.mtt.k)?;
    segments_loss(experts.arch(), &seg, &set.samples, set.labels(), cfg)
}

/// Trajectory matching with forward-difference gradients over every synthetic coordinate.
pub fn distill_mtt(experts: &ExpertBuffer, mut set: SyntheticSet, cfg: &DistillConfig) -> Result<DistillOutcome> {
    cfg.validate()?;
    if cfg.objective != Objective::Mtt {
        return Err(Error::config("distill_mtt needs objective mtt"));
    }
    experts.validate()?;
    if experts.mode != cfg.mode {
        return Err(Error::config(format!(
            "experts were built for mode {}, config asks for {}",
            experts.mode, cfg.mode
        )));
    }
    let arch = experts.arch().clone();
    if arch.input_dim() != set.dim || arch.num_classes() != set.num_classes {
        return Err(Error::Dimension {
            expected: arch.input_dim(),
            got: set.dim,
        });
    }
    let last = *experts.trajectories[0].epochs.last().expect("validated");
    if cfg.mtt.max_start_epoch + cfg.mtt.k > last {
        return Err(Error::Trajectory(format!(
            "start epoch up to {} plus k={} exceeds the last expert snapshot {last}",
            cfg.mtt.max_start_epoch, cfg.mtt.k
        )));
    }
    let labels = set.labels().to_vec();
    let eps = cfg.mtt.fd_eps;
    let mut log = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let t = rng::stream(cfg.seed, "mtt-start", it as u64).random_range(0..=cfg.mtt.max_start_epoch);
        let seg = segments(experts, t, cfg.mtt.k)?;
        let base = segments_loss(&arch, &seg, &set.samples, &labels, cfg)?;
        check_finite(it, "mtt matching loss", &[base])?;
        let grad = (0..set.samples.len())
            .into_par_iter()
            .map(|j| {
                let mut s = set.samples.clone();
                s[j] += eps;
                Ok((segments_loss(&arch, &seg, &s, &labels, cfg)? - base) / eps)
            })
            .collect::<Result<Vec<f64>>>()?;
        check_finite(it, "mtt synthetic gradient", &grad)?;
        set.samples.iter_mut().zip(&grad).for_each(|(x, g)| *x -= cfg.lr * g);
        log.push(base);
        set.iterations += 1;
    }
    Ok(DistillOutcome {
        set,
        log,
        passes: Default::default(),
        notes: mode_notes(cfg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_gaussian_groups, BiasConfig};
    use crate::distill::{init_synthetic, InitPolicy};

    fn traj(values: &[f64]) -> Trajectory {
        Trajectory {
            arch: Architecture::new(vec![1, 1, 1]).unwrap(),
            epochs: (0..values.len()).collect(),
            snapshots: values.iter().map(|v| vec![*v; 4]).collect(),
            group: None,
            optimizer: OptimizerConfig::full_batch(0.1, values.len() - 1, 0),
        }
    }

    #[test]
    fn averages_of_checkpoints() {
        let a = traj(&[0.1, 0.7, 1.3]);
        let same = vec![a.clone(), a.clone(), a.clone()];
        for e in 0..3 {
            assert_eq!(barycentric_checkpoint(&same, e).unwrap(), a.snapshots[e]);
        }
        let two = vec![traj(&[0.0, 0.0]), traj(&[2.0, 2.0])];
        assert_eq!(barycentric_checkpoint(&two, 1).unwrap(), vec![1.0; 4]);
        assert!(barycentric_checkpoint(&two, 5).is_err());
    }

    #[test]
    fn mismatched_epochs_are_rejected() {
        let mut b = traj(&[0.0, 1.0, 2.0]);
        b.epochs = vec![0, 2, 4];
        let buf = ExpertBuffer {
            mode: TargetMode::Cobra,
            trajectories: vec![traj(&[0.0, 1.0, 2.0]), b],
        };
        assert!(buf.validate().is_err());
    }

    #[test]
    fn matching_loss_decreases_on_a_micro_instance() {
        let ds = gen_gaussian_groups(&BiasConfig {
            num_classes: 2,
            num_groups: 2,
            dim: 4,
            skew: 0.75,
            separation: 1.0,
            n_per_class: 16,
            seed: 1,
            noise_std: 0.5,
        })
        .unwrap();
        let mut cfg = DistillConfig::new(Objective::Mtt, TargetMode::Cobra);
        cfg.ipc = 1;
        cfg.hidden = vec![4];
        cfg.iterations = 20;
        cfg.lr = 0.5;
        cfg.mtt.expert_epochs = 6;
        cfg.mtt.max_start_epoch = 0;
        cfg.mtt.k = 3;
        let experts = build_experts(&ds, &cfg).unwrap();
        assert_eq!(experts.trajectories.len(), 2);
        assert_eq!(
            experts.trajectories[0].snapshots[0],
            experts.trajectories[1].snapshots[0]
        );
        let set = init_synthetic(&ds, 1, InitPolicy::Real, 0).unwrap();
        let before = mtt_matching_loss(&experts, &set, &cfg, 0).unwrap();
        let out = distill_mtt(&experts, set, &cfg).unwrap();
        let after = mtt_matching_loss(&experts, &out.set, &cfg, 0).unwrap();
        assert!(after < before, "{before} -> {after}");
        assert_eq!(out.log[0], before);
    }

    #[test]
    fn expert_mode_must_match() {
        let ds = gen_gaussian_groups(&BiasConfig {
            num_classes: 2,
            num_groups: 2,
            dim: 4,
            skew: 0.75,
            separation: 1.0,
            n_per_class: 8,
            seed: 1,
            noise_std: 0.5,
        })
        .unwrap();
        let mut cfg = DistillConfig::new(Objective::Mtt, TargetMode::Vanilla);
        cfg.ipc = 1;
        cfg.iterations = 1;
        cfg.mtt.expert_epochs = 4;
        cfg.mtt.max_start_epoch = 1;
        cfg.mtt.k = 2;
        let experts = build_experts(&ds, &cfg).unwrap();
        cfg.mode = TargetMode::Cobra;
        let set = init_synthetic(&ds, 1, InitPolicy::Real, 0).unwrap();
        assert!(distill_mtt(&experts, set, &cfg).is_err());
    }
}
