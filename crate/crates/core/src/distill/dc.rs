use super::{
    check_compatible, check_finite, mode_notes, real_target, DistillConfig, DistillOutcome, Objective, SyntheticSet,
};
use crate::datagen::GroupedDataset;
use crate::nets::{init_network, Batch, LabeledData, NetworkParams};
use crate::targets::{group_balanced_weights, BatchPolicy, GradientMap, PassCounter};
use crate::{rng, Error, Result};

/// DC matching loss of class `y` at surrogate `params` and its exact gradient with respect
/// to the class's synthetic rows.
///
/// With `phi_S = (1/n) sum_i grad_theta CE(x_i, y)` and `v = dD/dphi_S`, the row gradient is
/// `(1/n) grad_x (v . grad_theta CE(x_i, y))`.
#[allow(clippy::too_many_arguments)]
pub fn dc_class_gradient(
    params: &NetworkParams,
    ds: &GroupedDataset,
    set: &SyntheticSet,
    cfg: &DistillConfig,
    class: usize,
    policy: BatchPolicy,
    weights: &[f64],
    counter: &mut PassCounter,
) -> Result<(f64, Vec<f64>)> {
    let target = real_target(&GradientMap(params), ds, class, weights, cfg, policy, counter)?;
    let rows = set.class_samples(class);
    let labels = vec![class; set.ipc];
    let phi_s = params.loss_and_grads(&Batch::new(rows, &labels), false)?.grad;
    let (loss, v) = target.loss(&phi_s, cfg.distance)?;
    let n = set.ipc as f64;
    let mut grad = Vec::with_capacity(rows.len());
    for x in rows.chunks(set.dim) {
        let (_, gx) = params.grad_dot_input_grad(x, class, &v)?;
        grad.extend(gx.iter().map(|g| g / n));
    }
    Ok((loss, grad))
}

/// Gradient matching: alternates synthetic steps that match per-class real gradient targets
/// with full-batch surrogate training on the synthetic set.
pub fn distill_dc(ds: &GroupedDataset, mut set: SyntheticSet, cfg: &DistillConfig) -> Result<DistillOutcome> {
    cfg.validate()?;
    if cfg.objective != Objective::Dc {
        return Err(Error::config("distill_dc needs objective dc"));
    }
    check_compatible(ds, &set)?;
    let weights = group_balanced_weights(ds);
    let arch = cfg.arch(ds.dim, ds.num_classes)?;
    let mut params = init_network(&arch, rng::derive(cfg.seed, "dc-net", 0))?;
    let mut passes = PassCounter::default();
    let mut log = Vec::with_capacity(cfg.iterations);
    for t in 0..cfg.iterations {
        if let Some(p) = cfg.dc.reinit_period {
            if t > 0 && t % p == 0 {
                params = init_network(&arch, rng::derive(cfg.seed, "dc-net", (t / p) as u64))?;
            }
        }
        let policy = cfg.batch_policy(t);
        let mut recorded = None;
        for _ in 0..cfg.dc.match_steps {
            let mut total = 0.0;
            for y in 0..ds.num_classes {
                let (loss, grad) = dc_class_gradient(&params, ds, &set, cfg, y, policy, &weights, &mut passes)?;
                check_finite(t, "dc synthetic gradient", &grad)?;
                total += loss;
                for (x, g) in set.class_samples_mut(y).iter_mut().zip(&grad) {
                    *x -= cfg.lr * g;
                }
            }
            check_finite(t, "dc matching loss", &[total])?;
            recorded.get_or_insert(total);
        }
        for _ in 0..cfg.dc.surrogate_steps {
            let lg = params.loss_and_grads(&Batch::new(set.flat(), set.labels()), false)?;
            for (th, g) in params.theta.iter_mut().zip(&lg.grad) {
                *th -= cfg.dc.surrogate_lr * g;
            }
        }
        check_finite(t, "dc surrogate parameters", &params.theta)?;
        check_finite(t, "dc synthetic samples", &set.samples)?;
        log.push(recorded.expect("match_steps >= 1"));
        set.iterations += 1;
    }
    Ok(DistillOutcome {
        set,
        log,
        passes,
        notes: mode_notes(cfg),
    })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::datagen::{gen_gaussian_groups, BiasConfig, Split};
    use crate::distill::{init_synthetic, InitPolicy};
    use crate::targets::TargetMode;

    fn micro() -> GroupedDataset {
        gen_gaussian_groups(&BiasConfig {
            num_classes: 2,
            num_groups: 2,
            dim: 4,
            skew: 0.75,
            separation: 1.0,
            n_per_class: 12,
            seed: 6,
            noise_std: 0.5,
        })
        .unwrap()
    }

    fn cfg(mode: TargetMode) -> DistillConfig {
        let mut c = DistillConfig::new(Objective::Dc, mode);
        c.ipc = 1;
        c.hidden = vec![6];
        c.iterations = 50;
        c.lr = 0.05;
        c.seed = 2;
        c
    }

    #[test]
    fn pixel_gradient_matches_central_differences() {
        let ds = micro();
        for mode in TargetMode::ALL {
            let c = cfg(mode);
            let set = init_synthetic(&ds, 1, InitPolicy::Noise, 4).unwrap();
            let params = init_network(&c.arch(4, 2).unwrap(), 3).unwrap();
            let w = group_balanced_weights(&ds);
            let mut pc = PassCounter::default();
            for y in 0..2 {
                let (_, g) = dc_class_gradient(&params, &ds, &set, &c, y, BatchPolicy::Full, &w, &mut pc).unwrap();
                let h = 1e-5;
                for j in 0..g.len() {
                    let mut up = set.clone();
                    let mut dn = set.clone();
                    up.class_samples_mut(y)[j] += h;
                    dn.class_samples_mut(y)[j] -= h;
                    let fu = dc_class_gradient(&params, &ds, &up, &c, y, BatchPolicy::Full, &w, &mut pc)
                        .unwrap()
                        .0;
                    let fd = dc_class_gradient(&params, &ds, &dn, &c, y, BatchPolicy::Full, &w, &mut pc)
                        .unwrap()
                        .0;
                    let num = (fu - fd) / (2.0 * h);
                    let rel = (num - g[j]).abs() / g[j].abs().max(num.abs()).max(1e-8);
                    assert!(rel < 1e-3, "{mode:?} class {y} coord {j}: {num} vs {}", g[j]);
                }
            }
        }
    }

    #[test]
    fn identical_statistics_give_zero_initial_loss() {
        // Two groups holding identical rows; the synthetic set is a full copy of the data.
        let mut ds = GroupedDataset::empty(2, 2, 4, Split::Train);
        let base = [[0.3, -0.2, 0.8, 0.1], [-0.5, 0.4, 0.0, 0.9]];
        for y in 0..2 {
            for a in 0..2 {
                ds.push(&base[y], y, a);
            }
        }
        for mode in TargetMode::ALL {
            let mut c = cfg(mode);
            c.ipc = 2;
            c.iterations = 1;
            let s = init_synthetic(&ds, 2, InitPolicy::Real, 0).unwrap();
            let out = distill_dc(&ds, s, &c).unwrap();
            assert!(out.log[0].abs() < 1e-24, "{mode:?}: {}", out.log[0]);
        }
    }

    #[test]
    fn frozen_surrogate_loss_is_non_increasing() {
        let ds = micro();
        let mut c = cfg(TargetMode::Cobra);
        c.dc.surrogate_steps = 0;
        c.dc.reinit_period = None;
        c.lr = 0.01;
        let s = init_synthetic(&ds, 1, InitPolicy::Noise, 1).unwrap();
        let out = distill_dc(&ds, s, &c).unwrap();
        assert_eq!(out.log.len(), 50);
        for w in out.log.windows(2) {
            assert!(w[1] <= w[0] + 1e-8, "{} -> {}", w[0], w[1]);
        }
        assert!(out.log[49] < out.log[0]);
    }
}
