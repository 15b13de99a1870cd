use super::{
    check_compatible, check_finite, mode_notes, real_target, DistillConfig, DistillOutcome, FeatureMap, Objective,
    SyntheticSet,
};
use crate::datagen::GroupedDataset;
use crate::nets::{init_network, NetworkParams};
use crate::targets::{group_balanced_weights, BatchPolicy, EmbeddingMap, IdentityMap, PassCounter, StatisticMap};
use crate::{rng, Error, Result};

/// DM matching loss of class `y` and its gradient with respect to the class's synthetic
/// rows (flattened like [`SyntheticSet::class_samples`]). `net = None` uses raw inputs.
#[allow(clippy::too_many_arguments)]
pub fn dm_class_gradient(
    net: Option<&NetworkParams>,
    ds: &GroupedDataset,
    set: &SyntheticSet,
    cfg: &DistillConfig,
    class: usize,
    policy: BatchPolicy,
    weights: &[f64],
    counter: &mut PassCounter,
) -> Result<(f64, Vec<f64>)> {
    let ipc = set.ipc as f64;
    let rows = set.class_samples(class);
    match net {
        None => {
            let map = IdentityMap { dim: ds.dim };
            let target = real_target(&map, ds, class, weights, cfg, policy, counter)?;
            let (loss, g) = target.loss(&set.class_mean(class), cfg.distance)?;
            let row: Vec<f64> = g.iter().map(|v| v / ipc).collect();
            Ok((loss, row.repeat(set.ipc)))
        }
        Some(params) => {
            let map = EmbeddingMap(params);
            let target = real_target(&map, ds, class, weights, cfg, policy, counter)?;
            let e = params.arch.embedding_index();
            let caches = rows
                .chunks(set.dim)
                .map(|x| params.forward_cache(x))
                .collect::<Result<Vec<_>>>()?;
            let mut phi_s = vec![0.0; map.output_dim()];
            for c in &caches {
                phi_s.iter_mut().zip(&c.act[e]).for_each(|(a, v)| *a += v / ipc);
            }
            let (loss, g) = target.loss(&phi_s, cfg.distance)?;
            let g: Vec<f64> = g.iter().map(|v| v / ipc).collect();
            let mut grad = Vec::with_capacity(rows.len());
            for c in &caches {
                grad.extend(params.backward(c, None, Some(&g), None));
            }
            Ok((loss, grad))
        }
    }
}

/// Distribution matching: each iteration draws a random network (or uses raw inputs),
/// builds per-class real targets under the configured mode, and takes one gradient step
/// on the synthetic samples.
pub fn distill_dm(ds: &GroupedDataset, mut set: SyntheticSet, cfg: &DistillConfig) -> Result<DistillOutcome> {
    cfg.validate()?;
    if cfg.objective != Objective::Dm {
        return Err(Error::config("distill_dm needs objective dm"));
    }
    check_compatible(ds, &set)?;
    let weights = group_balanced_weights(ds);
    let arch = cfg.arch(ds.dim, ds.num_classes)?;
    let mut net: Option<NetworkParams> = None;
    let mut passes = PassCounter::default();
    let mut log = Vec::with_capacity(cfg.iterations);
    for t in 0..cfg.iterations {
        if cfg.dm.feature == FeatureMap::Network && t % cfg.dm.reinit_period == 0 {
            let seed = rng::derive(cfg.seed, "dm-net", (t / cfg.dm.reinit_period) as u64);
            net = Some(init_network(&arch, seed)?);
        }
        let policy = cfg.batch_policy(t);
        let mut total = 0.0;
        for y in 0..ds.num_classes {
            let (loss, grad) = dm_class_gradient(net.as_ref(), ds, &set, cfg, y, policy, &weights, &mut passes)?;
            check_finite(t, "dm synthetic gradient", &grad)?;
            total += loss;
            for (x, g) in set.class_samples_mut(y).iter_mut().zip(&grad) {
                *x -= cfg.lr * g;
            }
        }
        check_finite(t, "dm matching loss", &[total])?;
        check_finite(t, "dm synthetic samples", &set.samples)?;
        log.push(total);
        set.iterations += 1;
    }
    Ok(DistillOutcome {
        set,
        log,
        passes,
        notes: mode_notes(cfg),
    })
}
