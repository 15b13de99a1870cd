//! Group-label noise, masking, and k-means imputation of masked group labels.

use rand::seq::index;
use rand::Rng;

use super::GroupedDataset;
use crate::{rng, Error, Result};

/// Replaces the group of exactly `floor(rho * N)` uniformly chosen samples by a uniform
/// draw over the other `G - 1` groups.
pub fn corrupt_group_labels(ds: &GroupedDataset, rho: f64, seed: u64) -> Result<GroupedDataset> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::config(format!("rho {rho} outside [0, 1]")));
    }
    let n_flip = (rho * ds.len() as f64).floor() as usize;
    if n_flip > 0 && ds.num_groups < 2 {
        return Err(Error::config("label noise needs at least two groups"));
    }
    let mut out = ds.clone();
    let mut r = rng::stream(seed, "group-noise", 0);
    for i in index::sample(&mut r, ds.len(), n_flip) {
        let old = out.groups[i];
        let draw = r.random_range(0..ds.num_groups - 1);
        out.groups[i] = if draw >= old { draw + 1 } else { draw };
    }
    Ok(out)
}

/// Hides the group of a uniform `(1 - known_fraction)` subset of samples. Hidden groups
/// are reset to 0 so that nothing downstream can read the original value.
pub fn mask_group_labels(ds: &GroupedDataset, known_fraction: f64, seed: u64) -> Result<GroupedDataset> {
    if !(known_fraction > 0.0 && known_fraction <= 1.0) {
        return Err(Error::config(format!("known_fraction {known_fraction} outside (0, 1]")));
    }
    let n_hide = ((1.0 - known_fraction) * ds.len() as f64).round() as usize;
    let mut out = ds.clone();
    let mut r = rng::stream(seed, "group-mask", 0);
    for i in index::sample(&mut r, ds.len(), n_hide) {
        out.group_known[i] = false;
        out.groups[i] = 0;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansSettings {
    pub k: usize,
    pub max_iters: usize,
    /// Relative inertia change below which Lloyd iterations stop.
    pub tol: f64,
    pub seed: u64,
}

impl KMeansSettings {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansSettings {
            k,
            max_iters: 100,
            tol: 1e-6,
            seed,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm on the rows of `ds`; returns the cluster index of each sample.
pub(crate) fn kmeans(ds: &GroupedDataset, settings: &KMeansSettings) -> Vec<usize> {
    let n = ds.len();
    let k = settings.k.min(n).max(1);
    let d = ds.dim;
    let mut r = rng::stream(settings.seed, "kmeans-init", 0);
    let mut centers: Vec<Vec<f64>> = index::sample(&mut r, n, k)
        .into_iter()
        .map(|i| ds.sample(i).to_vec())
        .collect();
    let mut assign = vec![0usize; n];
    let mut dist = vec![0.0f64; n];
    let mut prev_inertia = f64::INFINITY;
    for _ in 0..settings.max_iters {
        for i in 0..n {
            let x = ds.sample(i);
            let (best, bd) = centers
                .iter()
                .enumerate()
                .map(|(c, m)| (c, sq_dist(x, m)))
                .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
            assign[i] = best;
            dist[i] = bd;
        }
        let inertia: f64 = dist.iter().sum();

        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i]].iter_mut().zip(ds.sample(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed from the point farthest from its current center
                let far = (0..n).max_by(|&a, &b| dist[a].total_cmp(&dist[b])).unwrap_or(0);
                centers[c] = ds.sample(far).to_vec();
                dist[far] = 0.0;
            } else {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }

        let converged = prev_inertia.is_finite()
            && (prev_inertia - inertia).abs() <= settings.tol * prev_inertia.max(f64::MIN_POSITIVE);
        prev_inertia = inertia;
        if converged {
            break;
        }
    }
    assign
}

fn majority(votes: &[usize]) -> Option<usize> {
    let best = votes.iter().copied().max()?;
    if best == 0 {
        return None;
    }
    // lowest group index wins ties
    votes.iter().position(|&v| v == best)
}

/// Imputes masked group labels by majority vote of known labels within k-means clusters
/// over the raw flattened samples. Known labels are never changed.
pub fn impute_groups_kmeans(ds: &GroupedDataset, k: usize, seed: u64) -> Result<GroupedDataset> {
    impute_groups_kmeans_with(ds, &KMeansSettings::new(k, seed))
}

pub fn impute_groups_kmeans_with(ds: &GroupedDataset, settings: &KMeansSettings) -> Result<GroupedDataset> {
    if settings.k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    if !ds.group_known.iter().any(|&k| k) {
        return Err(Error::NoKnownGroups);
    }
    let mut out = ds.clone();
    if ds.group_known.iter().all(|&k| k) {
        return Ok(out);
    }
    let assign = kmeans(ds, settings);
    let k = settings.k.min(ds.len());
    let mut votes = vec![vec![0usize; ds.num_groups]; k];
    let mut global = vec![0usize; ds.num_groups];
    for i in 0..ds.len() {
        if ds.group_known[i] {
            votes[assign[i]][ds.groups[i]] += 1;
            global[ds.groups[i]] += 1;
        }
    }
    let fallback = majority(&global).expect("at least one known label");
    for i in 0..ds.len() {
        if !ds.group_known[i] {
            out.groups[i] = majority(&votes[assign[i]]).unwrap_or(fallback);
        }
    }
    Ok(out)
}
