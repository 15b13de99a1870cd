use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eod::{compute_eod, count_cells};
use crate::datagen::GroupedDataset;
use crate::nets::{init_network, train_classifier, Architecture, LabeledData, NetworkParams, OptimizerConfig};
use crate::{rng, Error, Result};

/// Anything that labels a sample; the trained network in normal use, stubs in tests.
pub trait Predictor: Sync {
    fn predict(&self, x: &[f64]) -> Result<usize>;
}

impl Predictor for NetworkParams {
    fn predict(&self, x: &[f64]) -> Result<usize> {
        NetworkParams::predict(self, x)
    }
}

/// Metrics of one trained evaluation network, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub accuracy: f64,
    pub eod_m: f64,
    pub eod_a: f64,
    pub rates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub std: f64,
}

pub fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MetricSummary { mean, std }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seeds: Vec<SeedMetrics>,
    pub accuracy: MetricSummary,
    pub eod_m: MetricSummary,
    pub eod_a: MetricSummary,
}

impl EvalReport {
    pub fn from_seeds(seeds: Vec<SeedMetrics>) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::config("an evaluation needs at least one seed"));
        }
        let col = |f: fn(&SeedMetrics) -> f64| seeds.iter().map(f).collect::<Vec<_>>();
        Ok(EvalReport {
            accuracy: summarize(&col(|s| s.accuracy)),
            eod_m: summarize(&col(|s| s.eod_m)),
            eod_a: summarize(&col(|s| s.eod_a)),
            seeds,
        })
    }
}

/// Scores a predictor on a group-balanced test split.
pub fn evaluate_predictor(pred: &dyn Predictor, test: &GroupedDataset, seed: u64) -> Result<SeedMetrics> {
    if !test.is_group_balanced() {
        return Err(Error::config("evaluation requires a group-balanced test split"));
    }
    let counts = count_cells(|x| pred.predict(x), test)?;
    let eod = compute_eod(&counts)?;
    Ok(SeedMetrics {
        seed,
        accuracy: counts.accuracy(),
        eod_m: eod.eod_m,
        eod_a: eod.eod_a,
        rates: eod.rates,
    })
}

fn default_eval_hidden() -> Vec<usize> {
    vec![32]
}
fn default_eval_optimizer() -> OptimizerConfig {
    OptimizerConfig::full_batch(0.05, 300, 0)
}
fn default_n_seeds() -> usize {
    10
}

/// Downstream protocol: network shape, optimizer, and number of seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    #[serde(default = "default_eval_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_eval_optimizer")]
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            hidden: default_eval_hidden(),
            optimizer: default_eval_optimizer(),
            n_seeds: default_n_seeds(),
        }
    }
}

/// Trains `n_seeds` fresh networks on `set` and scores each on `test`. Seed `k` uses the
/// initialization and data order derived from `(opt.seed, k)`.
pub fn eval_distilled(
    set: &(dyn LabeledData + Sync),
    test: &GroupedDataset,
    arch: &Architecture,
    opt: &OptimizerConfig,
    n_seeds: usize,
) -> Result<EvalReport> {
    if n_seeds == 0 {
        return Err(Error::config("n_seeds must be at least 1"));
    }
    if !test.is_group_balanced() {
        return Err(Error::config("evaluation requires a group-balanced test split"));
    }
    let seeds = (0..n_seeds as u64)
        .into_par_iter()
        .map(|k| {
            let init = init_network(arch, rng::derive(opt.seed, "eval-net", k))?;
            let run = OptimizerConfig {
                seed: rng::derive(opt.seed, "eval-order", k),
                ..opt.clone()
            };
            let params = train_classifier(&init, set, &run)?;
            evaluate_predictor(&params, test, k)
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_seeds(seeds)
}

/// Identifies one evaluated configuration in CSV output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalKey {
    pub dataset: String,
    pub objective: String,
    pub mode: String,
    pub ipc: usize,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    dataset: &'a str,
    objective: &'a str,
    mode: &'a str,
    ipc: usize,
    seed_count: usize,
    acc_mean: f64,
    acc_std: f64,
    eodm_mean: f64,
    eodm_std: f64,
    eoda_mean: f64,
    eoda_std: f64,
}

#[derive(Serialize)]
struct SeedRow<'a> {
    dataset: &'a str,
    objective: &'a str,
    mode: &'a str,
    ipc: usize,
    seed: u64,
    acc: f64,
    eodm: f64,
    eoda: f64,
}

/// Aggregated rows, one per report, in the fixed column order.
pub fn write_eval_csv(rows: &[(EvalKey, EvalReport)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for (k, r) in rows {
        w.serialize(SummaryRow {
            dataset: &k.dataset,
            objective: &k.objective,
            mode: &k.mode,
            ipc: k.ipc,
            seed_count: r.seeds.len(),
            acc_mean: r.accuracy.mean,
            acc_std: r.accuracy.std,
            eodm_mean: r.eod_m.mean,
            eodm_std: r.eod_m.std,
            eoda_mean: r.eod_a.mean,
            eoda_std: r.eod_a.std,
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per evaluation seed.
pub fn write_seed_csv(rows: &[(EvalKey, EvalReport)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for (k, r) in rows {
        for s in &r.seeds {
            w.serialize(SeedRow {
                dataset: &k.dataset,
                objective: &k.objective,
                mode: &k.mode,
                ipc: k.ipc,
                seed: s.seed,
                acc: s.accuracy,
                eodm: s.eod_m,
                eoda: s.eod_a,
            })
            .map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
