//! Experiment plumbing: dataset preparation, single gen -> distill -> eval cells, named
//! sweeps with CSV output, and the property-suite verifier.

mod sweep;
mod verify;

pub use sweep::{
    aggregate, run_sweep, write_aggregated_csv, write_audit_sweep_csv, write_long_csv, write_records_jsonl,
    AggregatedRow, GapMechanism, GridValue, RunRecord, SweepKind, SweepOutput, SweepSpec, TheoremRow,
};
pub use verify::{run_verify, CheckResult, VerifyReport, VerifySettings};

use serde::{Deserialize, Serialize};

use crate::datagen::{
    apply_corruption, apply_semantic_offset, corrupt_group_labels, impute_groups_kmeans, make_balanced_test,
    mask_group_labels, BiasConfig, CorruptionParams, Generator, GroupedDataset,
};
use crate::distill::{distill, DistillConfig, DistillOutcome, Objective};
use crate::eval::{eval_distilled, residual_audit, AuditReport, EvalReport, EvalSettings};
use crate::nets::{init_network, train_classifier, Architecture};
use crate::targets::StatisticKind;
use crate::{rng, Result};

fn default_generator() -> Generator {
    Generator::Gaussian
}
fn default_test_per_cell() -> usize {
    50
}

/// How the training and test splits are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_generator")]
    pub generator: Generator,
    pub bias: BiasConfig,
    /// Samples per (class, group) cell of the balanced test split.
    #[serde(default = "default_test_per_cell")]
    pub test_per_cell: usize,
    /// Image corruption severity applied to every group except group 0 (both splits).
    #[serde(default)]
    pub corruption: Option<u8>,
    #[serde(default)]
    pub corruption_params: CorruptionParams,
    /// Semantic offset scale applied to both splits.
    #[serde(default)]
    pub semantic_offset: Option<f64>,
    /// Fraction of training group labels reassigned to a wrong group.
    #[serde(default)]
    pub label_noise: Option<f64>,
    /// Fraction of training group labels kept; the rest are imputed by k-means.
    #[serde(default)]
    pub known_fraction: Option<f64>,
}

impl DatasetConfig {
    pub fn gaussian(bias: BiasConfig) -> Self {
        DatasetConfig {
            name: None,
            generator: Generator::Gaussian,
            bias,
            test_per_cell: default_test_per_cell(),
            corruption: None,
            corruption_params: CorruptionParams::default(),
            semantic_offset: None,
            label_noise: None,
            known_fraction: None,
        }
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| match self.generator {
            Generator::Gaussian => "gaussian".into(),
            Generator::Colored { .. } => "colored".into(),
        })
    }

    /// Training and balanced test splits. Group-label noise and masking touch the training
    /// split only.
    pub fn prepare(&self) -> Result<(GroupedDataset, GroupedDataset)> {
        let mut train = self.generator.generate(&self.bias)?;
        let mut test = make_balanced_test(&self.bias, &self.generator, self.test_per_cell)?;
        if let Some(alpha) = self.corruption {
            let targets: Vec<usize> = (1..self.bias.num_groups).collect();
            let p = self.corruption_params;
            train = apply_corruption(&train, alpha, &targets, p)?;
            let test_params = CorruptionParams {
                seed: rng::derive(p.seed, "test-corruption", 0),
                ..p
            };
            test = apply_corruption(&test, alpha, &targets, test_params)?;
        }
        if let Some(gamma) = self.semantic_offset {
            train = apply_semantic_offset(&train, gamma)?;
            test = apply_semantic_offset(&test, gamma)?;
        }
        let seed = self.bias.seed;
        if let Some(rho) = self.label_noise {
            train = corrupt_group_labels(&train, rho, rng::derive(seed, "label-noise", 0))?;
        }
        if let Some(kf) = self.known_fraction {
            train = mask_group_labels(&train, kf, rng::derive(seed, "label-mask", 0))?;
            train = impute_groups_kmeans(&train, self.bias.num_groups, rng::derive(seed, "impute", 0))?;
        }
        Ok((train, test))
    }
}

fn default_true() -> bool {
    true
}

/// One gen -> distill -> eval configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub distill: DistillConfig,
    #[serde(default)]
    pub eval: EvalSettings,
    /// Run the worst-case residual audit on a network trained on the synthetic set.
    #[serde(default = "default_true")]
    pub audit: bool,
}

impl ExperimentConfig {
    /// Re-seeds data, distillation and evaluation from one cell seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.dataset.bias.seed = rng::derive(seed, "data", 0);
        c.dataset.corruption_params.seed = rng::derive(seed, "corruption", 0);
        c.distill.seed = rng::derive(seed, "distill", 0);
        c.eval.optimizer.seed = rng::derive(seed, "eval", 0);
        c
    }
}

/// Everything produced by one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub distill: DistillOutcome,
    pub report: EvalReport,
    pub audit: Option<AuditReport>,
}

/// Statistic kind matching the objective (gradients for DC, embeddings otherwise).
pub fn audit_kind(objective: Objective) -> StatisticKind {
    match objective {
        Objective::Dc => StatisticKind::Gradient,
        Objective::Dm | Objective::Mtt => StatisticKind::Embedding,
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let (train, test) = cfg.dataset.prepare()?;
    let outcome = distill(&train, &cfg.distill)?;
    let arch = Architecture::mlp(train.dim, &cfg.eval.hidden, train.num_classes)?;
    let report = eval_distilled(&outcome.set, &test, &arch, &cfg.eval.optimizer, cfg.eval.n_seeds)?;
    let audit = if cfg.audit {
        let init = init_network(&arch, rng::derive(cfg.eval.optimizer.seed, "audit-net", 0))?;
        let params = train_classifier(&init, &outcome.set, &cfg.eval.optimizer)?;
        Some(residual_audit(&params, &train, audit_kind(cfg.distill.objective))?)
    } else {
        None
    };
    Ok(ExperimentResult {
        distill: outcome,
        report,
        audit,
    })
}
