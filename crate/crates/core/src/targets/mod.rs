//! Class-conditional subgroup statistics and the targets distillation is pulled toward.
//!
//! For class `y` with subgroup statistics `phi_a` and proportions `pi_a`:
//!
//! - vanilla: `m_van = sum_a pi_a phi_a`, the fixed point of plain MSE matching;
//! - barycentric: `m* = argmin_m sum_a d(phi_a, m)` with uniform weights;
//! - group-averaged loss (FairDD-analog): `(1/G) sum_a D(phi_a, phi_S)`;
//! - reweighted: the mixture with uniform group weights applied per sample.

mod audit;
mod barycenter;
mod lbfgs;
mod matching;
mod metric;
mod residual;
mod stats;

pub use audit::{bound_audit, random_instance, theorem_audit, BoundAudit, TheoremAudit};
pub(crate) use barycenter::class_barycenter;
pub use barycenter::{
    barycenter_target, coordinate_median, geometric_median, mixture_target, reweight_target, solve_barycenter,
    sqnorm_iterative, uniform_mean, BarycenterDiscrepancy, BarycenterSolution, ClassTarget, DiscrepancyKind,
    SolverSettings, TargetBundle,
};
pub use matching::{fairdd_stationary_target, fairdd_target_loss, MatchDistance};
pub use metric::QMetric;
pub use residual::{
    residual_geometry, write_residual_csv, write_residual_summary_csv, CellResidual, ClassResidual, ResidualReport,
};
pub use stats::{
    class_aggregate, class_statistics, group_balanced_weights, subgroup_stats, subgroup_stats_with, BatchPolicy,
    CellStatistic, ClassStatistics, EmbeddingMap, GradientMap, IdentityMap, PassCounter, StatisticKind, StatisticMap,
    SubgroupStatistics,
};

use serde::{Deserialize, Serialize};

/// How the real-data target of each class is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetMode {
    Vanilla,
    /// Group-averaged matching loss; an analog of FairDD, not a reproduction.
    #[serde(alias = "fairdd-analog")]
    FairDd,
    Reweight,
    Cobra,
}

impl TargetMode {
    pub const ALL: [TargetMode; 4] = [
        TargetMode::Vanilla,
        TargetMode::FairDd,
        TargetMode::Reweight,
        TargetMode::Cobra,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TargetMode::Vanilla => "vanilla",
            TargetMode::FairDd => "fairdd",
            TargetMode::Reweight => "reweight",
            TargetMode::Cobra => "cobra",
        }
    }

    /// Name used in reports; the group-averaged mode is labeled as an analog.
    pub fn label(&self) -> &'static str {
        match self {
            TargetMode::FairDd => "FairDD-analog",
            other => other.as_str(),
        }
    }

    /// Whether the real side needs one statistic reduction per group.
    pub fn per_group(&self) -> bool {
        matches!(self, TargetMode::FairDd | TargetMode::Cobra)
    }
}

impl std::fmt::Display for TargetMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TargetMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "vanilla" => Ok(TargetMode::Vanilla),
            "fairdd" | "fairdd-analog" => Ok(TargetMode::FairDd),
            "reweight" => Ok(TargetMode::Reweight),
            "cobra" => Ok(TargetMode::Cobra),
            other => Err(crate::Error::config(format!("unknown target mode `{other}`"))),
        }
    }
}
