use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::GroupedDataset;
use crate::nets::NetworkParams;
use crate::targets::{
    barycenter_target, fairdd_stationary_target, mixture_target, subgroup_stats, BarycenterDiscrepancy, BatchPolicy,
    ClassStatistics, MatchDistance, StatisticKind, SubgroupStatistics, TargetBundle,
};
use crate::{Error, Result};

/// Worst-case squared residual `max_a ||phi_a - m||^2` of one class under each target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub class: usize,
    pub vanilla: f64,
    pub fairdd: f64,
    pub cobra: f64,
}

/// Class-mean and worst-class MaxRes of one target mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mean: f64,
    pub worst: f64,
}

impl ModeSummary {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count().max(1) as f64;
        ModeSummary {
            mean: values.clone().sum::<f64>() / n,
            worst: values.fold(0.0, f64::max),
        }
    }

    /// `"mean (worst)"`.
    pub fn cell(&self) -> String {
        format!("{:.4} ({:.4})", self.mean, self.worst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Classes with at least two observed groups.
    pub rows: Vec<AuditRow>,
    pub vanilla: ModeSummary,
    pub fairdd: ModeSummary,
    pub cobra: ModeSummary,
}

fn max_res(c: &ClassStatistics, bundle: &TargetBundle) -> Result<f64> {
    let m = &bundle
        .class(c.class)
        .ok_or_else(|| Error::config(format!("bundle lacks class {}", c.class)))?
        .target;
    Ok(c.cells
        .iter()
        .map(|cell| cell.phi.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .fold(0.0, f64::max))
}

impl AuditReport {
    /// Audit of precomputed statistics; classes with a single observed group are skipped.
    pub fn from_stats(stats: &SubgroupStatistics) -> Result<Self> {
        let van = mixture_target(stats);
        let fair = fairdd_stationary_target(stats, MatchDistance::Mse);
        let cob = barycenter_target(stats, &BarycenterDiscrepancy::default())?;
        let rows = stats
            .classes
            .iter()
            .filter(|c| c.cells.len() > 1)
            .map(|c| {
                Ok(AuditRow {
                    class: c.class,
                    vanilla: max_res(c, &van)?,
                    fairdd: max_res(c, &fair)?,
                    cobra: max_res(c, &cob)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AuditReport {
            vanilla: ModeSummary::of(rows.iter().map(|r| r.vanilla)),
            fairdd: ModeSummary::of(rows.iter().map(|r| r.fairdd)),
            cobra: ModeSummary::of(rows.iter().map(|r| r.cobra)),
            rows,
        })
    }
}

/// Subgroup statistics of `real` under the frozen `params`, scored against the vanilla,
/// group-averaged and barycentric targets.
pub fn residual_audit(params: &NetworkParams, real: &GroupedDataset, kind: StatisticKind) -> Result<AuditReport> {
    let stats = subgroup_stats(params, real, kind, BatchPolicy::Full)?;
    AuditReport::from_stats(&stats)
}

#[derive(Serialize)]
struct Row<'a> {
    objective: &'a str,
    dataset: &'a str,
    vanilla: String,
    fairdd: String,
    cobra: String,
}

/// Rows `(objective, dataset, report)` with each mode rendered as `"mean (worst)"`.
pub fn write_audit_csv(rows: &[(String, String, AuditReport)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for (objective, dataset, r) in rows {
        w.serialize(Row {
            objective,
            dataset,
            vanilla: r.vanilla.cell(),
            fairdd: r.fairdd.cell(),
            cobra: r.cobra.cell(),
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
