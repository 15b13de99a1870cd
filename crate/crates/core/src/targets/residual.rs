use std::path::Path;

use serde::{Deserialize, Serialize};

use super::barycenter::TargetBundle;
use super::metric::QMetric;
use super::stats::SubgroupStatistics;
use crate::{Error, Result};

/// Residuals of one (class, group) cell against both targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResidual {
    pub group: usize,
    pub proportion: f64,
    /// `phi_a - m*`.
    pub delta_c: Vec<f64>,
    /// `phi_a - m_van`.
    pub delta_v: Vec<f64>,
    pub norm_c: f64,
    pub norm_v: f64,
    /// `sum_{a' != a} pi_a' ||phi_a - phi_a'||_Q`, an upper bound on `norm_v`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassResidual {
    pub class: usize,
    pub cells: Vec<CellResidual>,
    pub max_c: f64,
    pub max_v: f64,
    /// Group with the largest barycentric residual. Exact ties go to the smallest
    /// `antipodal` value, then to the lowest index.
    pub worst_group: usize,
    /// `s = m_van - m*`.
    pub shift: Vec<f64>,
    /// `<delta_c[worst_group], s>_Q`.
    pub antipodal: f64,
    /// Whether `antipodal <= 0`.
    pub condition: bool,
}

impl ClassResidual {
    /// `max_c <= max_v + 1e-9`.
    pub fn inequality_holds(&self) -> bool {
        self.max_c <= self.max_v + 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub classes: Vec<ClassResidual>,
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Residual geometry of `stats` against a vanilla and a barycentric bundle built from it.
pub fn residual_geometry(
    stats: &SubgroupStatistics,
    vanilla: &TargetBundle,
    cobra: &TargetBundle,
    q: &QMetric,
) -> Result<ResidualReport> {
    let mut classes = Vec::with_capacity(stats.classes.len());
    for c in &stats.classes {
        let dim = c.dim();
        q.check_dim(dim)?;
        let (Some(tv), Some(tc)) = (vanilla.class(c.class), cobra.class(c.class)) else {
            return Err(Error::config(format!("target bundles lack class {}", c.class)));
        };
        for t in [&tv.target, &tc.target] {
            if t.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: t.len(),
                });
            }
        }
        let cells: Vec<CellResidual> = c
            .cells
            .iter()
            .map(|cell| {
                let delta_c = diff(&cell.phi, &tc.target);
                let delta_v = diff(&cell.phi, &tv.target);
                let bound = c
                    .cells
                    .iter()
                    .filter(|o| o.group != cell.group)
                    .map(|o| o.proportion * q.dist(&cell.phi, &o.phi))
                    .sum();
                CellResidual {
                    group: cell.group,
                    proportion: cell.proportion,
                    norm_c: q.norm(&delta_c),
                    norm_v: q.norm(&delta_v),
                    delta_c,
                    delta_v,
                    bound,
                }
            })
            .collect();
        let shift = diff(&tv.target, &tc.target);
        let inner: Vec<f64> = cells.iter().map(|c| q.inner(&c.delta_c, &shift)).collect();
        let mut worst = 0;
        for (k, cell) in cells.iter().enumerate() {
            let best = &cells[worst];
            if cell.norm_c > best.norm_c || (cell.norm_c == best.norm_c && inner[k] < inner[worst]) {
                worst = k;
            }
        }
        let max_v = cells.iter().fold(0.0f64, |m, c| m.max(c.norm_v));
        let antipodal = inner[worst];
        classes.push(ClassResidual {
            class: c.class,
            max_c: cells[worst].norm_c,
            max_v,
            worst_group: cells[worst].group,
            shift,
            antipodal,
            condition: antipodal <= 0.0,
            cells,
        });
    }
    Ok(ResidualReport { classes })
}

#[derive(Serialize)]
struct CellRow {
    class: usize,
    group: usize,
    proportion: f64,
    norm_vanilla: f64,
    norm_cobra: f64,
    bound: f64,
}

#[derive(Serialize)]
struct SummaryRow {
    mode: &'static str,
    mean_maxres: f64,
    worst_maxres: f64,
}

/// One row per (class, group).
pub fn write_residual_csv(report: &ResidualReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for c in &report.classes {
        for cell in &c.cells {
            w.serialize(CellRow {
                class: c.class,
                group: cell.group,
                proportion: cell.proportion,
                norm_vanilla: cell.norm_v,
                norm_cobra: cell.norm_c,
                bound: cell.bound,
            })
            .map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl ResidualReport {
    /// Class-mean and worst-class values of `max_a ||delta_a||_Q^2` for (vanilla, cobra).
    pub fn maxres_summary(&self) -> [(f64, f64); 2] {
        let n = self.classes.len().max(1) as f64;
        let pick = |f: fn(&ClassResidual) -> f64| {
            let vals: Vec<f64> = self.classes.iter().map(|c| f(c).powi(2)).collect();
            (vals.iter().sum::<f64>() / n, vals.iter().fold(0.0f64, |m, v| m.max(*v)))
        };
        [pick(|c| c.max_v), pick(|c| c.max_c)]
    }
}

/// Mean and worst-class squared maximal residual per mode.
pub fn write_residual_summary_csv(report: &ResidualReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let [van, cob] = report.maxres_summary();
    for (mode, (mean, worst)) in [("vanilla", van), ("cobra", cob)] {
        w.serialize(SummaryRow {
            mode,
            mean_maxres: mean,
            worst_maxres: worst,
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
