use rand::Rng as _;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::barycenter::{barycenter_target, mixture_target, BarycenterDiscrepancy, DiscrepancyKind};
use super::metric::QMetric;
use super::residual::{residual_geometry, ResidualReport};
use super::stats::{ClassStatistics, StatisticKind, SubgroupStatistics};
use crate::{rng, Result};

const COUNT_SCALE: f64 = 1e6;

/// A random single-class instance: Gaussian statistics with a random scale, proportions from
/// normalized Exp(1) draws (stored as consistent integer counts), and a diagonal Q with
/// entries in [0.1, 10).
pub fn random_instance(seed: u64, index: u64, dim: usize, groups: usize) -> (SubgroupStatistics, QMetric) {
    let mut r = rng::stream(seed, "audit-instance", index);
    let scale = 10f64.powf(r.random_range(-1.0..1.0));
    let raw: Vec<f64> = (0..groups).map(|_| r.sample::<f64, _>(Exp1) + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    let cells = raw
        .iter()
        .enumerate()
        .map(|(a, w)| {
            let phi = (0..dim).map(|_| scale * r.sample::<f64, _>(StandardNormal)).collect();
            let count = ((w / total) * COUNT_SCALE).round().max(1.0) as usize;
            (a, phi, count)
        })
        .collect();
    let q = (0..dim).map(|_| r.random_range(0.1..10.0)).collect();
    let stats = SubgroupStatistics {
        kind: StatisticKind::Embedding,
        classes: vec![ClassStatistics::from_counts(0, cells).expect("positive counts")],
    };
    (stats, QMetric::diagonal(q).expect("positive diagonal"))
}

fn instance_report(stats: &SubgroupStatistics, q: &QMetric) -> Result<ResidualReport> {
    let van = mixture_target(stats);
    let d = BarycenterDiscrepancy {
        q: q.diag().map(<[f64]>::to_vec),
        ..BarycenterDiscrepancy::new(DiscrepancyKind::Sqnorm)
    };
    let cob = barycenter_target(stats, &d)?;
    residual_geometry(stats, &van, &cob, q)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoremAudit {
    pub instances: usize,
    /// Instances satisfying the antipodal condition.
    pub condition_held: usize,
    /// Instances (with the condition) where the worst-case inequality held.
    pub inequality_held: usize,
    /// Instances with the condition where the inequality failed.
    pub violations: usize,
}

/// Checks `max ||delta_c||_Q <= max ||delta_v||_Q + 1e-9` on random instances where the
/// antipodal condition holds; instances without the condition are only counted.
pub fn theorem_audit(n_instances: usize, dim: usize, groups: usize, seed: u64) -> Result<TheoremAudit> {
    let outcomes = (0..n_instances)
        .into_par_iter()
        .map(|i| {
            let (stats, q) = random_instance(seed, i as u64, dim, groups);
            let c = instance_report(&stats, &q)?.classes.remove(0);
            Ok((c.condition, c.inequality_holds()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut audit = TheoremAudit {
        instances: n_instances,
        ..Default::default()
    };
    for (cond, ineq) in outcomes {
        if cond {
            audit.condition_held += 1;
            if ineq {
                audit.inequality_held += 1;
            } else {
                audit.violations += 1;
            }
        }
    }
    Ok(audit)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundAudit {
    pub instances: usize,
    pub cells: usize,
    /// Cells where `||delta_v||_Q > bound + 1e-10`.
    pub violations: usize,
    /// Largest deviation between `delta_v` and its pairwise expansion.
    pub max_expansion_error: f64,
}

/// Checks the pairwise amplification bound and the expansion
/// `phi_a - m_van = sum_{a' != a} pi_a' (phi_a - phi_a')` on random instances.
pub fn bound_audit(n_instances: usize, dim: usize, groups: usize, seed: u64) -> Result<BoundAudit> {
    let outcomes = (0..n_instances)
        .into_par_iter()
        .map(|i| {
            let (stats, q) = random_instance(seed, i as u64, dim, groups);
            let report = instance_report(&stats, &q)?;
            let class = &stats.classes[0];
            let rc = &report.classes[0];
            let mut violations = 0;
            let mut err: f64 = 0.0;
            for (cell, res) in class.cells.iter().zip(&rc.cells) {
                if res.norm_v > res.bound + 1e-10 {
                    violations += 1;
                }
                let mut expansion = vec![0.0; dim];
                for other in class.cells.iter().filter(|o| o.group != cell.group) {
                    for ((e, a), b) in expansion.iter_mut().zip(&cell.phi).zip(&other.phi) {
                        *e += other.proportion * (a - b);
                    }
                }
                for (e, d) in expansion.iter().zip(&res.delta_v) {
                    err = err.max((e - d).abs());
                }
            }
            Ok((class.cells.len(), violations, err))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut audit = BoundAudit {
        instances: n_instances,
        ..Default::default()
    };
    for (cells, v, e) in outcomes {
        audit.cells += cells;
        audit.violations += v;
        audit.max_expansion_error = audit.max_expansion_error.max(e);
    }
    Ok(audit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_have_consistent_proportions() {
        let (s, q) = random_instance(1, 0, 4, 3);
        let c = &s.classes[0];
        let total: usize = c.cells.iter().map(|x| x.count).sum();
        for cell in &c.cells {
            assert_eq!(cell.proportion, cell.count as f64 / total as f64);
        }
        assert!(q.diag().unwrap().iter().all(|w| (0.1..10.0).contains(w)));
    }

    #[test]
    fn uniform_proportions_make_the_targets_coincide() {
        let cells = vec![(0, vec![1.0, -2.0], 5), (1, vec![3.0, 0.5], 5)];
        let s = SubgroupStatistics {
            kind: StatisticKind::Embedding,
            classes: vec![ClassStatistics::from_counts(0, cells).unwrap()],
        };
        let c = instance_report(&s, &QMetric::identity()).unwrap().classes.remove(0);
        assert!(c.shift.iter().all(|v| *v == 0.0));
        assert!(c.condition);
        assert_eq!(c.max_c, c.max_v);
    }

    #[test]
    fn small_audits_are_clean() {
        let t = theorem_audit(300, 3, 3, 5).unwrap();
        assert_eq!(t.violations, 0);
        assert_eq!(t.condition_held, t.inequality_held);
        assert!(t.condition_held > 0 && t.condition_held <= 300);
        let b = bound_audit(300, 3, 4, 5).unwrap();
        assert_eq!(b.violations, 0);
        assert!(b.max_expansion_error < 1e-10);
    }
}
