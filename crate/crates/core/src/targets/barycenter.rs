use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::lbfgs::{self, LbfgsOptions};
use super::metric::QMetric;
use super::stats::{ClassStatistics, SubgroupStatistics};
use super::TargetMode;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscrepancyKind {
    Sqnorm,
    L1,
    L2,
    Linf,
    Cosine,
    Huber,
}

impl DiscrepancyKind {
    pub const ALL: [DiscrepancyKind; 6] = [
        DiscrepancyKind::Sqnorm,
        DiscrepancyKind::L1,
        DiscrepancyKind::L2,
        DiscrepancyKind::Linf,
        DiscrepancyKind::Cosine,
        DiscrepancyKind::Huber,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DiscrepancyKind::Sqnorm => "sqnorm",
            DiscrepancyKind::L1 => "l1",
            DiscrepancyKind::L2 => "l2",
            DiscrepancyKind::Linf => "linf",
            DiscrepancyKind::Cosine => "cosine",
            DiscrepancyKind::Huber => "huber",
        }
    }
}

impl std::str::FromStr for DiscrepancyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DiscrepancyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown discrepancy `{s}`")))
    }
}

fn default_max_iters() -> usize {
    20_000
}
fn default_tol() -> f64 {
    1e-10
}
fn default_restarts() -> usize {
    5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Relative tolerance; iterative solvers scale it by the spread of the statistics.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Starts tried by the non-convex cosine solver (the mean plus seeded perturbations).
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iters: default_max_iters(),
            tol: default_tol(),
            restarts: default_restarts(),
            seed: 0,
        }
    }
}

fn default_delta() -> f64 {
    1.0
}

/// The barycenter discrepancy `d(phi_a, m)` and its solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarycenterDiscrepancy {
    pub kind: DiscrepancyKind,
    /// Diagonal of Q for `sqnorm`; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    /// Huber threshold.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl Default for BarycenterDiscrepancy {
    fn default() -> Self {
        BarycenterDiscrepancy::new(DiscrepancyKind::Sqnorm)
    }
}

impl BarycenterDiscrepancy {
    pub fn new(kind: DiscrepancyKind) -> Self {
        BarycenterDiscrepancy {
            kind,
            q: None,
            delta: default_delta(),
            solver: SolverSettings::default(),
        }
    }

    pub fn huber(delta: f64) -> Self {
        BarycenterDiscrepancy {
            delta,
            ..BarycenterDiscrepancy::new(DiscrepancyKind::Huber)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q.is_some() && self.kind != DiscrepancyKind::Sqnorm {
            return Err(Error::config("q is only meaningful for the sqnorm discrepancy"));
        }
        self.metric()?;
        if self.kind == DiscrepancyKind::Huber && !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::config(format!(
                "huber delta must be positive, got {}",
                self.delta
            )));
        }
        let s = &self.solver;
        if s.max_iters == 0 || !(s.tol > 0.0) || s.restarts == 0 {
            return Err(Error::config("solver needs max_iters >= 1, tol > 0 and restarts >= 1"));
        }
        Ok(())
    }

    pub fn metric(&self) -> Result<QMetric> {
        match &self.q {
            Some(q) => QMetric::diagonal(q.clone()),
            None => Ok(QMetric::identity()),
        }
    }

    /// `(1/G) sum_a d(phi_a, m)`.
    pub fn objective(&self, phis: &[&[f64]], m: &[f64]) -> Result<f64> {
        let q = self.metric()?;
        let g = phis.len() as f64;
        let total: f64 = phis
            .iter()
            .map(|p| match self.kind {
                DiscrepancyKind::Sqnorm => q.norm_sq(&diff(p, m)),
                DiscrepancyKind::L1 => p.iter().zip(m).map(|(a, b)| (a - b).abs()).sum(),
                DiscrepancyKind::L2 => euclid(&diff(p, m)),
                DiscrepancyKind::Linf => p.iter().zip(m).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs())),
                DiscrepancyKind::Cosine => {
                    let (np, nm) = (euclid(p), euclid(m));
                    if np == 0.0 || nm == 0.0 {
                        1.0
                    } else {
                        1.0 - dot(p, m) / (np * nm)
                    }
                }
                DiscrepancyKind::Huber => p.iter().zip(m).map(|(a, b)| huber(a - b, self.delta)).sum(),
            })
            .sum();
        Ok(total / g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterSolution {
    pub target: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn euclid(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn huber(t: f64, delta: f64) -> f64 {
    if t.abs() <= delta {
        0.5 * t * t
    } else {
        delta * t.abs() - 0.5 * delta * delta
    }
}

fn check_phis(phis: &[&[f64]]) -> Result<usize> {
    let first = phis
        .first()
        .ok_or_else(|| Error::config("barycenter of zero statistics"))?;
    let dim = first.len();
    if let Some(p) = phis.iter().find(|p| p.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: p.len(),
        });
    }
    Ok(dim)
}

/// Largest coordinate spread of the statistics, floored at 1; scales solver tolerances.
fn spread(phis: &[&[f64]]) -> f64 {
    let dim = phis[0].len();
    let mut s: f64 = 1.0;
    for i in 0..dim {
        let (lo, hi) = phis.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p[i]), hi.max(p[i]))
        });
        s = s.max(hi - lo);
    }
    s
}

pub fn uniform_mean(phis: &[&[f64]]) -> Vec<f64> {
    let dim = phis.first().map_or(0, |p| p.len());
    let mut m = vec![0.0; dim];
    for p in phis {
        m.iter_mut().zip(p.iter()).for_each(|(acc, v)| *acc += v);
    }
    let g = phis.len() as f64;
    m.iter_mut().for_each(|v| *v /= g);
    m
}

/// Coordinate-wise median; an even count takes the midpoint of the two central values.
pub fn coordinate_median(phis: &[&[f64]]) -> Vec<f64> {
    let dim = phis.first().map_or(0, |p| p.len());
    let g = phis.len();
    let mut col = vec![0.0; g];
    (0..dim)
        .map(|i| {
            col.iter_mut().zip(phis).for_each(|(c, p)| *c = p[i]);
            col.sort_by(|a, b| a.total_cmp(b));
            if g % 2 == 1 {
                col[g / 2]
            } else {
                0.5 * (col[g / 2 - 1] + col[g / 2])
            }
        })
        .collect()
}

/// Geometric median by Weiszfeld iteration, with the Vardi-Zhang correction when an
/// iterate lands on a data point.
pub fn geometric_median(phis: &[&[f64]], settings: &SolverSettings) -> Result<BarycenterSolution> {
    check_phis(phis)?;
    let d = BarycenterDiscrepancy::new(DiscrepancyKind::L2);
    let tol = settings.tol * spread(phis);
    let mut m = uniform_mean(phis);
    let dim = m.len();
    for it in 1..=settings.max_iters {
        let mut num = vec![0.0; dim];
        let mut wsum = 0.0;
        let mut coincident = 0usize;
        for p in phis {
            let r = euclid(&diff(p, &m));
            if r <= 1e-300 {
                coincident += 1;
                continue;
            }
            let w = 1.0 / r;
            wsum += w;
            num.iter_mut().zip(p.iter()).for_each(|(n, v)| *n += w * v);
        }
        if wsum == 0.0 {
            // Every point coincides with the iterate.
            let objective = d.objective(phis, &m)?;
            return Ok(BarycenterSolution {
                target: m,
                objective,
                iterations: it,
            });
        }
        let t: Vec<f64> = num.iter().map(|n| n / wsum).collect();
        let next = if coincident == 0 {
            t
        } else {
            let rvec: Vec<f64> = (0..dim).map(|i| (t[i] - m[i]) * wsum).collect();
            let r = euclid(&rvec);
            let eta = coincident as f64;
            if r <= eta {
                m.clone()
            } else {
                let beta = eta / r;
                (0..dim).map(|i| (1.0 - beta) * t[i] + beta * m[i]).collect()
            }
        };
        let step = euclid(&diff(&next, &m));
        m = next;
        if step <= tol {
            let objective = d.objective(phis, &m)?;
            return Ok(BarycenterSolution {
                target: m,
                objective,
                iterations: it,
            });
        }
    }
    let objective = d.objective(phis, &m)?;
    Err(Error::NotConverged {
        best: m,
        objective,
        iterations: settings.max_iters,
    })
}

fn lbfgs_solve<F>(
    phis: &[&[f64]],
    f: F,
    start: &[f64],
    settings: &SolverSettings,
    kind: DiscrepancyKind,
) -> Result<BarycenterSolution>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let out = lbfgs::minimize(
        f,
        start,
        LbfgsOptions {
            max_iters: settings.max_iters,
            grad_tol: settings.tol * spread(phis),
            memory: 10,
        },
    );
    if !out.x.iter().all(|v| v.is_finite()) || !out.f.is_finite() {
        return Err(Error::NonFinite {
            iteration: out.iterations,
            detail: format!("{} barycenter objective", kind.as_str()),
        });
    }
    if !out.converged {
        return Err(Error::NotConverged {
            best: out.x,
            objective: out.f,
            iterations: out.iterations,
        });
    }
    Ok(BarycenterSolution {
        target: out.x,
        objective: out.f,
        iterations: out.iterations,
    })
}

/// Quasi-Newton minimization of `(1/G) sum_a ||phi_a - m||_Q^2` from `start`.
pub fn sqnorm_iterative(
    phis: &[&[f64]],
    q: &QMetric,
    start: &[f64],
    settings: &SolverSettings,
) -> Result<BarycenterSolution> {
    let dim = check_phis(phis)?;
    q.check_dim(dim)?;
    if start.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: start.len(),
        });
    }
    let g = phis.len() as f64;
    let f = |m: &[f64]| {
        let mut val = 0.0;
        let mut grad = vec![0.0; dim];
        for p in phis {
            for i in 0..dim {
                let r = m[i] - p[i];
                let w = q.weight(i);
                val += w * r * r;
                grad[i] += 2.0 * w * r;
            }
        }
        grad.iter_mut().for_each(|v| *v /= g);
        (val / g, grad)
    };
    lbfgs_solve(phis, f, start, settings, DiscrepancyKind::Sqnorm)
}

fn median_1d(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let g = values.len();
    if g % 2 == 1 {
        values[g / 2]
    } else {
        0.5 * (values[g / 2 - 1] + values[g / 2])
    }
}

/// Subgradient descent with diminishing steps; runs in phases that restart from the best
/// iterate with a halved step radius until the radius reaches the tolerance.
fn linf_barycenter(phis: &[&[f64]], settings: &SolverSettings) -> Result<BarycenterSolution> {
    let dim = phis[0].len();
    let d = BarycenterDiscrepancy::new(DiscrepancyKind::Linf);
    if dim == 1 {
        let mut col: Vec<f64> = phis.iter().map(|p| p[0]).collect();
        let m = vec![median_1d(&mut col)];
        let objective = d.objective(phis, &m)?;
        return Ok(BarycenterSolution {
            target: m,
            objective,
            iterations: 0,
        });
    }
    const PHASE: usize = 200;
    let scale = spread(phis);
    let obj = |m: &[f64]| d.objective(phis, m).expect("identity metric");
    let mut best = uniform_mean(phis);
    let mut best_f = obj(&best);
    let mut radius = 0.5 * scale;
    let mut it = 0;
    let g = phis.len() as f64;
    while it < settings.max_iters {
        if radius <= settings.tol * scale {
            return Ok(BarycenterSolution {
                target: best,
                objective: best_f,
                iterations: it,
            });
        }
        let mut m = best.clone();
        for k in 0..PHASE {
            it += 1;
            let mut sub = vec![0.0; dim];
            for p in phis {
                let (mut arg, mut val) = (0, -1.0);
                for i in 0..dim {
                    let r = (m[i] - p[i]).abs();
                    if r > val {
                        val = r;
                        arg = i;
                    }
                }
                if val > 0.0 {
                    sub[arg] += (m[arg] - p[arg]).signum() / g;
                }
            }
            let norm = euclid(&sub);
            if norm == 0.0 {
                break;
            }
            let step = radius / ((k + 1) as f64).sqrt();
            m.iter_mut().zip(&sub).for_each(|(mi, s)| *mi -= step * s / norm);
            let f = obj(&m);
            if f < best_f {
                best_f = f;
                best.clone_from(&m);
            }
        }
        radius *= 0.5;
    }
    Err(Error::NotConverged {
        best,
        objective: best_f,
        iterations: it,
    })
}

fn cosine_barycenter(phis: &[&[f64]], settings: &SolverSettings) -> Result<BarycenterSolution> {
    let dim = phis[0].len();
    let units: Vec<Vec<f64>> = phis
        .iter()
        .filter_map(|p| {
            let n = euclid(p);
            (n > 0.0).then(|| p.iter().map(|v| v / n).collect())
        })
        .collect();
    if units.is_empty() {
        return Err(Error::config("cosine barycenter of all-zero statistics is undefined"));
    }
    let g = phis.len() as f64;
    let f = |m: &[f64]| {
        let nm = euclid(m);
        let mut val = 0.0;
        let mut grad = vec![0.0; dim];
        if nm == 0.0 {
            return (f64::INFINITY, grad);
        }
        for u in &units {
            let c = dot(u, m) / nm;
            val += 1.0 - c;
            for i in 0..dim {
                grad[i] -= (u[i] - c * m[i] / nm) / nm;
            }
        }
        grad.iter_mut().for_each(|v| *v /= g);
        (val / g + (phis.len() - units.len()) as f64 / g, grad)
    };
    let mean = uniform_mean(phis);
    let mut r = rng::stream(settings.seed, "cosine-restarts", 0);
    let mut best: Option<BarycenterSolution> = None;
    let mut last_err = None;
    for k in 0..settings.restarts {
        let mut start = mean.clone();
        if k > 0 || euclid(&start) == 0.0 {
            let base = euclid(&start).max(1.0);
            start
                .iter_mut()
                .for_each(|v| *v += base * r.sample::<f64, _>(StandardNormal));
        }
        let ns = euclid(&start);
        if ns == 0.0 {
            continue;
        }
        start.iter_mut().for_each(|v| *v /= ns);
        // The objective lives on the unit sphere, so the tolerance is not spread-scaled.
        let out = lbfgs::minimize(
            &f,
            &start,
            LbfgsOptions {
                max_iters: settings.max_iters,
                grad_tol: settings.tol,
                memory: 10,
            },
        );
        let n = euclid(&out.x);
        if !out.f.is_finite() || n == 0.0 {
            continue;
        }
        let target: Vec<f64> = out.x.iter().map(|v| v / n).collect();
        let sol = BarycenterSolution {
            target,
            objective: out.f,
            iterations: out.iterations,
        };
        if !out.converged {
            last_err = Some(sol);
            continue;
        }
        if best.as_ref().is_none_or(|b| sol.objective < b.objective) {
            best = Some(sol);
        }
    }
    match (best, last_err) {
        (Some(b), _) => Ok(b),
        (None, Some(s)) => Err(Error::NotConverged {
            best: s.target,
            objective: s.objective,
            iterations: s.iterations,
        }),
        (None, None) => Err(Error::NonFinite {
            iteration: 0,
            detail: "cosine barycenter".into(),
        }),
    }
}

fn huber_barycenter(phis: &[&[f64]], delta: f64, settings: &SolverSettings) -> Result<BarycenterSolution> {
    let dim = phis[0].len();
    let g = phis.len() as f64;
    let f = |m: &[f64]| {
        let mut val = 0.0;
        let mut grad = vec![0.0; dim];
        for p in phis {
            for i in 0..dim {
                let t = p[i] - m[i];
                val += huber(t, delta);
                grad[i] -= t.clamp(-delta, delta);
            }
        }
        grad.iter_mut().for_each(|v| *v /= g);
        (val / g, grad)
    };
    lbfgs_solve(phis, f, &uniform_mean(phis), settings, DiscrepancyKind::Huber)
}

/// `argmin_m (1/G) sum_a d(phi_a, m)`. A single statistic is returned unchanged. The
/// cosine solver returns a unit-norm representative of its scale-invariant minimizer.
pub fn solve_barycenter(phis: &[&[f64]], d: &BarycenterDiscrepancy) -> Result<BarycenterSolution> {
    d.validate()?;
    let dim = check_phis(phis)?;
    let q = d.metric()?;
    q.check_dim(dim)?;
    if phis.len() == 1 {
        return Ok(BarycenterSolution {
            target: phis[0].to_vec(),
            objective: 0.0,
            iterations: 0,
        });
    }
    let closed = |target: Vec<f64>| -> Result<BarycenterSolution> {
        let objective = d.objective(phis, &target)?;
        Ok(BarycenterSolution {
            target,
            objective,
            iterations: 0,
        })
    };
    match d.kind {
        DiscrepancyKind::Sqnorm => closed(uniform_mean(phis)),
        DiscrepancyKind::L1 => closed(coordinate_median(phis)),
        DiscrepancyKind::L2 => geometric_median(phis, &d.solver),
        DiscrepancyKind::Linf => linf_barycenter(phis, &d.solver),
        DiscrepancyKind::Cosine => cosine_barycenter(phis, &d.solver),
        DiscrepancyKind::Huber => huber_barycenter(phis, d.delta, &d.solver),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTarget {
    pub class: usize,
    pub target: Vec<f64>,
    /// `m_van - m` for this class.
    pub shift: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetBundle {
    pub mode: TargetMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discrepancy: Option<BarycenterDiscrepancy>,
    pub targets: Vec<ClassTarget>,
}

impl TargetBundle {
    pub fn class(&self, class: usize) -> Option<&ClassTarget> {
        self.targets.iter().find(|t| t.class == class)
    }

    pub(crate) fn from_fn(
        stats: &SubgroupStatistics,
        mode: TargetMode,
        discrepancy: Option<BarycenterDiscrepancy>,
        mut f: impl FnMut(&ClassStatistics) -> Result<Vec<f64>>,
    ) -> Result<Self> {
        let targets = stats
            .classes
            .iter()
            .map(|c| {
                let target = f(c)?;
                let van = class_mixture(c);
                let shift = diff(&van, &target);
                Ok(ClassTarget {
                    class: c.class,
                    target,
                    shift,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TargetBundle {
            mode,
            discrepancy,
            targets,
        })
    }
}

pub(crate) fn class_mixture(c: &ClassStatistics) -> Vec<f64> {
    let mut m = vec![0.0; c.dim()];
    for cell in &c.cells {
        m.iter_mut()
            .zip(&cell.phi)
            .for_each(|(acc, v)| *acc += cell.proportion * v);
    }
    m
}

/// Vanilla target: the proportion-weighted mixture of subgroup statistics.
pub fn mixture_target(stats: &SubgroupStatistics) -> TargetBundle {
    TargetBundle::from_fn(stats, TargetMode::Vanilla, None, |c| Ok(class_mixture(c))).expect("mixture cannot fail")
}

/// Reweighted target: the mixture with every present group weighted equally.
pub fn reweight_target(stats: &SubgroupStatistics) -> TargetBundle {
    TargetBundle::from_fn(stats, TargetMode::Reweight, None, |c| Ok(uniform_mean(&c.phis())))
        .expect("uniform mean cannot fail")
}

/// Barycentric target under `d`. Cosine solutions are unit-normalized by the solver and
/// rescaled here to the mean statistic norm so they live on the scale of the data.
pub fn barycenter_target(stats: &SubgroupStatistics, d: &BarycenterDiscrepancy) -> Result<TargetBundle> {
    d.validate()?;
    TargetBundle::from_fn(stats, TargetMode::Cobra, Some(d.clone()), |c| class_barycenter(c, d))
}

/// Barycentric target of one class, on the scale of the data (see [`barycenter_target`]).
pub(crate) fn class_barycenter(c: &ClassStatistics, d: &BarycenterDiscrepancy) -> Result<Vec<f64>> {
    let phis = c.phis();
    let mut m = solve_barycenter(&phis, d)?.target;
    if d.kind == DiscrepancyKind::Cosine && phis.len() > 1 {
        let scale = phis.iter().map(|p| euclid(p)).sum::<f64>() / phis.len() as f64;
        m.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats_1d(phis: &[f64], counts: &[usize]) -> SubgroupStatistics {
        let cells = phis
            .iter()
            .zip(counts)
            .enumerate()
            .map(|(a, (p, n))| (a, vec![*p], *n))
            .collect();
        SubgroupStatistics {
            kind: super::super::StatisticKind::Embedding,
            classes: vec![ClassStatistics::from_counts(0, cells).unwrap()],
        }
    }

    fn solve(kind: DiscrepancyKind, phis: &[Vec<f64>]) -> Vec<f64> {
        let refs: Vec<&[f64]> = phis.iter().map(|p| p.as_slice()).collect();
        solve_barycenter(&refs, &BarycenterDiscrepancy::new(kind))
            .unwrap()
            .target
    }

    #[test]
    fn mixture_examples() {
        let s = stats_1d(&[0.0, 10.0], &[90, 10]);
        assert!((mixture_target(&s).targets[0].target[0] - 1.0).abs() < 1e-12);
        let s = stats_1d(&[3.0], &[7]);
        assert_eq!(mixture_target(&s).targets[0].target, vec![3.0]);
        let two = SubgroupStatistics {
            kind: super::super::StatisticKind::Embedding,
            classes: vec![
                ClassStatistics::from_counts(0, vec![(0, vec![0.0, 0.0], 5), (1, vec![2.0, 0.0], 5)]).unwrap(),
            ],
        };
        assert_eq!(mixture_target(&two).targets[0].target, vec![1.0, 0.0]);
    }

    #[test]
    fn reweight_uses_uniform_weights() {
        let s = stats_1d(&[0.0, 10.0], &[90, 10]);
        let r = reweight_target(&s);
        assert_eq!(r.targets[0].target, vec![5.0]);
        assert_eq!(r.targets[0].shift, vec![-4.0]);
        assert_eq!(reweight_target(&stats_1d(&[3.0], &[7])).targets[0].target, vec![3.0]);
    }

    #[test]
    fn single_group_is_returned_for_every_discrepancy() {
        for kind in DiscrepancyKind::ALL {
            assert_eq!(solve(kind, &[vec![1.5, -2.0]]), vec![1.5, -2.0]);
        }
    }

    #[test]
    fn closed_form_examples() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![4.0, 0.0]];
        assert_eq!(solve(DiscrepancyKind::Sqnorm, &pts), vec![2.0, 0.0]);
        let pts = vec![vec![0.0, 0.0], vec![1.0, 5.0], vec![2.0, 1.0]];
        let m = solve(DiscrepancyKind::L1, &pts);
        assert!((m[0] - 1.0).abs() < 1e-4 && (m[1] - 1.0).abs() < 1e-4);
        assert_eq!(coordinate_median(&[&[1.0][..], &[4.0][..]]), vec![2.5]);
    }

    #[test]
    fn geometric_median_of_an_equilateral_triangle_is_its_centroid() {
        let h = 3f64.sqrt() / 2.0;
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, h]];
        let m = solve(DiscrepancyKind::L2, &pts);
        assert!((m[0] - 0.5).abs() < 1e-3 && (m[1] - h / 3.0).abs() < 1e-3);
    }

    #[test]
    fn geometric_median_can_sit_on_a_data_point() {
        // A heavy vertex: three copies at the origin dominate two far points.
        let pts = vec![
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![5.0, 0.0],
            vec![0.0, 5.0],
        ];
        let m = solve(DiscrepancyKind::L2, &pts);
        assert!(euclid(&m) < 1e-6);
    }

    #[test]
    fn huber_in_the_quadratic_regime_is_the_mean() {
        let pts = [vec![0.0, 1.0], vec![2.0, -1.0], vec![1.0, 3.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let m = solve_barycenter(&refs, &BarycenterDiscrepancy::huber(100.0))
            .unwrap()
            .target;
        let mean = uniform_mean(&refs);
        assert!(m.iter().zip(&mean).all(|(a, b)| (a - b).abs() < 1e-4));
    }

    #[test]
    fn huber_with_small_delta_approaches_the_median() {
        let pts = [vec![0.0], vec![1.0], vec![100.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let m = solve_barycenter(&refs, &BarycenterDiscrepancy::huber(0.01))
            .unwrap()
            .target;
        assert!((m[0] - 1.0).abs() < 0.02);
    }

    #[test]
    fn linf_matches_the_chebyshev_center_of_three_points() {
        // Sum of l-inf distances to (0,0), (2,0), (1,3): optimum found by a dense scan.
        let pts = [vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let d = BarycenterDiscrepancy::new(DiscrepancyKind::Linf);
        let sol = solve_barycenter(&refs, &d).unwrap();
        let mut best = f64::INFINITY;
        for i in 0..=400 {
            for j in 0..=400 {
                let m = [i as f64 * 0.01 - 1.0, j as f64 * 0.01 - 1.0];
                best = best.min(d.objective(&refs, &m).unwrap());
            }
        }
        assert!(sol.objective <= best + 1e-6, "{} vs {best}", sol.objective);
    }

    #[test]
    fn cosine_finds_the_normalized_direction_sum() {
        let pts = vec![vec![1.0, 0.0], vec![0.0, 3.0], vec![2.0, 2.0]];
        let m = solve(DiscrepancyKind::Cosine, &pts);
        let mut oracle = vec![0.0; 2];
        for p in &pts {
            let n = euclid(p);
            oracle.iter_mut().zip(p).for_each(|(o, v)| *o += v / n);
        }
        let n = euclid(&oracle);
        assert!((euclid(&m) - 1.0).abs() < 1e-12);
        for (a, b) in m.iter().zip(&oracle) {
            assert!((a - b / n).abs() < 1e-6);
        }
    }

    #[test]
    fn cosine_objective_is_scale_invariant() {
        let pts = [vec![1.0, 0.2], vec![-0.3, 3.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let d = BarycenterDiscrepancy::new(DiscrepancyKind::Cosine);
        let m = [0.7, -0.4];
        let m3 = [2.1, -1.2];
        assert!((d.objective(&refs, &m).unwrap() - d.objective(&refs, &m3).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn non_convergence_carries_the_best_iterate() {
        let pts = [vec![0.0, 0.0], vec![1.0, 0.0], vec![0.3, 2.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let mut d = BarycenterDiscrepancy::new(DiscrepancyKind::L2);
        d.solver.max_iters = 1;
        match solve_barycenter(&refs, &d) {
            Err(Error::NotConverged {
                best,
                iterations,
                objective,
            }) => {
                assert_eq!(best.len(), 2);
                assert_eq!(iterations, 1);
                assert!(objective.is_finite());
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_discrepancies_are_rejected() {
        assert!(BarycenterDiscrepancy::huber(0.0).validate().is_err());
        let mut d = BarycenterDiscrepancy::new(DiscrepancyKind::Sqnorm);
        d.q = Some(vec![1.0, -1.0]);
        assert!(d.validate().is_err());
        let mut d = BarycenterDiscrepancy::new(DiscrepancyKind::L1);
        d.q = Some(vec![1.0]);
        assert!(d.validate().is_err());
    }

    #[test]
    fn cosine_bundle_is_rescaled_to_the_data() {
        let s = SubgroupStatistics {
            kind: super::super::StatisticKind::Embedding,
            classes: vec![
                ClassStatistics::from_counts(0, vec![(0, vec![4.0, 0.0], 3), (1, vec![0.0, 4.0], 1)]).unwrap(),
            ],
        };
        let b = barycenter_target(&s, &BarycenterDiscrepancy::new(DiscrepancyKind::Cosine)).unwrap();
        assert!((euclid(&b.targets[0].target) - 4.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn sqnorm_iterative_reaches_the_mean(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..6),
            start in prop::collection::vec(-50.0f64..50.0, 3),
            q in prop::collection::vec(0.1f64..10.0, 3),
        ) {
            let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
            let q = QMetric::diagonal(q).unwrap();
            let sol = sqnorm_iterative(&refs, &q, &start, &SolverSettings::default()).unwrap();
            let mean = uniform_mean(&refs);
            for (a, b) in sol.target.iter().zip(&mean) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn l1_solution_minimizes_the_objective_locally(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 2..7),
        ) {
            let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
            let d = BarycenterDiscrepancy::new(DiscrepancyKind::L1);
            let m = solve_barycenter(&refs, &d).unwrap();
            for dx in [-1e-3, 1e-3] {
                for i in 0..2 {
                    let mut p = m.target.clone();
                    p[i] += dx;
                    prop_assert!(d.objective(&refs, &p).unwrap() >= m.objective - 1e-12);
                }
            }
        }
    }
}
