use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{gen_gaussian_groups, BiasConfig};
use crate::distill::{dc_class_gradient, init_synthetic, DistillConfig, InitPolicy, Objective};
use crate::nets::{init_network, Architecture, Batch};
use crate::targets::{
    bound_audit, group_balanced_weights, solve_barycenter, sqnorm_iterative, theorem_audit, uniform_mean,
    BarycenterDiscrepancy, BatchPolicy, DiscrepancyKind, PassCounter, QMetric, SolverSettings, TargetMode,
};
use crate::{rng, Result};

fn default_instances() -> usize {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySettings {
    /// Random instances of the residual-inequality and bound audits; solver and gradient
    /// checks use a hundredth of this (at least ten).
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            instances: default_instances(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub violations: usize,
    /// Largest observed error of the check, in its own units.
    pub max_error: f64,
}

impl CheckResult {
    fn new(name: &str, cases: usize, violations: usize, max_error: f64) -> Self {
        CheckResult {
            name: name.into(),
            cases,
            violations,
            max_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }
}

impl std::fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<28} cases {:>7}  violations {:>4}  max error {:.3e}",
                c.name, c.cases, c.violations, c.max_error
            )?;
        }
        write!(f, "violations: {}", self.violations())
    }
}

fn random_phis(seed: u64, tag: &str, index: u64, dim: usize, groups: usize) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, tag, index);
    let scale = 10f64.powf(r.random_range(-1.0..1.0));
    (0..groups)
        .map(|_| (0..dim).map(|_| scale * r.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

fn refs(phis: &[Vec<f64>]) -> Vec<&[f64]> {
    phis.iter().map(Vec::as_slice).collect()
}

fn spread(phis: &[Vec<f64>]) -> f64 {
    let dim = phis[0].len();
    (0..dim)
        .map(|i| {
            let (lo, hi) = phis.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| {
                (l.min(p[i]), h.max(p[i]))
            });
            hi - lo
        })
        .fold(1.0, f64::max)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Runs `case` over `n` indices in parallel; each case yields (violated, error).
fn tally(name: &str, n: usize, case: impl Fn(u64) -> Result<(bool, f64)> + Sync) -> Result<CheckResult> {
    let outcomes: Vec<(bool, f64)> = (0..n as u64).into_par_iter().map(&case).collect::<Result<_>>()?;
    let violations = outcomes.iter().filter(|o| o.0).count();
    let max_error = outcomes.iter().map(|o| o.1).fold(0.0, f64::max);
    Ok(CheckResult::new(name, n, violations, max_error))
}

fn sqnorm_vs_mean(seed: u64, n: usize) -> Result<CheckResult> {
    tally("sqnorm iterative = mean", n, |i| {
        let mut r = rng::stream(seed, "verify-sqnorm-q", i);
        let groups = 2 + (i as usize % 4);
        let dim = 1 + (i as usize % 5);
        let phis = random_phis(seed, "verify-sqnorm", i, dim, groups);
        let q = QMetric::diagonal((0..dim).map(|_| r.random_range(0.1..10.0)).collect())?;
        let sol = sqnorm_iterative(&refs(&phis), &q, &vec![0.0; dim], &SolverSettings::default())?;
        let err = max_abs_diff(&sol.target, &uniform_mean(&refs(&phis))) / spread(&phis);
        Ok((err > 1e-6, err))
    })
}

/// Exact one-dimensional L1 minimum: the objective is piecewise linear, so its minimum is
/// attained at one of the data values.
fn l1_oracle(values: &[f64]) -> f64 {
    values
        .iter()
        .map(|c| values.iter().map(|v| (v - c).abs()).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

fn l1_vs_oracle(seed: u64, n: usize) -> Result<CheckResult> {
    tally("l1 barycenter = oracle", n, |i| {
        let groups = 1 + (i as usize % 6);
        let dim = 1 + (i as usize % 4);
        let phis = random_phis(seed, "verify-l1", i, dim, groups);
        let d = BarycenterDiscrepancy::new(DiscrepancyKind::L1);
        let sol = solve_barycenter(&refs(&phis), &d)?;
        let oracle: f64 = (0..dim)
            .map(|k| l1_oracle(&phis.iter().map(|p| p[k]).collect::<Vec<_>>()))
            .sum::<f64>()
            / groups as f64;
        let err = (d.objective(&refs(&phis), &sol.target)? - oracle).abs() / spread(&phis);
        Ok((err > 1e-9, err))
    })
}

fn l2_vs_grid(seed: u64, n: usize) -> Result<CheckResult> {
    const STEPS: usize = 200;
    tally("l2 barycenter <= grid", n, |i| {
        let groups = 3 + (i as usize % 4);
        let phis = random_phis(seed, "verify-l2", i, 2, groups);
        let d = BarycenterDiscrepancy::new(DiscrepancyKind::L2);
        let sol = solve_barycenter(&refs(&phis), &d)?;
        let got = d.objective(&refs(&phis), &sol.target)?;
        let bounds: Vec<(f64, f64)> = (0..2)
            .map(|k| {
                phis.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| {
                    (l.min(p[k]), h.max(p[k]))
                })
            })
            .collect();
        let mut best = f64::INFINITY;
        for a in 0..=STEPS {
            for b in 0..=STEPS {
                let m = [
                    bounds[0].0 + (bounds[0].1 - bounds[0].0) * a as f64 / STEPS as f64,
                    bounds[1].0 + (bounds[1].1 - bounds[1].0) * b as f64 / STEPS as f64,
                ];
                best = best.min(d.objective(&refs(&phis), &m)?);
            }
        }
        let excess = (got - best).max(0.0) / spread(&phis);
        Ok((excess > 1e-9, excess))
    })
}

fn huber_vs_mean(seed: u64, n: usize) -> Result<CheckResult> {
    tally("huber (large delta) = mean", n, |i| {
        let groups = 2 + (i as usize % 5);
        let dim = 1 + (i as usize % 5);
        let phis = random_phis(seed, "verify-huber", i, dim, groups);
        let d = BarycenterDiscrepancy::huber(1e3 * spread(&phis));
        let sol = solve_barycenter(&refs(&phis), &d)?;
        let err = max_abs_diff(&sol.target, &uniform_mean(&refs(&phis))) / spread(&phis);
        Ok((err > 1e-6, err))
    })
}

fn relative_error(num: f64, exact: f64) -> f64 {
    (num - exact).abs() / num.abs().max(exact.abs()).max(1e-6)
}

/// Central difference of `f` at `h`, falling back to `h / 10` when the first estimate misses.
/// The fallback only matters when the stencil straddles a ReLU kink.
fn fd_ok(f: &dyn Fn(f64) -> f64, exact: f64, h: f64, tol: f64) -> (bool, f64) {
    let err = relative_error((f(h) - f(-h)) / (2.0 * h), exact);
    if err <= tol {
        return (true, err);
    }
    let h = h / 10.0;
    let err2 = relative_error((f(h) - f(-h)) / (2.0 * h), exact);
    (err2 <= tol, err.min(err2))
}

fn net_gradients(seed: u64, n: usize) -> Result<CheckResult> {
    tally("net gradients = differences", n, |i| {
        let mut r = rng::stream(seed, "verify-net", i);
        let dim = r.random_range(1..6);
        let depth = r.random_range(1..3);
        let mut widths = vec![dim];
        for _ in 0..depth {
            widths.push(r.random_range(2..7));
        }
        widths.push(r.random_range(2..5));
        let classes = *widths.last().expect("non-empty");
        let arch = Architecture::new(widths)?;
        let p = init_network(&arch, rng::derive(seed, "verify-net-init", i))?;
        let rows = 3;
        let xs: Vec<f64> = (0..rows * dim).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let ys: Vec<usize> = (0..rows).map(|_| r.random_range(0..classes)).collect();
        let lg = p.loss_and_grads(&Batch::new(&xs, &ys), true)?;
        let gx = lg.input_grads.as_ref().expect("requested");
        let mut bad = false;
        let mut worst: f64 = 0.0;
        for k in 0..p.theta.len() {
            let f = |h: f64| {
                let mut q = p.clone();
                q.theta[k] += h;
                q.loss_and_grads(&Batch::new(&xs, &ys), false)
                    .map(|l| l.loss)
                    .unwrap_or(f64::NAN)
            };
            let (ok, err) = fd_ok(&f, lg.grad[k], 1e-6, 1e-4);
            bad |= !ok;
            worst = worst.max(err);
        }
        for k in 0..xs.len() {
            let f = |h: f64| {
                let mut x = xs.clone();
                x[k] += h;
                p.loss_and_grads(&Batch::new(&x, &ys), false)
                    .map(|l| l.loss)
                    .unwrap_or(f64::NAN)
            };
            let (ok, err) = fd_ok(&f, gx[k], 1e-6, 1e-4);
            bad |= !ok;
            worst = worst.max(err);
        }
        Ok((bad, worst))
    })
}

fn dc_pixel_gradients(seed: u64, n: usize) -> Result<CheckResult> {
    tally("dc pixel gradient = differences", n, |i| {
        let ds = gen_gaussian_groups(&BiasConfig {
            num_classes: 2,
            num_groups: 2,
            dim: 4,
            skew: 0.75,
            separation: 1.0,
            n_per_class: 8,
            seed: rng::derive(seed, "verify-dc-data", i),
            noise_std: 0.5,
        })?;
        let mode = TargetMode::ALL[i as usize % TargetMode::ALL.len()];
        let mut cfg = DistillConfig::new(Objective::Dc, mode);
        cfg.ipc = 1;
        cfg.hidden = vec![5];
        let set = init_synthetic(&ds, 1, InitPolicy::Noise, rng::derive(seed, "verify-dc-init", i))?;
        let params = init_network(&cfg.arch(4, 2)?, rng::derive(seed, "verify-dc-net", i))?;
        let w = group_balanced_weights(&ds);
        let mut pc = PassCounter::default();
        let mut bad = false;
        let mut worst: f64 = 0.0;
        for y in 0..2 {
            let (_, g) = dc_class_gradient(&params, &ds, &set, &cfg, y, BatchPolicy::Full, &w, &mut pc)?;
            for (j, &gj) in g.iter().enumerate() {
                let f = |h: f64| {
                    let mut s = set.clone();
                    s.class_samples_mut(y)[j] += h;
                    let mut c = PassCounter::default();
                    dc_class_gradient(&params, &ds, &s, &cfg, y, BatchPolicy::Full, &w, &mut c)
                        .map(|o| o.0)
                        .unwrap_or(f64::NAN)
                };
                let (ok, err) = fd_ok(&f, gj, 1e-5, 1e-3);
                bad |= !ok;
                worst = worst.max(err);
            }
        }
        Ok((bad, worst))
    })
}

/// Runs every property suite and reports violation counts.
pub fn run_verify(settings: &VerifySettings) -> Result<VerifyReport> {
    let n = settings.instances;
    let small = (n / 100).max(10);
    let seed = settings.seed;
    let mut checks = Vec::new();
    for groups in [2, 3, 5] {
        let a = theorem_audit(n, 4, groups, rng::derive(seed, "verify-theorem", groups as u64))?;
        let name = format!("residual inequality G={groups}");
        checks.push(CheckResult::new(&name, a.instances, a.violations, 0.0));
    }
    for groups in [2, 4] {
        let b = bound_audit(n, 4, groups, rng::derive(seed, "verify-bound", groups as u64))?;
        let name = format!("residual bound G={groups}");
        let expansion_bad = usize::from(b.max_expansion_error > 1e-8);
        checks.push(CheckResult::new(
            &name,
            b.cells,
            b.violations + expansion_bad,
            b.max_expansion_error,
        ));
    }
    checks.push(sqnorm_vs_mean(seed, small)?);
    checks.push(l1_vs_oracle(seed, small)?);
    checks.push(l2_vs_grid(seed, small.min(50))?);
    checks.push(huber_vs_mean(seed, small)?);
    checks.push(net_gradients(seed, small)?);
    checks.push(dc_pixel_gradients(seed, small)?);
    Ok(VerifyReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_verify_run_is_clean() {
        let r = run_verify(&VerifySettings {
            instances: 300,
            seed: 3,
        })
        .unwrap();
        assert!(r.passed(), "{r}");
        assert!(r.to_string().ends_with("violations: 0"));
        assert_eq!(r.checks.len(), 11);
    }

    #[test]
    fn l1_oracle_on_hand_values() {
        assert_eq!(l1_oracle(&[0.0, 1.0, 5.0]), 5.0);
        assert_eq!(l1_oracle(&[2.0]), 0.0);
    }
}
