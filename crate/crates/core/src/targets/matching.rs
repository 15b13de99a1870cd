use serde::{Deserialize, Serialize};

use super::barycenter::{coordinate_median, uniform_mean, TargetBundle};
use super::stats::{ClassStatistics, SubgroupStatistics};
use super::TargetMode;
use crate::{Error, Result};

/// Distance `D(real, synthetic)` between a real statistic and the synthetic one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchDistance {
    /// `0.5 * ||u - v||^2`.
    #[default]
    Mse,
    /// `||u - v||_1`.
    Mae,
}

impl MatchDistance {
    /// Value of `D(u, v)` and its gradient with respect to `v`.
    pub fn eval(&self, u: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>)> {
        if u.len() != v.len() {
            return Err(Error::Dimension {
                expected: u.len(),
                got: v.len(),
            });
        }
        Ok(match self {
            MatchDistance::Mse => {
                let grad: Vec<f64> = v.iter().zip(u).map(|(b, a)| b - a).collect();
                (0.5 * grad.iter().map(|g| g * g).sum::<f64>(), grad)
            }
            MatchDistance::Mae => {
                let loss = u.iter().zip(v).map(|(a, b)| (a - b).abs()).sum();
                let grad = v.iter().zip(u).map(|(b, a)| sign(b - a)).collect();
                (loss, grad)
            }
        })
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Group-averaged loss `(1/G) sum_a D(phi_a, phi_S)` and its gradient in `phi_S`.
pub fn fairdd_target_loss(class: &ClassStatistics, phi_s: &[f64], distance: MatchDistance) -> Result<(f64, Vec<f64>)> {
    let g = class.cells.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; phi_s.len()];
    for cell in &class.cells {
        let (l, gr) = distance.eval(&cell.phi, phi_s)?;
        loss += l;
        grad.iter_mut().zip(&gr).for_each(|(acc, v)| *acc += v);
    }
    grad.iter_mut().for_each(|v| *v /= g);
    Ok((loss / g, grad))
}

/// A minimizer of the group-averaged loss in `phi_S`: the uniform mean under MSE and the
/// coordinate median under MAE.
pub fn fairdd_stationary_target(stats: &SubgroupStatistics, distance: MatchDistance) -> TargetBundle {
    TargetBundle::from_fn(stats, TargetMode::FairDd, None, |c| {
        let phis = c.phis();
        Ok(match distance {
            MatchDistance::Mse => uniform_mean(&phis),
            MatchDistance::Mae => coordinate_median(&phis),
        })
    })
    .expect("closed forms cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn class(phis: &[Vec<f64>]) -> ClassStatistics {
        let cells = phis
            .iter()
            .enumerate()
            .map(|(a, p)| (a, p.clone(), 1 + 3 * a))
            .collect();
        ClassStatistics::from_counts(0, cells).unwrap()
    }

    #[test]
    fn mse_gradient_vanishes_at_the_uniform_mean() {
        let c = class(&[vec![0.0, 1.0], vec![4.0, -1.0], vec![2.0, 6.0]]);
        let mean = uniform_mean(&c.phis());
        let (_, g) = fairdd_target_loss(&c, &mean, MatchDistance::Mse).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn one_group_reduces_to_the_plain_distance() {
        let c = class(&[vec![1.0, 2.0]]);
        for d in [MatchDistance::Mse, MatchDistance::Mae] {
            let v = [0.5, -1.0];
            assert_eq!(fairdd_target_loss(&c, &v, d).unwrap(), d.eval(&[1.0, 2.0], &v).unwrap());
        }
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(
            phis in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..5),
            v in prop::collection::vec(-3.0f64..3.0, 3),
        ) {
            let c = class(&phis);
            for d in [MatchDistance::Mse, MatchDistance::Mae] {
                let (_, g) = fairdd_target_loss(&c, &v, d).unwrap();
                let h = 1e-6;
                for i in 0..3 {
                    // Skip kinks of the absolute value.
                    if d == MatchDistance::Mae && phis.iter().any(|p| (p[i] - v[i]).abs() < 1e-4) {
                        continue;
                    }
                    let mut up = v.clone();
                    let mut dn = v.clone();
                    up[i] += h;
                    dn[i] -= h;
                    let fd = (fairdd_target_loss(&c, &up, d).unwrap().0 - fairdd_target_loss(&c, &dn, d).unwrap().0) / (2.0 * h);
                    prop_assert!((fd - g[i]).abs() < 1e-6, "{:?} coord {}: {} vs {}", d, i, fd, g[i]);
                }
            }
        }
    }
}
