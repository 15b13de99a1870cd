use serde::{Deserialize, Serialize};

use crate::datagen::GroupedDataset;
use crate::{Error, Result};

/// Correct and total prediction counts per (class, group) cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub correct: Vec<Vec<usize>>,
    pub total: Vec<Vec<usize>>,
}

impl CellCounts {
    pub fn zeros(classes: usize, groups: usize) -> Self {
        CellCounts {
            correct: vec![vec![0; groups]; classes],
            total: vec![vec![0; groups]; classes],
        }
    }

    pub fn record(&mut self, class: usize, group: usize, correct: bool) {
        self.total[class][group] += 1;
        if correct {
            self.correct[class][group] += 1;
        }
    }

    pub fn accuracy(&self) -> f64 {
        let c: usize = self.correct.iter().flatten().sum();
        let t: usize = self.total.iter().flatten().sum();
        100.0 * c as f64 / t as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EodResult {
    /// Largest within-class gap of conditional accuracy, in percent.
    pub eod_m: f64,
    /// Class-average of the within-class gaps, in percent.
    pub eod_a: f64,
    /// `rates[y][a] = Pr(Yhat = y | Y = y, A = a)` in [0, 1].
    pub rates: Vec<Vec<f64>>,
}

/// Equalized-odds gaps from raw counts. Every cell must be non-empty.
pub fn compute_eod(counts: &CellCounts) -> Result<EodResult> {
    let mut rates = Vec::with_capacity(counts.total.len());
    let mut gaps = Vec::with_capacity(counts.total.len());
    for (y, (corr, tot)) in counts.correct.iter().zip(&counts.total).enumerate() {
        let row = corr
            .iter()
            .zip(tot)
            .enumerate()
            .map(|(a, (&c, &t))| {
                if t == 0 {
                    Err(Error::EmptyCell { class: y, group: a })
                } else {
                    Ok(c as f64 / t as f64)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
        gaps.push(if row.len() < 2 { 0.0 } else { hi - lo });
        rates.push(row);
    }
    if gaps.is_empty() {
        return Err(Error::config("no classes to evaluate"));
    }
    let eod_m = 100.0 * gaps.iter().cloned().fold(0.0, f64::max);
    let eod_a = 100.0 * gaps.iter().sum::<f64>() / gaps.len() as f64;
    Ok(EodResult { eod_m, eod_a, rates })
}

/// Tallies predictions on every test sample.
pub fn count_cells(predict: impl Fn(&[f64]) -> Result<usize>, test: &GroupedDataset) -> Result<CellCounts> {
    let mut counts = CellCounts::zeros(test.num_classes, test.num_groups);
    for i in 0..test.len() {
        let y = test.labels[i];
        counts.record(y, test.groups[i], predict(test.sample(i))? == y);
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(counts: &CellCounts) -> (f64, f64) {
        let mut sup = 0.0f64;
        let mut per_class = Vec::new();
        for y in 0..counts.total.len() {
            let g = counts.total[y].len();
            let mut class_sup = 0.0f64;
            for i in 0..g {
                for j in 0..g {
                    let pi = counts.correct[y][i] as f64 / counts.total[y][i] as f64;
                    let pj = counts.correct[y][j] as f64 / counts.total[y][j] as f64;
                    class_sup = class_sup.max((pi - pj).abs());
                }
            }
            sup = sup.max(class_sup);
            per_class.push(class_sup);
        }
        (
            100.0 * sup,
            100.0 * per_class.iter().sum::<f64>() / per_class.len() as f64,
        )
    }

    #[test]
    fn hand_counts() {
        let counts = CellCounts {
            correct: vec![vec![8, 5], vec![10, 10]],
            total: vec![vec![10, 10], vec![10, 10]],
        };
        let r = compute_eod(&counts).unwrap();
        assert!((r.eod_m - 30.0).abs() < 1e-12);
        assert!((r.eod_a - 15.0).abs() < 1e-12);
    }

    #[test]
    fn single_group_has_no_gap() {
        let counts = CellCounts {
            correct: vec![vec![3], vec![1]],
            total: vec![vec![4], vec![9]],
        };
        let r = compute_eod(&counts).unwrap();
        assert_eq!((r.eod_m, r.eod_a), (0.0, 0.0));
    }

    #[test]
    fn empty_cell_is_an_error() {
        let counts = CellCounts {
            correct: vec![vec![3, 0]],
            total: vec![vec![4, 0]],
        };
        assert!(matches!(
            compute_eod(&counts),
            Err(Error::EmptyCell { class: 0, group: 1 })
        ));
    }

    fn table() -> impl Strategy<Value = CellCounts> {
        (1usize..5, 1usize..5).prop_flat_map(|(c, g)| {
            prop::collection::vec(prop::collection::vec((1usize..50, 0usize..50), g), c).prop_map(|rows| {
                let total = rows.iter().map(|r| r.iter().map(|(t, _)| *t).collect()).collect();
                let correct = rows
                    .iter()
                    .map(|r| r.iter().map(|(t, k)| k % (t + 1)).collect())
                    .collect();
                CellCounts { correct, total }
            })
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force_and_orders_gaps(counts in table()) {
            let r = compute_eod(&counts).unwrap();
            let (m, a) = brute(&counts);
            prop_assert_eq!(r.eod_m, m);
            prop_assert_eq!(r.eod_a, a);
            prop_assert!(r.eod_a <= r.eod_m);
        }

        #[test]
        fn group_permutation_is_irrelevant(counts in table()) {
            let mut rev = counts.clone();
            rev.correct.iter_mut().for_each(|r| r.reverse());
            rev.total.iter_mut().for_each(|r| r.reverse());
            let (a, b) = (compute_eod(&counts).unwrap(), compute_eod(&rev).unwrap());
            prop_assert_eq!(a.eod_m, b.eod_m);
            prop_assert_eq!(a.eod_a, b.eod_a);
        }
    }
}
