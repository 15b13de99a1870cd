use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::datagen::GroupedDataset;
use crate::nets::{Batch, NetworkParams};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticKind {
    Embedding,
    Gradient,
}

/// Counts of statistic reductions (one reduction = one pass over a set of real rows).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassCounter {
    /// Whole-class passes (vanilla and reweighted modes).
    pub aggregate: u64,
    /// Per-(class, group) passes (group-averaged and barycentric modes).
    pub group: u64,
}

impl PassCounter {
    pub fn merge(&mut self, other: PassCounter) {
        self.aggregate += other.aggregate;
        self.group += other.group;
    }
}

/// A statistic `phi` averaged over rows of one class.
pub trait StatisticMap: Sync {
    fn kind(&self) -> StatisticKind;
    fn output_dim(&self) -> usize;
    /// Weighted mean of the per-row statistic over `indices` (all labeled `class`).
    fn reduce(&self, ds: &GroupedDataset, indices: &[usize], class: usize, weights: Option<&[f64]>)
        -> Result<Vec<f64>>;
}

fn normalizer(indices: &[usize], weights: Option<&[f64]>) -> f64 {
    match weights {
        Some(w) => indices.iter().map(|&i| w[i]).sum(),
        None => indices.len() as f64,
    }
}

/// Input passthrough; `phi` is the plain mean of the rows.
#[derive(Debug, Clone, Copy)]
pub struct IdentityMap {
    pub dim: usize,
}

impl StatisticMap for IdentityMap {
    fn kind(&self) -> StatisticKind {
        StatisticKind::Embedding
    }
    fn output_dim(&self) -> usize {
        self.dim
    }
    fn reduce(
        &self,
        ds: &GroupedDataset,
        indices: &[usize],
        _class: usize,
        weights: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let mut m = vec![0.0; ds.dim];
        for &i in indices {
            let w = weights.map_or(1.0, |w| w[i]);
            for (acc, v) in m.iter_mut().zip(ds.sample(i)) {
                *acc += w * v;
            }
        }
        let z = normalizer(indices, weights);
        m.iter_mut().for_each(|v| *v /= z);
        Ok(m)
    }
}

/// Mean network embedding.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingMap<'a>(pub &'a NetworkParams);

impl StatisticMap for EmbeddingMap<'_> {
    fn kind(&self) -> StatisticKind {
        StatisticKind::Embedding
    }
    fn output_dim(&self) -> usize {
        self.0.arch.embedding_dim()
    }
    fn reduce(
        &self,
        ds: &GroupedDataset,
        indices: &[usize],
        _class: usize,
        weights: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let mut m = vec![0.0; self.output_dim()];
        for &i in indices {
            let w = weights.map_or(1.0, |w| w[i]);
            let e = self.0.embed(ds.sample(i))?;
            for (acc, v) in m.iter_mut().zip(&e) {
                *acc += w * v;
            }
        }
        let z = normalizer(indices, weights);
        m.iter_mut().for_each(|v| *v /= z);
        Ok(m)
    }
}

/// Flattened parameter gradient of the mean cross-entropy.
#[derive(Debug, Clone, Copy)]
pub struct GradientMap<'a>(pub &'a NetworkParams);

impl StatisticMap for GradientMap<'_> {
    fn kind(&self) -> StatisticKind {
        StatisticKind::Gradient
    }
    fn output_dim(&self) -> usize {
        self.0.theta.len()
    }
    fn reduce(
        &self,
        ds: &GroupedDataset,
        indices: &[usize],
        class: usize,
        weights: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let mut xs = Vec::with_capacity(indices.len() * ds.dim);
        for &i in indices {
            xs.extend_from_slice(ds.sample(i));
        }
        let ys = vec![class; indices.len()];
        let ws: Option<Vec<f64>> = weights.map(|w| indices.iter().map(|&i| w[i]).collect());
        let batch = match &ws {
            Some(w) => Batch::weighted(&xs, &ys, w),
            None => Batch::new(&xs, &ys),
        };
        Ok(self.0.loss_and_grads(&batch, false)?.grad)
    }
}

/// Which rows of a cell enter a reduction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchPolicy {
    #[default]
    Full,
    /// At most `size` rows drawn without replacement, seeded per (class, group).
    Sample { size: usize, seed: u64 },
}

impl BatchPolicy {
    fn pick(&self, indices: Vec<usize>, class: usize, group: Option<usize>) -> Vec<usize> {
        match *self {
            BatchPolicy::Full => indices,
            BatchPolicy::Sample { size, seed } => {
                if indices.len() <= size {
                    return indices;
                }
                // Whole-class draws share the group-0 stream so that a one-group class
                // draws the same rows either way.
                let tag = (class as u64) << 32 | group.unwrap_or(0) as u64;
                let mut r = rng::stream(seed, "stat-batch", tag);
                let mut picked: Vec<usize> = index::sample(&mut r, indices.len(), size)
                    .into_iter()
                    .map(|k| indices[k])
                    .collect();
                picked.sort_unstable();
                picked
            }
        }
    }
}

/// Per-sample weights `n_y / (G_y * n_{a|y})` that give every present group of a class
/// the same total weight; all ones when each class holds a single group.
pub fn group_balanced_weights(ds: &GroupedDataset) -> Vec<f64> {
    let counts = ds.cell_counts();
    let per_class: Vec<(usize, usize)> = counts
        .iter()
        .map(|row| (row.iter().sum(), row.iter().filter(|&&n| n > 0).count()))
        .collect();
    (0..ds.len())
        .map(|i| {
            let (y, a) = (ds.labels[i], ds.groups[i]);
            let (n_y, g_y) = per_class[y];
            if g_y == 1 {
                1.0
            } else {
                n_y as f64 / (g_y * counts[y][a]) as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStatistic {
    pub group: usize,
    pub phi: Vec<f64>,
    pub count: usize,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStatistics {
    pub class: usize,
    pub cells: Vec<CellStatistic>,
}

impl ClassStatistics {
    pub fn dim(&self) -> usize {
        self.cells.first().map_or(0, |c| c.phi.len())
    }

    pub fn phis(&self) -> Vec<&[f64]> {
        self.cells.iter().map(|c| c.phi.as_slice()).collect()
    }

    /// Builds a class from raw `(phi, count)` pairs; proportions come from the counts.
    pub fn from_counts(class: usize, cells: Vec<(usize, Vec<f64>, usize)>) -> Result<Self> {
        let total: usize = cells.iter().map(|c| c.2).sum();
        if cells.is_empty() || total == 0 {
            return Err(Error::EmptyClass(class));
        }
        let dim = cells[0].1.len();
        let mut out = Vec::with_capacity(cells.len());
        for (group, phi, count) in cells {
            if count == 0 {
                return Err(Error::EmptyCell { class, group });
            }
            if phi.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: phi.len(),
                });
            }
            out.push(CellStatistic {
                group,
                phi,
                count,
                proportion: count as f64 / total as f64,
            });
        }
        Ok(ClassStatistics { class, cells: out })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupStatistics {
    pub kind: StatisticKind,
    pub classes: Vec<ClassStatistics>,
}

impl SubgroupStatistics {
    pub fn class(&self, class: usize) -> Option<&ClassStatistics> {
        self.classes.iter().find(|c| c.class == class)
    }
}

/// Per-group statistics of one class: one reduction per present group.
pub fn class_statistics(
    map: &dyn StatisticMap,
    ds: &GroupedDataset,
    class: usize,
    policy: BatchPolicy,
    counter: &mut PassCounter,
) -> Result<ClassStatistics> {
    let class_rows = ds.class_indices(class);
    if class_rows.is_empty() {
        return Err(Error::EmptyClass(class));
    }
    let mut by_group: Vec<Vec<usize>> = vec![Vec::new(); ds.num_groups];
    for &i in &class_rows {
        by_group[ds.groups[i]].push(i);
    }
    let mut cells = Vec::new();
    for (group, rows) in by_group.into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let count = rows.len();
        let picked = policy.pick(rows, class, Some(group));
        let phi = map.reduce(ds, &picked, class, None)?;
        counter.group += 1;
        cells.push((group, phi, count));
    }
    ClassStatistics::from_counts(class, cells)
}

/// Single whole-class reduction, optionally with per-sample weights (indexed by row of `ds`).
pub fn class_aggregate(
    map: &dyn StatisticMap,
    ds: &GroupedDataset,
    class: usize,
    weights: Option<&[f64]>,
    policy: BatchPolicy,
    counter: &mut PassCounter,
) -> Result<Vec<f64>> {
    let rows = ds.class_indices(class);
    if rows.is_empty() {
        return Err(Error::EmptyClass(class));
    }
    let picked = policy.pick(rows, class, None);
    let phi = map.reduce(ds, &picked, class, weights)?;
    counter.aggregate += 1;
    Ok(phi)
}

/// Subgroup statistics of every class under an arbitrary statistic map.
pub fn subgroup_stats_with(
    map: &dyn StatisticMap,
    ds: &GroupedDataset,
    policy: BatchPolicy,
    counter: &mut PassCounter,
) -> Result<SubgroupStatistics> {
    let classes = (0..ds.num_classes)
        .map(|y| class_statistics(map, ds, y, policy, counter))
        .collect::<Result<Vec<_>>>()?;
    Ok(SubgroupStatistics {
        kind: map.kind(),
        classes,
    })
}

/// Subgroup statistics of a frozen network: mean embeddings or mean CE gradients.
pub fn subgroup_stats(
    params: &NetworkParams,
    ds: &GroupedDataset,
    kind: StatisticKind,
    policy: BatchPolicy,
) -> Result<SubgroupStatistics> {
    let mut counter = PassCounter::default();
    match kind {
        StatisticKind::Embedding => subgroup_stats_with(&EmbeddingMap(params), ds, policy, &mut counter),
        StatisticKind::Gradient => subgroup_stats_with(&GradientMap(params), ds, policy, &mut counter),
    }
}
