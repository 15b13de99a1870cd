use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_experiment, ExperimentConfig, ExperimentResult};
use crate::datagen::Generator;
use crate::distill::Objective;
use crate::eval::summarize;
use crate::targets::{theorem_audit, DiscrepancyKind, TargetMode};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Skew,
    Gap,
    Ipc,
    Discrepancy,
    Noise,
    Partial,
    TheoremAudit,
}

impl SweepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepKind::Skew => "skew",
            SweepKind::Gap => "gap",
            SweepKind::Ipc => "ipc",
            SweepKind::Discrepancy => "discrepancy",
            SweepKind::Noise => "noise",
            SweepKind::Partial => "partial",
            SweepKind::TheoremAudit => "theorem-audit",
        }
    }

    /// Grid used when a spec omits one.
    pub fn default_grid(&self) -> Vec<GridValue> {
        let nums = |v: &[f64]| v.iter().map(|x| GridValue::Number(*x)).collect();
        match self {
            SweepKind::Skew => nums(&[0.6, 0.65, 0.7, 0.75, 0.8, 0.85]),
            SweepKind::Gap => nums(&[0.0, 1.0, 2.0, 3.0, 4.0]),
            SweepKind::Ipc => nums(&[1.0, 3.0, 5.0, 10.0]),
            SweepKind::Discrepancy => DiscrepancyKind::ALL
                .iter()
                .map(|k| GridValue::Name(k.as_str().into()))
                .collect(),
            SweepKind::Noise => nums(&[0.0, 0.1, 0.2, 0.3, 0.4]),
            SweepKind::Partial => nums(&[0.1, 0.25, 0.5, 0.75, 1.0]),
            SweepKind::TheoremAudit => nums(&[2.0, 3.0, 4.0, 5.0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridValue {
    Number(f64),
    Name(String),
}

impl std::fmt::Display for GridValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridValue::Number(x) => write!(f, "{x}"),
            GridValue::Name(s) => f.write_str(s),
        }
    }
}

impl GridValue {
    fn number(&self, kind: SweepKind) -> Result<f64> {
        match self {
            GridValue::Number(x) => Ok(*x),
            GridValue::Name(s) => Err(Error::config(format!(
                "{} sweep needs numeric values, got `{s}`",
                kind.as_str()
            ))),
        }
    }

    fn count(&self, kind: SweepKind) -> Result<usize> {
        let x = self.number(kind)?;
        if x < 1.0 || x.fract() != 0.0 {
            return Err(Error::config(format!(
                "{} sweep needs positive integers, got {x}",
                kind.as_str()
            )));
        }
        Ok(x as usize)
    }
}

/// What a gap sweep varies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMechanism {
    /// Group offset scale of the generator.
    #[default]
    Separation,
    /// Image corruption severity of the non-reference groups.
    Corruption,
    /// Semantic offset scale.
    SemanticOffset,
}

fn default_objectives() -> Vec<Objective> {
    vec![Objective::Dm]
}
fn default_modes() -> Vec<TargetMode> {
    vec![TargetMode::Vanilla, TargetMode::FairDd, TargetMode::Cobra]
}
fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_audit_instances() -> usize {
    10_000
}
fn default_audit_dim() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub kind: SweepKind,
    /// Values of the swept knob; the kind's default grid when absent.
    #[serde(default)]
    pub grid: Option<Vec<GridValue>>,
    #[serde(default = "default_objectives")]
    pub objectives: Vec<Objective>,
    #[serde(default = "default_modes")]
    pub modes: Vec<TargetMode>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub base: ExperimentConfig,
    /// Output directory; nothing is written when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub gap_mechanism: GapMechanism,
    /// Instances per grid value of a theorem-audit sweep.
    #[serde(default = "default_audit_instances")]
    pub audit_instances: usize,
    #[serde(default = "default_audit_dim")]
    pub audit_dim: usize,
}

impl SweepSpec {
    pub fn grid(&self) -> Vec<GridValue> {
        self.grid.clone().unwrap_or_else(|| self.kind.default_grid())
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid().is_empty() {
            return Err(Error::config("sweep grid is empty"));
        }
        if self.kind != SweepKind::TheoremAudit {
            if self.objectives.is_empty() || self.modes.is_empty() {
                return Err(Error::config("sweep needs at least one objective and one mode"));
            }
            if self.seeds.is_empty() {
                return Err(Error::config("sweep needs at least one seed"));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers must be at least 1"));
        }
        for v in self.grid() {
            self.apply(&self.base, &v)?;
        }
        Ok(())
    }

    /// Base experiment with the swept knob set to `value`.
    pub fn apply(&self, base: &ExperimentConfig, value: &GridValue) -> Result<ExperimentConfig> {
        let mut c = base.clone();
        let kind = self.kind;
        match kind {
            SweepKind::Skew => c.dataset.bias.skew = value.number(kind)?,
            SweepKind::Gap => {
                let x = value.number(kind)?;
                match self.gap_mechanism {
                    GapMechanism::Separation => c.dataset.bias.separation = x,
                    GapMechanism::SemanticOffset => c.dataset.semantic_offset = Some(x),
                    GapMechanism::Corruption => {
                        if !matches!(c.dataset.generator, Generator::Colored { .. }) {
                            return Err(Error::NotAnImage);
                        }
                        if x < 0.0 || x.fract() != 0.0 || x > 4.0 {
                            return Err(Error::config(format!(
                                "corruption severity must be an integer in 0..=4, got {x}"
                            )));
                        }
                        c.dataset.corruption = Some(x as u8);
                    }
                }
            }
            SweepKind::Ipc => c.distill.ipc = value.count(kind)?,
            SweepKind::Discrepancy => {
                let name = match value {
                    GridValue::Name(s) => s.clone(),
                    GridValue::Number(x) => {
                        return Err(Error::config(format!("discrepancy sweep needs names, got {x}")))
                    }
                };
                c.distill.discrepancy.kind = name.parse()?;
            }
            SweepKind::Noise => c.dataset.label_noise = Some(value.number(kind)?),
            SweepKind::Partial => c.dataset.known_fraction = Some(value.number(kind)?),
            SweepKind::TheoremAudit => {
                value.count(kind)?;
            }
        }
        Ok(c)
    }
}

/// One executed grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub sweep: SweepKind,
    /// Index of the value in the grid; fixes the output order.
    pub value_index: usize,
    pub value: String,
    pub objective: Objective,
    pub mode: TargetMode,
    pub seed: u64,
    pub config: ExperimentConfig,
    #[serde(default)]
    pub result: Option<ExperimentResult>,
    #[serde(default)]
    pub error: Option<String>,
    pub wall_seconds: f64,
}

/// Counts of a theorem-audit grid value (the number of groups).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoremRow {
    pub groups: usize,
    pub instances: usize,
    pub condition_held: usize,
    pub inequality_held: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub records: Vec<RunRecord>,
    pub theorem: Vec<TheoremRow>,
    /// Files written, if an output directory was configured.
    pub files: Vec<PathBuf>,
}

fn run_cells(spec: &SweepSpec) -> Result<Vec<RunRecord>> {
    let grid = spec.grid();
    let mut cells = Vec::new();
    for (vi, v) in grid.iter().enumerate() {
        for &objective in &spec.objectives {
            for &mode in &spec.modes {
                for &seed in &spec.seeds {
                    cells.push((vi, v, objective, mode, seed));
                }
            }
        }
    }
    let mut records: Vec<RunRecord> = cells
        .into_par_iter()
        .map(|(vi, v, objective, mode, seed)| {
            let start = Instant::now();
            let prepared = spec.apply(&spec.base, v).map(|mut c| {
                c.distill.objective = objective;
                c.distill.mode = mode;
                c.with_seed(seed)
            });
            let (config, outcome) = match prepared {
                Ok(c) => {
                    let r = run_experiment(&c);
                    (c, r)
                }
                Err(e) => (spec.base.clone(), Err(e)),
            };
            let (result, error) = match outcome {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            RunRecord {
                sweep: spec.kind,
                value_index: vi,
                value: v.to_string(),
                objective,
                mode,
                seed,
                config,
                result,
                error,
                wall_seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect();
    records.sort_by_key(|r| (r.value_index, r.objective as u8, r.mode, r.seed));
    Ok(records)
}

fn run_theorem(spec: &SweepSpec) -> Result<Vec<TheoremRow>> {
    let seed = spec.seeds.first().copied().unwrap_or(0);
    spec.grid()
        .iter()
        .map(|v| {
            let groups = v.count(spec.kind)?;
            let a = theorem_audit(spec.audit_instances, spec.audit_dim, groups, seed)?;
            Ok(TheoremRow {
                groups,
                instances: a.instances,
                condition_held: a.condition_held,
                inequality_held: a.inequality_held,
                violations: a.violations,
            })
        })
        .collect()
}

/// Executes every (value, objective, mode, seed) cell. Failed cells become records with an
/// error message; the sweep carries on. Output order is sorted by cell key.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutput> {
    spec.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = spec.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let (records, theorem) = pool.install(|| -> Result<_> {
        if spec.kind == SweepKind::TheoremAudit {
            Ok((Vec::new(), run_theorem(spec)?))
        } else {
            Ok((run_cells(spec)?, Vec::new()))
        }
    })?;
    let mut out = SweepOutput {
        records,
        theorem,
        files: Vec::new(),
    };
    if let Some(dir) = &spec.output {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stem = spec.kind.as_str();
        if spec.kind == SweepKind::TheoremAudit {
            let p = dir.join(format!("{stem}.csv"));
            write_audit_sweep_csv(&out.theorem, &p)?;
            out.files.push(p);
        } else {
            let long = dir.join(format!("{stem}_long.csv"));
            let agg = dir.join(format!("{stem}_aggregated.csv"));
            let jsonl = dir.join(format!("{stem}_records.jsonl"));
            write_long_csv(&out.records, &long)?;
            write_aggregated_csv(&out.records, &agg)?;
            write_records_jsonl(&out.records, &jsonl)?;
            out.files.extend([long, agg, jsonl]);
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct LongRow<'a> {
    sweep: &'a str,
    value: &'a str,
    objective: &'a str,
    mode: &'a str,
    seed: u64,
    status: &'a str,
    acc: Option<f64>,
    eodm: Option<f64>,
    eoda: Option<f64>,
    maxres_vanilla: Option<f64>,
    maxres_fairdd: Option<f64>,
    maxres_cobra: Option<f64>,
    aggregate_passes: Option<u64>,
    group_passes: Option<u64>,
    error: &'a str,
}

/// One row per cell: the cell key, the seed-mean metrics of its evaluation, and the
/// class-mean audit values.
pub fn write_long_csv(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in records {
        let res = r.result.as_ref();
        let audit = res.and_then(|x| x.audit.as_ref());
        w.serialize(LongRow {
            sweep: r.sweep.as_str(),
            value: &r.value,
            objective: r.objective.as_str(),
            mode: r.mode.label(),
            seed: r.seed,
            status: if r.error.is_some() { "error" } else { "ok" },
            acc: res.map(|x| x.report.accuracy.mean),
            eodm: res.map(|x| x.report.eod_m.mean),
            eoda: res.map(|x| x.report.eod_a.mean),
            maxres_vanilla: audit.map(|a| a.vanilla.mean),
            maxres_fairdd: audit.map(|a| a.fairdd.mean),
            maxres_cobra: audit.map(|a| a.cobra.mean),
            aggregate_passes: res.map(|x| x.distill.passes.aggregate),
            group_passes: res.map(|x| x.distill.passes.group),
            error: r.error.as_deref().unwrap_or(""),
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Aggregated metrics of one (value, objective, mode) group over its successful seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregatedRow {
    pub sweep: String,
    pub value: String,
    pub objective: String,
    pub mode: String,
    pub seeds_ok: usize,
    pub seeds_failed: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub eodm_mean: f64,
    pub eodm_std: f64,
    pub eoda_mean: f64,
    pub eoda_std: f64,
}

/// Groups records by (value, objective, mode); records must be sorted by cell key.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregatedRow> {
    let mut rows = Vec::new();
    for chunk in records.chunk_by(|a, b| (a.value_index, a.objective, a.mode) == (b.value_index, b.objective, b.mode)) {
        let ok: Vec<&ExperimentResult> = chunk.iter().filter_map(|r| r.result.as_ref()).collect();
        let col = |f: fn(&ExperimentResult) -> f64| summarize(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
        let (acc, eodm, eoda) = if ok.is_empty() {
            let nan = summarize(&[f64::NAN]);
            (nan, nan, nan)
        } else {
            (
                col(|r| r.report.accuracy.mean),
                col(|r| r.report.eod_m.mean),
                col(|r| r.report.eod_a.mean),
            )
        };
        let first = &chunk[0];
        rows.push(AggregatedRow {
            sweep: first.sweep.as_str().into(),
            value: first.value.clone(),
            objective: first.objective.as_str().into(),
            mode: first.mode.label().into(),
            seeds_ok: ok.len(),
            seeds_failed: chunk.len() - ok.len(),
            acc_mean: acc.mean,
            acc_std: acc.std,
            eodm_mean: eodm.mean,
            eodm_std: eodm.std,
            eoda_mean: eoda.mean,
            eoda_std: eoda.std,
        });
    }
    rows
}

/// Mean and sample standard deviation over seeds per (value, objective, mode). Wall times
/// are excluded so reruns produce identical bytes.
pub fn write_aggregated_csv(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for row in aggregate(records) {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Full records, one JSON object per line.
pub fn write_records_jsonl(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn write_audit_sweep_csv(rows: &[TheoremRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::BiasConfig;
    use crate::distill::DistillConfig;
    use crate::eval::EvalSettings;
    use crate::harness::DatasetConfig;
    use crate::nets::OptimizerConfig;

    fn tiny_base() -> ExperimentConfig {
        let mut distill = DistillConfig::new(Objective::Dm, TargetMode::Vanilla);
        distill.ipc = 2;
        distill.iterations = 3;
        distill.hidden = vec![4];
        ExperimentConfig {
            dataset: DatasetConfig {
                test_per_cell: 5,
                ..DatasetConfig::gaussian(BiasConfig {
                    num_classes: 2,
                    num_groups: 2,
                    dim: 4,
                    skew: 0.8,
                    separation: 1.0,
                    n_per_class: 20,
                    seed: 0,
                    noise_std: 0.5,
                })
            },
            distill,
            eval: EvalSettings {
                hidden: vec![4],
                optimizer: OptimizerConfig::full_batch(0.05, 5, 0),
                n_seeds: 1,
            },
            audit: true,
        }
    }

    fn spec() -> SweepSpec {
        SweepSpec {
            kind: SweepKind::Skew,
            grid: Some(vec![GridValue::Number(0.6), GridValue::Number(0.85)]),
            objectives: vec![Objective::Dm, Objective::Dc],
            modes: vec![TargetMode::Vanilla, TargetMode::FairDd, TargetMode::Cobra],
            seeds: vec![0, 1],
            base: tiny_base(),
            output: None,
            workers: Some(2),
            gap_mechanism: GapMechanism::Separation,
            audit_instances: 10,
            audit_dim: 2,
        }
    }

    #[test]
    fn grid_counting_and_order() {
        let out = run_sweep(&spec()).unwrap();
        assert_eq!(out.records.len(), 24);
        assert!(out.records.iter().all(|r| r.error.is_none()));
        let keys: Vec<_> = out
            .records
            .iter()
            .map(|r| (r.value_index, r.objective as u8, r.mode, r.seed))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let agg = aggregate(&out.records);
        assert_eq!(agg.len(), 12);
        let first: Vec<f64> = out.records[..2]
            .iter()
            .map(|r| r.result.as_ref().unwrap().report.eod_m.mean)
            .collect();
        assert_eq!(agg[0].eodm_mean, (first[0] + first[1]) / 2.0);
    }

    #[test]
    fn failed_cells_are_recorded() {
        let mut s = spec();
        s.grid = Some(vec![GridValue::Number(0.6), GridValue::Number(0.2)]);
        s.objectives = vec![Objective::Dm];
        s.modes = vec![TargetMode::Vanilla];
        s.seeds = vec![0];
        let out = run_sweep(&s).unwrap();
        assert_eq!(out.records.len(), 2);
        assert!(out.records[0].error.is_none());
        assert!(out.records[1].error.is_some());
        let agg = aggregate(&out.records);
        assert_eq!(agg[1].seeds_failed, 1);
    }

    #[test]
    fn theorem_sweep_runs_audits() {
        let mut s = spec();
        s.kind = SweepKind::TheoremAudit;
        s.grid = None;
        let out = run_sweep(&s).unwrap();
        assert_eq!(out.theorem.len(), 4);
        assert!(out.theorem.iter().all(|r| r.violations == 0 && r.instances == 10));
    }

    #[test]
    fn bad_grid_values_are_rejected() {
        let mut s = spec();
        s.kind = SweepKind::Ipc;
        s.grid = Some(vec![GridValue::Number(1.5)]);
        assert!(s.validate().is_err());
        s.kind = SweepKind::Discrepancy;
        s.grid = Some(vec![GridValue::Name("wasserstein".into())]);
        assert!(s.validate().is_err());
        s.grid = Some(vec![]);
        assert!(s.validate().is_err());
    }
}
