//! `fairdistill` command-line front end.
//!
//! Every subcommand reads a JSON config, applies `--seed` / `--out` overrides and writes
//! its artifacts under the output directory (`--out`, else `$FAIRDISTILL_OUT_DIR`, else
//! `./out`). Exit codes: 0 on success, 1 on a runtime failure or a verify violation,
//! 2 on usage or config errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use fairdistill::datagen::{load_dataset, save_dataset};
use fairdistill::distill::{distill, load_sidecar, save_distilled, DistillConfig, Objective};
use fairdistill::eval::{eval_distilled, write_audit_csv, write_eval_csv, write_seed_csv, EvalKey, EvalSettings};
use fairdistill::harness::{run_experiment, run_sweep, run_verify, ExperimentConfig, SweepSpec, VerifySettings};
use fairdistill::nets::Architecture;

const GEN_SCHEMA: &str = "\
Config (JSON object):
  name              string, optional       dataset label used in reports
  generator         \"gaussian\" | {\"colored\": {\"mode\": \"background\"|\"foreground\", \"pixel_noise\": f64}}
  bias              object, required
    num_classes, num_groups, dim, n_per_class   integers
    skew            f64 in [1/G, 1)        majority-group fraction per class
    separation      f64 >= 0               group offset scale
    seed            u64 (default 0)
    noise_std       f64 (default 0.5)
  test_per_cell     integer (default 50)   balanced test cell size
  corruption        integer 0..=4, optional (image data; groups 1.. are corrupted)
  corruption_params {\"noise_std\": f64 (default 0.1), \"seed\": u64}, optional
  semantic_offset   f64, optional
  label_noise       f64 in [0, 1], optional
  known_fraction    f64 in [0, 1], optional (unknown groups are imputed by k-means)
Writes <out>/train.json and <out>/test.json. --seed overrides bias.seed.";

const DISTILL_SCHEMA: &str = "\
Config (JSON object):
  objective         \"dm\" | \"dc\" | \"mtt\", required
  mode              \"vanilla\" | \"fairdd\" | \"reweight\" | \"cobra\" (default vanilla)
  discrepancy       {\"kind\": \"sqnorm\"|\"l1\"|\"l2\"|\"linf\"|\"cosine\"|\"huber\", \"q\", \"delta\", \"solver\"}
  distance          \"mse\" | \"mae\" (default mse)
  ipc, iterations   integers (defaults 10, 200)
  init              \"real\" | \"noise\" (default real)
  lr                f64 (default 1.0)
  hidden            [integer] (default [32])
  real_batch        integer, optional (full class batches when absent)
  dm, dc, mtt       objective-specific settings objects, optional
  seed              u64
Reads the training split from --data. Writes the synthetic set to --out
(default <out dir>/distilled.json) and its metadata to <file>.meta.json.
--seed overrides seed.";

const EVAL_SCHEMA: &str = "\
Config (JSON object, optional):
  hidden            [integer] (default [32])
  optimizer         {\"lr\", \"epochs\", \"batch_size\", \"momentum\", \"decay\": {\"factor\", \"every\"}, \"seed\"}
  n_seeds           integer (default 10)
Trains n_seeds networks on --data and scores them on --test. Writes one row per
seed to --out (default <out dir>/eval.csv) and the mean/std row to
<file>.summary.csv. --seed overrides optimizer.seed.";

const AUDIT_SCHEMA: &str = "\
Config (JSON object):
  base              experiment object: {\"dataset\": <gen config>, \"distill\": <distill config>,
                    \"eval\": <eval config>, \"audit\": bool}
  objectives        [\"dm\" | \"dc\" | \"mtt\"] (default [\"dm\", \"dc\"])
Runs one experiment per objective and writes the per-mode worst-case residual table
(mean over classes, worst class in parentheses) to --out (default <out dir>/audit.csv).";

const VERIFY_SCHEMA: &str = "\
Config (JSON object, optional):
  instances         integer (default 10000)
  seed              u64 (default 0)
Runs the residual-inequality, bound, solver-oracle and gradient suites. Prints one
line per suite and a final \"violations: N\" line; exits 1 when N > 0. With --out,
also writes the report as JSON.";

const SWEEP_SCHEMA: &str = "\
Config (JSON object):
  kind              \"skew\" | \"gap\" | \"ipc\" | \"discrepancy\" | \"noise\" | \"partial\" | \"theorem-audit\"
  grid              [number | string], optional (kind default grid when absent)
  objectives        [objective] (default [\"dm\"])
  modes             [mode] (default [\"vanilla\", \"fairdd\", \"cobra\"])
  seeds             [u64] (default [0, 1, 2, 3, 4])
  base              experiment object (see `audit --help`)
  output            directory, optional
  workers           integer, optional
  gap_mechanism     \"separation\" | \"corruption\" | \"semantic_offset\" (default separation)
  audit_instances   integer (default 10000), theorem-audit only
  audit_dim         integer (default 4), theorem-audit only
Writes <kind>_long.csv, <kind>_aggregated.csv and <kind>_records.jsonl to the output
directory (--out overrides output). --seed replaces the seed list with that single seed.";

#[derive(Parser)]
#[command(
    name = "fairdistill",
    version,
    about = "Fairness-aware dataset distillation at desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file or directory (see the subcommand help).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Default output directory.
    #[arg(long, env = "FAIRDISTILL_OUT_DIR", default_value = "out", hide_env_values = true)]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a biased training split and a balanced test split.
    #[command(after_long_help = GEN_SCHEMA)]
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Distill a synthetic set from a training split.
    #[command(after_long_help = DISTILL_SCHEMA)]
    Distill {
        #[command(flatten)]
        common: Common,
        /// Training split written by `gen`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Train downstream networks on a synthetic set and report accuracy and EOD.
    #[command(after_long_help = EVAL_SCHEMA)]
    Eval {
        #[command(flatten)]
        common: Common,
        /// Synthetic set written by `distill`.
        #[arg(long)]
        data: PathBuf,
        /// Balanced test split written by `gen`.
        #[arg(long)]
        test: PathBuf,
    },
    /// Worst-case subgroup residual table per objective and mode.
    #[command(after_long_help = AUDIT_SCHEMA)]
    Audit {
        #[command(flatten)]
        common: Common,
    },
    /// Run the randomized property suites.
    #[command(after_long_help = VERIFY_SCHEMA)]
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Run a named sweep.
    #[command(after_long_help = SWEEP_SCHEMA)]
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads (overrides the config).
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn default_audit_objectives() -> Vec<Objective> {
    vec![Objective::Dm, Objective::Dc]
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AuditConfig {
    base: ExperimentConfig,
    #[serde(default = "default_audit_objectives")]
    objectives: Vec<Objective>,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<fairdistill::Error> for Failure {
    fn from(e: fairdistill::Error) -> Self {
        let code = if matches!(e, fairdistill::Error::Config(_)) {
            2
        } else {
            1
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn read_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        Failure::usage(format!("{}: invalid config at `{key}`: {}", path.display(), e.inner()))
    })
}

fn required_config<T: DeserializeOwned>(common: &Common) -> CliResult<T> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Failure::usage("--config is required"))?;
    read_config(path)
}

fn optional_config<T: DeserializeOwned + Default>(common: &Common) -> CliResult<T> {
    common.config.as_deref().map_or_else(|| Ok(T::default()), read_config)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", dir.display()),
    })
}

/// `--out` when given, else `<out dir>/<name>`; parent directories are created.
fn output_file(common: &Common, name: &str) -> CliResult<PathBuf> {
    let path = common.out.clone().unwrap_or_else(|| common.out_dir.join(name));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    Ok(path)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn gen(common: &Common) -> CliResult<()> {
    let mut cfg: fairdistill::harness::DatasetConfig = required_config(common)?;
    if let Some(seed) = common.seed {
        cfg.bias.seed = seed;
    }
    let (train, test) = cfg.prepare()?;
    let dir = common.out.clone().unwrap_or_else(|| common.out_dir.clone());
    create_dir(&dir)?;
    save_dataset(&train, dir.join("train.json"))?;
    save_dataset(&test, dir.join("test.json"))?;
    println!(
        "wrote {} training and {} test samples to {}",
        train.len(),
        test.len(),
        dir.display()
    );
    Ok(())
}

fn run_distill(common: &Common, data: &Path) -> CliResult<()> {
    let mut cfg: DistillConfig = required_config(common)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let train = load_dataset(data)?;
    let outcome = distill(&train, &cfg)?;
    let path = output_file(common, "distilled.json")?;
    let meta = save_distilled(&outcome, &cfg, &path)?;
    for note in &outcome.notes {
        println!("note: {note}");
    }
    let last = outcome.log.last().copied().unwrap_or(f64::NAN);
    println!("final loss {last:.6e}; wrote {} and {}", path.display(), meta.display());
    Ok(())
}

fn eval(common: &Common, data: &Path, test_path: &Path) -> CliResult<()> {
    let mut cfg: EvalSettings = optional_config(common)?;
    if let Some(seed) = common.seed {
        cfg.optimizer.seed = seed;
    }
    let set = load_dataset(data)?;
    let test = load_dataset(test_path)?;
    let arch = Architecture::mlp(set.dim, &cfg.hidden, set.num_classes)?;
    let report = eval_distilled(&set, &test, &arch, &cfg.optimizer, cfg.n_seeds)?;
    let sidecar = load_sidecar(with_suffix(data, ".meta.json")).ok();
    let key = EvalKey {
        dataset: test_path
            .file_stem()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned()),
        objective: sidecar
            .as_ref()
            .map_or("unknown", |s| s.config.objective.as_str())
            .into(),
        mode: sidecar.as_ref().map_or("unknown", |s| s.config.mode.label()).into(),
        ipc: sidecar
            .as_ref()
            .map_or(set.len() / set.num_classes.max(1), |s| s.config.ipc),
    };
    let path = output_file(common, "eval.csv")?;
    let summary = with_suffix(&path, ".summary.csv");
    let rows = [(key, report)];
    write_seed_csv(&rows, &path)?;
    write_eval_csv(&rows, &summary)?;
    let r = &rows[0].1;
    println!(
        "acc {:.2} ± {:.2}  EOD_M {:.2} ± {:.2}  EOD_A {:.2} ± {:.2}",
        r.accuracy.mean, r.accuracy.std, r.eod_m.mean, r.eod_m.std, r.eod_a.mean, r.eod_a.std
    );
    println!("wrote {} and {}", path.display(), summary.display());
    Ok(())
}

fn audit(common: &Common) -> CliResult<()> {
    let mut cfg: AuditConfig = required_config(common)?;
    if cfg.objectives.is_empty() {
        return Err(Failure::usage("audit needs at least one objective"));
    }
    if let Some(seed) = common.seed {
        cfg.base = cfg.base.with_seed(seed);
    }
    cfg.base.audit = true;
    let dataset = cfg.base.dataset.display_name();
    let mut rows = Vec::new();
    for &objective in &cfg.objectives {
        let mut exp = cfg.base.clone();
        exp.distill.objective = objective;
        let result = run_experiment(&exp)?;
        let report = result.audit.ok_or_else(|| Failure {
            code: 1,
            message: "audit missing".into(),
        })?;
        println!(
            "{:<4} vanilla {}  FairDD-analog {}  cobra {}",
            objective.as_str(),
            report.vanilla.cell(),
            report.fairdd.cell(),
            report.cobra.cell()
        );
        rows.push((objective.as_str().to_string(), dataset.clone(), report));
    }
    let path = output_file(common, "audit.csv")?;
    write_audit_csv(&rows, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn verify(common: &Common) -> CliResult<bool> {
    let mut cfg: VerifySettings = optional_config(common)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let report = run_verify(&cfg)?;
    println!("{report}");
    if common.out.is_some() {
        let path = output_file(common, "verify.json")?;
        let text = serde_json::to_string_pretty(&report).map_err(|e| Failure {
            code: 1,
            message: e.to_string(),
        })?;
        std::fs::write(&path, text).map_err(|e| Failure {
            code: 1,
            message: format!("{}: {e}", path.display()),
        })?;
    }
    Ok(report.passed())
}

fn sweep(common: &Common, workers: Option<usize>) -> CliResult<()> {
    let mut spec: SweepSpec = required_config(common)?;
    if let Some(seed) = common.seed {
        spec.seeds = vec![seed];
    }
    if workers.is_some() {
        spec.workers = workers;
    }
    spec.output = Some(
        common
            .out
            .clone()
            .or(spec.output.take())
            .unwrap_or_else(|| common.out_dir.clone()),
    );
    let out = run_sweep(&spec)?;
    let failed = out.records.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} cells ({failed} failed), {} audit rows",
        out.records.len(),
        out.theorem.len()
    );
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<ExitCode> {
    match &cli.command {
        Command::Gen { common } => gen(common)?,
        Command::Distill { common, data } => run_distill(common, data)?,
        Command::Eval { common, data, test } => eval(common, data, test)?,
        Command::Audit { common } => audit(common)?,
        Command::Verify { common } => {
            if !verify(common)? {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Sweep { common, workers } => sweep(common, *workers)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
