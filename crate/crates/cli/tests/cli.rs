use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fairdistill"));
    c.env_remove("FAIRDISTILL_OUT_DIR");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

const GEN: &str = r#"{"bias":{"num_classes":2,"num_groups":2,"dim":4,"skew":0.8,"separation":1.0,"n_per_class":30},"test_per_cell":10}"#;

fn experiment() -> String {
    format!(
        r#"{{"dataset":{GEN},"distill":{{"objective":"dm","ipc":2,"iterations":5,"hidden":[4]}},"eval":{{"hidden":[4],"optimizer":{{"lr":0.05,"epochs":10}},"n_seeds":2}}}}"#
    )
}

#[test]
fn verify_small_run_reports_zero_violations() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("v.json"), r#"{"instances": 200, "seed": 1}"#).unwrap();
    let o = run(&["verify", "--config", "v.json", "--out", "report.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(String::from_utf8_lossy(&o.stdout).lines().any(|l| l == "violations: 0"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["checks"].as_array().unwrap().len() > 5);
}

#[test]
fn gen_distill_eval_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("gen.json"), GEN).unwrap();
    fs::write(
        p.join("distill.json"),
        r#"{"objective":"dm","mode":"cobra","ipc":2,"iterations":5,"hidden":[4]}"#,
    )
    .unwrap();
    fs::write(
        p.join("eval.json"),
        r#"{"hidden":[4],"optimizer":{"lr":0.05,"epochs":10},"n_seeds":3}"#,
    )
    .unwrap();

    let o = run(&["gen", "--config", "gen.json", "--out", "data", "--seed", "7"], p);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(p.join("data/train.json").exists() && p.join("data/test.json").exists());

    let o = run(
        &[
            "distill",
            "--config",
            "distill.json",
            "--data",
            "data/train.json",
            "--out",
            "syn.json",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(p.join("syn.json.meta.json").exists());

    let o = run(
        &[
            "eval",
            "--config",
            "eval.json",
            "--data",
            "syn.json",
            "--test",
            "data/test.json",
            "--out",
            "eval.csv",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let seeds = fs::read_to_string(p.join("eval.csv")).unwrap();
    let lines: Vec<&str> = seeds.lines().collect();
    assert_eq!(lines[0], "dataset,objective,mode,ipc,seed,acc,eodm,eoda");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("test,dm,cobra,2,0,"), "{}", lines[1]);
    let summary = fs::read_to_string(p.join("eval.csv.summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
}

#[test]
fn default_output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("gen.json"), GEN).unwrap();
    let o = bin()
        .args(["gen", "--config", "gen.json"])
        .env("FAIRDISTILL_OUT_DIR", "elsewhere")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(dir.path().join("elsewhere/train.json").exists());
}

#[test]
fn missing_config_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen", "--config", "no_such_config.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("no_such_config.json"));
}

#[test]
fn unknown_subcommand_exits_2_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("Usage"));
}

#[test]
fn schema_violation_exits_2_with_key_path() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.json"),
        r#"{"bias":{"num_classes":2,"num_groups":2,"dim":4,"skew":"high"}}"#,
    )
    .unwrap();
    let o = run(&["gen", "--config", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("bias.skew"), "{}", text(&o));

    fs::write(dir.path().join("extra.json"), r#"{"objective":"dm","colour":1}"#).unwrap();
    fs::write(dir.path().join("x.json"), "{}").unwrap();
    let o = run(&["distill", "--config", "extra.json", "--data", "x.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("colour"), "{}", text(&o));
}

#[test]
fn help_prints_the_config_schema() {
    let dir = tempfile::tempdir().unwrap();
    for (sub, key) in [
        ("gen", "num_groups"),
        ("distill", "objective"),
        ("eval", "n_seeds"),
        ("sweep", "gap_mechanism"),
        ("verify", "instances"),
        ("audit", "objectives"),
    ] {
        let o = run(&[sub, "--help"], dir.path());
        assert_eq!(o.status.code(), Some(0));
        assert!(text(&o).contains(key), "{sub}: {}", text(&o));
    }
}

#[test]
fn sweep_writes_long_and_aggregated_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = format!(
        r#"{{"kind":"skew","grid":[0.6,0.8],"modes":["vanilla","cobra"],"seeds":[0,1],"base":{}}}"#,
        experiment()
    );
    fs::write(dir.path().join("sweep.json"), spec).unwrap();
    let o = run(
        &["sweep", "--config", "sweep.json", "--out", "res", "--workers", "2"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let long = fs::read_to_string(dir.path().join("res/skew_long.csv")).unwrap();
    assert_eq!(long.lines().count(), 1 + 8);
    let agg = fs::read_to_string(dir.path().join("res/skew_aggregated.csv")).unwrap();
    assert_eq!(agg.lines().count(), 1 + 4);

    let o = run(
        &["sweep", "--config", "sweep.json", "--out", "res2", "--workers", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        agg,
        fs::read_to_string(dir.path().join("res2/skew_aggregated.csv")).unwrap()
    );
}

#[test]
fn audit_writes_one_row_per_objective() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("audit.json"),
        format!(r#"{{"base":{},"objectives":["dm","dc"]}}"#, experiment()),
    )
    .unwrap();
    let o = run(&["audit", "--config", "audit.json", "--out", "audit.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let csv = fs::read_to_string(dir.path().join("audit.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "objective,dataset,vanilla,fairdd,cobra");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("dm,gaussian,"));
}
