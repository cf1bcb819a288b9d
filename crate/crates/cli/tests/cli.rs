use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const QUICK: [&str; 8] = [
    "--set",
    "n=2000",
    "--set",
    "sr.niterations=5",
    "--set",
    "sr.populations=3",
    "--set",
    "sr.ncycles=50",
];

fn symden(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symden"))
        .arg("--threads")
        .arg("1")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = symden(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn with_out<'a>(cmd: &'a str, dir: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd, "--out", dir];
    v.extend_from_slice(&QUICK);
    v.extend_from_slice(extra);
    v
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn staged_commands_reproduce_the_monolithic_front() {
    let tmp = tempfile::tempdir().unwrap();
    let mono = tmp.path().join("mono");
    let staged = tmp.path().join("staged");
    let (mono, staged) = (mono.to_str().unwrap(), staged.to_str().unwrap());
    ok(&with_out("run", mono, &[]));
    for cmd in ["fit-density", "find-support", "run-sr", "validate"] {
        ok(&with_out(cmd, staged, &[]));
    }
    for file in [
        "pareto.csv",
        "pareto.json",
        "training.csv",
        "density_grid.csv",
        "support.json",
        "residual_grid.csv",
        "labels.csv",
    ] {
        let a = fs::read(Path::new(mono).join(file)).unwrap();
        let b = fs::read(Path::new(staged).join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
}

#[test]
fn run_sr_accepts_an_explicit_label_file() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let (a, b) = (a.to_str().unwrap(), b.to_str().unwrap());
    for cmd in ["fit-density", "find-support", "run-sr"] {
        ok(&with_out(cmd, a, &[]));
    }
    fs::create_dir_all(b).unwrap();
    fs::copy(
        Path::new(a).join("support.json"),
        Path::new(b).join("support.json"),
    )
    .unwrap();
    let labels = Path::new(a).join("training.csv");
    ok(&with_out(
        "run-sr",
        b,
        &["--labels", labels.to_str().unwrap()],
    ));
    assert_eq!(
        fs::read(Path::new(a).join("pareto.csv")).unwrap(),
        fs::read(Path::new(b).join("pareto.csv")).unwrap()
    );
}

#[test]
fn gen_data_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    for p in [&a, &b] {
        ok(&[
            "gen-data",
            "rastrigin",
            "--n",
            "50000",
            "--seed",
            "7",
            "--out",
            p.to_str().unwrap(),
        ]);
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 50_001);
    assert!(text.starts_with("x1,x2\n"));
}

#[test]
fn malformed_csv_names_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("bad.csv");
    fs::write(&input, "x1,x2\n0.5,1\n0.25,abc\n").unwrap();
    let out_dir = tmp.path().join("out");
    let set = format!("input={}", input.display());
    let out = symden(&[
        "fit-density",
        "--out",
        out_dir.to_str().unwrap(),
        "--set",
        &set,
    ]);
    assert_eq!(out.status.code(), Some(3));
    let record: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"]["stage"], "input");
    assert_eq!(record["error"]["kind"], "data");
    assert!(record["error"]["message"]
        .as_str()
        .unwrap()
        .contains("line 3"));
    assert_eq!(json(&out_dir.join("error.json")), record);
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let bad_key = symden(&["run", "--out", out, "--set", "sr.nitrations=5"]);
    assert_eq!(bad_key.status.code(), Some(2));
    let hull_4d = symden(&[
        "fit-density",
        "--out",
        out,
        "--set",
        "input=gaussian4d",
        "--set",
        "support.method=hull",
    ]);
    assert_eq!(hull_4d.status.code(), Some(2));
    let both = symden(&[
        "run",
        "--out",
        out,
        "--set",
        "clustering.enabled=true",
        "--set",
        "structure.enabled=true",
    ]);
    assert_eq!(both.status.code(), Some(2));
    let config = tmp.path().join("bad.conf");
    fs::write(&config, "n = 100\nthis line is wrong\n").unwrap();
    let out = symden(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn clustering_run_reports_fronts_per_cluster_and_the_combined_model() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("c");
    ok(&with_out(
        "run",
        dir.to_str().unwrap(),
        &["--set", "clustering.enabled=true"],
    ));
    let pareto = json(&dir.join("pareto.json"));
    let names: Vec<&str> = pareto["parts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["cluster1", "cluster2"]);
    assert!(pareto["combined"]["expression"].is_string());
    let csv = fs::read_to_string(dir.join("pareto.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("combined,")));
    let labels = fs::read_to_string(dir.join("labels.csv")).unwrap();
    let clusters: std::collections::BTreeSet<&str> = labels
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    assert!(clusters.contains("1") && clusters.contains("2"));
    assert_eq!(json(&dir.join("components.json"))["clusters"], 2);
}

#[test]
fn structure_learning_splits_the_4d_gaussian() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("s");
    ok(&with_out(
        "run",
        dir.to_str().unwrap(),
        &[
            "--set",
            "input=gaussian4d",
            "--set",
            "n=10000",
            "--set",
            "structure.enabled=true",
        ],
    ));
    let components = json(&dir.join("components.json"));
    assert_eq!(
        components["components"],
        serde_json::json!([[1, 2], [3, 4]])
    );
    let pareto = json(&dir.join("pareto.json"));
    assert_eq!(pareto["parts"][1]["variables"], serde_json::json!([3, 4]));
}

#[test]
fn manifest_names_the_producer_of_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("m");
    let d = dir.to_str().unwrap();
    ok(&with_out("fit-density", d, &["--set", "seed=11"]));
    ok(&with_out(
        "run",
        d,
        &["--set", "seed=12", "--set", "validation.region.a=-1:1,-1:1"],
    ));
    let manifest = json(&dir.join("run_manifest.json"));
    let stages = manifest["stages"].as_array().unwrap();
    assert_eq!(manifest["format_version"], 1);
    for entry in fs::read_dir(&dir).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name == "run_manifest.json" {
            continue;
        }
        let producer = stages
            .iter()
            .rev()
            .find(|s| {
                s["artifacts"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .any(|a| a == &name[..])
            })
            .unwrap_or_else(|| panic!("{name} has no producer"));
        assert_eq!(producer["config"]["seed"], producer["seed"].to_string());
        assert_eq!(producer["threads"], 1);
    }
    assert!(stages
        .iter()
        .any(|s| s["command"] == "fit-density" && s["seed"] == 11));
    assert!(stages
        .iter()
        .any(|s| s["command"] == "run" && s["seed"] == 12));
}

#[test]
fn report_merges_runs_by_loss_regime() {
    let tmp = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for regime in ["mse", "nll_np"] {
        let dir = tmp.path().join(regime);
        let set = format!("sr.loss={regime}");
        ok(&with_out("run", dir.to_str().unwrap(), &["--set", &set]));
        dirs.push(dir.to_str().unwrap().to_string());
    }
    let out = tmp.path().join("report");
    let mut args = vec!["report", "--out", out.to_str().unwrap()];
    args.extend(dirs.iter().map(String::as_str));
    ok(&args);
    let table = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(
        table.starts_with("regime,part,complexity,mean_log_likelihood,negative,loss,expression\n")
    );
    assert!(table.lines().any(|l| l.starts_with("mse,all,")));
    assert!(table.lines().any(|l| l.starts_with("nll_np,all,")));
    let summary = fs::read_to_string(out.join("report_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn config_file_and_overrides_combine() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.conf");
    let dir = tmp.path().join("out");
    fs::write(
        &config,
        format!(
            "# quick run\ninput = heavy_tailed\nn = 1500\noutput_dir = {}\nsr.niterations = 3\nsr.populations = 2\nseed = 4\n",
            dir.display()
        ),
    )
    .unwrap();
    ok(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "seed=5",
    ]);
    let manifest = json(&dir.join("run_manifest.json"));
    assert_eq!(manifest["stages"][0]["seed"], 5);
    assert_eq!(manifest["stages"][0]["config"]["input"], "heavy_tailed");
}
