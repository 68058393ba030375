//! End-to-end runs of the `swlp` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use swlp_cli::config::{ExperimentConfig, Instance, Suites};
use swlp_cli::RunReport;
use swlp_core::heat::{build_heat_system, HeatModel};
use swlp_core::io::{export_system, system_to_json, Extension};
use swlp_core::TimeGrid;
use tempfile::TempDir;

fn small(instance: Instance, out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(instance, out);
    c.grid.steps = 16;
    c.paths = 8;
    c.trials = 2;
    c
}

fn write_config(dir: &Path, name: &str, cfg: &ExperimentConfig) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn swlp(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_swlp"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("SWLP_THREADS", t),
        None => cmd.env_remove("SWLP_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn run_with(command: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![command, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    swlp(&args, None)
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error line");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {text}"))
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn summary(dir: &Path) -> RunReport {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn passing_run_exits_zero_and_writes_report() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "c.json", &small(Instance::Scalar, &out));
    let res = run_with("simulate", &cfg, &[]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let report = summary(&out);
    assert_eq!(report.schema, "swlp-report-v1");
    assert_eq!(report.command, "simulate");
    assert_eq!(report.environment.seed, 20240917);
    assert_eq!(report.environment.config_hash.len(), 64);
    assert!(report.pass);
    assert!(out.join("trajectory.csv").exists() && out.join("moments.csv").exists());
    let header = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(header.starts_with("path,node,time,component,value\n"));
}

#[test]
fn tolerance_failure_exits_one() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    // without dynamics or noise the weak residual vanishes on both grids and the ratio is undefined
    let mut c = small(Instance::Scalar, &out);
    c.model.generator = Some(0.0);
    c.model.b = Some(0.0);
    c.suites = Suites { weak: true, ..Suites::none() };
    let cfg = write_config(tmp.path(), "c.json", &c);
    let res = run_with("verify", &cfg, &[]);
    assert_eq!(res.status.code(), Some(1));
    let report = summary(&out);
    assert!(!report.pass);
    let failed: Vec<_> = report.failures().map(|r| r.name.as_str()).collect();
    assert!(failed.iter().any(|n| n.starts_with("weak-ratio")), "{failed:?}");
    assert!(String::from_utf8_lossy(&res.stdout).contains("FAIL"));
}

#[test]
fn config_errors_exit_two_with_json() {
    let tmp = TempDir::new().unwrap();
    let missing = run_with("verify", &tmp.path().join("absent.json"), &[]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(error_json(&missing)["error"]["kind"], "config");

    let bad = tmp.path().join("bad.json");
    let mut v = serde_json::to_value(small(Instance::Heat, &tmp.path().join("o"))).unwrap();
    v["surprise"] = Value::from(1);
    fs::write(&bad, v.to_string()).unwrap();
    let res = run_with("simulate", &bad, &[]);
    assert_eq!(res.status.code(), Some(2));
    let err = error_json(&res);
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("surprise"));

    let mut c = small(Instance::Heat, &tmp.path().join("o"));
    c.paths = 0;
    let res = run_with("simulate", &write_config(tmp.path(), "zero.json", &c), &[]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn model_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let mut c = small(Instance::Heat, &tmp.path().join("o"));
    c.model.cells = Some(1);
    let res = run_with("simulate", &write_config(tmp.path(), "c.json", &c), &[]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_json(&res)["error"]["kind"], "model");
}

#[test]
fn bad_thread_cap_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &small(Instance::Scalar, &tmp.path().join("o")));
    let res = swlp(&["simulate", "--config", cfg.to_str().unwrap()], Some("zero"));
    assert_eq!(res.status.code(), Some(2));
    assert!(error_json(&res)["error"]["message"].as_str().unwrap().contains("SWLP_THREADS"));
}

#[test]
fn unwritable_output_fails_before_computing() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"").unwrap();
    let mut c = small(Instance::Heat, &blocker.join("out"));
    c.paths = 1_000_000_000;
    c.grid.steps = 1 << 20;
    let res = run_with("wellposed", &write_config(tmp.path(), "c.json", &c), &[]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_json(&res)["error"]["kind"], "config");
}

#[test]
fn single_path_reports_no_standard_error() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let mut c = small(Instance::Scalar, &out);
    c.paths = 1;
    let res = run_with("simulate", &write_config(tmp.path(), "c.json", &c), &[]);
    assert_eq!(res.status.code(), Some(0));
    let moments = fs::read_to_string(out.join("moments.csv")).unwrap();
    let mut lines = moments.lines();
    assert_eq!(lines.next(), Some("node,time,mean_norm_sq,sem"));
    assert!(lines.all(|l| l.ends_with(',')));
    assert!(summary(&out).records.iter().all(|r| r.sem.is_none()));
    assert!(String::from_utf8_lossy(&res.stdout).contains("sem n/a"));
}

#[test]
fn same_seed_reproduces_bytes_and_overrides_apply() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &small(Instance::Schrodinger, &tmp.path().join("unused")));
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    for (d, seed) in dirs.iter().zip(["5", "5", "6"]) {
        let res = run_with("simulate", &cfg, &["--seed", seed, "--out", d.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(0));
    }
    assert!(!tmp.path().join("unused").exists());
    assert_eq!(summary(&dirs[0]).environment.seed, 5);
    let (a, b, c) = (csv_files(&dirs[0]), csv_files(&dirs[1]), csv_files(&dirs[2]));
    assert!(a.contains_key("trajectory.csv"));
    assert_eq!(a, b);
    assert_ne!(a["trajectory.csv"], c["trajectory.csv"]);
    // the hash covers the effective config, output directory included
    assert_ne!(summary(&dirs[0]).environment.config_hash, summary(&dirs[1]).environment.config_hash);
}

#[test]
fn thread_count_does_not_change_data() {
    let tmp = TempDir::new().unwrap();
    let mut c = small(Instance::Heat, &tmp.path().join("unused"));
    c.paths = 130;
    let cfg = write_config(tmp.path(), "c.json", &c);
    let mut files = Vec::new();
    for (k, t) in ["1", "3"].iter().enumerate() {
        let out = tmp.path().join(format!("t{k}"));
        let res = swlp(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], Some(t));
        assert_eq!(res.status.code(), Some(0));
        files.push(csv_files(&out));
    }
    assert_eq!(files[0], files[1]);
}

/// Every pass flag in `records.csv` follows from its value and bounds.
fn recheck_records_csv(dir: &Path) -> usize {
    let mut rdr = csv::Reader::from_path(dir.join("records.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(headers.iter().collect::<Vec<_>>(), ["suite", "name", "value", "sem", "min", "max", "pass"]);
    let mut n = 0;
    for row in rdr.records() {
        let row = row.unwrap();
        let num = |i: usize| row[i].parse::<f64>().ok();
        let value = num(2).unwrap_or(f64::NAN);
        let ok = value.is_finite() && num(4).is_none_or(|lo| value >= lo) && num(5).is_none_or(|hi| value <= hi);
        assert_eq!(ok.to_string(), &row[6], "{row:?}");
        n += 1;
    }
    n
}

#[test]
fn records_are_recomputable_from_csv() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let mut c = small(Instance::Scalar, &out);
    c.paths = 64;
    let res = run_with("verify", &write_config(tmp.path(), "c.json", &c), &[]);
    assert!(res.status.code().is_some_and(|s| s <= 1));
    assert!(recheck_records_csv(&out) >= 10);
    for r in &summary(&out).records {
        assert_eq!(r.pass, r.recheck(), "{}", r.name);
    }
    for f in ["weak.csv", "picard.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn admissibility_curve_file() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let res = run_with("admissibility", &write_config(tmp.path(), "c.json", &small(Instance::Scalar, &out)), &[]);
    assert_eq!(res.status.code(), Some(0));
    let text = fs::read_to_string(out.join("admissibility.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "node,t,control,observation");
    assert_eq!(rows.len(), 17);
    assert!(summary(&out).record("control-monotone").unwrap().pass);
}

#[test]
fn custom_system_document_runs() {
    let tmp = TempDir::new().unwrap();
    let model = HeatModel::uniform(1.0, 8, 0.5, 0.2, TimeGrid::new(1.0, 16).unwrap());
    let doc = export_system(&build_heat_system(&model).unwrap(), None, None, Some(Extension::Heat(model))).unwrap();
    fs::write(tmp.path().join("sys.json"), system_to_json(&doc).unwrap()).unwrap();
    let mut c = small(Instance::CustomJson, Path::new("out"));
    c.model.system = Some("sys.json".into());
    c.suites = Suites { identities: true, picard: true, ..Suites::none() };
    let cfg = write_config(tmp.path(), "c.json", &c);
    for command in ["simulate", "verify", "admissibility"] {
        let res = run_with(command, &cfg, &[]);
        assert_eq!(res.status.code(), Some(0), "{command}: {}", String::from_utf8_lossy(&res.stderr));
        assert_eq!(summary(&tmp.path().join("out")).instance, "custom-json");
    }
}

#[test]
fn broken_system_document_is_reported() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("sys.json"), "{\"schema\": \"swlp-sys-v1\"}").unwrap();
    let mut c = small(Instance::CustomJson, Path::new("out"));
    c.model.system = Some("sys.json".into());
    let res = run_with("simulate", &write_config(tmp.path(), "c.json", &c), &[]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_json(&res)["error"]["kind"], "model");
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["scalar.json", "heat.json", "schrodinger.json"] {
        let cfg = ExperimentConfig::load(&root.join(name)).unwrap();
        cfg.validate().unwrap();
        assert!(cfg.output_dir.is_absolute() || cfg.output_dir.starts_with(&root));
    }
}
