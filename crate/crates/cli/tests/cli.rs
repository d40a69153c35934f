use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use petbench_core::energy::write_fixture;

const SCHEMA: &str = r#"[
  {"name": "id", "kind": "categorical", "role": "identifying"},
  {"name": "age", "kind": "numeric", "role": "quasi_identifying"},
  {"name": "zip", "kind": "categorical", "role": "quasi_identifying"},
  {"name": "sex", "kind": "categorical", "role": "quasi_identifying"},
  {"name": "hours", "kind": "numeric", "role": "insensitive"},
  {"name": "label", "kind": "categorical", "role": "insensitive", "target": true, "positive": ["yes"]}
]"#;

const HIERARCHIES: &str = r#"{
  "age": {"type": "numeric_bins", "widths": [5, 10, 20]},
  "zip": {"type": "suffix_mask", "token_length": 4},
  "sex": {"type": "taxonomy"}
}"#;

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("id,age,zip,sex,hours,label\n");
        let mut x: u64 = 12345;
        let mut next = |m: u64| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (x >> 33) % m
        };
        for i in 0..240 {
            let age = 18 + next(52);
            let hours = 10 + next(50);
            let zip = format!("10{}{}", next(4), next(10));
            let sex = if next(2) == 0 { "F" } else { "M" };
            let noise = next(20) as f64 / 10.0 - 1.0;
            let score = (age as f64 - 40.0) / 10.0 + (hours as f64 - 35.0) / 10.0 + noise;
            let label = if score > 0.0 { "yes" } else { "no" };
            csv.push_str(&format!("p{i},{age},{zip},{sex},{hours},{label}\n"));
        }
        std::fs::write(dir.path().join("toy.csv"), csv).unwrap();
        std::fs::write(dir.path().join("schema.json"), SCHEMA).unwrap();
        std::fs::write(dir.path().join("hier.json"), HIERARCHIES).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write_config(&self, name: &str, treatments: &str, models: &str) -> PathBuf {
        let text = format!(
            r#"{{
                "treatments": {treatments},
                "models": {models},
                "repetitions": 2,
                "master_seed": 5,
                "data_path": {:?},
                "csv": {{"dialect": "comma", "header": true}},
                "schema": {:?},
                "hierarchies": {:?},
                "output_dir": {:?},
                "meter": {{"idle_seconds": 1}},
                "learners": {{"logreg": {{"epochs": 10}}, "nn": {{"epochs": 2}}}}
            }}"#,
            self.path("toy.csv"),
            self.path("schema.json"),
            self.path("hier.json"),
            self.path("runs"),
        );
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn data_args(&self) -> Vec<String> {
        ["--input", "toy.csv", "--schema", "schema.json"]
            .iter()
            .enumerate()
            .map(|(i, s)| if i % 2 == 1 { self.path(s).display().to_string() } else { (*s).to_owned() })
            .collect()
    }
}

fn petbench(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_petbench"));
    cmd.args(args).env_remove("PET_RAPL_ROOT");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&petbench(&[], &[])), 1);
    assert_eq!(code(&petbench(&["bogus"], &[])), 1);
    assert_eq!(code(&petbench(&["anonymize"], &[])), 1);
    assert_eq!(code(&petbench(&["pareto", "--log", "x", "--scenario", "3"], &[])), 1);
    assert_eq!(code(&petbench(&["report", "--log", "x", "--format", "pdf"], &[])), 1);
    assert_eq!(code(&petbench(&["bench", "--config", "x", "--meter", "magic"], &[])), 1);
    assert_eq!(code(&petbench(&["fetch", "iris"], &[])), 1);
    assert_eq!(code(&petbench(&["--help"], &[])), 0);
}

#[test]
fn runtime_failures_exit_two() {
    let f = Fixture::new();
    let o = petbench(&["report", "--log", f.path("none.jsonl").to_str().unwrap(), "--format", "md"], &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let dir = f.path("empty");
    let o = petbench(&["anonymize", "--k", "3", "--data-dir", dir.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bench_report_pareto_round() {
    let f = Fixture::new();
    let cfg = f.write_config("grid.json", r#"["benchmark", "k=3", "k=10", "synthetic:1"]"#, r#"["knn", "logreg"]"#);
    let cfg = cfg.to_str().unwrap();
    let o = petbench(&["bench", "--config", cfg], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = stdout_json(&o);
    assert_eq!(summary["records"], 4 * 2 * (2 + 2 * 2));
    assert_eq!(summary["error_records"], 0);
    let log = summary["log"].as_str().unwrap().to_owned();

    // same config again is refused without --force
    assert_eq!(code(&petbench(&["bench", "--config", cfg], &[])), 2);
    assert_eq!(code(&petbench(&["bench", "--config", cfg, "--force"], &[])), 0);

    let md = petbench(&["report", "--log", &log, "--format", "markdown"], &[]);
    assert_eq!(code(&md), 0);
    let text = String::from_utf8(md.stdout).unwrap();
    assert!(text.contains("| k=10 |"), "{text}");

    let out = f.path("csv");
    let o = petbench(&["report", "--log", &log, "--format", "csv", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0);
    assert!(out.join("accuracy.csv").exists() && out.join("suppression.csv").exists());

    let json = petbench(&["report", "--log", &log, "--format", "json"], &[]);
    assert_eq!(stdout_json(&json)["deviation"].as_array().unwrap().len(), 8);

    let p = petbench(&["pareto", "--log", &log, "--scenario", "2"], &[]);
    assert_eq!(code(&p), 0);
    let v = stdout_json(&p);
    let points = v["points"].as_array().unwrap();
    assert_eq!(points.len(), 8);
    assert_eq!(points[0]["rank"], 1);
    assert!(points.iter().all(|p| p["on_front"].is_boolean() && p["score"].is_number()));
    assert!(points.iter().any(|p| p["on_front"] == true));
    assert_eq!(v["weights"]["energy"], 1.0);
}

#[test]
fn meter_flag_selects_sysfs() {
    let f = Fixture::new();
    let cfg = f.write_config("one.json", r#"["benchmark"]"#, r#"["logreg"]"#);
    let cfg = cfg.to_str().unwrap();
    let empty = f.path("no-rapl");
    std::fs::create_dir_all(&empty).unwrap();
    let o = petbench(&["bench", "--config", cfg, "--meter", "sysfs"], &[("PET_RAPL_ROOT", &empty)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("simulated"));

    let rapl = f.path("rapl");
    write_fixture(&rapl, 1000, 1000, 1 << 40).unwrap();
    let o = petbench(&["bench", "--config", cfg, "--meter", "sysfs", "--force"], &[("PET_RAPL_ROOT", &rapl)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = stdout_json(&o)["log"].as_str().unwrap().to_owned();
    let first = std::fs::read_to_string(log).unwrap();
    assert!(first.contains("\"powercap\""), "{first}");
}

#[test]
fn data_commands_write_files() {
    let f = Fixture::new();
    let data = f.data_args();
    let data: Vec<&str> = data.iter().map(String::as_str).collect();
    let hier = f.path("hier.json");
    let anon = f.path("out/anon.csv");

    let mut args = vec!["anonymize", "--k", "5", "--hierarchies", hier.to_str().unwrap(), "--out", anon.to_str().unwrap()];
    args.extend(&data);
    let o = petbench(&args, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert!(v["report"]["achieved_min_class_size"].as_u64().unwrap() >= 5);
    assert_eq!(v["report"]["removed_identifying"][0], "id");
    let text = std::fs::read_to_string(&anon).unwrap();
    assert!(text.starts_with("age,zip,sex,hours,label\n"), "{text}");

    let syn = f.path("syn.csv");
    let mut args = vec!["synth", "--seed", "7", "--rows", "100", "--out", syn.to_str().unwrap()];
    args.extend(&data);
    let o = petbench(&args, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["rows"], 100);
    assert_eq!(std::fs::read_to_string(&syn).unwrap().lines().count(), 101);
    // fixed seed, same bytes
    let first = std::fs::read(&syn).unwrap();
    petbench(&args, &[]);
    assert_eq!(std::fs::read(&syn).unwrap(), first);

    let prep = f.path("prep");
    let mut args = vec!["prep", "census_income", "--out", prep.to_str().unwrap()];
    args.extend(&data);
    let o = petbench(&args, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["train_rows"], 160);
    assert_eq!(v["test_rows"], 80);
    assert_eq!(std::fs::read_to_string(prep.join("test.csv")).unwrap().lines().count(), 81);
}
