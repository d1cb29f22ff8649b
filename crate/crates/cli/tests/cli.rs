use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tmcqc"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

#[test]
fn validate_reference_plan_is_feasible() {
    let o = run(&["validate", "--config", config("space_time.toml").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("12 qubits"), "{out}");
    assert!(out.contains("feasible: true"));
}

#[test]
fn validate_names_the_stability_failure() {
    let o = run(&["validate", "--config", config("unstable.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("alpha = 0.6"), "{}", stderr(&o));
}

#[test]
fn validate_refuses_term_explosion() {
    let o = run(&["validate", "--config", config("ceiling.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("exceeds ceiling"));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let p = write_config(dir.path(), "broken.toml", "kind = \"eps_sweep\"\n[problem]\nng = 8\n");
    let o = run(&["validate", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("broken.toml"), "{}", stderr(&o));
    let o = run(&["sweep", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn extrapolation_table_reproduces_reference_values() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("resolution");
    let o = run(&["sweep", "--config", config("resolution.toml").to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = rows(&std::fs::read_to_string(out.join("extrapolation_table.csv")).unwrap());
    let reference = [(8, 3.4e-3, 2.7e-4), (16, 1.9e-3, 6.3e-5), (32, 9.5e-4, 3.5e-5), (64, 4.8e-4, 1.8e-5), (128, 2.4e-4, 9.2e-6)];
    assert_eq!(table.len(), reference.len());
    for (row, (ng, m1, me)) in table.iter().zip(reference) {
        assert_eq!(row[0], ng.to_string());
        let got1: f64 = row[3].parse().unwrap();
        let gote: f64 = row[5].parse().unwrap();
        assert!((got1 / m1 - 1.0).abs() < 0.1, "ng {ng}: {got1}");
        assert!((gote / me - 1.0).abs() < 0.2, "ng {ng}: {gote}");
        assert_eq!(row.last().unwrap(), "ok");
    }
    assert!(out.join("report.json").exists());
}

const SHOTS: &str = r#"
kind = "shot_sweep"
method = "tmcqc2"
seed = 11

[problem]
ng = 8
dt = 1e-3
tau = 4
d = 1.0
c = 1.0

[grid]
shots = [4096, 16384, 65536]
p_noise = [1e-4]
pairs = [[1.0, 0.5]]
repeats = 2
"#;

#[test]
fn same_seed_gives_identical_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "shots.toml", SHOTS);
    let sweep = |out: &str, extra: &[&str]| {
        let out = dir.path().join(out);
        let mut args = vec!["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out.join("mse_vs_shots.csv")).unwrap()
    };
    let a = sweep("a", &["--threads", "1"]);
    let b = sweep("b", &["--threads", "3"]);
    assert_eq!(a, b);
    let c = sweep("c", &["--seed", "12"]);
    assert_ne!(a, c);
    let report = run(&["report", "--out", dir.path().join("a").to_str().unwrap()]);
    assert!(report.status.success());
    assert!(stdout(&report).contains("fit mse_extrapolated vs shots"), "{}", stdout(&report));
}

#[test]
fn failed_grid_points_keep_their_row() {
    let dir = TempDir::new().unwrap();
    let body = config_text("resolution.toml").replace("ng = [8, 16, 32, 64, 128]", "ng = [8, 12]");
    let cfg = write_config(dir.path(), "res.toml", &body);
    let out = dir.path().join("res");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("1 grid point(s) failed"));
    let table = rows(&std::fs::read_to_string(out.join("extrapolation_table.csv")).unwrap());
    assert_eq!(table.len(), 2);
    assert_eq!(table[0].last().unwrap(), "ok");
    assert_eq!(table[1][0], "12");
    assert!(table[1].last().unwrap().contains("power of two"));
}

fn config_text(name: &str) -> String {
    std::fs::read_to_string(config(name)).unwrap()
}

#[test]
fn solve_writes_the_space_time_grid() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("space_time");
    let o = run(&["solve", "--config", config("space_time.toml").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 34);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 33);
}

#[test]
fn truncation_exponent_grows_with_series_length() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("truncation");
    let o = run(&["sweep", "--config", config("truncation.toml").to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let exps: Vec<f64> = report["fits"].as_array().unwrap().iter().map(|f| f["exponent"].as_f64().unwrap()).collect();
    assert_eq!(exps.len(), 6);
    assert!(exps.windows(2).all(|w| w[1] > w[0] + 1.5), "{exps:?}");
    assert!(!out.join("truncation_vs_kappa.csv").exists());
}

#[test]
fn every_bundled_config_parses() {
    for entry in std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")).unwrap() {
        let path = entry.unwrap().path();
        tmcqc_cli::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
