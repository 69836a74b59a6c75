use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use edgecache::experiments::ExperimentConfig;
use tempfile::TempDir;

fn shipped_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/default.toml")
}

fn run(dir: &Path, config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgecache"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(dir)
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn shipped_config_spells_out_the_defaults() {
    let shipped = ExperimentConfig::from_path(&shipped_config()).unwrap();
    let default = ExperimentConfig::default();
    assert_eq!(shipped.population(), default.population());
    let explicit = ExperimentConfig {
        user_types: default.population(),
        ..default
    };
    assert_eq!(shipped, explicit);
    assert_eq!(
        ExperimentConfig::from_toml_str("").unwrap(),
        ExperimentConfig::default()
    );
}

#[test]
fn equilibrium_writes_metrics() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &shipped_config(), &["equilibrium"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(header(&dir.path().join("metrics.csv"))
        .starts_with("value,scheme,total_transmission_cost,cellular_load,eta_1"));
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    assert!(dir.path().join("trajectory.csv").exists());
    assert!(dir.path().join("profile.csv").exists());
}

#[test]
fn sweep_override_writes_one_report() {
    let dir = TempDir::new().unwrap();
    let out = run(
        dir.path(),
        &shipped_config(),
        &[
            "sweep",
            "--parameter",
            "beta",
            "--start",
            "0.5",
            "--stop",
            "1",
            "--step",
            "0.25",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let sweep = fs::read_to_string(dir.path().join("sweep_beta.csv")).unwrap();
    // Header plus three schemes at three points.
    assert_eq!(sweep.lines().count(), 10);
    assert_eq!(
        header(&dir.path().join("reduction_beta.csv")),
        "value,baseline,metric,reduction,converged"
    );
    assert!(!dir.path().join("sweep_psi.csv").exists());
}

#[test]
fn nonconvergence_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "[evolution]\nmax_iterations = 2\n");
    let out = run(dir.path(), &config, &["equilibrium"]);
    assert_eq!(out.status.code(), Some(3));
    // Results are still written.
    assert!(dir.path().join("metrics.csv").exists());
}

#[test]
fn bad_config_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "[catalog]\nfile_count = 0\n");
    let out = run(dir.path(), &config, &["equilibrium"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let config = write_config(dir.path(), "[catalog]\nfiles = 3\n");
    assert_eq!(
        run(dir.path(), &config, &["equilibrium"]).status.code(),
        Some(1)
    );
}

#[test]
fn gamma_scan_lists_each_damping() {
    let dir = TempDir::new().unwrap();
    let out = run(
        dir.path(),
        &shipped_config(),
        &["gamma-scan", "--gammas", "0.8,0.9"],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let scan = fs::read_to_string(dir.path().join("gamma_scan.csv")).unwrap();
    assert_eq!(scan.lines().count(), 3);
}

/// Ten users meeting eight neighbors each: far from the large-population
/// limit, so the closed form is off by about 0.01 on the least-cached file.
fn tiny_population(finite_size_coefficient: f64) -> String {
    format!(
        "sweeps = []\n\
         [catalog]\nfile_count = 4\n\
         [mobility]\npopulation = 10\nmean_neighbors = 8.0\n\
         [[user_types]]\ncount = 10\n\
         [oracle]\ntrials = 20000\n\
         [band]\nabsolute_floor = 0.001\nfinite_size_coefficient = {finite_size_coefficient}\n"
    )
}

#[test]
fn tiny_population_needs_the_finite_size_allowance() {
    let dir = TempDir::new().unwrap();
    let strict = write_config(dir.path(), &tiny_population(0.0));
    let out = run(dir.path(), &strict, &["validate"]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");

    let allowed = write_config(dir.path(), &tiny_population(0.1));
    let out = run(dir.path(), &allowed, &["validate"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert_eq!(
        header(&dir.path().join("validate.csv")),
        "file_id,eta,P_closed,P_hat,P_se,N_closed,N_hat,N_se,trials,seed"
    );
    assert_eq!(
        header(&dir.path().join("validate_loads.csv")),
        "load,closed,empirical,trials,seed"
    );
}

#[test]
fn seed_flag_changes_the_draws() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "sweeps = []\n[oracle]\ntrials = 20\n");
    let read = |seed: &str| {
        let out = run(dir.path(), &config, &["--seed", seed, "validate"]);
        assert!(matches!(out.status.code(), Some(0 | 2)));
        fs::read_to_string(dir.path().join("validate.csv")).unwrap()
    };
    let a = read("1");
    assert_eq!(a, read("1"));
    assert_ne!(a, read("2"));
}
