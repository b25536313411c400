use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fosb_cli::{EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fosb-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(dir: &Path, experiment: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_fosb-em"))
        .arg(experiment)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .env("FOSB_QUIET", "1")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_SPHERE: &str = "experiment = custom\nprecisions = 1\nn_angles = 36\n";

#[test]
fn missing_config_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_fosb-em")).args(["custom", "--config", "/nonexistent/x.cfg"]).output().unwrap();
    assert_eq!(o.status.code(), Some(EXIT_CONFIG), "{}", stderr(&o));
}

#[test]
fn bad_arguments_are_config_errors() {
    let o = Command::new(env!("CARGO_BIN_EXE_fosb-em")).arg("custom").output().unwrap();
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    let o = Command::new(env!("CARGO_BIN_EXE_fosb-em")).args(["sphere", "--config", "x"]).output().unwrap();
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn unknown_key_exits_with_line_number() {
    let dir = scratch("unknown");
    let o = run(&dir, "custom", "experiment = custom\nfrequency = 3\n", &[]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn experiment_mismatch_is_rejected() {
    let dir = scratch("mismatch");
    let o = run(&dir, "kite-uq", SMALL_SPHERE, &[]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(stderr(&o).contains("experiment"), "{}", stderr(&o));
}

#[test]
fn zero_workers_is_rejected() {
    let dir = scratch("workers");
    let o = run(&dir, "custom", SMALL_SPHERE, &["--workers", "0"]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn solver_failure_names_the_stage() {
    let dir = scratch("solver");
    let o = run(&dir, "custom", &format!("{SMALL_SPHERE}tol = 1e-14\nmax_iter = 1\n"), &[]);
    assert_eq!(o.status.code(), Some(EXIT_SOLVER), "{}", stderr(&o));
    assert!(stderr(&o).contains("solve"), "{}", stderr(&o));
    let o = run(&dir, "custom", "experiment = custom\ngeometry = mesh\nmesh_file = /nonexistent.emesh\n", &[]);
    assert_eq!(o.status.code(), Some(EXIT_SOLVER), "{}", stderr(&o));
    assert!(stderr(&o).contains("mesh"), "{}", stderr(&o));
}

#[test]
fn failing_check_exits_only_with_flag() {
    // Far from the asymptotic regime on a coarse kite: the first-order
    // approximation loses to the nominal field at t = 0.5.
    let dir = scratch("check");
    let cfg = "experiment = kite-foa\nprecisions = 2\nn_angles = 90\n";
    let o = run(&dir, "kite-foa", cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    let o = run(&dir, "kite-foa", cfg, &["--check"]);
    assert_eq!(o.status.code(), Some(EXIT_CHECK), "{}", stderr(&o));
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

#[test]
fn outputs_carry_hash_and_version() {
    let dir = scratch("headers");
    let o = run(&dir, "custom", SMALL_SPHERE, &["--workers", "1", "--seed", "17"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cfg = fosb_cli::parse_config_str(&read(&dir, "config.txt")).unwrap();
    assert_eq!(cfg.seed, 17);
    let hash = cfg.hash();
    for name in ["config.txt", "rcs_level0.csv", "rcs_mie.csv", "convergence.csv", "run_summary.txt", "checks.txt"] {
        let text = read(&dir, name);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(format!("# fosb-em {}", env!("CARGO_PKG_VERSION")).as_str()), "{name}");
        assert_eq!(lines.next(), Some(format!("# config-sha256 {hash}").as_str()), "{name}");
    }
    let rcs = read(&dir, "rcs_level0.csv");
    assert_eq!(rcs.lines().find(|l| !l.starts_with('#')), Some("theta,rcs_x,rcs_y,rcs_z"));
    assert_eq!(rcs.lines().filter(|l| !l.starts_with('#')).count(), 37);
}

#[test]
fn serial_runs_are_bitwise_reproducible() {
    let cfg = "experiment = custom\ngeometry = kite\nprecisions = 1, 3\nmodel = kite-rank1\nt = 0.1\nmc_runs = 4\nn_angles = 24\nseed = 5\n";
    let (a, b) = (scratch("repro-a"), scratch("repro-b"));
    for d in [&a, &b] {
        let o = run(d, "custom", cfg, &["--workers", "1"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for name in ["uq_fosb.csv", "uq_monte_carlo.csv", "manifest.txt", "rcs_level1.csv", "checks.txt"] {
        assert_eq!(read(&a, name), read(&b, name), "{name}");
    }
    let uq = read(&a, "uq_fosb.csv");
    let header = uq.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.starts_with("theta,mean_rcs_x,lower_x,upper_x,var_x,"), "{header}");
    let manifest = read(&a, "manifest.txt");
    for key in ["seed = 5", "runs = 4", "t = 0.1", "level 1"] {
        assert!(manifest.contains(key), "{manifest}");
    }
    let summary = read(&a, "run_summary.txt");
    for key in ["n_hat = ", "n_hat_max = ", "efficiency = ", "block (1, 0)", "iterations"] {
        assert!(summary.contains(key), "{summary}");
    }
}
