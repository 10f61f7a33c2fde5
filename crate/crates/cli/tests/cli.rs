use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mabuchi::io::{field_from_bytes, read_path, read_field_csv, PATH_MAGIC};

const SMALL: &str = r#"{"grid": {"N": 16}, "flow": {"steps": 40}}"#;

fn mnpl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mnpl"))
        .args(args)
        .current_dir(dir)
        .env_remove("MNPL_OUT")
        .output()
        .expect("spawn mnpl")
}

fn with_config(json: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), json).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mnpl(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(mnpl(dir.path(), &["--version"]).status.code(), Some(0));
    let o = mnpl(dir.path(), &["verify", "--help"]);
    assert!(stdout(&o).contains("--quick"));
}

#[test]
fn usage_errors_exit_one_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["bogus"],
        vec!["distance", "--from", "zero"],
        vec!["distance", "--from", "sin:1", "--to", "zero"],
        vec!["triangle", "--lambda", "1.5"],
        vec!["verify", "--quick", "--full"],
        vec!["flow", "--from", "file:missing.mnpl"],
    ] {
        let o = mnpl(dir.path(), &args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).contains("config keys"), "{args:?}: no schema");
    }
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn bad_config_lists_every_key_and_the_schema() {
    let dir = with_config(r#"{"grid": {"N": 7}, "flow": {"ds": -1}, "colour": 3}"#);
    let o = mnpl(dir.path(), &["--config", "c.json", "distance", "--from", "zero", "--to", "zero"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for key in ["grid.N", "flow.ds", "colour", "config keys"] {
        assert!(err.contains(key), "missing {key} in:\n{err}");
    }
    assert!(!dir.path().join("mnpl-out").exists());
}

#[test]
fn distance_to_a_constant_shift() {
    let dir = with_config(SMALL);
    let o = mnpl(dir.path(), &["--config", "c.json", "distance", "--from", "zero", "--to", "const:0.3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o);
    let value: f64 = line.split_whitespace().next().unwrap().parse().unwrap();
    assert!((value - 0.3).abs() < 1e-6, "{line}");
    assert!(line.contains('±'));
    assert!(dir.path().join("mnpl-out/distance-seed7.json").exists());
    assert!(dir.path().join("mnpl-out/manifest-distance-seed7.json").exists());
}

#[test]
fn geodesic_output_is_deterministic() {
    let run = || {
        let dir = with_config(SMALL);
        let o = mnpl(
            dir.path(),
            &["--config", "c.json", "geodesic", "--from", "zero", "--to", "cos:0.01", "--seed", "4"],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let out = dir.path().join("mnpl-out");
        (
            fs::read(out.join("geodesic-seed4.json")).unwrap(),
            fs::read(out.join("geodesic-seed4.path")).unwrap(),
            stdout(&o),
        )
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);

    let (_, path_bytes, _) = a;
    assert_eq!(&path_bytes[..PATH_MAGIC.len()], PATH_MAGIC);
    let path = read_path(&path_bytes[..]).unwrap();
    assert_eq!(path.grid().n(), 16);
    assert_eq!(path.eps(), 1e-3);
    assert!(path.slices()[0].values().iter().all(|&v| v == 0.0));
}

#[test]
fn flow_writes_trajectory_and_fields() {
    let dir = with_config(r#"{"grid": {"N": 16}, "flow": {"steps": 40}, "io": {"dump_fields": true}}"#);
    let o = mnpl(dir.path(), &["--config", "c.json", "flow", "--from", "random:3:0.01", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("mnpl-out");
    let csv = fs::read_to_string(out.join("flow-seed3.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "s,k_energy,calabi_energy,min_rho");
    assert_eq!(lines.len(), 1 + 5);
    let calabi: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(calabi.windows(2).all(|w| w[1] <= w[0]));
    let last = field_from_bytes(&fs::read(out.join("flow-seed3-final.mnpl")).unwrap()).unwrap();
    let dumped = field_from_bytes(&fs::read(out.join("flow-seed3-step000040.mnpl")).unwrap()).unwrap();
    assert_eq!(last, dumped);
    assert!(out.join("flow-seed3-step000000.mnpl").exists());
}

#[test]
fn potentials_can_be_read_from_files() {
    let dir = with_config(SMALL);
    let csv: String = (0..16).map(|_| vec!["0.25"; 16].join(",") + "\n").collect();
    fs::write(dir.path().join("c.csv"), &csv).unwrap();
    assert_eq!(read_field_csv(csv.as_bytes()).unwrap().grid().n(), 16);
    let o = mnpl(dir.path(), &["--config", "c.json", "distance", "--from", "file:c.csv", "--to", "zero"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let value: f64 = stdout(&o).split_whitespace().next().unwrap().parse().unwrap();
    assert!((value - 0.25).abs() < 1e-6);

    // grid size must match the configuration
    let o = mnpl(dir.path(), &["distance", "--from", "file:c.csv", "--to", "zero"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failed_checks_exit_two() {
    let dir = with_config(r#"{"grid": {"N": 16}, "experiment": {"tolerances": {"derivative": 1e-14}}}"#);
    let o = mnpl(dir.path(), &["--config", "c.json", "derivcheck", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["pass"], false);
    assert!(dir.path().join("mnpl-out/derivcheck-seed1.json").exists());
}

#[test]
fn inadmissible_endpoints_exit_three() {
    let dir = with_config(SMALL);
    let o = mnpl(dir.path(), &["--config", "c.json", "distance", "--from", "zero", "--to", "cos:0.1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn output_directory_can_be_overridden() {
    let dir = with_config(SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_mnpl"))
        .args(["--config", "c.json", "triangle", "--seed", "2", "--lambda", "0.5"])
        .current_dir(dir.path())
        .env("MNPL_OUT", "elsewhere")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("elsewhere/triangle-seed2.json").exists());
    assert!(!dir.path().join("mnpl-out").exists());
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["inputs"]["lambda"], 0.5);
}

#[test]
fn quick_verification_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = mnpl(dir.path(), &["verify", "--quick"]);
    assert_eq!(o.status.code(), Some(0), "{}\n{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().filter(|l| l.starts_with("criterion")).all(|l| l.contains("PASS")));
    let outcomes: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("mnpl-out/verify-quick.json")).unwrap()).unwrap();
    assert_eq!(outcomes.as_array().unwrap().len(), 3);
}
