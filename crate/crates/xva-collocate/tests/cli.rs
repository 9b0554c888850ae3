//! End-to-end checks of the command-line binary: exit codes (0 success,
//! 2 input/config, 3 numerical), flag overrides, and byte-identical reruns.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_xva-collocate"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// A complete miniature run config writing into `out`.
fn write_tiny_config(dir: &Path, out: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        r#"
            seed = 7
            num_paths = 64
            polynomial_order = 3
            difference_orders = [2, 3]
            lambda = 0.01
            eta = 0.02
            horizon = 2.0
            out_dir = "{}"
            {extra}

            [[instruments]]
            maturity = 1.0
            quote = 0.004

            [[instruments]]
            maturity = 3.0
            quote = 0.008

            [[portfolio]]
            direction = "payer"
            notional = 100.0
            maturity = 3.0
            frequency = 2.0
        "#,
        out.display()
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn missing_config_flag_exits_two() {
    let out = run(&["ee"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("--config"),
        "{out:?}"
    );
}

#[test]
fn unreadable_config_exits_two() {
    let out = run(&["ee", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("cannot read config file"),
        "{out:?}"
    );
}

#[test]
fn invalid_field_exits_two_with_the_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path(), &dir.path().join("out"), "shock_size = -1.0");
    let out = run(&["ee", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("shock_size"),
        "{out:?}"
    );
}

#[test]
fn numerical_failure_exits_three() {
    // A payer swap paying 100% fixed is worthless on every path, so the
    // exposure sits below the floor at every date and the relative-error
    // metric is undefined — a numerical failure, not an input error.
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path(), &dir.path().join("out"), "");
    let text = fs::read_to_string(&config)
        .unwrap()
        .replace("notional = 100.0", "notional = 100.0\nfixed_rate = 1.0");
    fs::write(&config, text).unwrap();
    let out = run(&["ee", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("numerical error"),
        "{out:?}"
    );
}

#[test]
fn successful_run_emits_files_and_reruns_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_tiny_config(dir.path(), &out_dir, "");

    let first = run(&["ee", "--config", config.to_str().unwrap()]);
    assert_eq!(first.status.code(), Some(0), "{first:?}");
    let ee = fs::read(out_dir.join("ee.csv")).unwrap();
    let echo = fs::read(out_dir.join("resolved-config.toml")).unwrap();
    assert!(String::from_utf8_lossy(&ee).starts_with("t,EE_exact,EE_approx,rel_err"));

    let second = run(&["ee", "--config", config.to_str().unwrap()]);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(ee, fs::read(out_dir.join("ee.csv")).unwrap());
    assert_eq!(echo, fs::read(out_dir.join("resolved-config.toml")).unwrap());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn seed_and_out_overrides_land_in_the_echo() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config = write_tiny_config(dir.path(), &out_a, "");

    let base = run(&["ee", "--config", config.to_str().unwrap()]);
    assert_eq!(base.status.code(), Some(0));
    let reseeded = run(&[
        "ee",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    assert_eq!(reseeded.status.code(), Some(0), "{reseeded:?}");

    let echo = fs::read_to_string(out_b.join("resolved-config.toml")).unwrap();
    assert!(echo.contains("seed = 99"), "{echo}");
    assert_ne!(
        fs::read(out_a.join("ee.csv")).unwrap(),
        fs::read(out_b.join("ee.csv")).unwrap(),
        "a different seed must change the Monte Carlo results"
    );
}

#[test]
fn thread_cap_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config = write_tiny_config(dir.path(), &out_a, "");

    let one = run(&["ee", "--config", config.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(one.status.code(), Some(0), "{one:?}");
    let four = run(&[
        "ee",
        "--config",
        config.to_str().unwrap(),
        "--threads",
        "4",
        "--out",
        out_b.to_str().unwrap(),
    ]);
    assert_eq!(four.status.code(), Some(0), "{four:?}");
    assert_eq!(
        fs::read(out_a.join("ee.csv")).unwrap(),
        fs::read(out_b.join("ee.csv")).unwrap()
    );
}

#[test]
fn dump_paths_flag_writes_the_path_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_tiny_config(dir.path(), &out_dir, "");
    let out = run(&["ee", "--config", config.to_str().unwrap(), "--dump-paths"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let dump = fs::read_to_string(out_dir.join("paths.csv")).unwrap();
    assert!(dump.starts_with("path_id,date,r,int_r"), "{dump}");
}

#[test]
fn config_experiment_key_substitutes_for_the_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_tiny_config(dir.path(), &out_dir, "experiment = \"bootstrap\"");

    let out = run(&["--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(out_dir.join("curve.csv").is_file());

    let without = write_tiny_config(&dir.path().join("."), &out_dir, "");
    let out = run(&["--config", without.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("no subcommand"),
        "{out:?}"
    );
}

#[test]
fn all_subcommands_are_wired() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_tiny_config(
        dir.path(),
        &out_dir,
        "inner_paths = 16\nhazard_kappa = 0.4\nhazard_level = 0.02\nhazard_vol = 0.05\n\
         hazard_y0 = 0.02\nhazard_rho = 0.5\nlgd = 0.6",
    );
    for (subcommand, file) in [
        ("bootstrap", "curve.csv"),
        ("ee", "ee.csv"),
        ("sens", "sens.csv"),
        ("cva", "cva.csv"),
        ("tables", "kappa.csv"),
    ] {
        let out = run(&[subcommand, "--config", config.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{subcommand}: {out:?}");
        assert!(out_dir.join(file).is_file(), "{subcommand} must write {file}");
    }

    // The Bermudan experiment needs the option-only portfolio.
    let bermudan = fs::read_to_string(&config).unwrap().replace(
        "direction = \"payer\"",
        "direction = \"receiver\"\nexercise_dates = [0.5, 1.0]",
    );
    fs::write(&config, bermudan).unwrap();
    let out = run(&["bermudan", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "bermudan: {out:?}");
    assert!(out_dir.join("bermudan_sens.csv").is_file());
    assert!(out_dir.join("ee_approx.csv").is_file());
    assert!(out_dir.join("nodes").join("option_000.csv").is_file());
}
