use std::path::Path;
use std::process::Command;

use dce::cli::{manifest_path, run_from, EXIT_INPUT, EXIT_OK};
use dce::mnl::EstimationResult;
use tempfile::TempDir;

fn dce(args: &[&str]) -> dce::cli::Outcome {
    run_from(std::iter::once("dce").chain(args.iter().copied()))
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

fn schema_path() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas/drone_delivery_japan.json").display().to_string()
}

fn fixture_path(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name).display().to_string()
}

#[test]
fn design_simulate_estimate_wtp_pipeline() {
    let dir = TempDir::new().unwrap();
    let design = path(&dir, "design.csv");
    let out = dce(&["design", "--schema", &schema_path(), "--runs", "64", "--blocks", "8", "--seed", "7", "-o", &design]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let text = std::fs::read_to_string(&design).unwrap();
    assert_eq!(text.lines().count(), 65);
    assert!(Path::new(&path(&dir, "design.diagnostics.json")).exists());
    assert!(manifest_path(Path::new(&design)).exists());

    let choices = path(&dir, "choices.csv");
    let out = dce(&[
        "simulate", "--design", &design, "--params", &fixture_path("table4_mmnl.json"), "--n", "528", "--seed", "11",
        "-o", &choices,
    ]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    assert_eq!(std::fs::read_to_string(&choices).unwrap().lines().count(), 528 * 8 * 3 + 1);

    let mnl = path(&dir, "mnl.json");
    let out = dce(&["estimate", "mnl", "--data", &choices, "--schema", &schema_path(), "-o", &mnl]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let result = EstimationResult::from_json(&std::fs::read_to_string(&mnl).unwrap()).unwrap();
    assert!((result.ll_null + 4224.0 * 3f64.ln()).abs() < 1e-6);
    assert!(out.stdout.contains("delivery_cost_drone[480]"));

    let mmnl = path(&dir, "mmnl.json");
    let out = dce(&["estimate", "mmnl", "--data", &choices, "--draws", "100", "--random", "asc_drone,asc_truck", "-o", &mmnl]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let mixed = EstimationResult::from_json(&std::fs::read_to_string(&mmnl).unwrap()).unwrap();
    let sds: Vec<f64> = ["sd_asc_drone", "sd_asc_truck"].iter().map(|n| mixed.get(n).unwrap()).collect();
    assert!(sds.iter().all(|&s| s > 0.0));
    let manifest = std::fs::read_to_string(manifest_path(Path::new(&mmnl))).unwrap();
    assert!(manifest.contains(&dce::cli::digest(std::fs::read(&choices).unwrap().as_slice())));

    let out = dce(&["postest", "wtp", "--result", &mmnl]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    assert!(out.stdout.contains("delivery_date_drone"));

    let out = dce(&["postest", "lr", "--restricted", &mnl, "--result", &mmnl]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    assert!(out.stdout.contains("df 2"));
}

#[test]
fn design_is_byte_identical_on_rerun() {
    let dir = TempDir::new().unwrap();
    let a = path(&dir, "a.csv");
    let b = path(&dir, "b.csv");
    for p in [&a, &b] {
        assert_eq!(dce(&["design", "--runs", "64", "--blocks", "8", "--seed", "3", "--iters", "300", "-o", p]).code, EXIT_OK);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn blocks_that_do_not_divide_runs_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dce(&["design", "--runs", "63", "--blocks", "8", "-o", &path(&dir, "d.csv")]);
    assert_eq!(out.code, EXIT_INPUT);
    assert!(out.stderr.contains("blocks must divide runs"));
}

#[test]
fn invalid_schema_exits_2_with_report() {
    let dir = TempDir::new().unwrap();
    let bad = path(&dir, "bad.json");
    std::fs::write(&bad, r#"{"alternatives":[{"id":"a"}],"attributes":[]}"#).unwrap();
    let out = dce(&["design", "--schema", &bad, "-o", &path(&dir, "d.csv")]);
    assert_eq!(out.code, EXIT_INPUT);
    assert!(out.stderr.contains("invalid schema"), "{}", out.stderr);
}

#[test]
fn simulate_rejects_zero_respondents_and_varies_with_seed() {
    let dir = TempDir::new().unwrap();
    let design = path(&dir, "design.csv");
    assert_eq!(dce(&["design", "--iters", "200", "-o", &design]).code, EXIT_OK);
    let params = fixture_path("table4_mnl.json");
    let out = dce(&["simulate", "--design", &design, "--params", &params, "--n", "0", "-o", &path(&dir, "c.csv")]);
    assert_eq!(out.code, EXIT_INPUT);

    let one = path(&dir, "one.csv");
    let two = path(&dir, "two.csv");
    for (p, seed) in [(&one, "1"), (&two, "2")] {
        assert_eq!(dce(&["simulate", "--design", &design, "--params", &params, "--n", "40", "--seed", seed, "-o", p]).code, EXIT_OK);
    }
    let (a, b) = (std::fs::read_to_string(&one).unwrap(), std::fs::read_to_string(&two).unwrap());
    assert_eq!(a.lines().count(), b.lines().count());
    assert_ne!(a, b);
}

#[test]
fn unknown_random_parameter_exits_2_naming_it() {
    let dir = TempDir::new().unwrap();
    let design = path(&dir, "design.csv");
    let choices = path(&dir, "choices.csv");
    assert_eq!(dce(&["design", "--iters", "200", "-o", &design]).code, EXIT_OK);
    let params = fixture_path("table4_mnl.json");
    assert_eq!(dce(&["simulate", "--design", &design, "--params", &params, "--n", "16", "-o", &choices]).code, EXIT_OK);
    let out = dce(&["estimate", "mmnl", "--data", &choices, "--random", "not_a_param", "-o", &path(&dir, "r.json")]);
    assert_eq!(out.code, EXIT_INPUT);
    assert!(out.stderr.contains("not_a_param"), "{}", out.stderr);
}

#[test]
fn fixture_reports() {
    let out = dce(&["postest", "wtp", "--fixture", "table4"]);
    assert_eq!(out.code, EXIT_OK);
    for yen in ["156.1", "47.2", "93.4", "29.7"] {
        assert!(out.stdout.contains(yen), "{yen} missing from\n{}", out.stdout);
    }
    let out = dce(&["postest", "fit", "--result", &fixture_path("table4_mnl.json")]);
    assert!(out.stdout.contains("rho2 0.2153"), "{}", out.stdout);
    let out = dce(&["postest", "elasticity", "--price", "680", "--prob", "0.3333", "--slope-mode", "drone"]);
    assert_eq!(out.code, EXIT_OK);
    assert!(out.stdout.contains("elasticity -2.840 (extension)"), "{}", out.stdout);
    let out = dce(&["postest", "lr", "--fixture", "table4"]);
    assert!(out.stdout.contains("LR statistic 547.80"), "{}", out.stdout);
}

#[test]
fn result_without_cost_levels_exits_2() {
    let dir = TempDir::new().unwrap();
    let thin = path(&dir, "thin.json");
    std::fs::write(
        &thin,
        r#"{"model":"mnl","parameters":{"asc_drone":{"estimate":0.1,"std_error":null,"p_value":null}},
            "fit":{"ll_null":-10.0,"ll_final":-9.0,"k":1}}"#,
    )
    .unwrap();
    let out = dce(&["postest", "wtp", "--result", &thin]);
    assert_eq!(out.code, EXIT_INPUT);
}

#[test]
fn emit_grid_writes_price_probability_csv() {
    let dir = TempDir::new().unwrap();
    let grid = path(&dir, "grid.csv");
    let out = dce(&["postest", "elasticity", "--fixture", "table4", "--price", "680", "--prob", "0.3", "--emit-grid", &grid]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let text = std::fs::read_to_string(&grid).unwrap();
    assert!(text.starts_with("price,probability\n"));
    assert_eq!(text.lines().count(), 22);
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_dce");
    let ok = Command::new(bin).args(["postest", "fit", "--fixture", "table4"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("rho2 0.2743"));
    let bad = Command::new(bin).args(["postest", "fit", "--result", "/nonexistent.json"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let threads = Command::new(bin).env("DCE_THREADS", "1").args(["--threads", "2", "postest", "fit", "--fixture", "table4"]).output().unwrap();
    assert_eq!(threads.status.code(), Some(0));
}

#[test]
fn thread_env_overrides_flag() {
    // SAFETY: no other test in this binary reads or writes this variable.
    unsafe { std::env::set_var(dce::cli::THREADS_ENV, "3") };
    assert_eq!(dce::cli::resolve_threads(Some(5)), Some(3));
    unsafe { std::env::remove_var(dce::cli::THREADS_ENV) };
    assert_eq!(dce::cli::resolve_threads(Some(5)), Some(5));
}
