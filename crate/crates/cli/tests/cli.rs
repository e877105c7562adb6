//! End-to-end tests of the command line binary: exit codes, output shapes,
//! golden regressions and byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn elkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout_str(out)).expect("json stdout")
}

fn json_file(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).expect("readable json");
    serde_json::from_str(&text).expect("json file")
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

#[test]
fn eta_map_reports_the_anchor_point_exactly() {
    let out = elkit(&["eta-map", "--gamma", "1", "--p", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = data_rows(&stdout_str(&out));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "1");
    assert_eq!(rows[0][1], "3");
    assert_eq!(rows[0][2], "0", "the anchor value must be an exact zero");
    assert_eq!(rows[0][3], "eta_nonpositive");
}

#[test]
fn eta_map_classifies_a_far_positive_point() {
    let out = elkit(&["eta-map", "--gamma", "2.9", "--p", "100"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = data_rows(&stdout_str(&out));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][3], "eta_positive");
    assert!(rows[0][2].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn eta_map_rejects_an_empty_range() {
    let out = elkit(&["eta-map", "--gamma", "2:1:0.5", "--p", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eta_map_rejects_a_nonpositive_step() {
    let out = elkit(&["eta-map", "--gamma", "1:2:0", "--p", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let out = elkit(&["solve", "--preset", "nope", "--out", "/tmp/never"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn norm_of_the_zero_velocity_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let gen_dir = dir.path().join("z");
    let out = elkit(&[
        "gen",
        "--preset",
        "zero",
        "--n",
        "16",
        "--box",
        "2",
        "--out",
        gen_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let out = elkit(&[
        "norm",
        "--input",
        gen_dir.join("u.elf3").to_str().unwrap(),
        "--space",
        "local",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    assert_eq!(doc["report"]["value"].as_f64().unwrap(), 0.0);
}

#[test]
fn norm_matches_the_committed_golden_sample() {
    let bump = fixture("bump.elf3");
    let out = elkit(&[
        "norm",
        "--input",
        bump.to_str().unwrap(),
        "--space",
        "local",
        "--gamma",
        "1",
        "--p",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    let value = doc["report"]["value"].as_f64().unwrap();
    assert!(
        (value - 1.4906526808647458).abs() <= 1e-12,
        "local norm drifted from the golden value: {value}"
    );

    let out = elkit(&[
        "norm",
        "--input",
        bump.to_str().unwrap(),
        "--space",
        "weighted",
        "--gamma",
        "1",
        "--p",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    let value = doc["report"]["value"].as_f64().unwrap();
    assert!(
        (value - 1.2713452413218107).abs() <= 1e-12,
        "weighted norm drifted from the golden value: {value}"
    );
}

#[test]
fn profile_emits_the_ladder_as_csv() {
    let bump = fixture("bump.elf3");
    let out = elkit(&["profile", "--input", bump.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_str(&out);
    let header = text
        .lines()
        .find(|l| !l.starts_with('#'))
        .expect("header row");
    assert_eq!(header, "radius,value,scaled,under_resolved,boundary_clipped");
    let rows = data_rows(&text);
    assert!(!rows.is_empty());
    for row in &rows {
        assert!(row[0].parse::<f64>().unwrap() > 0.0);
        assert!(row[1].parse::<f64>().unwrap().is_finite());
    }
}

#[test]
fn solve_zero_then_check_energy_holds() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let out = elkit(&[
        "solve",
        "--preset",
        "zero",
        "--n",
        "16",
        "--box",
        "2",
        "--dt",
        "0.001",
        "--T",
        "0.02",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));

    let run = json_file(&run_dir.join("run.json"));
    assert!(run["report"]["sup_u_inf"].as_f64().unwrap() <= 1e-14);
    assert!(run["report"]["sup_grad_v_inf"].as_f64().unwrap() <= 1e-14);
    assert_eq!(run["report"]["max_abs_defect"].as_f64().unwrap(), 0.0);

    let out = elkit(&[
        "check",
        "energy",
        "--ledger",
        run_dir.join("ledger.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    assert_eq!(doc["report"]["holds"].as_bool(), Some(true));
}

#[test]
fn check_energy_rejects_a_forged_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "time,energy\n0,1\n").unwrap();
    let out = elkit(&["check", "energy", "--ledger", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn counterexample_reports_exact_zeros_and_a_residual_drop() {
    let out = elkit(&["counterexample", "--n", "64", "--box", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    let rep = &doc["report"]["report"];
    assert_eq!(rep["closed_form"]["momentum_max"].as_f64(), Some(0.0));
    assert_eq!(rep["closed_form"]["director_max"].as_f64(), Some(0.0));
    assert_eq!(rep["closed_form"]["divergence_max"].as_f64(), Some(0.0));
    assert_eq!(rep["closed_form_zero"].as_bool(), Some(true));
    assert!(rep["refinement"]["shell_max_ratio"].as_f64().unwrap() > 1.0);
    assert_eq!(rep["residual_decreasing"].as_bool(), Some(true));
}

#[test]
fn check_liouville_on_the_explicit_state_reports_hypotheses_not_met() {
    let out = elkit(&[
        "check",
        "liouville",
        "--state",
        "explicit",
        "--gamma",
        "1",
        "--p",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "not-met is not a violation");
    let doc = stdout_json(&out);
    let rep = &doc["report"]["report"];
    assert_eq!(rep["verdict"].as_str(), Some("HypothesesNotMet"));
    assert_eq!(rep["hypotheses"]["met"].as_bool(), Some(false));
    assert_eq!(rep["hypotheses"]["eta"].as_f64(), Some(0.0));
}

#[test]
fn riesz_battery_holds_at_a_small_size() {
    let out = elkit(&["riesz-test", "--n", "16", "--seeds", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    assert_eq!(doc["report"]["holds"].as_bool(), Some(true));
}

#[test]
fn pressure_preset_solves_its_own_poisson_equation() {
    let out = elkit(&["pressure", "--preset", "taylor-green", "--n", "16"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    assert!(doc["report"]["report"]["poisson_residual"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn local_energy_refuses_an_uncovered_window() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let out = elkit(&[
        "solve",
        "--preset",
        "taylor-green",
        "--n",
        "16",
        "--dt",
        "0.001",
        "--T",
        "0.02",
        "--radii",
        "1.0,2.0",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let out = elkit(&[
        "check",
        "local-energy",
        "--probes",
        run_dir.join("probes.json").to_str().unwrap(),
        "--t0",
        "0.5",
        "--t1",
        "0.8",
        "--eps",
        "0.05",
    ]);
    assert_eq!(out.status.code(), Some(3), "coverage gap is a refusal");
}

#[test]
fn identical_invocations_produce_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let gen_dir = dir.path().join("fields");
    let args = [
        "gen",
        "--preset",
        "explicit",
        "--n",
        "16",
        "--box",
        "2",
        "--out",
        gen_dir.to_str().unwrap(),
    ];
    assert_eq!(elkit(&args).status.code(), Some(0));
    let mut first = std::collections::BTreeMap::new();
    for entry in std::fs::read_dir(&gen_dir).unwrap() {
        let path = entry.unwrap().path();
        first.insert(path.clone(), std::fs::read(&path).unwrap());
    }
    assert_eq!(first.len(), 4, "u, v, p and the meta document");
    assert_eq!(elkit(&args).status.code(), Some(0));
    for (path, bytes) in &first {
        assert_eq!(
            &std::fs::read(path).unwrap(),
            bytes,
            "{} changed between identical runs",
            path.display()
        );
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("elkit.cfg");
    std::fs::write(&cfg, "n = 16\nbox = 2\ngamma = 1.5\n").unwrap();
    let out = elkit(&[
        "check",
        "caccioppoli",
        "--config",
        cfg.to_str().unwrap(),
        "--state",
        "trivial",
        "--R",
        "1.5",
        "--gamma",
        "2.0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    assert_eq!(doc["meta"]["config"]["n"].as_str(), Some("16"));
    assert_eq!(
        doc["meta"]["config"]["gamma"].as_str(),
        Some("2"),
        "the flag wins over the file"
    );
    assert_eq!(doc["report"]["report"]["gamma"].as_f64(), Some(2.0));
}

#[test]
fn solve_rejects_the_non_periodic_preset() {
    let out = elkit(&["solve", "--preset", "explicit", "--out", "/tmp/never2"]);
    assert_eq!(out.status.code(), Some(2));
}
