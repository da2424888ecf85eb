//! Black-box tests of the installed binary: exit codes, the on-disk trail,
//! and the determinism contract (bytes fixed except wall-clock fields).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vortexpath"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary spawns")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn summary(dir: &Path) -> Value {
    let text = fs::read_to_string(dir.join("summary.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn solve_into(dir: &Path, cfg: &Path, out_name: &str) -> PathBuf {
    let out_dir = dir.join(out_name);
    let out = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty(), "--quiet must silence stdout");
    out_dir
}

#[test]
fn solve_leaves_complete_trail_and_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "run.cfg", "section = zero\nn = 16\n");
    let out_dir = tmp.path().join("run");

    let out = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let s = summary(&out_dir);
    assert_eq!(s["schema_version"], 1);
    assert_eq!(s["config"]["section"], "zero");
    assert_eq!(s["failures"].as_array().unwrap().len(), 0);
    let runs = s["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    for r in runs {
        assert_eq!(r["final_t"], 1.0);
        assert_eq!(r["pass"], true);
        assert!(r["residual_f"].as_f64().unwrap() <= 1e-12);
        assert!(r["residual_psi"].as_f64().unwrap() <= 1e-12);
        for snap in r["snapshots"].as_array().unwrap() {
            assert!(out_dir.join(snap["f_file"].as_str().unwrap()).exists());
            assert!(out_dir.join(snap["psi_file"].as_str().unwrap()).exists());
        }
    }

    let trace = fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(
        header,
        [
            "system",
            "t",
            "dt",
            "newton_iters",
            "residual_f",
            "residual_psi",
            "kappa",
            "compat_defect",
            "det_a_min",
            "sup_lap_f",
            "sup_lap_psi",
            "margin_m_max",
            "margin_psi_upper",
            "margin_psi_lower",
            "margin_eps_psi_upper",
            "margin_branch",
            "margin_eps_margin",
            "margin_a0_min",
            "margin_psi_integral",
            "margin_ellipticity",
            "seconds",
        ]
    );
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let mut rows = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), header.len(), "{line}");
        // Each system leaves the checks it does not run as empty cells.
        let absent: &[&str] = match cells[0] {
            "sys1" => &["margin_eps_psi_upper", "margin_eps_margin"],
            "sys2" => &["margin_psi_upper", "margin_psi_lower"],
            other => panic!("unexpected system '{other}'"),
        };
        for name in absent {
            assert!(cells[col(name)].is_empty(), "{name} set in {line}");
        }
        assert!(!cells[col("margin_branch")].is_empty());
        assert!(!cells[col("margin_ellipticity")].is_empty());
        rows += 1;
    }
    let steps: u64 = runs.iter().map(|r| r["steps"].as_u64().unwrap()).sum();
    assert_eq!(rows, steps);

    let verify = run(&["verify", "--out", out_dir.to_str().unwrap(), "--quiet"]);
    assert_eq!(exit_code(&verify), 0, "{}", String::from_utf8_lossy(&verify.stderr));
}

#[test]
fn init_writes_seed_state_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "init.cfg",
        "section = zero\nn = 16\nsystem = sys1\n",
    );
    let out_dir = tmp.path().join("seed");
    let out = run(&[
        "init",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let s = summary(&out_dir);
    let runs = s["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0]["steps"], 1);
    assert_eq!(runs[0]["final_t"], 0.0);
    assert_eq!(runs[0]["pass"], true);
    assert!(out_dir.join("fields_sys1_f_t0.csv").exists());
    assert!(out_dir.join("fields_sys1_psi_t0.csv").exists());
    assert!(!out_dir.join("trace.csv").exists());
}

#[test]
fn configuration_problems_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: &[(&str, &str)] = &[
        ("mystery = 1\n", "unknown key"),
        ("n = 15\n", "even"),
        ("epsilon = 0\n", "epsilon"),
        ("section = theta\ndeg_l = 2\n", "degree 1"),
    ];
    for (text, needle) in cases {
        let cfg = write_cfg(tmp.path(), "bad.cfg", text);
        let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert_eq!(exit_code(&out), 2, "{text}");
        assert!(stderr.contains(needle), "stderr for {text:?}: {stderr}");
    }

    let missing = run(&["solve", "--config", tmp.path().join("nope.cfg").to_str().unwrap()]);
    assert_eq!(exit_code(&missing), 2);

    let no_dir = run(&["verify", "--out", tmp.path().join("nodir").to_str().unwrap()]);
    assert_eq!(exit_code(&no_dir), 2);
}

#[test]
fn repeated_runs_are_byte_identical_except_timing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "det.cfg",
        "section = theta\nn = 16\nsystem = sys2\n",
    );
    let dir_a = solve_into(tmp.path(), &cfg, "a");
    let dir_b = solve_into(tmp.path(), &cfg, "b");

    // Trace rows agree once the trailing wall-clock column is dropped.
    let strip = |dir: &Path| -> Vec<String> {
        fs::read_to_string(dir.join("trace.csv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(strip(&dir_a), strip(&dir_b));

    // Summaries agree once wall_seconds and the output path are dropped.
    let scrub = |dir: &Path| -> Value {
        let mut v = summary(dir);
        v.as_object_mut().unwrap().remove("wall_seconds");
        v["config"].as_object_mut().unwrap().remove("output_dir");
        for r in v["runs"].as_array_mut().unwrap() {
            r.as_object_mut().unwrap().remove("wall_seconds");
        }
        v
    };
    assert_eq!(scrub(&dir_a), scrub(&dir_b));

    for name in ["fields_sys2_f_t1.csv", "fields_sys2_psi_t1.csv"] {
        assert_eq!(
            fs::read(dir_a.join(name)).unwrap(),
            fs::read(dir_b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn pinned_shift_stalls_with_structured_failure() {
    let tmp = tempfile::tempdir().unwrap();
    // A pinned positive alpha makes the equations move with t while the
    // frozen right side stays put; the corrector cannot follow and the
    // path must stop at t = 0 rather than fake progress.
    let cfg = write_cfg(
        tmp.path(),
        "stall.cfg",
        "section = zero\nn = 16\nsystem = sys1\nalpha = 2\n",
    );
    let out_dir = tmp.path().join("stall");
    let out = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(exit_code(&out), 1);

    let s = summary(&out_dir);
    assert_eq!(s["runs"].as_array().unwrap().len(), 0);
    let failures = s["failures"].as_array().unwrap();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0]["system"], "sys1");
    assert_eq!(failures[0]["kind"], "PathStuck");
}

#[test]
fn compare_reports_doubling_refinement_and_refuses_mismatches() {
    let tmp = tempfile::tempdir().unwrap();
    let base = "section = zero\nn = 16\nsystem = sys2\nepsilon = 2\n";
    let cfg_e2 = write_cfg(tmp.path(), "e2.cfg", base);
    let cfg_e4 = write_cfg(
        tmp.path(),
        "e4.cfg",
        "section = zero\nn = 16\nsystem = sys2\nepsilon = 4\n",
    );
    let cfg_n32 = write_cfg(
        tmp.path(),
        "n32.cfg",
        "section = zero\nn = 32\nsystem = sys2\nepsilon = 2\n",
    );
    let dir_e2 = solve_into(tmp.path(), &cfg_e2, "e2");
    let dir_e4 = solve_into(tmp.path(), &cfg_e4, "e4");
    let dir_n32 = solve_into(tmp.path(), &cfg_n32, "n32");

    let report_path = tmp.path().join("doubling.json");
    let doubling = run(&[
        "compare",
        dir_e2.to_str().unwrap(),
        dir_e4.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(exit_code(&doubling), 0);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["differing_keys"], serde_json::json!(["epsilon"]));
    let sys2 = &report["systems"]["sys2"];
    assert_eq!(sys2["epsilon_a"], 2.0);
    assert_eq!(sys2["epsilon_b"], 4.0);
    // The degenerate state is identically zero at every epsilon, so both
    // observables sit on the 0/0 convention of ratio one.
    assert_eq!(sys2["eps_psi0_ratio"], 1.0);
    assert_eq!(sys2["path_sup_dpsi_ratio"], 1.0);
    assert!(sys2["endpoint_sup_diff_f"].is_null());

    let refinement = run(&[
        "compare",
        dir_e2.to_str().unwrap(),
        dir_n32.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(exit_code(&refinement), 0);
    let report: Value = serde_json::from_str(
        std::str::from_utf8(&refinement.stdout).unwrap(),
    )
    .unwrap();
    assert_eq!(report["differing_keys"], serde_json::json!(["n"]));
    assert_eq!(report["systems"]["sys2"]["endpoint_sup_diff_f"], 0.0);
    assert_eq!(report["systems"]["sys2"]["endpoint_sup_diff_psi"], 0.0);

    let clash = run(&[
        "compare",
        dir_e4.to_str().unwrap(),
        dir_n32.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&clash), 1);
    let stderr = String::from_utf8_lossy(&clash.stderr);
    assert!(stderr.contains("not comparable"), "{stderr}");
    assert!(stderr.contains("epsilon") && stderr.contains("n"), "{stderr}");
}
