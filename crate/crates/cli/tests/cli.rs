use std::path::Path;
use std::process::{Command, Output};

fn endopop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_endopop"))
        .args(args)
        .env_remove("ENDOPOP_OUTPUT_ROOT")
        .output()
        .unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let k = lines.next().unwrap().split(',').position(|c| c == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&read(&dir.join("manifest.json"))).unwrap()
}

#[test]
fn run_writes_constant_first_moments() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fig1");
    let res = endopop(&[
        "run",
        "fig1-pure-coag",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "run.t_final=0.002",
        "--set",
        "run.snapshot_times=[0.001]",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let diag = read(&out.join("diagnostics.csv"));
    assert!(diag.starts_with("n,t,H0,H1r,H1a,M\n"));
    for name in ["H1r", "H1a"] {
        let v = column(&diag, name);
        assert_eq!(v.len(), 21);
        assert!(v.iter().all(|x| (x - v[0]).abs() <= 1e-13 * v[0]));
    }
    let m = manifest(&out);
    let files: Vec<&str> = m["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap())
        .collect();
    assert!(files.contains(&"snapshot_t0.001.csv"), "{files:?}");
    for f in files {
        assert!(std::fs::metadata(out.join(f)).unwrap().len() > 0, "{f}");
    }
    assert_eq!(m["parameters"]["scenario"]["run"]["t_final"], 0.002);
    assert_eq!(m["parameters"]["scenario"]["run"]["quadrature"]["rule"], "midpoint");
    let snap = read(&out.join("snapshot_t0.001.csv"));
    assert!(snap.starts_with("i,j,r_center,a_center,f\n"));
    assert_eq!(snap.lines().count(), 1 + 40 * 40);
}

#[test]
fn trafficking_run_writes_observables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("tr");
    let res = endopop(&[
        "run",
        "trafficking-B2AR-H2",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "run.t_final=20",
        "--set",
        "run.snapshot_times=[]",
    ]);
    assert!(res.status.success());
    let obs = read(&out.join("observables.csv"));
    assert_eq!(
        obs.lines().next().unwrap(),
        "t,mean_size,size_std,internalization_ratio"
    );
    let ratio = column(&obs, "internalization_ratio");
    assert_eq!(ratio[0], 0.0);
    assert!(ratio.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn manifest_echoes_defaulted_velocity_cutoff() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sig");
    let res = endopop(&[
        "run",
        "signaling-PTH7D-H1",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "run.t_final=0.09",
        "--set",
        "run.snapshot_times=[]",
    ]);
    assert!(res.status.success());
    let v = &manifest(&out)["parameters"]["scenario"]["rates"]["velocity"];
    assert_eq!(v["r_bar"], 1000.0);
    assert!((v["eps"].as_f64().unwrap() - 2000.0 / 60.0).abs() < 1e-12);
}

#[test]
fn identical_runs_produce_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for d in &dirs {
        let res = endopop(&[
            "run",
            "fig1-affine-coag",
            "--out",
            d.to_str().unwrap(),
            "--set",
            "t_final=0.003",
            "--set",
            "snapshot_times=[]",
        ]);
        assert!(res.status.success());
    }
    for f in ["diagnostics.csv", "snapshot_t0.003.csv"] {
        assert_eq!(read(&dirs[0].join(f)), read(&dirs[1].join(f)), "{f}");
    }
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let res = Command::new(env!("CARGO_BIN_EXE_endopop"))
        .args([
            "run",
            "fig8-stable",
            "--set",
            "run.t_final=1",
            "--set",
            "run.snapshot_times=[]",
        ])
        .env("ENDOPOP_OUTPUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert!(res.status.success());
    let diag = read(&tmp.path().join("fig8-stable").join("diagnostics.csv"));
    assert!(diag.starts_with("n,t,norm0\n"));
}

#[test]
fn analyze_condition_check_and_stationary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cc");
    assert!(endopop(&[
        "analyze",
        "condition-check",
        "fig8-stable",
        "--out",
        out.to_str().unwrap()
    ])
    .status
    .success());
    let c: serde_json::Value = serde_json::from_str(&read(&out.join("condition.json"))).unwrap();
    assert_eq!(c["holds"], true);

    let out = tmp.path().join("cv");
    assert!(endopop(&[
        "analyze",
        "condition-check",
        "fig8-violated",
        "--out",
        out.to_str().unwrap()
    ])
    .status
    .success());
    let c: serde_json::Value = serde_json::from_str(&read(&out.join("condition.json"))).unwrap();
    assert_eq!(c["holds"], false);

    let out = tmp.path().join("st");
    assert!(
        endopop(&["analyze", "stationary", "fig8-stable", "--out", out.to_str().unwrap()])
            .status
            .success()
    );
    let s: serde_json::Value = serde_json::from_str(&read(&out.join("stationary.json"))).unwrap();
    assert!(s["residual"].as_f64().unwrap() < 1e-8);
    assert!(s["norm0"].as_f64().unwrap() <= s["norm0_bound"].as_f64().unwrap());
    assert_eq!(read(&out.join("stationary.csv")).lines().count(), 302);
}

#[test]
fn analyze_decay_rate_beats_prediction() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("dr");
    assert!(
        endopop(&["analyze", "decay-rate", "fig8-stable", "--out", out.to_str().unwrap()])
            .status
            .success()
    );
    let d: serde_json::Value = serde_json::from_str(&read(&out.join("decay.json"))).unwrap();
    assert!(d["rate"].as_f64().unwrap() >= 0.9 * d["weaker_predicted_rate"].as_f64().unwrap());
}

#[test]
fn analyze_convergence_reports_unit_slopes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("conv");
    let res = endopop(&[
        "--jobs",
        "2",
        "analyze",
        "convergence",
        "fig5-pure-coag",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "convergence.cells=[6, 12, 24]",
        "--set",
        "convergence.reference_cells=96",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let r: serde_json::Value = serde_json::from_str(&read(&out.join("convergence.json"))).unwrap();
    assert_eq!(r["levels"].as_array().unwrap().len(), 3);
    for (_, v) in r["slopes"].as_object().unwrap() {
        let v = v.as_f64().unwrap();
        assert!((0.6..1.4).contains(&v), "{v}");
    }
}

#[test]
fn analyze_moments_vs_ode_writes_relative_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mo");
    let res = endopop(&[
        "analyze",
        "moments-vs-ode",
        "fig1-affine-coag",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "run.t_final=0.01",
        "--set",
        "run.snapshot_times=[]",
    ]);
    assert!(res.status.success());
    let csv = read(&out.join("moments_vs_ode.csv"));
    let err = column(&csv, "H0_rel_err");
    assert_eq!(err[0], 0.0);
    assert!(err.iter().all(|e| *e < 0.05));
}

#[test]
fn incompatible_tasks_exit_with_one() {
    let res = endopop(&[
        "analyze",
        "moments-vs-ode",
        "fig6-general",
        "--out",
        "/nonexistent/never",
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("pure coagulation"));
    let res = endopop(&["analyze", "stationary", "trafficking-LHR-H1"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn config_errors_exit_with_one() {
    let res = endopop(&["run", "fig2-nothing"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("fig8-stable"));
    let res = endopop(&["run", "fig8-stable", "--set", "run.dt=0"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("run.dt"));
}

#[test]
fn numeric_abort_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let res = endopop(&[
        "run",
        "fig1-pure-coag",
        "--out",
        tmp.path().to_str().unwrap(),
        "--set",
        "run.dt=10",
        "--set",
        "run.t_final=100",
        "--set",
        "run.snapshot_times=[]",
        "--set",
        "run.negativity=\"abort\"",
    ]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("negative"));
}

#[test]
fn schema_output_is_a_loadable_config() {
    let tmp = tempfile::tempdir().unwrap();
    let res = endopop(&["schema", "fig8-violated"]);
    assert!(res.status.success());
    let cfg = tmp.path().join("mine.toml");
    std::fs::write(&cfg, &res.stdout).unwrap();
    let out = tmp.path().join("o");
    let res = endopop(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--set",
        "run.t_final=0.5",
        "--set",
        "run.snapshot_times=[]",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(manifest(&out)["scenario"], "fig8-violated");
}

#[test]
fn list_scenarios_names_every_builtin() {
    let res = endopop(&["list-scenarios"]);
    let text = String::from_utf8_lossy(&res.stdout);
    assert_eq!(text.lines().count(), 14);
    assert!(text.contains("signaling-PTH7D-H2"));
}
