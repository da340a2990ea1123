use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rbx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbx")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path, methods: &str, extra: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{"problem": {{"kind": "thermalblock", "nodes_per_side": 10}},
            "training": {{"kind": "random", "count": 300, "seed": 5}},
            "methods": {methods},
            "greedy": {{"eps_tol": 1e-3, "seed": 3}}{extra}}}"#
    );
    fs::write(&path, text).unwrap();
    path
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    assert_eq!(rbx(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(2));

    for text in [
        "{",
        r#"{"problem": {"kind": "diffusion2d", "n_x": 35}, "methods": []}"#,
        r#"{"problem": {"kind": "diffusion2d", "n_x": 35}, "repetitions": 0}"#,
        r#"{"problem": {"kind": "diffusion2d", "n_x": 35}, "greedy": {"eps_tol": -1.0}}"#,
        r#"{"problem": {"kind": "diffusion2d", "n_x": 35}, "colour": "blue"}"#,
        r#"{"problem": {"kind": "thermalblock", "nodes_per_side": 11}}"#,
    ] {
        let path = tmp.path().join("bad.json");
        fs::write(&path, text).unwrap();
        let out = rbx(&["run", "--config", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{text}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn classical_only_run_writes_self_describing_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), r#"["classical"]"#, "");
    let out_dir = tmp.path().join("out");
    let out = rbx(&["run", "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    for name in ["convergence.csv", "sar.csv", "snapshots.csv"] {
        let text = fs::read_to_string(out_dir.join(name)).unwrap();
        assert!(text.starts_with("# rbx "), "{name}");
        assert!(text.contains("# seed: 3"), "{name}");
        assert!(text.contains("# config: {"), "{name}");
    }
    assert!(!out_dir.join("RUN_INCOMPLETE").exists());

    let conv = data_rows(&out_dir.join("convergence.csv"));
    assert_eq!(conv[0][..5], ["method", "n", "delta_max", "cum_estimator_evals", "cum_wall_ms"]);
    let delta = &conv[1][2];
    let mantissa = delta.split('e').next().unwrap().replace(['-', '.'], "");
    assert_eq!(mantissa.len(), 17, "{delta}");

    let s = summary(&out_dir);
    let classical = &s["methods"][0];
    assert_eq!(classical["method"], "classical");
    assert!(classical.get("speedup").is_none());
    assert!(classical.get("cost_ratio").is_none());
    assert_eq!(s["seed"], 3);
    assert!(s["version"].is_string());
}

#[test]
fn all_methods_report_consistent_speedups() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), r#"["classical", "smm", "cdm"]"#, "");
    let out_dir = tmp.path().join("out");
    let out = rbx(&["run", "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let s = summary(&out_dir);
    let methods = s["methods"].as_array().unwrap();
    let classical_ms = methods[0]["total_wall_ms"].as_f64().unwrap();
    for m in &methods[1..] {
        let ms = m["total_wall_ms"].as_f64().unwrap();
        let speedup = m["speedup"].as_f64().unwrap();
        assert!((speedup - classical_ms / ms).abs() <= 1e-12 * speedup);
        let ratio = &m["cost_ratio"];
        assert_eq!(ratio["satisfied"], ratio["measured"].as_f64() <= ratio["bound"].as_f64());
    }

    // Final rows of convergence.csv agree with the summary's wall times.
    let conv = data_rows(&out_dir.join("convergence.csv"));
    for m in methods {
        let name = m["method"].as_str().unwrap();
        let last = conv.iter().rev().find(|r| r[0] == name).unwrap();
        let ms: f64 = last[4].parse().unwrap();
        assert!(ms <= m["total_wall_ms"].as_f64().unwrap() + 1e-9);
    }
    let sar = data_rows(&out_dir.join("sar.csv"));
    assert_eq!(sar[0], ["method", "ell", "E_ell", "M_ell", "N_ell", "sar", "surrogate_size"]);
    assert!(sar.iter().skip(1).all(|r| r[0] != "classical"));
}

#[test]
fn outputs_are_deterministic_apart_from_wall_times() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), r#"["classical", "cdm"]"#, "");
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for d in &dirs {
        let out = rbx(&["run", "--config", config.to_str().unwrap(), "--out", d.to_str().unwrap()]);
        assert!(out.status.success());
    }
    let strip = |rows: Vec<Vec<String>>| -> Vec<Vec<String>> {
        rows.into_iter()
            .map(|mut r| {
                r.remove(4);
                r
            })
            .collect()
    };
    assert_eq!(
        strip(data_rows(&dirs[0].join("convergence.csv"))),
        strip(data_rows(&dirs[1].join("convergence.csv")))
    );
    for name in ["sar.csv", "snapshots.csv"] {
        assert_eq!(fs::read_to_string(dirs[0].join(name)).unwrap(), fs::read_to_string(dirs[1].join(name)).unwrap());
    }
}

#[test]
fn matrix_dump_writes_matrix_market_files() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), r#"["classical"]"#, r#", "dump_matrices": true"#);
    let out_dir = tmp.path().join("out");
    assert!(rbx(&["run", "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]).status.success());
    let dir = out_dir.join("matrices");
    let mut names: Vec<String> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names.len(), 9 + 3);
    for n in ["X.mtx", "f.mtx", "l.mtx", "A_0.mtx", "A_8.mtx"] {
        assert!(names.iter().any(|x| x == n), "{n}");
    }
    assert!(fs::read_to_string(dir.join("A_0.mtx")).unwrap().starts_with("%%MatrixMarket matrix"));
}

#[test]
fn failed_write_leaves_the_incomplete_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path(), r#"["classical"]"#, "");
    let out_dir = tmp.path().join("out");
    fs::create_dir_all(out_dir.join("summary.json")).unwrap();
    let out = rbx(&["run", "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let marker = fs::read_to_string(out_dir.join("RUN_INCOMPLETE")).unwrap();
    assert!(marker.starts_with("run aborted"));
}

#[test]
fn problems_lists_both_geometries() {
    let out = rbx(&["problems"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("diffusion2d") && text.contains("thermalblock"));
}

#[test]
fn quick_verification_passes() {
    let out = rbx(&["verify", "--quick"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.lines().count() >= 7);
}
