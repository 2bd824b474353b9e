//! Black-box tests of the CLI binary: reproducibility, the documented exit
//! codes, and the subcommand pipeline.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_frailcomp")
}

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

#[test]
fn simulate_is_reproducible_and_pipeline_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let out = run(
        &["simulate", "--seed", "1", "--n-families", "60", "--out", "ped.csv"],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out2 = run(
        &["simulate", "--seed", "1", "--n-families", "60", "--out", "ped2.csv"],
        dir,
    );
    assert!(out2.status.success());
    let a = std::fs::read(path(dir, "ped.csv")).unwrap();
    let b = std::fs::read(path(dir, "ped2.csv")).unwrap();
    assert_eq!(a, b, "same seed must give identical files");
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# frailcomp "));
    assert!(text.contains("famID,indID,gender,proband,examAge,time,status,mgene,tvc1.age"));

    // fit -> penetrance -> residuals
    let out = run(
        &[
            "fit",
            "--input",
            "ped.csv",
            "--out-json",
            "fit.json",
            "--out-csv",
            "fit.csv",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path(dir, "fit.json")).unwrap()).unwrap();
    assert_eq!(report["provenance"]["tool"], "frailcomp");
    assert!(report["fit"]["convergence"]["converged"].as_bool().unwrap());
    assert!(report["parameters"].as_array().unwrap().len() >= 9);
    let csv = std::fs::read_to_string(path(dir, "fit.csv")).unwrap();
    assert!(csv.contains("parameter,estimate,se,p_value"));

    let out = run(
        &[
            "penetrance",
            "--fit",
            "fit.json",
            "--genotype",
            "1",
            "--tvc-age",
            "35",
            "--out",
            "curve.csv",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curve = std::fs::read_to_string(path(dir, "curve.csv")).unwrap();
    assert!(curve.contains("age,event,estimate,se,lo95,hi95"));
    // penetrance rows are within [0, 1] and nondecreasing per event
    let mut last = [0.0f64; 3];
    for line in curve.lines().skip(3) {
        let fields: Vec<&str> = line.split(',').collect();
        let event: usize = fields[1].parse().unwrap();
        let est: f64 = fields[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&est));
        assert!(est >= last[event] - 1e-12);
        last[event] = est;
    }

    let out = run(
        &[
            "residuals",
            "--fit",
            "fit.json",
            "--input",
            "ped.csv",
            "--out",
            "res.csv",
            "--out-family",
            "resfam.csv",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = std::fs::read_to_string(path(dir, "res.csv")).unwrap();
    assert!(res.contains("famID,indID,event,residual,posterior_frailty"));
    let resfam = std::fs::read_to_string(path(dir, "resfam.csv")).unwrap();
    assert!(resfam.contains("famID,event,mean_residual"));

    // summarize to stdout
    let out = run(&["summarize", "--input", "ped.csv"], dir);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("metric,event,genotype,count"));
    assert!(text.contains("families,,,60"));
}

#[test]
fn select_ranks_models_on_small_data() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = run(
        &["simulate", "--seed", "3", "--n-families", "40", "--out", "ped.csv"],
        dir,
    );
    assert!(out.status.success());
    let out = run(&["select", "--input", "ped.csv", "--out", "sel.csv"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(path(dir, "sel.csv")).unwrap();
    assert!(table.contains("rank,model,loglik,n_params,aic,delta_aic"));
    for label in ["pe", "ed", "co"] {
        assert!(table.contains(label), "missing {label} in:\n{table}");
    }
}

#[test]
fn config_error_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(path(dir, "bad.json"), r#"{"not_a_field": 1}"#).unwrap();
    let out = run(
        &["simulate", "--config", "bad.json", "--n-families", "5"],
        dir,
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("\"kind\":\"config\""), "{err}");
}

#[test]
fn data_error_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = run(&["fit", "--input", "missing.csv"], dir);
    assert_eq!(out.status.code(), Some(3));

    std::fs::write(
        path(dir, "bad.csv"),
        "famID,indID,gender,proband,examAge,time,status,mgene,tvc1.age\n1,1,0,1,52,oops,1,1,\n",
    )
    .unwrap();
    let out = run(&["fit", "--input", "bad.csv"], dir);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn non_convergence_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = run(
        &["simulate", "--seed", "8", "--n-families", "30", "--out", "ped.csv"],
        dir,
    );
    assert!(out.status.success());
    std::fs::write(
        path(dir, "strict.json"),
        r#"{"fit": {"max_iter": 1, "restarts": 0}}"#,
    )
    .unwrap();
    let out = run(
        &[
            "fit",
            "--input",
            "ped.csv",
            "--config",
            "strict.json",
            "--out-json",
            "fit.json",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("non_convergence"), "{err}");
    // outputs are still written for inspection
    assert!(path(dir, "fit.json").exists());
}
