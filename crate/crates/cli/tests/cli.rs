use std::path::Path;
use std::process::{Command, Output};

fn vpk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vpk"))
        .current_dir(dir)
        .env_remove("VPK_SOLVER_CMD")
        .args(args)
        .output()
        .expect("run vpk")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn extract_cartpole(dir: &Path, out: &str, algo: &str) -> Output {
    vpk(
        dir,
        &[
            "extract", "--env", "cartpole", "--oracle", "lqr", "--algo", algo, "--iters", "3", "--rollouts", "3",
            "--depth", "2", "--eval-rollouts", "5", "--seed", "7", "--out", out,
        ],
    )
}

#[test]
fn extraction_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let run = extract_cartpole(dir.path(), out, "viper");
        assert_eq!(code(&run), 0, "{}", stderr(&run));
    }
    for file in ["tree.json", "report.csv"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
    }
    let dagger = extract_cartpole(dir.path(), "d", "dagger");
    assert_eq!(code(&dagger), 0, "{}", stderr(&dagger));
    assert!(dir.path().join("d/tree.json").is_file());
    let report = std::fs::read_to_string(dir.path().join("a/report.csv")).unwrap();
    assert_eq!(report.lines().count(), 4);
    assert!(report.starts_with("iteration,dataset_size,nodes,mean_reward"));

    let eval = vpk(dir.path(), &["eval", "--env", "cartpole", "--tree", "a/tree.json", "--rollouts", "5", "--out", "e"]);
    assert_eq!(code(&eval), 0, "{}", stderr(&eval));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("e/eval.json")).unwrap()).unwrap();
    assert!(report["mean_reward"].as_f64().unwrap() > 0.0);
}

#[test]
fn missing_oracle_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = vpk(dir.path(), &["extract", "--env", "cartpole", "--oracle", "nowhere/oracle.json"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("nowhere/oracle.json"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&vpk(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&vpk(dir.path(), &["extract", "--env", "atlantis"])), 2);
    let empty = vpk(dir.path(), &["benchmark", "--env", "cartpole", "--depths="]);
    assert_eq!(code(&empty), 2, "{}", stderr(&empty));
    assert_eq!(code(&vpk(dir.path(), &["verify", "robust", "--tree", "t.json", "--states", "s.csv"])), 2);
}

fn write_stay_tree(dir: &Path) {
    let tree = r#"{"version":1,"dim":5,"leaf_kind":"discrete","nodes":[{"kind":"action","action":2}]}"#;
    std::fs::write(dir.join("stay.json"), tree).unwrap();
}

#[test]
fn toypong_counterexample_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    write_stay_tree(dir.path());
    let out = vpk(
        dir.path(),
        &["verify", "correct", "--env", "toypong", "--tree", "stay.json", "--tmax", "40", "--out", "v"],
    );
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let verdict: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("v/verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["verdict"], "counterexample");
    assert_eq!(verdict["counterexample"]["replays"], true);
    assert!(verdict["counterexample"]["trace"].as_array().unwrap().len() >= 2);
    let smt = std::fs::read_to_string(dir.path().join("v/query.smt2")).unwrap();
    assert!(smt.starts_with("(set-logic QF_LRA)"));
}

#[test]
fn repair_reports_verdict_deltas() {
    let dir = tempfile::tempdir().unwrap();
    write_stay_tree(dir.path());
    let config = r#"{"env_params":{"y_max":3.0,"v_min":1.0,"v_max":1.25,"start_offset":0.5}}"#;
    std::fs::write(dir.path().join("short.json"), config).unwrap();
    let out = vpk(
        dir.path(),
        &[
            "repair",
            "--config",
            "short.json",
            "--tree",
            "stay.json",
            "--patch",
            r#"{"kind":"param","name":"L","value":4.5}"#,
            "--patch",
            r#"{"kind":"root_guard","feature":0,"threshold":26.0,"action":0,"side":"at_most"}"#,
            "--out",
            "r",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r/repair.json")).unwrap()).unwrap();
    let steps = report["steps"].as_array().unwrap();
    assert_eq!(steps[0]["delta"], "counterexample -> safe");
    assert_eq!(steps[1]["tree_nodes_after"], 3);
    let params: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r/patched-0.params.json")).unwrap()).unwrap();
    assert_eq!(params["paddle_half_length"], 4.5);
    assert!(dir.path().join("r/patched-1.tree.json").is_file());

    let bad = vpk(
        dir.path(),
        &[
            "repair",
            "--tree",
            "stay.json",
            "--patch",
            r#"{"kind":"root_guard","feature":9,"threshold":1.0,"action":0,"side":"above"}"#,
        ],
    );
    assert_eq!(code(&bad), 2);
}

#[test]
fn robustness_csv_has_one_row_per_state() {
    let dir = tempfile::tempdir().unwrap();
    let tree = r#"{"version":1,"dim":2,"leaf_kind":"discrete","nodes":[
        {"kind":"split","feature":0,"threshold":0.5,"left":1,"right":2},
        {"kind":"action","action":0},{"kind":"action","action":1}]}"#;
    std::fs::write(dir.path().join("t.json"), tree).unwrap();
    std::fs::write(dir.path().join("s.csv"), "x,y\n0.2,0.9\n0.75,0.1\n").unwrap();
    let out = vpk(dir.path(), &["verify", "robust", "--tree", "t.json", "--states", "s.csv", "--out", "o"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("o/robustness.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "s0,s1,epsilon,witness_leaf");
    assert_eq!(rows.len(), 3);
    let eps: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!((eps[0] - 0.3).abs() < 1e-12 && (eps[1] - 0.25).abs() < 1e-12);
}
