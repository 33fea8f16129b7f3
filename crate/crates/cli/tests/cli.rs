use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::sync::OnceLock;

use coordlab_cli::{run, InstanceFile, Report, EXIT_BUDGET, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK};
use serde_json::Value;
use tempfile::TempDir;

fn instances() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("instances")
}

fn shipped(name: &str) -> String {
    instances().join(name).display().to_string()
}

fn coordlab(args: &[&str]) -> coordlab_cli::Outcome {
    run(std::iter::once("coordlab").chain(args.iter().copied()))
}

fn report(args: &[&str]) -> Report {
    let out = coordlab(args);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    serde_json::from_str(&out.stdout).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn binary_instance(target: Option<&str>, reward: Option<&str>, delays: &str) -> String {
    let mut fields = vec![
        r#""alphabets": {"x": ["0","1"], "a": ["0","1"], "b": ["0","1"]}"#.to_string(),
        r#""source": [0.5, 0.5]"#.to_string(),
        format!(r#""delays": {delays}"#),
    ];
    if let Some(t) = target {
        fields.push(format!(r#""target": {t}"#));
    }
    if let Some(r) = reward {
        fields.push(format!(r#""reward": {r}"#));
    }
    format!("{{{}}}", fields.join(", "))
}

/// The full-budget penny optimization, shared by the tests that need it.
fn penny_optimum() -> &'static (Report, String) {
    static CELL: OnceLock<(Report, String)> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let emitted = dir.path().join("argmax.json");
        let r = report(&[
            "optimize",
            &shipped("penny.json"),
            "--constraint",
            "theorem2",
            "--emit-instance",
            emitted.to_str().unwrap(),
        ]);
        (r, std::fs::read_to_string(emitted).unwrap())
    })
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn penny_optimum_matches_the_known_game_value() {
    let (r, _) = penny_optimum();
    let value = num(&r.result["value"]);
    assert!((value - 0.82).abs() <= 0.01, "{value}");
    assert!(num(&r.result["slack_at_argmax"]) >= -1e-6);
}

#[test]
fn penny_argmax_sits_on_the_strictly_causal_boundary() {
    let (_, emitted) = penny_optimum();
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "argmax.json", emitted);
    let r = report(&["feasible", &path, "--cell", "noncausal,1"]);
    assert_eq!(r.result["status"], "feasible");
    assert!(num(&r.result["slack"]).abs() <= 1e-6, "{}", r.result["slack"]);
}

#[test]
fn broadcast_target_is_infeasible_with_slack_minus_one() {
    let out = coordlab(&["feasible", &shipped("broadcast.json")]);
    assert_eq!(out.code, EXIT_INFEASIBLE);
    let r: Report = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(r.result["status"], "infeasible");
    assert!((num(&r.result["slack"]) + 1.0).abs() <= 1e-12);
}

#[test]
fn product_target_is_feasible_without_observation() {
    let dir = tempfile::tempdir().unwrap();
    // p(a,b|x) = q(a) r(b), the same for both x.
    let t = "[[[0.12, 0.28], [0.18, 0.42]], [[0.12, 0.28], [0.18, 0.42]]]";
    let path = write(&dir, "p.json", &binary_instance(Some(t), None, r#"{"d1": "never", "d2": "never"}"#));
    let r = report(&["feasible", &path]);
    assert_eq!(r.result["status"], "feasible");
}

#[test]
fn constant_reward_optimizes_to_the_constant() {
    let dir = tempfile::tempdir().unwrap();
    let reward = "[[[0.3, 0.3], [0.3, 0.3]], [[0.3, 0.3], [0.3, 0.3]]]";
    let path = write(&dir, "c.json", &binary_instance(None, Some(reward), r#"{"d1": 0, "d2": 0}"#));
    for constraint in ["theorem1", "theorem2"] {
        let r = report(&["optimize", &path, "--constraint", constraint, "--no-grid", "--restarts", "4"]);
        assert!((num(&r.result["value"]) - 0.3).abs() <= 1e-9);
    }
}

#[test]
fn noncausal_constraint_value_dominates() {
    let p = shipped("penny.json");
    let light = ["--no-grid", "--restarts", "20", "--iterations", "200"];
    let t1 = report(&[&["optimize", p.as_str(), "--constraint", "theorem1"][..], &light[..]].concat());
    let t2 = report(&[&["optimize", p.as_str(), "--constraint", "theorem2"][..], &light[..]].concat());
    assert!(num(&t1.result["value"]) >= num(&t2.result["value"]) - 1e-6);
    assert!((num(&t1.result["value"]) - 1.0).abs() <= 1e-6);
}

#[test]
fn oracle_values_and_budget() {
    let p = shipped("penny.json");
    let r1 = report(&["oracle", &p, "--n", "1", "--regime", "causal-bob"]);
    assert_eq!(num(&r1.result["best_value"]), 0.5);
    let r2 = report(&["oracle", &p, "--n", "2", "--regime", "causal-bob", "--certify"]);
    assert_eq!(num(&r2.result["best_value"]), 0.625);
    assert!(num(&r2.result["certificate"]["min_slack"]) >= -1e-12);
    let out = coordlab(&["oracle", &p, "--n", "2", "--regime", "noncausal-both", "--budget", "1000"]);
    assert_eq!(out.code, EXIT_BUDGET);
    assert!(out.stderr.contains("65536"), "{}", out.stderr);
    assert!(out.stdout.is_empty());
}

#[test]
fn calibration_target_noncausal_median_tv() {
    let r = report(&["simulate", &shipped("calibration.json"), "--scheme", "noncausal", "--trials", "100"]);
    let tv = num(&r.result["aggregate"]["median_tv"]);
    assert!(tv <= 0.15, "{tv}");
    assert!((num(&r.result["target_slack"]) - 0.469).abs() < 1e-3);
}

#[test]
fn backed_off_penny_block_markov_score() {
    let dir = tempfile::tempdir().unwrap();
    let emitted = dir.path().join("backed.json");
    report(&[
        "optimize",
        &shipped("penny.json"),
        "--no-grid",
        "--restarts",
        "40",
        "--back-off",
        "0.1",
        "--emit-instance",
        emitted.to_str().unwrap(),
    ]);
    let path = emitted.to_str().unwrap();
    let sim = report(&["simulate", path, "--scheme", "block-markov", "--trials", "100"]);
    let score = num(&sim.result["aggregate"]["median_reward"]);
    assert!(score >= 0.6, "{score}");

    // The game adapter replays the same trials when the horizon is k × blocks.
    let game = report(&["game", path, "--rounds", "700", "--trials", "100"]);
    let sim_scores: Vec<f64> = sim.result["trials"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| num(&t["avg_reward"]))
        .collect();
    let game_scores: Vec<f64> = game.result["scores"].as_array().unwrap().iter().map(num).collect();
    for (s, g) in sim_scores.iter().zip(&game_scores) {
        assert!((s - g).abs() <= 1e-12);
    }
    let both = report(&["game", path, "--rounds", "700", "--trials", "100", "--bob-info", "actions-and-source"]);
    assert_eq!(both.result["scores"], game.result["scores"]);
}

#[test]
fn copy_against_constant_scores_one_half() {
    let r = report(&["game", &shipped("penny.json"), "--strategy", "copy-constant", "--rounds", "200000"]);
    assert!((num(&r.result["median_score"]) - 0.5).abs() <= 0.005);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["simulate".into(), shipped("calibration.json"), "--scheme".into(), "noncausal".into(), "--trials".into(), "1".into()],
        vec!["simulate".into(), shipped("calibration.json"), "--scheme".into(), "block-markov".into(), "--trials".into(), "3".into(), "--trace".into()],
        vec!["feasible".into(), shipped("calibration.json"), "--cell".into(), "noncausal,noncausal".into()],
        vec!["oracle".into(), shipped("penny.json"), "--n".into(), "2".into()],
        vec!["game".into(), shipped("penny.json"), "--strategy".into(), "copy-echo".into(), "--rounds".into(), "500".into()],
        vec!["optimize".into(), shipped("penny.json"), "--no-grid".into(), "--restarts".into(), "6".into()],
    ];
    for (i, args) in cases.iter().enumerate() {
        let runs: Vec<Vec<u8>> = (0..2)
            .map(|r| {
                let out = dir.path().join(format!("{i}-{r}.json"));
                let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
                full.extend(["--seed", "5", "--out", out.to_str().unwrap()]);
                let o = coordlab(&full);
                assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
                std::fs::read(out).unwrap()
            })
            .collect();
        assert_eq!(runs[0], runs[1], "{args:?}");
    }
}

#[test]
fn echoed_instance_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let first = report(&["simulate", &shipped("calibration.json"), "--scheme", "noncausal", "--trials", "5", "--seed", "7"]);
    assert_eq!(first.seed, 7);
    let path = write(&dir, "echo.json", &first.instance.to_json());
    let second = report(&["simulate", &path, "--scheme", "noncausal", "--trials", "5"]);
    assert_eq!(first, second);
    assert_eq!(first.instance_digest, coordlab_cli::report::digest(&InstanceFile::parse(&first.instance.to_json()).unwrap()));
}

#[test]
fn seed_override_changes_the_run() {
    let c = shipped("calibration.json");
    let a = report(&["simulate", &c, "--scheme", "noncausal", "--trials", "3", "--trace"]);
    let b = report(&["simulate", &c, "--scheme", "noncausal", "--trials", "3", "--trace", "--seed", "99"]);
    assert_ne!(a.instance_digest, b.instance_digest);
    assert_ne!(a.result["trials"], b.result["trials"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let malformed = write(&dir, "bad.json", "{\n  \"alphabets\": {\n    \"x\": [\"0\"],,\n");
    let out = coordlab(&["feasible", &malformed]);
    assert_eq!(out.code, EXIT_ERROR);
    assert!(out.stderr.contains("line 3"), "{}", out.stderr);

    let out = coordlab(&["feasible", &shipped("penny.json")]);
    assert_eq!(out.code, EXIT_ERROR);
    assert!(out.stderr.contains("target"), "{}", out.stderr);

    let bad_row = binary_instance(Some("[[[0.5, 0.5], [0.5, 0.5]], [[1, 0], [0, 0]]]"), None, r#"{"d1": 0, "d2": 0}"#);
    let out = coordlab(&["feasible", &write(&dir, "row.json", &bad_row)]);
    assert_eq!(out.code, EXIT_ERROR);
    assert!(out.stderr.contains("`target`"), "{}", out.stderr);

    assert_eq!(coordlab(&["feasible", &shipped("broadcast.json")]).code, EXIT_INFEASIBLE);
    assert_eq!(coordlab(&["feasible", &shipped("calibration.json"), "--cell", "soon,1"]).code, EXIT_ERROR);
    assert_eq!(coordlab(&["simulate", &shipped("calibration.json"), "--scheme", "sideways"]).code, EXIT_ERROR);
    assert_eq!(coordlab(&["feasible", "/nonexistent/instance.json"]).code, EXIT_ERROR);
    assert_eq!(coordlab(&["--help"]).code, EXIT_OK);

    // A game scheme on a target outside the strictly causal set is rejected.
    let out = coordlab(&["game", &shipped("broadcast.json"), "--rounds", "10"]);
    assert_eq!(out.code, EXIT_ERROR, "broadcast has no reward: {}", out.stderr);
    let with_reward = binary_instance(
        Some("[[[1, 0], [0, 0]], [[0, 1], [0, 0]]]"),
        Some("[[[1, 0], [0, 0]], [[0, 0], [0, 1]]]"),
        r#"{"d1": "noncausal", "d2": 1}"#,
    );
    let out = coordlab(&["game", &write(&dir, "g.json", &with_reward), "--rounds", "10"]);
    assert_eq!(out.code, EXIT_INFEASIBLE, "{}", out.stderr);
}

#[test]
fn binary_honours_exit_codes_and_thread_cap() {
    let bin = env!("CARGO_BIN_EXE_coordlab");
    let status = Process::new(bin)
        .args(["oracle", &shipped("penny.json"), "--n", "2", "--regime", "noncausal-both", "--budget", "5"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_BUDGET));
    let out = Process::new(bin)
        .env("COORDLAB_THREADS", "2")
        .args(["oracle", &shipped("penny.json"), "--n", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let r: Report = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(num(&r.result["best_value"]), 0.5);
    let status = Process::new(bin)
        .env("COORDLAB_THREADS", "zero")
        .args(["oracle", &shipped("penny.json"), "--n", "1"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_ERROR));
}
