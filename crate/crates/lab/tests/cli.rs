use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use confound_core::dataset::generate_expert_data;
use confound_core::envs;
use confound_core::mdp::solve_optimal;
use confound_lab::formats::{self, EnvFile, OracleAccess};
use confound_lab::LabError;
use serde_json::Value;

fn lab(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_confound-lab"));
    c.args(args).env_remove(formats::ORACLE_ENV);
    c
}

fn ok_json(out: Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn err_json(out: Output) -> Value {
    assert_eq!(out.status.code(), Some(1));
    serde_json::from_slice(&out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn toy_env_solves_to_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("toy.json");
    ok_json(lab(&["gen-env", "--kind", "toy", "--params", "gamma = 0.8; rho = 0.3", "--out", s(&env)]).output().unwrap());
    let pol = dir.path().join("pi.json");
    let r = ok_json(lab(&["solve", "--env", s(&env), "--out", s(&pol)]).output().unwrap());
    assert!((r["optimal_value"].as_f64().unwrap() - 0.8).abs() < 1e-9);
    let policy = formats::read_policy(&pol).unwrap();
    let file = formats::read_mdp(&env).unwrap();
    assert_eq!(policy, solve_optimal(&file.mdp, 1e-10).unwrap().0);
}

#[test]
fn catastrophic_construction_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("cat.json");
    let params = "k = 3; m = 5; d_star = [0.5, 0.3, 0.2]";
    ok_json(lab(&["gen-env", "--kind", "catastrophic", "--params", params, "--out", s(&env)]).output().unwrap());
    let report = dir.path().join("report.json");
    let r = ok_json(lab(&["verify-construction", "--env", s(&env), "--report", s(&report)]).output().unwrap());
    assert_eq!(r["ok"], Value::Bool(true));
    let values: Vec<f64> = r["values"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(values, vec![1.0, 0.0, 0.0, 1.0]);
    assert!(report.is_file());

    let toy = dir.path().join("toy.json");
    ok_json(lab(&["gen-env", "--kind", "toy", "--out", s(&toy)]).output().unwrap());
    assert_eq!(err_json(lab(&["verify-construction", "--env", s(&toy)]).output().unwrap())["error"], "config");
}

#[test]
fn sealed_contexts_need_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("toy.json");
    let data = dir.path().join("data.jsonl");
    let trace = dir.path().join("trace.csv");
    ok_json(lab(&["gen-env", "--kind", "toy", "--params", "rho = 0.8", "--out", s(&env)]).output().unwrap());
    ok_json(
        lab(&["gen-expert", "--env", s(&env), "--rho-e", "0.2,0.8", "--n", "300", "--seed", "4", "--out", s(&data)])
            .output()
            .unwrap(),
    );
    assert!(formats::oracle_path(&data).is_file());

    let args = ["rl-cts", "--env", s(&env), "--data", s(&data), "--mode", "oracle", "--out", s(&trace)];
    assert_eq!(err_json(lab(&args).output().unwrap())["error"], "oracle-locked");
    assert!(!trace.exists());

    let by_flag = ok_json(lab(&args).arg("--oracle").output().unwrap());
    let first = fs::read(&trace).unwrap();
    let by_env = ok_json(lab(&args).env(formats::ORACLE_ENV, "1").output().unwrap());
    assert_eq!(by_flag, by_env);
    assert_eq!(fs::read(&trace).unwrap(), first);
    assert!((by_flag["final_value"].as_f64().unwrap() - 0.9).abs() < 1e-9);
    assert_eq!(formats::read_trace_values(&trace).unwrap().len(), 100);

    assert!(matches!(formats::read_sealed(&data, None), Err(LabError::OracleLocked(_))));
}

#[test]
fn dataset_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = envs::build_toy(0.9, 0.5).unwrap();
    let expert = envs::toy_expert(mdp.dims());
    let (ds, sealed) = generate_expert_data(&mdp, &expert, mdp.rho_online(), 50, 9).unwrap();
    let path = dir.path().join("d.jsonl");
    formats::write_dataset_with_oracle(&path, &ds, &sealed).unwrap();
    let back = formats::read_dataset(&path, &mdp).unwrap();
    assert_eq!(back.trajectories(), ds.trajectories());
    assert_eq!(back.horizon(), ds.horizon());
    let access = OracleAccess::request(true);
    assert_eq!(formats::read_sealed(&path, access).unwrap(), sealed);

    let text = fs::read_to_string(&path).unwrap().replacen("\"id\":0", "\"id\":7", 1);
    fs::write(&path, text).unwrap();
    assert!(matches!(formats::read_dataset(&path, &mdp), Err(LabError::Parse { .. })));

    let env = EnvFile::plain(mdp);
    let mpath = dir.path().join("m.json");
    formats::write_mdp(&mpath, &env).unwrap();
    assert_eq!(formats::read_mdp(&mpath).unwrap(), env);
}

#[test]
fn imitation_from_data_recovers_both_toy_policies() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("toy.json");
    let data = dir.path().join("data.jsonl");
    ok_json(lab(&["gen-env", "--kind", "toy", "--out", s(&env)]).output().unwrap());
    ok_json(lab(&["gen-expert", "--env", s(&env), "--n", "2000", "--out", s(&data)]).output().unwrap());
    let r = ok_json(lab(&["imitate", "--env", s(&env), "--data", s(&data), "--delta", "0.05"]).output().unwrap());
    assert_eq!(r["set_size"], 2);
    assert!((r["mean_value"].as_f64().unwrap() - 0.45).abs() < 1e-9);
    let it = ok_json(
        lab(&["imitate", "--env", s(&env), "--data", s(&data), "--delta", "0.05", "--lambda", "0.1"])
            .output()
            .unwrap(),
    );
    assert_eq!(it["set_size"], 2);
    assert_eq!(it["productive"], 2);
}

#[test]
fn divergence_test_matches_exact() {
    for kind in ["kl", "chi2", "tv", "gail"] {
        let r = ok_json(
            lab(&["divergence-test", "--kind", kind, "--p", "0.2,0.3,0.5", "--q", "0.4,0.4,0.2"])
                .output()
                .unwrap(),
        );
        assert!(r["gap"].as_f64().unwrap().abs() < 1e-3, "{kind}: {r}");
    }
    let bad = err_json(lab(&["divergence-test", "--kind", "kl", "--p", "0.5,x", "--q", "0.5,0.5"]).output().unwrap());
    assert_eq!(bad["error"], "config");
}

const RUN: &str = r#"
name = "NAME"
[env]
kind = "toy"
rho = 0.8
[data]
rho_e = [0.2, 0.8]
n = 500
[algorithm]
kind = "KIND"
lambda = 2.0
candidates = 10
epochs = 5
batch = 64
outer_iters = OUTER
[evaluation]
seeds = [SEEDS]
out_dir = "out-NAME"
"#;

fn write_config(dir: &Path, name: &str, kind: &str, outer: usize, seeds: &str) -> std::path::PathBuf {
    let text = RUN
        .replace("NAME", name)
        .replace("KIND", kind)
        .replace("OUTER", &outer.to_string())
        .replace("SEEDS", seeds);
    let path = dir.join(format!("{name}.toml"));
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_writes_traces_and_summary_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a", "p2-ogd", 20, "3, 1");
    let r = ok_json(lab(&["run", "--config", s(&cfg)]).output().unwrap());
    assert_eq!(r["name"], "a");
    let out = dir.path().join("out-a");
    let summary = fs::read(out.join("summary.json")).unwrap();
    let t3 = fs::read(out.join("trace-seed3.csv")).unwrap();
    ok_json(lab(&["run", "--config", s(&cfg), "--workers", "1"]).output().unwrap());
    assert_eq!(fs::read(out.join("summary.json")).unwrap(), summary);
    assert_eq!(fs::read(out.join("trace-seed3.csv")).unwrap(), t3);

    let v: Value = serde_json::from_slice(&summary).unwrap();
    let runs = v["runs"].as_array().unwrap();
    assert_eq!(runs[0]["seed"], 3);
    assert_eq!(runs[1]["seed"], 1);
    assert_eq!(runs[0]["trace"].as_array().unwrap().len(), 20);
    assert_eq!(v["optimal_value"].as_f64().unwrap(), v["rl_without_data"].as_f64().unwrap());
}

#[test]
fn compare_pairs_against_the_first_summary() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "ogd", "p2-ogd", 10, "0, 1");
    let b = write_config(dir.path(), "naive", "p1b", 6, "1, 0");
    ok_json(lab(&["run", "--config", s(&a)]).output().unwrap());
    ok_json(lab(&["run", "--config", s(&b)]).output().unwrap());
    let sa = dir.path().join("out-ogd/summary.json");
    let sb = dir.path().join("out-naive/summary.json");
    let table = dir.path().join("cmp.csv");
    let r = ok_json(lab(&["compare", s(&sa), s(&sb), "--out", s(&table)]).output().unwrap());
    assert_eq!(r["rows"], 10);
    let text = fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iter,ogd#0,naive#1,delta_naive#1,provenance");
    assert!(lines[6].ends_with(",exact"));
    assert!(lines[7].ends_with(",carried:naive#1"));
    assert!(lines[10].starts_with("10,"));
}

#[test]
fn bad_configs_fail_with_structured_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write_config(dir.path(), "e", "p2-ogd", 5, "");
    let e = err_json(lab(&["run", "--config", s(&empty)]).output().unwrap());
    assert_eq!(e["error"], "config");
    assert!(e["message"].as_str().unwrap().contains("seeds"));

    let dup = write_config(dir.path(), "d", "p2-ogd", 5, "2, 2");
    assert_eq!(err_json(lab(&["run", "--config", s(&dup)]).output().unwrap())["error"], "config");

    let missing = dir.path().join("m.toml");
    fs::write(
        &missing,
        "name = \"m\"\n[env]\nkind = \"file\"\npath = \"nope.json\"\n[algorithm]\nkind = \"p1b\"\n[evaluation]\nseeds = [0]\nout_dir = \"o\"\n",
    )
    .unwrap();
    assert_eq!(err_json(lab(&["run", "--config", s(&missing)]).output().unwrap())["error"], "config");

    let absent = dir.path().join("absent.toml");
    assert_eq!(err_json(lab(&["run", "--config", s(&absent)]).output().unwrap())["error"], "io");
}
