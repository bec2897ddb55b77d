//! End-to-end tests of the `dmil` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dmil_cli::check::{run_with_hooks, CheckArgs};
use dmil_cli::manifest::{sha256_file, RunManifest};
use dmil_cli::CliError;
use dmil_core::data::{collect_expert_dataset, expert_noise_std, Dataset, Origin, EXPERT_NOISE_FRACTION};
use dmil_core::env::{LinearEnv, LqrController, Task};
use dmil_core::trainer::TrainLog;
use dmil_core::verify::Hooks;
use serde_json::Value;
use tempfile::TempDir;

fn dmil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmil")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = dmil(args);
    assert!(
        out.status.success(),
        "dmil {args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMOKE_CONFIG: &str = r#"{
  "pretrain_steps": 50,
  "batch_size": 32,
  "learning_rate": 0.001,
  "policy_hidden": [16, 16],
  "dynamics_hidden": [16, 16],
  "discriminator_hidden": [16, 16],
  "eval_every": 0,
  "eval_episodes": 2,
  "log_every": 10,
  "rollout": { "branches": 8, "horizon": 3 }
}"#;

fn write_config(dir: &TempDir) -> PathBuf {
    let path = p(dir, "config.json");
    std::fs::write(&path, SMOKE_CONFIG).unwrap();
    path
}

fn gen(dir: &TempDir, name: &str, n: usize, seed: u64) -> PathBuf {
    let path = p(dir, name);
    ok(&["gen-data", "--env", "stand-still", "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", s(&path)]);
    path
}

#[test]
fn gen_data_writes_metadata_header_and_rows() {
    let dir = TempDir::new().unwrap();
    let path = gen(&dir, "d.csv", 2000, 1);
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2002);
    let meta: Value = serde_json::from_str(lines[0].strip_prefix("# ").unwrap()).unwrap();
    assert_eq!(meta["env"], "stand_still");
    assert_eq!(meta["seed"], 1);
    assert_eq!(meta["physical_constants"]["dt"], 0.005);
    assert_eq!(meta["physical_constants"]["pole_mass"], 0.1);
    assert_eq!(lines[1], "s0,s1,s2,s3,a0,sp0,sp1,sp2,sp3,origin");
    assert!(lines[2..].iter().all(|l| l.ends_with(",expert") && l.split(',').count() == 10));
}

#[test]
fn gen_data_matches_the_library_bit_for_bit() {
    let dir = TempDir::new().unwrap();
    let path = gen(&dir, "d.csv", 300, 9);
    let env = LinearEnv::for_task(Task::StandStill);
    let lqr = LqrController::for_env(&env).unwrap();
    let noise = expert_noise_std(&env, &lqr, EXPERT_NOISE_FRACTION).unwrap();
    let direct = collect_expert_dataset(&env, &lqr, 300, &noise, 9, None).unwrap();
    let read = Dataset::read_csv(&path).unwrap();
    assert_eq!(read.transitions(), direct.transitions());
}

#[test]
fn zero_corruption_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let plain = gen(&dir, "plain.csv", 400, 3);
    let zero = p(&dir, "zero.csv");
    ok(&["gen-data", "--n", "400", "--seed", "3", "--out", s(&zero), "--corrupt-fraction", "0"]);
    assert_eq!(std::fs::read(&plain).unwrap(), std::fs::read(&zero).unwrap());
}

#[test]
fn corruption_touches_exactly_the_requested_rows() {
    let dir = TempDir::new().unwrap();
    let plain = gen(&dir, "plain.csv", 500, 4);
    let noisy = p(&dir, "noisy.csv");
    ok(&["gen-data", "--n", "500", "--seed", "4", "--out", s(&noisy), "--corrupt-fraction", "0.2"]);
    let a = Dataset::read_csv(&plain).unwrap();
    let b = Dataset::read_csv(&noisy).unwrap();
    let changed = a.transitions().iter().zip(b.transitions()).filter(|(x, y)| x.s != y.s).count();
    assert_eq!(changed, 100);
    assert!(a.transitions().iter().zip(b.transitions()).all(|(x, y)| x.a == y.a && x.s_next == y.s_next));
}

#[test]
fn mixing_splits_expert_trajectories_between_the_two_files() {
    let dir = TempDir::new().unwrap();
    let (de, d_o) = (p(&dir, "de.csv"), p(&dir, "do.csv"));
    ok(&[
        "gen-data",
        "--n",
        "1000",
        "--seed",
        "5",
        "--episode-cap",
        "100",
        "--mix-x",
        "0.3",
        "--mediocre-n",
        "700",
        "--out",
        s(&de),
        "--out-suboptimal",
        s(&d_o),
    ]);
    // oracle: regenerate the pool and find each of its trajectories in exactly one file
    let env = LinearEnv::for_task(Task::StandStill);
    let lqr = LqrController::for_env(&env).unwrap();
    let noise = expert_noise_std(&env, &lqr, EXPERT_NOISE_FRACTION).unwrap();
    let pool = collect_expert_dataset(&env, &lqr, 1000, &noise, 5, Some(100)).unwrap();
    let de = Dataset::read_csv(&de).unwrap();
    let d_o = Dataset::read_csv(&d_o).unwrap();
    let strip = |d: &Dataset, r: std::ops::Range<usize>| -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        d.transitions()[r].iter().map(|t| (t.s.clone(), t.a.clone(), t.s_next.clone())).collect()
    };
    let count_in = |d: &Dataset| {
        let trajs: Vec<_> = d.trajectories().into_iter().map(|r| strip(d, r)).collect();
        pool.trajectories().into_iter().filter(|r| trajs.contains(&strip(&pool, r.clone()))).count()
    };
    let n_pool = pool.trajectories().len();
    assert_eq!(n_pool, 10);
    let (in_e, in_o) = (count_in(&de), count_in(&d_o));
    assert_eq!(in_e + in_o, n_pool);
    assert_eq!(in_o, 3);
    assert_eq!(de.len(), 700);
    assert_eq!(d_o.len(), 300 + 700);
    assert!(de.transitions().iter().all(|t| t.origin == Origin::Expert));
    assert!(d_o.transitions().iter().all(|t| t.origin == Origin::Suboptimal));
}

#[test]
fn bad_gen_data_flags_are_usage_errors_and_write_nothing() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "x.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec!["gen-data", "--n", "0", "--out", s(&out)],
        vec!["gen-data", "--n", "10", "--env", "hover", "--out", s(&out)],
        vec!["gen-data", "--n", "10", "--mix-x", "0.3", "--out", s(&out)],
        vec!["gen-data", "--n", "10", "--corrupt-fraction", "1.5", "--out", s(&out)],
        vec!["gen-data", "--n", "10", "--controller", "mediocre", "--degradation", "2", "--out", s(&out)],
        vec!["gen-data", "--out", s(&out)],
    ];
    for args in cases {
        let o = dmil(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!out.exists(), "{args:?} wrote output");
    }
}

#[test]
fn bc_training_is_reproducible_and_manifest_hashes_verify() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "d.csv", 300, 1);
    let cfg = write_config(&dir);
    let (a, b) = (p(&dir, "run_a"), p(&dir, "run_b"));
    for out in [&a, &b] {
        ok(&[
            "train",
            "--algo",
            "bc",
            "--config",
            s(&cfg),
            "--data",
            s(&data),
            "--seed",
            "1",
            "--total-steps",
            "100",
            "--out",
            s(out),
        ]);
    }
    let la = std::fs::read(a.join("log.jsonl")).unwrap();
    assert_eq!(la, std::fs::read(b.join("log.jsonl")).unwrap());
    assert!(a.join("model.ckpt").exists());

    let m = RunManifest::read(&a.join("manifest.json")).unwrap();
    assert_eq!(m.status, "completed");
    assert_eq!(m.seed, 1);
    assert_eq!(m.config.total_steps, 100);
    assert_eq!(m.config.policy_hidden, vec![16, 16]);
    assert_eq!(m.config.hyper.alpha_pi, 10.0);
    assert_eq!(m.datasets[0].sha256, sha256_file(&data).unwrap());
    assert!(m.finished_at.unwrap() >= m.started_at);
    m.verify_hashes().unwrap();

    // a run directory refuses a different dataset, and hashes no longer verify
    let other = gen(&dir, "other.csv", 300, 2);
    let o = dmil(&[
        "train",
        "--algo",
        "bc",
        "--config",
        s(&cfg),
        "--data",
        s(&other),
        "--total-steps",
        "10",
        "--out",
        s(&a),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(std::fs::read(a.join("log.jsonl")).unwrap(), la);
    std::fs::copy(&other, &data).unwrap();
    assert!(m.verify_hashes().is_err());
}

#[test]
fn dmil_smoke_run_finishes_with_finite_losses() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "d.csv", 200, 2);
    let cfg = write_config(&dir);
    let out = p(&dir, "run");
    ok(&["train", "--algo", "dmil", "--config", s(&cfg), "--data", s(&data), "--total-steps", "500", "--out", s(&out)]);
    let log = TrainLog::read_jsonl(&std::fs::read_to_string(out.join("log.jsonl")).unwrap()).unwrap();
    let last = log.last_step().unwrap();
    assert_eq!(last.step, 499);
    assert_eq!(last.order, vec!["d_r", "pi", "f"]);
    for v in [last.loss_pi, last.loss_f, last.loss_dr, last.d_r_expert, last.d_r_rollout] {
        assert!(v.unwrap().is_finite());
    }
    assert!(log.final_eval().unwrap().mean > 0.0);
}

#[test]
fn d2mil_needs_and_uses_a_suboptimal_file() {
    let dir = TempDir::new().unwrap();
    let (de, d_o) = (p(&dir, "de.csv"), p(&dir, "do.csv"));
    ok(&[
        "gen-data",
        "--n",
        "400",
        "--seed",
        "3",
        "--episode-cap",
        "100",
        "--mix-x",
        "0.3",
        "--mediocre-n",
        "400",
        "--out",
        s(&de),
        "--out-suboptimal",
        s(&d_o),
    ]);
    let cfg = write_config(&dir);
    let out = p(&dir, "run");
    let o = dmil(&["train", "--algo", "d2mil", "--config", s(&cfg), "--data", s(&de), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    ok(&[
        "train",
        "--algo",
        "d2mil",
        "--config",
        s(&cfg),
        "--data",
        s(&de),
        "--data-suboptimal",
        s(&d_o),
        "--total-steps",
        "60",
        "--out",
        s(&out),
    ]);
    let log = TrainLog::read_jsonl(&std::fs::read_to_string(out.join("log.jsonl")).unwrap()).unwrap();
    assert_eq!(log.last_step().unwrap().order, vec!["d_r", "d_o", "pi", "f"]);
    let m = RunManifest::read(&out.join("manifest.json")).unwrap();
    assert_eq!(m.datasets.len(), 2);
    assert_eq!(m.datasets[1].role, "suboptimal");
}

#[test]
fn config_and_dataset_problems_stop_before_any_output() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "d.csv", 100, 1);
    let bad_cfg = p(&dir, "bad.json");
    std::fs::write(&bad_cfg, r#"{"total_steps": 5, "learning_rat": 0.1}"#).unwrap();
    let invalid = p(&dir, "invalid.json");
    std::fs::write(&invalid, r#"{"hyper": {"eta": 1.5}}"#).unwrap();
    let out = p(&dir, "run");
    let cases: Vec<Vec<&str>> = vec![
        vec!["train", "--config", s(&bad_cfg), "--data", s(&data), "--out", s(&out)],
        vec!["train", "--config", s(&invalid), "--data", s(&data), "--out", s(&out)],
        vec!["train", "--data", "/nonexistent/d.csv", "--out", s(&out)],
        vec!["train", "--data", s(&data), "--env", "move-straight", "--out", s(&out)],
        vec!["train", "--algo", "gail", "--data", s(&data), "--out", s(&out)],
    ];
    for args in cases {
        let o = dmil(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{args:?} created the run directory");
    }
}

#[test]
fn eval_reference_controllers_and_checkpoints() {
    let json = |out: String| -> Value { serde_json::from_str(out.trim()).unwrap() };
    let lqr = json(ok(&["eval", "--controller", "lqr", "--episodes", "4", "--seed", "2"]));
    assert_eq!(lqr["scores"].as_array().unwrap().len(), 4);
    assert!(lqr["scores"].as_array().unwrap().iter().all(|v| v.as_f64() == Some(2000.0)));
    assert_eq!(lqr["std"], 0.0);

    let zero = json(ok(&["eval", "--controller", "zero", "--episodes", "5"]));
    assert!(zero["scores"].as_array().unwrap().iter().all(|v| v.as_f64().unwrap() < 2000.0));
    let single = json(ok(&["eval", "--controller", "zero", "--episodes", "1"]));
    assert_eq!(single["std"], 0.0);

    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "d.csv", 200, 1);
    let cfg = write_config(&dir);
    let run = p(&dir, "run");
    ok(&["train", "--algo", "bc", "--config", s(&cfg), "--data", s(&data), "--total-steps", "20", "--out", s(&run)]);
    let ckpt = run.join("model.ckpt");
    let csv = p(&dir, "scores.csv");
    let r = json(ok(&["eval", "--checkpoint", s(&ckpt), "--episodes", "3", "--csv", s(&csv)]));
    assert_eq!(r["episodes"], 3);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 4);

    let o = dmil(&["eval", "--checkpoint", s(&ckpt), "--env", "move-straight"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dims"));
    assert_eq!(dmil(&["eval", "--episodes", "2"]).status.code(), Some(2));
}

#[test]
fn check_passes_and_reports_gradient_errors() {
    let out = ok(&["check", "--json"]);
    let rows: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    for name in [
        "grad_bc",
        "grad_dynamics_nll",
        "grad_rollout_discriminator",
        "grad_pu_discriminator",
        "grad_dmil_policy",
        "grad_dmil_dynamics",
        "grad_d2mil_policy",
        "grad_d2mil_dynamics",
    ] {
        let row = rows.iter().find(|r| r["name"] == name).unwrap_or_else(|| panic!("{name} missing"));
        assert!(row["max_error"].as_f64().unwrap() < 1e-4, "{row}");
    }
    assert!(rows.iter().all(|r| r["passed"] == true));
}

#[test]
fn check_names_an_injected_sign_error() {
    fn flipped(d: f64, alpha: f64) -> dmil_core::Result<(f64, f64)> {
        dmil_core::objectives::dmil_weights(d, alpha).map(|(e, r)| (-e, r))
    }
    let mut buf = vec![];
    let err =
        run_with_hooks(&CheckArgs { seed: 0, json: false }, &Hooks { dmil_weights: flipped }, &mut buf).unwrap_err();
    assert!(matches!(err, CliError::Runtime(_)));
    assert_eq!(err.exit_code(), 3);
    let msg = err.to_string();
    assert!(msg.contains("dmil_expert_weight_nonnegative") && msg.contains("closed_form_spot_values"), "{msg}");
    let text = String::from_utf8(buf).unwrap();
    assert!(text.contains("FAIL closed_form_spot_values"));
}
