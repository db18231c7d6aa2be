use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: [&str; 8] = [
    "run.episodes=2",
    "env.episode_len=5",
    "run.eval_episodes=2",
    "ppo.rollout_steps=10",
    "ppo.minibatch=5",
    "q.warmup_steps=20",
    "run.wall_clock=false",
    "sweep.power_dbm=20,40",
];

fn lab(out: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rsma-lab"));
    cmd.args(args).arg("--desk").arg("--out").arg(out);
    for s in TINY {
        cmd.arg("--set").arg(s);
    }
    cmd.output().unwrap()
}

fn ok(output: &Output) -> String {
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    String::from_utf8(output.stdout.clone()).unwrap()
}

#[test]
fn train_evaluate_report() {
    let dir = tempfile::tempdir().unwrap();
    for algorithm in ["ppo", "qlearning", "greedy"] {
        let stdout = ok(&lab(dir.path(), &["train", "--algorithm", algorithm, "--seed", "3"]));
        assert!(stdout.contains("seed 3: 2 episodes"), "{stdout}");
        let stdout = ok(&lab(dir.path(), &["evaluate", "--algorithm", algorithm, "--seed", "3"]));
        assert!(stdout.contains("2 episodes"), "{stdout}");
    }
    let run = dir.path().join("ppo-rsma-imperfect").join("seed3");
    assert_eq!(fs::read_to_string(run.join("episodes.csv")).unwrap().lines().count(), 3);
    assert_eq!(fs::read_to_string(run.join("eval.csv")).unwrap().lines().count(), 3);

    let stdout = ok(&lab(dir.path(), &["report"]));
    assert!(stdout.contains("3 training runs"), "{stdout}");
    assert!(dir.path().join("learning_curves.csv").is_file());
}

#[test]
fn sdma_mode_flag() {
    let dir = tempfile::tempdir().unwrap();
    ok(&lab(dir.path(), &["train", "--mode", "sdma"]));
    assert!(dir.path().join("ppo-sdma-imperfect/seed0/policy.ckpt").is_file());
}

#[test]
fn config_file_then_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# tiny\nrun.algorithm = greedy\nrun.seeds = 1,2\n").unwrap();
    let stdout = ok(&lab(dir.path(), &["train", "--config", cfg.to_str().unwrap()]));
    assert!(stdout.contains("greedy seed 1") && stdout.contains("greedy seed 2"), "{stdout}");
    let frozen = fs::read_to_string(dir.path().join("greedy-imperfect/seed2/config.txt")).unwrap();
    assert!(frozen.contains("run.episodes = 2"), "{frozen}");
}

#[test]
fn power_sweep_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(dir.path(), &["sweep-power", "--seed", "0", "--set", "sweep.schemes=greedy,ppo-rsma"]);
    let stdout = ok(&out);
    assert!(stdout.contains("greedy") && stdout.contains("ppo-rsma"), "{stdout}");
    let raw = fs::read_to_string(dir.path().join("power_sweep_raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 1 + 2 * 2);
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["train", "--set", "no.such.key=1"],
        vec!["train", "--set", "env.p_t_dbm=loud"],
        vec!["train", "--set", "noequals"],
        vec!["train", "--config", "/nonexistent/run.cfg"],
        vec!["evaluate", "--seed", "99"],
        vec!["report"],
    ];
    for args in cases {
        let out = lab(&dir.path().join("empty"), &args);
        assert!(!out.status.success(), "{args:?} succeeded");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.starts_with("error:"), "{args:?}: {stderr}");
    }
    let cfg = dir.path().join("dup.cfg");
    fs::write(&cfg, "env.k = 2\nenv.k = 3\n").unwrap();
    let out = lab(dir.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
}
