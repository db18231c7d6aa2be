use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rsma_core::experiment::report::{emit_plot_data, report};
use rsma_core::experiment::run::{
    evaluate_policy, load_run, run_training, train, train_or_load, Policy, CONFIG_FILE, EPISODES_FILE,
    FAILED_CHECKPOINT, FAILURE_FILE, SUMMARY_FILE,
};
use rsma_core::experiment::{run_power_sweep, run_qos_sweep, Algorithm, RunConfig};
use rsma_core::Error;

const ALGORITHMS: [Algorithm; 3] = [Algorithm::Ppo, Algorithm::QLearning, Algorithm::Greedy];

fn tiny(out: &Path, algorithm: Algorithm) -> RunConfig {
    let mut c = RunConfig::desk();
    c.out = out.to_path_buf();
    c.algorithm = algorithm;
    c.episodes = 4;
    c.env.episode_len = 10;
    c.eval_episodes = 2;
    c.ppo.rollout_steps = 20;
    c.ppo.minibatch = 8;
    c.q.warmup_steps = 50;
    c.wall_clock = false;
    c.seeds = vec![0];
    c
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(String::from).collect()
}

#[test]
fn one_csv_row_per_episode() {
    let dir = tempfile::tempdir().unwrap();
    for algorithm in ALGORITHMS {
        let mut c = tiny(dir.path(), algorithm);
        c.episodes = 2;
        c.env.episode_len = 5;
        let record = run_training(&c, 0).unwrap();
        assert_eq!(record.rows.len(), 2);
        let run = c.run_dir(0);
        let text = fs::read_to_string(run.join(EPISODES_FILE)).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "episode,mean_reward,mean_sum_rate,qos_violation_fraction,wall_clock_seconds"
        );
        assert_eq!(text.lines().count(), 3, "{algorithm}");
        for f in [CONFIG_FILE, SUMMARY_FILE, Policy::checkpoint_file(algorithm)] {
            assert!(run.join(f).is_file(), "{algorithm}: missing {f}");
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for algorithm in ALGORITHMS {
        let mut outputs = Vec::new();
        for rerun in ["a", "b"] {
            let c = tiny(&dir.path().join(rerun), algorithm);
            run_training(&c, 5).unwrap();
            let run = c.run_dir(5);
            outputs.push((
                fs::read(run.join(EPISODES_FILE)).unwrap(),
                fs::read(run.join(Policy::checkpoint_file(algorithm))).unwrap(),
            ));
        }
        assert_eq!(outputs[0], outputs[1], "{algorithm}");
    }
}

#[test]
fn wall_clock_column_is_the_only_difference() {
    let dir = tempfile::tempdir().unwrap();
    let strip = |c: &RunConfig| -> Vec<String> {
        data_rows(&c.run_dir(1).join(EPISODES_FILE))
            .into_iter()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    let mut a = tiny(&dir.path().join("a"), Algorithm::Ppo);
    a.wall_clock = true;
    let mut b = a.clone();
    b.out = dir.path().join("b");
    run_training(&a, 1).unwrap();
    run_training(&b, 1).unwrap();
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn frozen_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    for algorithm in ALGORITHMS {
        let c = tiny(dir.path(), algorithm);
        run_training(&c, 2).unwrap();
        let run = c.run_dir(2);
        let first = fs::read(run.join(EPISODES_FILE)).unwrap();
        let frozen = RunConfig::load(&run.join(CONFIG_FILE)).unwrap();
        assert_eq!(frozen.seeds, vec![2]);
        assert_eq!(frozen.run_dir(2), run);
        run_training(&frozen, frozen.seeds[0]).unwrap();
        assert_eq!(fs::read(run.join(EPISODES_FILE)).unwrap(), first, "{algorithm}");
    }
}

#[test]
fn checkpoint_round_trip_preserves_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    for algorithm in ALGORITHMS {
        let c = tiny(dir.path(), algorithm);
        let (_, policy) = train(&c, 4).unwrap();
        let before = evaluate_policy(&policy, &c, 4).unwrap();
        let loaded = Policy::load(&c.run_dir(4), &c).unwrap();
        let after = evaluate_policy(&loaded, &c, 4).unwrap();
        assert_eq!(before, after, "{algorithm}");
        assert_eq!(before.rows.len(), c.eval_episodes);
    }
}

#[test]
fn evaluation_channels_are_shared_across_algorithms() {
    // The evaluation stream depends only on the channel seed and run seed.
    let dir = tempfile::tempdir().unwrap();
    let a = tiny(dir.path(), Algorithm::Greedy);
    let b = tiny(dir.path(), Algorithm::QLearning);
    assert_eq!(a.channel_stream_seed(3), b.channel_stream_seed(3));
    let (_, ga) = train(&a, 3).unwrap();
    let e1 = evaluate_policy(&ga, &a, 3).unwrap();
    let e2 = evaluate_policy(&ga, &b, 3).unwrap();
    assert_eq!(e1, e2);
}

#[test]
fn matching_runs_are_reused() {
    let dir = tempfile::tempdir().unwrap();
    let c = tiny(dir.path(), Algorithm::Ppo);
    assert!(load_run(&c, 0).unwrap().is_none());
    let (record, _) = train(&c, 0).unwrap();
    let (again, _) = load_run(&c, 0).unwrap().expect("reusable run");
    assert_eq!(record, again);
    let (via, _) = train_or_load(&c, 0).unwrap();
    assert_eq!(via, record);

    let mut changed = c.clone();
    changed.ppo.learning_rate *= 2.0;
    assert!(load_run(&changed, 0).unwrap().is_none());
}

#[test]
fn divergence_leaves_a_failure_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path(), Algorithm::Ppo);
    c.ppo.learning_rate = 1e300;
    c.ppo.optimizer = "sgd".parse().unwrap();
    let err = run_training(&c, 0).unwrap_err();
    assert!(matches!(err, Error::Divergence(_)), "{err}");
    let run = c.run_dir(0);
    let rows = data_rows(&run.join(EPISODES_FILE));
    assert!(rows.last().unwrap().contains("NaN"));
    assert!(run.join(FAILURE_FILE).is_file());
    assert!(run.join(FAILED_CHECKPOINT).is_file());
    assert!(load_run(&c, 0).unwrap().is_none());
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let c = tiny(&blocker.join("sub"), Algorithm::Greedy);
    assert!(matches!(run_training(&c, 0), Err(Error::Io(_))));
}

/// Independent parse of every `episodes.csv` under `<dir>/<group>/seed*/`.
fn recompute_curves(dir: &Path) -> BTreeMap<(String, u64), Vec<f64>> {
    let mut out: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for group in fs::read_dir(dir).unwrap().flatten().filter(|e| e.path().is_dir()) {
        let name = group.file_name().to_string_lossy().to_string();
        for run in fs::read_dir(group.path()).unwrap().flatten() {
            for line in data_rows(&run.path().join(EPISODES_FILE)) {
                let f: Vec<&str> = line.split(',').collect();
                let episode: u64 = f[0].parse().unwrap();
                let sum_rate: f64 = f[2].parse().unwrap();
                out.entry((name.clone(), episode)).or_default().push(sum_rate);
            }
        }
    }
    out
}

#[test]
fn plot_means_match_raw_episode_logs() {
    let dir = tempfile::tempdir().unwrap();
    for algorithm in [Algorithm::Ppo, Algorithm::Greedy] {
        let mut c = tiny(dir.path(), algorithm);
        c.seeds = vec![0, 1, 2];
        for &s in &c.seeds {
            run_training(&c, s).unwrap();
        }
    }
    let out = report(dir.path()).unwrap();
    assert_eq!(out.runs, 6);
    let expected = recompute_curves(dir.path());
    let text = fs::read_to_string(dir.path().join("learning_curves.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scheme,csit,x_variable,x,seeds,mean_sum_rate,stderr_sum_rate,mean_reward,stderr_reward,mean_violation,stderr_violation"
    );
    let mut checked = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let key = (format!("{}-{}", f[0], f[1]), f[3].parse::<f64>().unwrap() as u64);
        let raw = &expected[&key];
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let got: f64 = f[5].parse().unwrap();
        assert!((got - mean).abs() <= 1e-12 * mean.abs().max(1.0), "{key:?}: {got} vs {mean}");
        assert_eq!(f[4].parse::<usize>().unwrap(), 3);
        checked += 1;
    }
    assert_eq!(checked, 2 * 4);
    assert!(dir.path().join("learning_curves.txt").is_file());
    assert!(dir.path().join("final_performance.csv").is_file());
}

#[test]
fn single_seed_has_zero_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let c = tiny(dir.path(), Algorithm::Greedy);
    run_training(&c, 0).unwrap();
    report(dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("learning_curves.csv")).unwrap();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[6], "0");
        assert_eq!(f[8], "0");
    }
}

#[test]
fn empty_inputs_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(emit_plot_data(&[], dir.path(), "x"), Err(Error::Usage(_))));
    assert!(matches!(report(dir.path()), Err(Error::Usage(_))));
    let c = tiny(dir.path(), Algorithm::Ppo);
    assert!(matches!(run_power_sweep(&c, &[]), Err(Error::Usage(_))));
    assert!(matches!(run_qos_sweep(&c, &[]), Err(Error::Usage(_))));
}

#[test]
fn power_sweep_has_one_row_per_scheme_and_point() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path(), Algorithm::Ppo);
    c.episodes = 2;
    let points = c.sweep.power_dbm.clone();
    let result = run_power_sweep(&c, &points).unwrap();
    assert_eq!(result.summary.len(), c.sweep.schemes.len() * points.len());
    for scheme in &c.sweep.schemes {
        let xs: Vec<f64> = result
            .summary
            .iter()
            .filter(|r| r.scheme == scheme.to_string())
            .map(|r| r.x)
            .collect();
        assert_eq!(xs, points);
    }
    let raw = fs::read_to_string(dir.path().join("power_sweep_raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 1 + c.sweep.schemes.len() * points.len());
    assert!(dir.path().join("power_sweep.csv").is_file());
    assert!(dir.path().join("power_sweep.txt").is_file());

    // A second sweep reuses every checkpoint and reproduces the results.
    let again = run_power_sweep(&c, &points).unwrap();
    assert_eq!(again, result);
}

#[test]
fn qos_extremes() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path(), Algorithm::Ppo);
    c.episodes = 2;
    let result = run_qos_sweep(&c, &[0.0, 100.0]).unwrap();
    for o in &result.observations {
        if o.x == 0.0 {
            assert_eq!(o.mean_reward, o.mean_sum_rate, "{}", o.scheme);
            assert_eq!(o.qos_violation_fraction, 0.0);
        } else {
            assert_eq!(o.qos_violation_fraction, 1.0, "{}", o.scheme);
            assert_eq!(o.mean_reward, 0.0, "{}", o.scheme);
        }
    }
    assert_eq!(result.observations.len(), 2 * c.sweep.schemes.len());
}
