//! Tidy, plot-ready summaries across seeds.
//!
//! Raw observations carry one value per (scheme, CSIT mode, x, seed).
//! Summaries collapse the seeds into a mean and a standard error
//! `s / sqrt(n)` with the sample standard deviation `s`; one seed gives a
//! standard error of zero.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{csit_label, RunConfig};
use super::run::{RunRecord, CONFIG_FILE, EPISODES_FILE};
use crate::error::{Error, Result};

pub const RAW_HEADER: &str = "scheme,csit,x_variable,x,seed,mean_reward,mean_sum_rate,qos_violation_fraction";
pub const SUMMARY_HEADER: &str = "scheme,csit,x_variable,x,seeds,mean_sum_rate,stderr_sum_rate,mean_reward,stderr_reward,mean_violation,stderr_violation";

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub scheme: String,
    pub csit: String,
    pub x_variable: String,
    pub x: f64,
    pub seed: u64,
    pub mean_reward: f64,
    pub mean_sum_rate: f64,
    pub qos_violation_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanStderr {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self { mean, stderr: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            stderr: (var / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheme: String,
    pub csit: String,
    pub x_variable: String,
    pub x: f64,
    pub seeds: usize,
    pub sum_rate: MeanStderr,
    pub reward: MeanStderr,
    pub violation: MeanStderr,
}

/// Groups observations by (scheme, csit, x variable, x), keeping first-seen
/// order.
pub fn summarize(observations: &[Observation]) -> Result<Vec<SummaryRow>> {
    if observations.is_empty() {
        return Err(Error::Usage("nothing to summarise".into()));
    }
    let mut order: Vec<(String, String, String, u64)> = Vec::new();
    let mut groups: HashMap<(String, String, String, u64), Vec<&Observation>> = HashMap::new();
    for o in observations {
        let key = (o.scheme.clone(), o.csit.clone(), o.x_variable.clone(), o.x.to_bits());
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(o);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let col = |f: fn(&Observation) -> f64| MeanStderr::of(&g.iter().map(|o| f(o)).collect::<Vec<_>>());
            SummaryRow {
                scheme: key.0,
                csit: key.1,
                x_variable: key.2,
                x: f64::from_bits(key.3),
                seeds: g.len(),
                sum_rate: col(|o| o.mean_sum_rate),
                reward: col(|o| o.mean_reward),
                violation: col(|o| o.qos_violation_fraction),
            }
        })
        .collect())
}

pub fn raw_csv(observations: &[Observation]) -> String {
    let mut s = String::from(RAW_HEADER);
    s.push('\n');
    for o in observations {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            o.scheme, o.csit, o.x_variable, o.x, o.seed, o.mean_reward, o.mean_sum_rate, o.qos_violation_fraction
        )
        .unwrap();
    }
    s
}

pub fn parse_raw_csv(text: &str) -> std::result::Result<Vec<Observation>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(RAW_HEADER) {
        return Err("missing observation header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(format!("row {i}: expected 8 fields"));
            }
            let num = |j: usize| f[j].parse::<f64>().map_err(|e| format!("row {i}: {e}"));
            Ok(Observation {
                scheme: f[0].to_string(),
                csit: f[1].to_string(),
                x_variable: f[2].to_string(),
                x: num(3)?,
                seed: f[4].parse().map_err(|e| format!("row {i}: {e}"))?,
                mean_reward: num(5)?,
                mean_sum_rate: num(6)?,
                qos_violation_fraction: num(7)?,
            })
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.scheme,
            r.csit,
            r.x_variable,
            r.x,
            r.seeds,
            r.sum_rate.mean,
            r.sum_rate.stderr,
            r.reward.mean,
            r.reward.stderr,
            r.violation.mean,
            r.violation.stderr
        )
        .unwrap();
    }
    s
}

pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<12} {:<10} {:<10} {:>10} {:>5} {:>18} {:>18} {:>16}\n",
        "scheme", "csit", "x_var", "x", "seeds", "sum_rate", "reward", "violation"
    );
    for r in rows {
        let cell = |m: MeanStderr| format!("{:.3} ± {:.3}", m.mean, m.stderr);
        writeln!(
            s,
            "{:<12} {:<10} {:<10} {:>10} {:>5} {:>18} {:>18} {:>16}",
            r.scheme,
            r.csit,
            r.x_variable,
            r.x,
            r.seeds,
            cell(r.sum_rate),
            cell(r.reward),
            cell(r.violation)
        )
        .unwrap();
    }
    s
}

/// Writes `<name>.csv` (tidy summary) and `<name>.txt` (aligned table) into
/// `dir` and returns the summary rows.
pub fn emit_plot_data(observations: &[Observation], dir: &Path, name: &str) -> Result<Vec<SummaryRow>> {
    let rows = summarize(observations)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{name}.csv")), summary_csv(&rows))?;
    fs::write(dir.join(format!("{name}.txt")), summary_table(&rows))?;
    Ok(rows)
}

/// Per-episode observations of training runs, with the episode index as x.
pub fn learning_curve(config: &RunConfig, record: &RunRecord) -> Vec<Observation> {
    let scheme = config.scheme().to_string();
    let csit = csit_label(config.env.channel.perfect_csit).to_string();
    record
        .rows
        .iter()
        .map(|r| Observation {
            scheme: scheme.clone(),
            csit: csit.clone(),
            x_variable: "episode".into(),
            x: r.episode as f64,
            seed: record.seed,
            mean_reward: r.mean_reward,
            mean_sum_rate: r.mean_sum_rate,
            qos_violation_fraction: r.qos_violation_fraction,
        })
        .collect()
}

/// Training runs laid out as `<dir>/<scheme>-<csit>/seed<n>/`.
pub fn find_runs(dir: &Path) -> Result<Vec<(RunConfig, RunRecord)>> {
    let mut found = Vec::new();
    let mut groups: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    groups.sort();
    for group in groups {
        let mut seeds: Vec<PathBuf> = fs::read_dir(&group)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(CONFIG_FILE).is_file() && p.join(EPISODES_FILE).is_file())
            .collect();
        seeds.sort();
        for run in seeds {
            let config = RunConfig::load(&run.join(CONFIG_FILE))?;
            let seed = config.seeds[0];
            let path = run.join(EPISODES_FILE);
            let text = fs::read_to_string(&path)?;
            let record = RunRecord::from_csv(seed, &text).map_err(|reason| Error::Format { path, reason })?;
            found.push((config, record));
        }
    }
    Ok(found)
}

/// What [`report`] produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub runs: usize,
    pub files: Vec<PathBuf>,
}

/// Summarises the training runs found under `dir` into learning curves and
/// re-summarises any raw sweep files there.
pub fn report(dir: &Path) -> Result<ReportOutput> {
    let runs = find_runs(dir)?;
    let mut files = Vec::new();
    if !runs.is_empty() {
        let curves: Vec<Observation> = runs.iter().flat_map(|(c, r)| learning_curve(c, r)).collect();
        emit_plot_data(&curves, dir, "learning_curves")?;
        files.push(dir.join("learning_curves.csv"));
        files.push(dir.join("learning_curves.txt"));

        let finals: Vec<Observation> = runs
            .iter()
            .map(|(c, r)| Observation {
                scheme: c.scheme().to_string(),
                csit: csit_label(c.env.channel.perfect_csit).to_string(),
                x_variable: "final_window".into(),
                x: r.final_window() as f64,
                seed: r.seed,
                mean_reward: r.final_reward(),
                mean_sum_rate: r.final_sum_rate(),
                qos_violation_fraction: {
                    let w = r.final_window();
                    let tail = &r.rows[r.rows.len() - w..];
                    tail.iter().map(|x| x.qos_violation_fraction).sum::<f64>() / w as f64
                },
            })
            .collect();
        emit_plot_data(&finals, dir, "final_performance")?;
        files.push(dir.join("final_performance.csv"));
        files.push(dir.join("final_performance.txt"));
    }
    for name in ["power_sweep", "qos_sweep"] {
        let path = dir.join(format!("{name}_raw.csv"));
        if let Ok(text) = fs::read_to_string(&path) {
            let obs = parse_raw_csv(&text).map_err(|reason| Error::Format { path, reason })?;
            emit_plot_data(&obs, dir, name)?;
            files.push(dir.join(format!("{name}.csv")));
            files.push(dir.join(format!("{name}.txt")));
        }
    }
    if files.is_empty() {
        return Err(Error::Usage(format!("no runs or sweep results under {}", dir.display())));
    }
    Ok(ReportOutput { runs: runs.len(), files })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(scheme: &str, x: f64, seed: u64, v: f64) -> Observation {
        Observation {
            scheme: scheme.into(),
            csit: "imperfect".into(),
            x_variable: "p_t_dbm".into(),
            x,
            seed,
            mean_reward: v,
            mean_sum_rate: v,
            qos_violation_fraction: 0.0,
        }
    }

    #[test]
    fn stderr_oracle() {
        let m = MeanStderr::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        // Sample variance 5/3, n = 4.
        assert!((m.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanStderr::of(&[7.0]).stderr, 0.0);
    }

    #[test]
    fn summary_shape() {
        let mut all = Vec::new();
        for s in ["a", "b", "c"] {
            for seed in 0..5 {
                for x in [20.0, 30.0, 40.0, 50.0, 60.0] {
                    all.push(obs(s, x, seed, x + seed as f64));
                }
            }
        }
        let rows = summarize(&all).unwrap();
        assert_eq!(rows.len(), 15);
        assert!(rows.iter().all(|r| r.seeds == 5));
        assert_eq!(rows[0].sum_rate.mean, 22.0);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn raw_round_trip() {
        let all = vec![obs("ppo-rsma", 0.25, 3, 1.0 / 3.0), obs("greedy", 60.0, 1, 9.5)];
        assert_eq!(parse_raw_csv(&raw_csv(&all)).unwrap(), all);
    }
}
