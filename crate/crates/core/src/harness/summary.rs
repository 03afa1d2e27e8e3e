//! Per-task summaries of a result file.

use std::collections::BTreeMap;
use std::io::Write;
use std::str::FromStr;

use crate::bandit::{aggregate_regret, AggregationMode, RegretLedger, RegretRecord};
use crate::error::{Error, Result};
use crate::harness::config::family_tag;
use crate::harness::output::format_sig17;

pub const SUMMARY_HEADER: &str = "task,agent,mean,stderr,cum_mean";

/// Suffix of the synthetic agent holding the pointwise best of a sweep.
pub const BEST_SUFFIX: &str = "@best";

/// Which regret column to summarize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Expected,
    Realized,
    Cumulative,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expected" => Ok(Metric::Expected),
            "realized" => Ok(Metric::Realized),
            "cumulative" => Ok(Metric::Cumulative),
            other => Err(Error::config(format!(
                "unknown metric `{other}` (expected expected, realized or cumulative)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SummaryOptions {
    pub metric: Metric,
    /// Emit `<family>@best` rows for agents swept over a parameter.
    pub pointwise_best: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub task: usize,
    pub agent: String,
    pub mean: f64,
    pub stderr: f64,
    /// Running average of `mean` over tasks `1..=task`.
    pub cum_mean: f64,
}

fn running_average(values: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            acc += v;
            acc / (i + 1) as f64
        })
        .collect()
}

fn project(row: &RegretRecord, metric: Metric) -> RegretRecord {
    let mut r = row.clone();
    r.expected_simple_regret = match metric {
        Metric::Expected => row.expected_simple_regret,
        Metric::Realized => row.realized_simple_regret,
        Metric::Cumulative => row.cumulative_regret,
    };
    r
}

/// Per-task mean and standard error across replications for every agent,
/// plus the pointwise best over each swept family (rows whose tags share
/// the part before `@`). Rows are ordered by agent tag, then task.
pub fn summarize(rows: &[RegretRecord], options: SummaryOptions) -> Result<Vec<SummaryRow>> {
    let mut ledger = RegretLedger::new();
    ledger.extend(rows.iter().map(|r| project(r, options.metric)));
    let curves = aggregate_regret(&ledger, AggregationMode::Frequentist)?;

    let mut out = Vec::new();
    for (agent, curve) in &curves {
        let cum = running_average(&curve.mean);
        for (i, &task) in curve.tasks.iter().enumerate() {
            out.push(SummaryRow {
                task,
                agent: agent.clone(),
                mean: curve.mean[i],
                stderr: curve.stderr[i],
                cum_mean: cum[i],
            });
        }
    }

    if options.pointwise_best {
        let mut families: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for agent in curves.keys() {
            if agent.contains('@') {
                families.entry(family_tag(agent)).or_default().push(agent);
            }
        }
        for (family, members) in families {
            let first = &curves[members[0]];
            if members.iter().any(|m| curves[*m].tasks != first.tasks) {
                return Err(Error::InsufficientData(format!(
                    "sweep `{family}` covers different tasks per member"
                )));
            }
            let mut best_mean = Vec::with_capacity(first.tasks.len());
            let mut best_se = Vec::with_capacity(first.tasks.len());
            for i in 0..first.tasks.len() {
                let best = members
                    .iter()
                    .map(|m| &curves[*m])
                    .min_by(|a, b| a.mean[i].total_cmp(&b.mean[i]))
                    .expect("families are non-empty");
                best_mean.push(best.mean[i]);
                best_se.push(best.stderr[i]);
            }
            let cum = running_average(&best_mean);
            let tag = format!("{family}{BEST_SUFFIX}");
            for (i, &task) in first.tasks.iter().enumerate() {
                out.push(SummaryRow {
                    task,
                    agent: tag.clone(),
                    mean: best_mean[i],
                    stderr: best_se[i],
                    cum_mean: cum[i],
                });
            }
        }
        out.sort_by(|a, b| a.agent.cmp(&b.agent).then(a.task.cmp(&b.task)));
    }
    Ok(out)
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], mut out: W) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.task,
            r.agent,
            format_sig17(r.mean),
            format_sig17(r.stderr),
            format_sig17(r.cum_mean)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(rep: usize, task: usize, agent: &str, v: f64) -> RegretRecord {
        RegretRecord {
            replication: rep,
            task,
            agent: agent.into(),
            expected_simple_regret: v,
            realized_simple_regret: 2.0 * v,
            cumulative_regret: 20.0 * v,
            task_fingerprint: 0,
        }
    }

    #[test]
    fn single_row() {
        let s = summarize(&[row(0, 1, "a", 0.3)], SummaryOptions::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].mean, s[0].stderr, s[0].cum_mean), (0.3, 0.0, 0.3));
    }

    #[test]
    fn disjoint_agents_form_groups() {
        let rows = [row(0, 1, "a", 0.3), row(0, 1, "b", 0.1)];
        let s = summarize(&rows, SummaryOptions::default()).unwrap();
        let agents: Vec<&str> = s.iter().map(|r| r.agent.as_str()).collect();
        assert_eq!(agents, vec!["a", "b"]);
    }

    #[test]
    fn pointwise_best_over_sweep() {
        let mut rows = Vec::new();
        for (tag, vals) in [
            ("f@m0=1", [0.5, 0.1]),
            ("f@m0=2", [0.2, 0.4]),
            ("f@m0=5", [0.3, 0.3]),
            ("g", [0.0, 0.0]),
        ] {
            for (t, v) in vals.iter().enumerate() {
                rows.push(row(0, t + 1, tag, *v));
            }
        }
        let options = SummaryOptions {
            pointwise_best: true,
            ..Default::default()
        };
        let s = summarize(&rows, options).unwrap();
        let best: Vec<f64> = s.iter().filter(|r| r.agent == "f@best").map(|r| r.mean).collect();
        assert_eq!(best, vec![0.2, 0.1]);
        let cum: Vec<f64> = s.iter().filter(|r| r.agent == "f@best").map(|r| r.cum_mean).collect();
        assert!((cum[1] - 0.15).abs() < 1e-15);
        assert!(!s.iter().any(|r| r.agent == "g@best"));
    }

    #[test]
    fn metric_selection_and_stderr() {
        let rows = [row(0, 1, "a", 0.1), row(1, 1, "a", 0.3)];
        let options = SummaryOptions {
            metric: Metric::Cumulative,
            ..Default::default()
        };
        let s = summarize(&rows, options).unwrap();
        assert!((s[0].mean - 4.0).abs() < 1e-12);
        // sample sd of {2, 6} is 2√2, over √2 replications.
        assert!((s[0].stderr - 2.0).abs() < 1e-12);
    }
}
