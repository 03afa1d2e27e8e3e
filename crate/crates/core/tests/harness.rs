//! End-to-end runs through the experiment harness.

use std::collections::BTreeMap;

use metasrm::bandit::RegretRecord;
use metasrm::harness::output::{read_results, write_results, RESULT_HEADER};
use metasrm::harness::presets::{preset, presets};
use metasrm::harness::runner::build_environment;
use metasrm::harness::summary::BEST_SUFFIX;
use metasrm::harness::{run_experiment, summarize, ConfigMap, ExperimentConfig, SummaryOptions};

const SMALL: &str = "family = gaussian-mab\nk = 5\nn = 10\nm = 12\nreplications = 4\nseed = 3\n\
                     sigma0 = 0.1\nagents = oracle-ts, agnostic-ts, b-metasrm, f-metasrm@m0=2, f-metasrm@m0=5\n";

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_text(text).unwrap()
}

fn csv(rows: &[RegretRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_results(rows, &mut buf).unwrap();
    buf
}

fn shrunk_preset(name: &str, label: &str) -> ExperimentConfig {
    let p = preset(name).unwrap();
    let v = p.variants.iter().find(|v| v.label == label).unwrap();
    let mut map = ConfigMap::parse(&v.text).unwrap();
    map.set("replications", "3").unwrap();
    map.set("m", "15").unwrap();
    if map.get("m0_grid").is_some() {
        map.set("m0_grid", "2, 5").unwrap();
    }
    ExperimentConfig::from_map(&map).unwrap()
}

#[test]
fn degenerate_experiment_has_zero_regret() {
    let c = config("family = gaussian-mab\nk = 1\nn = 1\nm = 1\nagents = oracle-ts, agnostic-ts, b-metasrm\n");
    let out = run_experiment(&c).unwrap();
    assert_eq!(out.ledger.len(), 3);
    for r in out.ledger.rows() {
        assert_eq!((r.replication, r.task), (0, 1));
        assert_eq!(r.expected_simple_regret, 0.0);
        assert_eq!(r.cumulative_regret, 0.0);
    }
}

#[test]
fn rows_are_ordered_and_complete() {
    let c = config(SMALL);
    let out = run_experiment(&c).unwrap();
    assert_eq!(out.ledger.len(), c.replications * c.m * c.agents.len());
    let keys: Vec<(usize, usize)> = out.ledger.rows().iter().map(|r| (r.replication, r.task)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    for r in out.ledger.rows() {
        assert!(r.expected_simple_regret >= 0.0 && r.cumulative_regret >= 0.0);
        assert!((r.expected_simple_regret - r.cumulative_regret / c.n as f64).abs() < 1e-12);
    }
}

#[test]
fn same_seed_gives_identical_bytes_for_any_worker_count() {
    let mut c = config(SMALL);
    c.workers = Some(1);
    let first = csv(run_experiment(&c).unwrap().ledger.rows());
    c.workers = Some(3);
    let second = csv(run_experiment(&c).unwrap().ledger.rows());
    assert_eq!(first, second);
    assert!(first.starts_with(RESULT_HEADER.as_bytes()));
    c.seed += 1;
    assert_ne!(first, csv(run_experiment(&c).unwrap().ledger.rows()));
}

#[test]
fn agents_share_tasks_within_a_replication() {
    let out = run_experiment(&config(SMALL)).unwrap();
    let mut by_key: BTreeMap<(usize, usize), Vec<u64>> = BTreeMap::new();
    for r in out.ledger.rows() {
        by_key
            .entry((r.replication, r.task))
            .or_default()
            .push(r.task_fingerprint);
    }
    for fps in by_key.values() {
        assert!(fps.windows(2).all(|w| w[0] == w[1]));
    }
    assert_ne!(by_key[&(0, 1)][0], by_key[&(1, 1)][0]);
    assert_ne!(by_key[&(0, 1)][0], by_key[&(0, 2)][0]);
}

#[test]
fn adding_an_agent_leaves_other_rows_untouched() {
    let base = run_experiment(&config(SMALL)).unwrap();
    let mut map = ConfigMap::parse(SMALL).unwrap();
    map.apply_override("agents=mis-ts, oracle-ts, agnostic-ts, b-metasrm, f-metasrm@m0=2, f-metasrm@m0=5")
        .unwrap();
    let more = run_experiment(&ExperimentConfig::from_map(&map).unwrap()).unwrap();
    let kept: Vec<&RegretRecord> = more.ledger.rows().iter().filter(|r| r.agent != "mis-ts").collect();
    assert_eq!(kept.len(), base.ledger.len());
    for (a, b) in kept.iter().zip(base.ledger.rows()) {
        assert_eq!(*a, b);
    }
}

#[test]
fn summaries_recompute_from_raw_rows() {
    let out = run_experiment(&config(SMALL)).unwrap();
    let options = SummaryOptions {
        pointwise_best: true,
        ..Default::default()
    };
    let direct = summarize(out.ledger.rows(), options).unwrap();
    let reread = read_results(std::str::from_utf8(&csv(out.ledger.rows())).unwrap()).unwrap();
    assert_eq!(summarize(&reread, options).unwrap(), direct);

    let mut sums: BTreeMap<(String, usize), (f64, usize)> = BTreeMap::new();
    for r in out.ledger.rows() {
        let e = sums.entry((r.agent.clone(), r.task)).or_default();
        e.0 += r.expected_simple_regret;
        e.1 += 1;
    }
    for row in direct.iter().filter(|r| !r.agent.ends_with(BEST_SUFFIX)) {
        let (s, c) = sums[&(row.agent.clone(), row.task)];
        assert!((row.mean - s / c as f64).abs() <= 1e-15 * s.abs().max(1.0));
    }
    for row in direct.iter().filter(|r| r.agent == format!("f-metasrm{BEST_SUFFIX}")) {
        let members = ["f-metasrm@m0=2", "f-metasrm@m0=5"].map(|a| {
            let (s, c) = sums[&(a.to_string(), row.task)];
            s / c as f64
        });
        assert!((row.mean - members[0].min(members[1])).abs() < 1e-15);
    }
}

#[test]
fn frequentist_setting_keeps_theta_fixed() {
    let c = shrunk_preset("frequentist-appD", "mab");
    let theta = build_environment(&c, 0).unwrap().theta_star;
    assert_eq!(theta, build_environment(&c, 1).unwrap().theta_star);
    assert_eq!(theta, c.theta_star);
    let out = run_experiment(&c).unwrap();
    assert_eq!(out.ledger.len(), 3 * 15 * c.agents.len());
    let lin = shrunk_preset("frequentist-appD", "linear");
    assert!(!lin.resample_arms);
    assert_eq!(run_experiment(&lin).unwrap().ledger.len(), 3 * 15 * lin.agents.len());
}

#[test]
fn every_preset_runs_when_shrunk() {
    for p in presets() {
        let v = &p.variants[0];
        let c = shrunk_preset(p.name, &v.label);
        let out = run_experiment(&c).unwrap_or_else(|e| panic!("{}: {e}", p.name));
        assert_eq!(out.ledger.len(), c.replications * c.m * c.agents.len(), "{}", p.name);
    }
}

#[test]
fn ucb_agents_report_one_gamma_per_task() {
    let c = config(
        "family = linear-gaussian\nd = 3\nk = 9\nn = 10\nm = 6\nreplications = 2\n\
         agents = oracle-ucb, b-metasrm-ucb, b-metasrm\n",
    );
    let out = run_experiment(&c).unwrap();
    assert_eq!(out.gammas.len(), 2 * 6 * 2);
    assert!(out.gammas.iter().all(|g| g.gamma > 0.0 && g.agent.ends_with("-ucb")));
    let oracle: Vec<f64> = out
        .gammas
        .iter()
        .filter(|g| g.agent == "oracle-ucb" && g.replication == 0)
        .map(|g| g.gamma)
        .collect();
    assert!(
        oracle.windows(2).all(|w| w[0] == w[1]),
        "a fixed prior has a fixed coefficient"
    );
}

#[test]
fn distances_are_tracked_on_request() {
    let c = config(&format!("{SMALL}track_distance = true\n"));
    let out = run_experiment(&c).unwrap();
    let oracle: Vec<_> = out.distances.iter().filter(|d| d.agent == "oracle-ts").collect();
    assert_eq!(oracle.len(), c.replications * c.m);
    assert!(oracle
        .iter()
        .all(|d| d.report.kl == 0.0 && d.report.exact_tv == Some(0.0)));
    assert!(run_experiment(&config(SMALL)).unwrap().distances.is_empty());
}
