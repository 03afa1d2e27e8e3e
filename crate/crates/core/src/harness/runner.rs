//! Replication runner: builds each replication's environment, runs every
//! agent on the shared task sequence and merges the rows.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::bandit::{ArmSet, RegretLedger, RegretRecord, TaskInstance};
use crate::diagnostics::{tv_report, DistanceReport};
use crate::environments::{random_sphere_arms, sample_task, BetaPriorSpec, GaussianMetaPriorSpec, GaussianPriorSpec};
use crate::error::{Error, Result};
use crate::harness::config::{AgentKind, AgentSpec, ExperimentConfig, Family, Setting};
use crate::harness::seeding::{
    agent_key, stream, AGENT_SETUP_STREAM, AGENT_STREAM, ARMS_STREAM, TASK_STREAM, THETA_STREAM,
};
use crate::linalg;
use crate::meta::{
    agnostic_prior, b_meta_srm, f_meta_srm, misspecified_meta_prior, oracle_prior, run_fixed_prior, score_results,
    ExploreStrategy, FMetaModel, FMetaSrm, FitMode, RunOptions, TaskResult,
};
use crate::policies::PolicyState;
use crate::posteriors::{BetaBelief, GaussianBelief};

/// BayesUCB coefficient at the first round of a task.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaRecord {
    pub replication: usize,
    pub task: usize,
    pub agent: String,
    pub gamma: f64,
}

/// Distance between the true prior and the prior an agent started a task
/// from. Fields are NaN when the distance is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRecord {
    pub replication: usize,
    pub task: usize,
    pub agent: String,
    pub report: DistanceReport,
}

/// Everything an experiment produces, in (replication, task, agent) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub ledger: RegretLedger,
    pub gammas: Vec<GammaRecord>,
    pub distances: Vec<DistanceRecord>,
}

/// What every agent of a replication shares.
#[derive(Debug, Clone)]
pub struct ReplicationEnv {
    pub arms: ArmSet,
    pub theta_star: Option<DVector<f64>>,
    pub tasks: Vec<TaskInstance>,
}

fn meta_prior(config: &ExperimentConfig) -> Result<GaussianMetaPriorSpec> {
    GaussianMetaPriorSpec::new(config.psi_q.clone(), config.sigma_q.clone())
}

/// Draws the arms, `θ_*` and the task sequence of replication `rep`.
pub fn build_environment(config: &ExperimentConfig, rep: usize) -> Result<ReplicationEnv> {
    let seed = config.seed;
    let rep_key = rep as u64;
    let task_rng = |s: usize| stream(seed, &[TASK_STREAM, rep_key, s as u64]);
    match config.family {
        Family::Bernoulli => {
            let prior = BetaPriorSpec::new(config.beta_prior.clone())?;
            let tasks = (0..config.m)
                .map(|s| sample_task(&prior, &mut task_rng(s)))
                .collect::<Result<_>>()?;
            Ok(ReplicationEnv {
                arms: ArmSet::finite(config.k)?,
                theta_star: None,
                tasks,
            })
        }
        Family::GaussianMab | Family::LinearGaussian => {
            let arms = if config.family == Family::GaussianMab {
                ArmSet::finite(config.k)?
            } else {
                let mut rng = if config.resample_arms {
                    stream(seed, &[ARMS_STREAM, rep_key])
                } else {
                    stream(seed, &[ARMS_STREAM])
                };
                random_sphere_arms(config.k, config.d, &mut rng)?
            };
            let theta_star = match config.setting {
                Setting::Frequentist => config
                    .theta_star
                    .clone()
                    .ok_or_else(|| Error::config("frequentist setting requires theta_star"))?,
                Setting::Bayesian => {
                    let factor = linalg::psd_sqrt_factor(&config.sigma_q)?;
                    let mut rng = stream(seed, &[THETA_STREAM, rep_key]);
                    linalg::sample_with_factor(&config.psi_q, &factor, &mut rng)
                }
            };
            let prior = GaussianPriorSpec::new(theta_star.clone(), config.sigma0.clone(), config.sigma, arms.clone())?;
            let tasks = (0..config.m)
                .map(|s| sample_task(&prior, &mut task_rng(s)))
                .collect::<Result<_>>()?;
            Ok(ReplicationEnv {
                arms,
                theta_star: Some(theta_star),
                tasks,
            })
        }
    }
}

fn run_agent(
    config: &ExperimentConfig,
    env: &ReplicationEnv,
    rep: usize,
    agent: &AgentSpec,
) -> Result<Vec<TaskResult>> {
    let seed = config.seed;
    let key = agent_key(&agent.tag);
    let rep_key = rep as u64;
    let streams = |s: usize| stream(seed, &[AGENT_STREAM, rep_key, key, s as u64]);
    let options = RunOptions {
        record_priors: config.track_distance && config.family.is_gaussian(),
    };
    let (arms, tasks, n) = (&env.arms, env.tasks.as_slice(), config.n);

    if config.family == Family::Bernoulli {
        return match agent.kind {
            AgentKind::Oracle => {
                let start = PolicyState::beta(BetaBelief::new(config.beta_prior.clone())?);
                run_fixed_prior(agent.policy, &start, tasks, arms, n, streams, options)
            }
            AgentKind::Agnostic => {
                let start = PolicyState::beta(BetaBelief::uniform(config.k));
                run_fixed_prior(agent.policy, &start, tasks, arms, n, streams, options)
            }
            AgentKind::FMetaSrm { mode, m0 } => {
                let f = FMetaSrm {
                    strategy: ExploreStrategy::bernoulli_batched(config.t0, m0.unwrap_or(0))?,
                    mode,
                    model: FMetaModel::Bernoulli,
                    injected: None,
                };
                f_meta_srm(&f, tasks, arms, n, streams, options)
            }
            _ => Err(Error::config(format!("agent `{}` needs a Gaussian family", agent.tag))),
        };
    }

    let theta_star = env.theta_star.as_ref().expect("Gaussian environments carry theta_star");
    let meta = meta_prior(config)?;
    let sigma0 = &config.sigma0;
    let gaussian_start = |belief: GaussianBelief| PolicyState::gaussian(belief, config.sigma, arms);
    match agent.kind {
        AgentKind::Oracle => {
            let start = gaussian_start(oracle_prior(theta_star, sigma0)?)?;
            run_fixed_prior(agent.policy, &start, tasks, arms, n, streams, options)
        }
        AgentKind::Agnostic => {
            let start = gaussian_start(agnostic_prior(&meta, sigma0)?)?;
            run_fixed_prior(agent.policy, &start, tasks, arms, n, streams, options)
        }
        AgentKind::MisTs => {
            let start = gaussian_start(GaussianBelief::isotropic(DVector::zeros(config.d), 1.0)?)?;
            run_fixed_prior(agent.policy, &start, tasks, arms, n, streams, options)
        }
        AgentKind::BMetaSrm => b_meta_srm(
            &meta,
            sigma0,
            config.sigma,
            agent.policy,
            tasks,
            arms,
            n,
            streams,
            options,
        )
        .map(|r| r.0),
        AgentKind::MisBMetaSrm => {
            let mut setup = stream(seed, &[AGENT_SETUP_STREAM, rep_key, key]);
            let mis = misspecified_meta_prior(&meta, config.mis_offset_range, &mut setup)?;
            b_meta_srm(
                &mis,
                sigma0,
                config.sigma,
                agent.policy,
                tasks,
                arms,
                n,
                streams,
                options,
            )
            .map(|r| r.0)
        }
        AgentKind::FMetaSrm { mode, m0 } => {
            let f = FMetaSrm {
                strategy: ExploreStrategy::LinearBasis {
                    m0: if mode == FitMode::Commit { m0.unwrap_or(0) } else { 0 },
                },
                mode,
                model: FMetaModel::Gaussian {
                    sigma0: sigma0.clone(),
                    sigma: config.sigma,
                    agnostic: agnostic_prior(&meta, sigma0)?,
                },
                injected: None,
            };
            f_meta_srm(&f, tasks, arms, n, streams, options)
        }
    }
}

fn undefined_distance() -> DistanceReport {
    DistanceReport {
        kl: f64::NAN,
        pinsker_tv_bound: f64::NAN,
        exact_tv: None,
    }
}

/// Runs every agent on replication `rep`.
pub fn run_replication(config: &ExperimentConfig, rep: usize) -> Result<ExperimentOutput> {
    let env = build_environment(config, rep)?;
    let truth = match &env.theta_star {
        Some(theta) if config.track_distance => Some(GaussianBelief::new(theta.clone(), config.sigma0.clone())?),
        _ => None,
    };
    let mut per_agent: Vec<Vec<RegretRecord>> = Vec::with_capacity(config.agents.len());
    let mut out = ExperimentOutput::default();
    let mut gammas = Vec::new();
    let mut distances = Vec::new();
    for (a, agent) in config.agents.iter().enumerate() {
        let results = run_agent(config, &env, rep, agent)?;
        per_agent.push(score_results(&results, &env.tasks, rep, &agent.tag)?);
        for (s, r) in results.iter().enumerate() {
            if let Some(gamma) = r.first_round_gamma {
                gammas.push((
                    s,
                    a,
                    GammaRecord {
                        replication: rep,
                        task: s + 1,
                        agent: agent.tag.clone(),
                        gamma,
                    },
                ));
            }
            if let (Some(truth), Some(prior)) = (&truth, &r.prior) {
                let report = tv_report(truth, prior).unwrap_or_else(|_| undefined_distance());
                distances.push((
                    s,
                    a,
                    DistanceRecord {
                        replication: rep,
                        task: s + 1,
                        agent: agent.tag.clone(),
                        report,
                    },
                ));
            }
        }
    }
    for s in 0..config.m {
        for rows in &per_agent {
            out.ledger.push(rows[s].clone());
        }
    }
    gammas.sort_by_key(|&(s, a, _)| (s, a));
    distances.sort_by_key(|&(s, a, _)| (s, a));
    out.gammas = gammas.into_iter().map(|(_, _, g)| g).collect();
    out.distances = distances.into_iter().map(|(_, _, d)| d).collect();
    Ok(out)
}

/// Runs all replications, in parallel up to the configured worker count,
/// and merges them in replication order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let run = || {
        (0..config.replications)
            .into_par_iter()
            .map(|rep| run_replication(config, rep))
            .collect::<Result<Vec<_>>>()
    };
    let parts = match config.resolved_workers()? {
        Some(workers) => rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::config(format!("cannot start {workers} workers: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let mut out = ExperimentOutput::default();
    for part in parts {
        out.ledger.extend(part.ledger.into_rows());
        out.gammas.extend(part.gammas);
        out.distances.extend(part.distances);
    }
    Ok(out)
}
