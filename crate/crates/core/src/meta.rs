//! Meta-learning agents over a sequence of tasks: B-metaSRM, f-metaSRM and
//! the fixed-prior baselines they are compared against.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::bandit::{ArmSet, RegretRecord, TaskInstance, Trajectory};
use crate::environments::GaussianMetaPriorSpec;
use crate::error::{Error, Result};
use crate::estimators::{
    least_squares_theta, mom_estimate_arm, ols_estimate_theta, select_basis, ExplorationDataset, PriorEstimate,
};
use crate::policies::{gamma_coefficient, PolicyKind, PolicyState, TaskRunner};
use crate::posteriors::{
    meta_posterior_update, uncertainty_adjusted_prior, BetaBelief, GaussianBelief, MetaPosteriorState, TaskSummary,
};

/// How f-metaSRM spends its exploration rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExploreStrategy {
    /// Bernoulli bandits: each of the first `m0` tasks (rounded up to a
    /// multiple of `K`) pulls one arm `t0` times, arms taken in blocks.
    BernoulliBatched { t0: u32, m0: usize },
    /// Gaussian bandits: each of the first `m0` tasks pulls every arm of a
    /// fixed basis once (or `n` of them in turn when the basis is larger
    /// than the horizon).
    LinearBasis { m0: usize },
    /// No exploration; only meaningful with an injected estimate.
    None,
}

impl ExploreStrategy {
    pub fn bernoulli_batched(t0: u32, m0: usize) -> Result<Self> {
        if t0 < 2 {
            return Err(Error::precondition(format!("t0 must be at least 2, got {t0}")));
        }
        Ok(ExploreStrategy::BernoulliBatched { t0, m0 })
    }

    pub fn m0(&self) -> usize {
        match *self {
            ExploreStrategy::BernoulliBatched { m0, .. } | ExploreStrategy::LinearBasis { m0 } => m0,
            ExploreStrategy::None => 0,
        }
    }
}

/// Whether f-metaSRM freezes its estimate after exploring or keeps
/// exploring and re-estimating in every task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    Commit,
    Continual,
}

/// Per-agent recording switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep the Gaussian prior each task started from.
    pub record_priors: bool,
}

/// Outcome of one task for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskResult {
    pub trajectory: Trajectory,
    pub recommended: usize,
    /// BayesUCB coefficient `Γ` at the first round, when applicable.
    pub first_round_gamma: Option<f64>,
    pub prior: Option<GaussianBelief>,
}

/// Turns task results into ledger rows; task numbers are 1-based.
pub fn score_results(
    results: &[TaskResult],
    tasks: &[TaskInstance],
    replication: usize,
    agent: &str,
) -> Result<Vec<RegretRecord>> {
    if results.len() > tasks.len() {
        return Err(Error::precondition("more results than tasks"));
    }
    results
        .iter()
        .zip(tasks)
        .enumerate()
        .map(|(s, (r, task))| RegretRecord::score(replication, s + 1, agent, task, &r.trajectory, r.recommended))
        .collect()
}

fn first_round_gamma(policy: PolicyKind, prior: &GaussianBelief, arms: &ArmSet, sigma: f64) -> Option<f64> {
    match policy {
        PolicyKind::BayesUcb { delta, .. } => gamma_coefficient(prior, arms, sigma, delta).ok(),
        PolicyKind::Thompson => None,
    }
}

/// Runs `policy` from the same starting belief in every task: OracleTS
/// with the true prior, agnostic TS with a wide one.
pub fn run_fixed_prior<R, F>(
    policy: PolicyKind,
    start: &PolicyState,
    tasks: &[TaskInstance],
    arms: &ArmSet,
    n: usize,
    mut streams: F,
    options: RunOptions,
) -> Result<Vec<TaskResult>>
where
    R: Rng,
    F: FnMut(usize) -> R,
{
    if n == 0 {
        return Err(Error::precondition("horizon n must be at least 1"));
    }
    let (gamma, prior) = match start {
        PolicyState::Gaussian { belief, sigma, .. } => (
            first_round_gamma(policy, belief, arms, *sigma),
            options.record_priors.then(|| belief.clone()),
        ),
        PolicyState::Beta(_) => (None, None),
    };
    let mut out = Vec::with_capacity(tasks.len());
    for (s, task) in tasks.iter().enumerate() {
        let mut rng = streams(s);
        let mut state = start.clone();
        let mut runner = TaskRunner::new(task, arms)?;
        runner.play(policy, &mut state, n, &mut rng)?;
        let (trajectory, recommended) = runner.finish(&mut rng)?;
        out.push(TaskResult {
            trajectory,
            recommended,
            first_round_gamma: gamma,
            prior: prior.clone(),
        });
    }
    Ok(out)
}

/// OracleTS prior `N(θ_*, Σ_0)`.
pub fn oracle_prior(theta_star: &DVector<f64>, sigma0: &DMatrix<f64>) -> Result<GaussianBelief> {
    GaussianBelief::new(theta_star.clone(), sigma0.clone())
}

/// Agnostic TS prior `N(0, Σ_q + Σ_0)`.
pub fn agnostic_prior(meta: &GaussianMetaPriorSpec, sigma0: &DMatrix<f64>) -> Result<GaussianBelief> {
    GaussianBelief::new(DVector::zeros(meta.dim()), meta.sigma_q() + sigma0)
}

/// Meta-prior with its mean replaced by a uniform draw from `[-range, range]^d`.
pub fn misspecified_meta_prior<R: Rng + ?Sized>(
    meta: &GaussianMetaPriorSpec,
    range: f64,
    rng: &mut R,
) -> Result<GaussianMetaPriorSpec> {
    if !(range >= 0.0 && range.is_finite()) {
        return Err(Error::precondition(format!(
            "offset range must be non-negative, got {range}"
        )));
    }
    let psi = DVector::from_fn(meta.dim(), |_, _| {
        if range == 0.0 {
            0.0
        } else {
            rng.random_range(-range..=range)
        }
    });
    meta.with_mean(psi)
}

/// B-metaSRM: each task starts from the uncertainty-adjusted prior of the
/// current meta-posterior, and its trajectory is folded back in afterwards.
/// Returns the per-task results and the final meta-posterior.
#[allow(clippy::too_many_arguments)]
pub fn b_meta_srm<R, F>(
    meta: &GaussianMetaPriorSpec,
    sigma0: &DMatrix<f64>,
    sigma: f64,
    policy: PolicyKind,
    tasks: &[TaskInstance],
    arms: &ArmSet,
    n: usize,
    mut streams: F,
    options: RunOptions,
) -> Result<(Vec<TaskResult>, MetaPosteriorState)>
where
    R: Rng,
    F: FnMut(usize) -> R,
{
    if n == 0 {
        return Err(Error::precondition("horizon n must be at least 1"));
    }
    if meta.dim() != arms.dim() {
        return Err(Error::Dimension {
            expected: arms.dim(),
            got: meta.dim(),
            context: "meta-prior",
        });
    }
    let mut state = MetaPosteriorState::from_meta_prior(meta)?;
    let mut out = Vec::with_capacity(tasks.len());
    for (s, task) in tasks.iter().enumerate() {
        let mut rng = streams(s);
        let prior = uncertainty_adjusted_prior(&state, sigma0)?;
        let gamma = first_round_gamma(policy, &prior, arms, sigma);
        let recorded = options.record_priors.then(|| prior.clone());
        let mut belief = PolicyState::gaussian(prior, sigma, arms)?;
        let mut runner = TaskRunner::new(task, arms)?;
        runner.play(policy, &mut belief, n, &mut rng)?;
        let (trajectory, recommended) = runner.finish(&mut rng)?;
        let summary = TaskSummary::from_trajectory(&trajectory, arms)?;
        state = meta_posterior_update(&state, &summary, sigma0, sigma)?;
        out.push(TaskResult {
            trajectory,
            recommended,
            first_round_gamma: gamma,
            prior: recorded,
        });
    }
    Ok((out, state))
}

/// Reward model and fallback prior f-metaSRM works with.
#[derive(Debug, Clone, PartialEq)]
pub enum FMetaModel {
    /// Known task covariance `Σ_0`, noise `σ`, and the prior used while
    /// exploring.
    Gaussian {
        sigma0: DMatrix<f64>,
        sigma: f64,
        agnostic: GaussianBelief,
    },
    /// Beta-Bernoulli; exploration tasks start from `Beta(1, 1)`.
    Bernoulli,
}

/// f-metaSRM configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct FMetaSrm {
    pub strategy: ExploreStrategy,
    pub mode: FitMode,
    pub model: FMetaModel,
    /// Used in place of the estimator output when present.
    pub injected: Option<PriorEstimate>,
}

impl FMetaSrm {
    fn validate(&self, arms: &ArmSet, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::precondition("horizon n must be at least 1"));
        }
        match (&self.model, self.strategy) {
            (FMetaModel::Gaussian { .. }, ExploreStrategy::BernoulliBatched { .. })
            | (FMetaModel::Bernoulli, ExploreStrategy::LinearBasis { .. }) => {
                return Err(Error::config(
                    "exploration strategy does not match the environment family",
                ))
            }
            _ => {}
        }
        if let ExploreStrategy::BernoulliBatched { t0, .. } = self.strategy {
            if t0 < 2 {
                return Err(Error::precondition(format!("t0 must be at least 2, got {t0}")));
            }
            if (t0 as usize) > n {
                return Err(Error::precondition(format!("t0 = {t0} exceeds the horizon n = {n}")));
            }
        }
        match (&self.injected, &self.model) {
            (Some(PriorEstimate::Gaussian(theta)), FMetaModel::Gaussian { .. }) if theta.len() != arms.dim() => {
                Err(Error::Dimension {
                    expected: arms.dim(),
                    got: theta.len(),
                    context: "injected estimate",
                })
            }
            (Some(PriorEstimate::Beta(p)), FMetaModel::Bernoulli) if p.len() != arms.len() => Err(Error::Dimension {
                expected: arms.len(),
                got: p.len(),
                context: "injected estimate",
            }),
            (Some(PriorEstimate::Beta(_)), FMetaModel::Gaussian { .. })
            | (Some(PriorEstimate::Gaussian(_)), FMetaModel::Bernoulli) => {
                Err(Error::config("injected estimate does not match the environment family"))
            }
            _ => Ok(()),
        }
    }
}

/// f-metaSRM: estimates the prior from exploration rounds and runs TS with
/// the estimate.
pub fn f_meta_srm<R, F>(
    config: &FMetaSrm,
    tasks: &[TaskInstance],
    arms: &ArmSet,
    n: usize,
    streams: F,
    options: RunOptions,
) -> Result<Vec<TaskResult>>
where
    R: Rng,
    F: FnMut(usize) -> R,
{
    config.validate(arms, n)?;
    match &config.model {
        FMetaModel::Gaussian {
            sigma0,
            sigma,
            agnostic,
        } => f_meta_gaussian(config, sigma0, *sigma, agnostic, tasks, arms, n, streams, options),
        FMetaModel::Bernoulli => f_meta_bernoulli(config, tasks, arms, n, streams),
    }
}

#[allow(clippy::too_many_arguments)]
fn f_meta_gaussian<R, F>(
    config: &FMetaSrm,
    sigma0: &DMatrix<f64>,
    sigma: f64,
    agnostic: &GaussianBelief,
    tasks: &[TaskInstance],
    arms: &ArmSet,
    n: usize,
    mut streams: F,
    options: RunOptions,
) -> Result<Vec<TaskResult>>
where
    R: Rng,
    F: FnMut(usize) -> R,
{
    let basis = match config.strategy {
        ExploreStrategy::LinearBasis { .. } => select_basis(arms)?,
        _ => Vec::new(),
    };
    let m0 = config.strategy.m0();
    let injected = match &config.injected {
        Some(PriorEstimate::Gaussian(theta)) => Some(theta.clone()),
        _ => None,
    };
    let mut frozen = injected.clone();
    let mut data = ExplorationDataset::new();
    let mut out = Vec::with_capacity(tasks.len());
    for (s, task) in tasks.iter().enumerate() {
        let mut rng = streams(s);
        let mut runner = TaskRunner::new(task, arms)?;
        let explore = !basis.is_empty()
            && match config.mode {
                FitMode::Commit => s < m0,
                FitMode::Continual => true,
            };
        let mut pulls = Vec::new();
        if explore {
            // With fewer rounds than basis arms, exploration continues
            // cyclically through the basis across tasks.
            let per_task = basis.len().min(n);
            let offset = if basis.len() <= n { 0 } else { s * per_task };
            for j in 0..per_task {
                let arm = basis[(offset + j) % basis.len()];
                let y = runner.pull(arm, &mut rng)?;
                data.push(s, arm, y);
                pulls.push((arm, y));
            }
        }
        let prior = match config.mode {
            FitMode::Commit if explore => agnostic.clone(),
            FitMode::Commit => {
                if frozen.is_none() {
                    frozen = Some(gaussian_estimate(&data, arms, &basis, n, m0)?);
                }
                GaussianBelief::new(frozen.clone().expect("estimate set above"), sigma0.clone())?
            }
            FitMode::Continual => {
                let theta = match &injected {
                    Some(t) => t.clone(),
                    None => gaussian_estimate(&data, arms, &basis, n, s + 1)?,
                };
                GaussianBelief::new(theta, sigma0.clone())?
            }
        };
        let recorded = options.record_priors.then(|| prior.clone());
        let mut state = PolicyState::gaussian(prior, sigma, arms)?;
        for (arm, y) in pulls {
            state.observe(arms, arm, y)?;
        }
        let remaining = n - runner.rounds_played();
        runner.play(PolicyKind::Thompson, &mut state, remaining, &mut rng)?;
        let (trajectory, recommended) = runner.finish(&mut rng)?;
        out.push(TaskResult {
            trajectory,
            recommended,
            first_round_gamma: None,
            prior: recorded,
        });
    }
    Ok(out)
}

fn gaussian_estimate(
    data: &ExplorationDataset,
    arms: &ArmSet,
    basis: &[usize],
    n: usize,
    m0: usize,
) -> Result<DVector<f64>> {
    if basis.len() > n {
        return least_squares_theta(data, arms);
    }
    match ols_estimate_theta(data, arms, basis, m0)? {
        PriorEstimate::Gaussian(theta) => Ok(theta),
        PriorEstimate::Beta(_) => unreachable!("OLS returns a Gaussian estimate"),
    }
}

/// Per-arm method of moments; arms lacking two exploration tasks keep
/// `Beta(1, 1)`.
fn beta_estimate(data: &ExplorationDataset, t0: u32, num_arms: usize) -> Result<Vec<(f64, f64)>> {
    (0..num_arms)
        .map(|arm| Ok(mom_estimate_arm(data, arm, t0)?.unwrap_or((1.0, 1.0))))
        .collect()
}

fn f_meta_bernoulli<R, F>(
    config: &FMetaSrm,
    tasks: &[TaskInstance],
    arms: &ArmSet,
    n: usize,
    mut streams: F,
) -> Result<Vec<TaskResult>>
where
    R: Rng,
    F: FnMut(usize) -> R,
{
    let k = arms.len();
    let (t0, m0) = match config.strategy {
        ExploreStrategy::BernoulliBatched { t0, m0 } => (t0, m0.div_ceil(k) * k),
        _ => (0, 0),
    };
    let per_arm = m0 / k;
    let injected = match &config.injected {
        Some(PriorEstimate::Beta(p)) => Some(p.clone()),
        _ => None,
    };
    let mut frozen = injected.clone();
    let mut data = ExplorationDataset::new();
    let mut out = Vec::with_capacity(tasks.len());
    for (s, task) in tasks.iter().enumerate() {
        let mut rng = streams(s);
        let mut runner = TaskRunner::new(task, arms)?;
        let explored_arm = match config.mode {
            _ if t0 == 0 => None,
            FitMode::Commit => (s < m0).then(|| s / per_arm),
            FitMode::Continual => Some(s % k),
        };
        let mut pulls = Vec::new();
        if let Some(arm) = explored_arm {
            for _ in 0..t0 {
                let y = runner.pull(arm, &mut rng)?;
                data.push(s, arm, y);
                pulls.push((arm, y));
            }
        }
        let params = match config.mode {
            FitMode::Commit if explored_arm.is_some() => vec![(1.0, 1.0); k],
            FitMode::Commit => {
                if frozen.is_none() {
                    if t0 == 0 {
                        return Err(Error::InsufficientData(
                            "no exploration data and no injected estimate".into(),
                        ));
                    }
                    frozen = Some(beta_estimate(&data, t0, k)?);
                }
                frozen.clone().expect("estimate set above")
            }
            FitMode::Continual => match &injected {
                Some(p) => p.clone(),
                None if t0 == 0 => {
                    return Err(Error::InsufficientData(
                        "no exploration data and no injected estimate".into(),
                    ))
                }
                None => beta_estimate(&data, t0, k)?,
            },
        };
        let mut state = PolicyState::beta(BetaBelief::new(params)?);
        for (arm, y) in pulls {
            state.observe(arms, arm, y)?;
        }
        let remaining = n - runner.rounds_played();
        runner.play(PolicyKind::Thompson, &mut state, remaining, &mut rng)?;
        let (trajectory, recommended) = runner.finish(&mut rng)?;
        out.push(TaskResult {
            trajectory,
            recommended,
            first_round_gamma: None,
            prior: None,
        });
    }
    Ok(out)
}
