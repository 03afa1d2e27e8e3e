//! Per-task arm selection: Thompson sampling and BayesUCB, plus the runner
//! that plays one task and returns its trajectory and recommendation.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::bandit::{argmax, recommend_by_pull_frequency, ArmSet, TaskInstance, Trajectory};
use crate::environments::sample_reward;
use crate::error::{Error, Result};
use crate::linalg;
use crate::posteriors::{BetaBelief, GaussianBelief};

/// Default confidence parameter for BayesUCB.
pub const DEFAULT_UCB_DELTA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    Thompson,
    /// BayesUCB with confidence `delta ∈ (0, 1]`. With `sampled_mean` the
    /// index uses a posterior draw instead of the posterior mean.
    BayesUcb {
        delta: f64,
        sampled_mean: bool,
    },
}

impl PolicyKind {
    pub fn bayes_ucb(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::precondition(format!("delta must lie in (0, 1], got {delta}")));
        }
        Ok(PolicyKind::BayesUcb {
            delta,
            sampled_mean: false,
        })
    }
}

/// Posterior carried through a task.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyState {
    Gaussian {
        belief: GaussianBelief,
        sigma: f64,
        /// Covariance is diagonal and the arms are the standard basis, so
        /// updates and draws can work coordinate-wise.
        diagonal: bool,
    },
    Beta(BetaBelief),
}

impl PolicyState {
    pub fn gaussian(belief: GaussianBelief, sigma: f64, arms: &ArmSet) -> Result<Self> {
        if belief.dim() != arms.dim() {
            return Err(Error::Dimension {
                expected: arms.dim(),
                got: belief.dim(),
                context: "policy belief",
            });
        }
        if !(sigma > 0.0) {
            return Err(Error::precondition(format!(
                "noise sigma must be positive, got {sigma}"
            )));
        }
        let diagonal = arms.is_finite() && linalg::is_diagonal(belief.covariance());
        Ok(PolicyState::Gaussian {
            belief,
            sigma,
            diagonal,
        })
    }

    pub fn beta(belief: BetaBelief) -> Self {
        PolicyState::Beta(belief)
    }

    /// Incorporates one observation of `arm`.
    pub fn observe(&mut self, arms: &ArmSet, arm: usize, reward: f64) -> Result<()> {
        match self {
            PolicyState::Gaussian {
                belief,
                sigma,
                diagonal,
            } => {
                if *diagonal {
                    belief.observe_basis_diagonal(arm, reward, *sigma);
                } else {
                    belief.observe(&arms.feature(arm), reward, *sigma);
                }
                Ok(())
            }
            PolicyState::Beta(b) => b.observe(arm, reward),
        }
    }

    pub fn gaussian_belief(&self) -> Option<&GaussianBelief> {
        match self {
            PolicyState::Gaussian { belief, .. } => Some(belief),
            PolicyState::Beta(_) => None,
        }
    }
}

fn draw_gaussian<R: Rng + ?Sized>(belief: &GaussianBelief, diagonal: bool, rng: &mut R) -> Result<DVector<f64>> {
    if diagonal {
        let cov = belief.covariance();
        Ok(DVector::from_fn(belief.dim(), |i, _| {
            let z: f64 = rng.sample(StandardNormal);
            belief.mean()[i] + cov[(i, i)].max(0.0).sqrt() * z
        }))
    } else {
        let factor = linalg::sampling_factor(belief.covariance())?;
        Ok(linalg::sample_with_factor(belief.mean(), &factor, rng))
    }
}

/// Thompson sampling: one posterior draw, then its lowest-index argmax arm.
pub fn ts_select<R: Rng + ?Sized>(state: &PolicyState, arms: &ArmSet, rng: &mut R) -> Result<usize> {
    match state {
        PolicyState::Gaussian { belief, diagonal, .. } => {
            let draw = draw_gaussian(belief, *diagonal, rng)?;
            Ok(argmax(&arms.induced_means(&draw)).0)
        }
        PolicyState::Beta(b) => {
            if b.num_arms() != arms.len() {
                return Err(Error::Dimension {
                    expected: arms.len(),
                    got: b.num_arms(),
                    context: "beta belief",
                });
            }
            let mut draws = Vec::with_capacity(b.num_arms());
            for &(a, bb) in b.params() {
                let dist = Beta::new(a, bb).map_err(|e| Error::numeric(e.to_string()))?;
                draws.push(dist.sample(rng));
            }
            Ok(argmax(&draws).0)
        }
    }
}

/// `½ log(1 + aᵀΣa / σ²)`: information gained about `μ` from one pull of `a`.
pub fn mutual_information_gain(belief: &GaussianBelief, feature: &DVector<f64>, sigma: f64) -> f64 {
    let var = feature.dot(&(belief.covariance() * feature)).max(0.0);
    0.5 * (var / (sigma * sigma)).ln_1p()
}

fn max_arm_variance(belief: &GaussianBelief, arms: &ArmSet) -> f64 {
    match arms {
        ArmSet::Finite { .. } => belief.covariance().diagonal().max(),
        ArmSet::Features { features } => features
            .iter()
            .map(|a| a.dot(&(belief.covariance() * a)))
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// `Γ = 4 √( σ²_max / log(1 + σ²_max/σ²) · log(4|A|/δ) )` with
/// `σ²_max = max_a aᵀΣa`.
pub fn gamma_coefficient(belief: &GaussianBelief, arms: &ArmSet, sigma: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::precondition(format!("delta must lie in (0, 1], got {delta}")));
    }
    let var_max = max_arm_variance(belief, arms);
    if !(var_max > 0.0) {
        return Err(Error::numeric("posterior has no variance along any arm"));
    }
    let ratio = var_max / (var_max / (sigma * sigma)).ln_1p();
    let log_term = (4.0 * arms.len() as f64 / delta).ln();
    Ok(4.0 * (ratio * log_term).sqrt())
}

/// Upper confidence indices `E[aᵀμ] + Γ √I(a)` for every arm.
pub fn bayes_ucb_indices(
    belief: &GaussianBelief,
    arms: &ArmSet,
    sigma: f64,
    delta: f64,
    centre: &DVector<f64>,
) -> Result<Vec<f64>> {
    let gamma = gamma_coefficient(belief, arms, sigma, delta)?;
    Ok((0..arms.len())
        .map(|a| {
            let f = arms.feature(a);
            f.dot(centre) + gamma * mutual_information_gain(belief, &f, sigma).sqrt()
        })
        .collect())
}

/// Lowest-index arm with the largest BayesUCB index.
pub fn bayes_ucb_select<R: Rng + ?Sized>(
    state: &PolicyState,
    arms: &ArmSet,
    delta: f64,
    sampled_mean: bool,
    rng: &mut R,
) -> Result<usize> {
    let PolicyState::Gaussian {
        belief,
        sigma,
        diagonal,
    } = state
    else {
        return Err(Error::precondition("BayesUCB requires a Gaussian belief"));
    };
    let centre = if sampled_mean {
        draw_gaussian(belief, *diagonal, rng)?
    } else {
        belief.mean().clone()
    };
    let indices = bayes_ucb_indices(belief, arms, *sigma, delta, &centre)?;
    Ok(argmax(&indices).0)
}

fn greedy_select(state: &PolicyState, arms: &ArmSet) -> usize {
    match state {
        PolicyState::Gaussian { belief, .. } => argmax(&arms.induced_means(belief.mean())).0,
        PolicyState::Beta(b) => {
            let means: Vec<f64> = b.params().iter().map(|&(a, bb)| a / (a + bb)).collect();
            argmax(&means).0
        }
    }
}

/// Picks the next arm under `policy`. BayesUCB on a posterior with no
/// remaining variance falls back to the greedy arm.
pub fn select_arm<R: Rng + ?Sized>(
    policy: PolicyKind,
    state: &PolicyState,
    arms: &ArmSet,
    rng: &mut R,
) -> Result<usize> {
    match policy {
        PolicyKind::Thompson => ts_select(state, arms, rng),
        PolicyKind::BayesUcb { delta, sampled_mean } => match bayes_ucb_select(state, arms, delta, sampled_mean, rng) {
            Err(Error::Numeric(_)) => Ok(greedy_select(state, arms)),
            other => other,
        },
    }
}

/// Plays one task round by round, keeping its trajectory.
pub struct TaskRunner<'a> {
    task: &'a TaskInstance,
    arms: &'a ArmSet,
    trajectory: Trajectory,
}

impl<'a> TaskRunner<'a> {
    pub fn new(task: &'a TaskInstance, arms: &'a ArmSet) -> Result<Self> {
        if task.num_arms() != arms.len() {
            return Err(Error::Dimension {
                expected: arms.len(),
                got: task.num_arms(),
                context: "task arm count",
            });
        }
        Ok(TaskRunner {
            task,
            arms,
            trajectory: Trajectory::new(arms.len()),
        })
    }

    /// Pulls `arm`, records it and returns the reward.
    pub fn pull<R: Rng + ?Sized>(&mut self, arm: usize, rng: &mut R) -> Result<f64> {
        let reward = sample_reward(self.task, arm, rng);
        self.trajectory.push(arm, reward)?;
        Ok(reward)
    }

    /// Pulls `arm` and folds the reward into `state`.
    pub fn pull_and_update<R: Rng + ?Sized>(
        &mut self,
        arm: usize,
        state: &mut PolicyState,
        rng: &mut R,
    ) -> Result<f64> {
        let reward = self.pull(arm, rng)?;
        state.observe(self.arms, arm, reward)?;
        Ok(reward)
    }

    /// Plays `rounds` select → observe → update steps.
    pub fn play<R: Rng + ?Sized>(
        &mut self,
        policy: PolicyKind,
        state: &mut PolicyState,
        rounds: usize,
        rng: &mut R,
    ) -> Result<()> {
        for _ in 0..rounds {
            let arm = select_arm(policy, state, self.arms, rng)?;
            self.pull_and_update(arm, state, rng)?;
        }
        Ok(())
    }

    pub fn rounds_played(&self) -> usize {
        self.trajectory.len()
    }

    /// Ends the task with a pull-frequency recommendation.
    pub fn finish<R: Rng + ?Sized>(self, rng: &mut R) -> Result<(Trajectory, usize)> {
        let recommended = recommend_by_pull_frequency(&self.trajectory, rng)?;
        Ok((self.trajectory, recommended))
    }
}

/// Runs `policy` from `start` for `n` rounds on `task` and recommends an arm.
pub fn run_task<R: Rng + ?Sized>(
    policy: PolicyKind,
    start: PolicyState,
    task: &TaskInstance,
    arms: &ArmSet,
    n: usize,
    rng: &mut R,
) -> Result<(Trajectory, usize)> {
    if n == 0 {
        return Err(Error::precondition("horizon n must be at least 1"));
    }
    let mut state = start;
    let mut runner = TaskRunner::new(task, arms)?;
    runner.play(policy, &mut state, n, rng)?;
    runner.finish(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::{expected_recommendation_regret, NoiseModel};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::function::erf::erfc;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn diag_belief(mean: &[f64], var: &[f64]) -> GaussianBelief {
        GaussianBelief::new(
            DVector::from_column_slice(mean),
            DMatrix::from_diagonal(&DVector::from_column_slice(var)),
        )
        .unwrap()
    }

    fn gaussian_state(belief: GaussianBelief, arms: &ArmSet) -> PolicyState {
        PolicyState::gaussian(belief, 1.0, arms).unwrap()
    }

    fn std_normal_cdf(x: f64) -> f64 {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    }

    #[test]
    fn degenerate_posterior_always_picks_its_mean() {
        let arms = ArmSet::finite(2).unwrap();
        let s = gaussian_state(diag_belief(&[0.9, 0.1], &[0.0, 0.0]), &arms);
        let mut r = rng(0);
        for _ in 0..1000 {
            assert_eq!(ts_select(&s, &arms, &mut r).unwrap(), 0);
        }
    }

    #[test]
    fn symmetric_posterior_splits_evenly() {
        let arms = ArmSet::finite(2).unwrap();
        let s = gaussian_state(diag_belief(&[0.0, 0.0], &[1.0, 1.0]), &arms);
        let mut r = rng(1);
        let n = 100_000;
        let zeros = (0..n).filter(|_| ts_select(&s, &arms, &mut r).unwrap() == 0).count();
        assert!((zeros as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn ts_matches_closed_form_argmax_probability() {
        let arms = ArmSet::finite(2).unwrap();
        let (m, v) = ([0.3, 0.0], [0.5, 0.8]);
        let s = gaussian_state(diag_belief(&m, &v), &arms);
        let expected = std_normal_cdf((m[0] - m[1]) / (v[0] + v[1]).sqrt());
        let mut r = rng(2);
        let n = 100_000;
        let zeros = (0..n).filter(|_| ts_select(&s, &arms, &mut r).unwrap() == 0).count();
        assert!((zeros as f64 / n as f64 - expected).abs() < 0.01);

        // Same law through the dense path.
        let feats = ArmSet::features(vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        ])
        .unwrap();
        let dense = gaussian_state(diag_belief(&m, &v), &feats);
        let zeros = (0..n)
            .filter(|_| ts_select(&dense, &feats, &mut r).unwrap() == 0)
            .count();
        assert!((zeros as f64 / n as f64 - expected).abs() < 0.01);
    }

    #[test]
    fn beta_ts_matches_pairwise_monte_carlo() {
        let arms = ArmSet::finite(2).unwrap();
        let s = PolicyState::beta(BetaBelief::new(vec![(50.0, 50.0), (5.0, 5.0)]).unwrap());
        let mut oracle_rng = rng(100);
        let a = Beta::new(50.0, 50.0).unwrap();
        let b = Beta::new(5.0, 5.0).unwrap();
        let oracle_n = 1_000_000;
        let oracle = (0..oracle_n)
            .filter(|_| a.sample(&mut oracle_rng) >= b.sample(&mut oracle_rng))
            .count() as f64
            / oracle_n as f64;
        let mut r = rng(3);
        let n = 100_000;
        let zeros = (0..n).filter(|_| ts_select(&s, &arms, &mut r).unwrap() == 0).count();
        assert!((zeros as f64 / n as f64 - oracle).abs() < 0.01);
    }

    #[test]
    fn information_gain_values() {
        let e = DVector::from_vec(vec![1.0, 0.0]);
        let zero = diag_belief(&[0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(mutual_information_gain(&zero, &e, 1.0), 0.0);
        let b = diag_belief(&[0.0, 0.0], &[0.01, 0.01]);
        let g = mutual_information_gain(&b, &e, 1.0);
        assert!((g - 0.004_975_165_426_584_05).abs() < 1e-12);
        let b2 = diag_belief(&[0.0, 0.0], &[0.02, 0.01]);
        assert!(mutual_information_gain(&b2, &e, 1.0) > g);
    }

    #[test]
    fn gamma_worked_value_and_monotonicity() {
        let arms = ArmSet::finite(4).unwrap();
        let b = diag_belief(&[0.0; 4], &[1.0, 0.5, 0.2, 0.1]);
        let g = gamma_coefficient(&b, &arms, 1.0, 1.0).unwrap();
        assert!((g - 8.0).abs() < 1e-12, "{g}");
        let g_small_delta = gamma_coefficient(&b, &arms, 1.0, 0.5).unwrap();
        assert!(g_small_delta > g);
        let wider = diag_belief(&[0.0; 4], &[2.0, 0.5, 0.2, 0.1]);
        assert!(gamma_coefficient(&wider, &arms, 1.0, 1.0).unwrap() > g);
        let zero = diag_belief(&[0.0; 4], &[0.0; 4]);
        assert!(gamma_coefficient(&zero, &arms, 1.0, 1.0).is_err());
        assert!(gamma_coefficient(&b, &arms, 1.0, 0.0).is_err());
    }

    #[test]
    fn ucb_exploits_under_equal_bonuses_and_explores_under_equal_means() {
        let arms = ArmSet::finite(2).unwrap();
        let mut r = rng(4);
        let s = gaussian_state(diag_belief(&[0.5, 0.1], &[0.3, 0.3]), &arms);
        assert_eq!(bayes_ucb_select(&s, &arms, 0.1, false, &mut r).unwrap(), 0);
        let s = gaussian_state(diag_belief(&[0.2, 0.2], &[1.0, 0.01]), &arms);
        assert_eq!(bayes_ucb_select(&s, &arms, 0.1, false, &mut r).unwrap(), 0);
    }

    #[test]
    fn ucb_three_arm_worked_example() {
        // Indices recomputed by hand from
        //   Γ = 4√(0.04/ln 1.04 · ln 120) ≈ 8.838657,
        //   U(a) = mean(a) + Γ √(½ ln(1 + var(a))).
        let expected = [1.237_739, 0.723_433, 0.462_299];
        let arms = ArmSet::finite(3).unwrap();
        let b = diag_belief(&[0.0, 0.1, 0.15], &[0.04, 0.01, 0.0025]);
        let idx = bayes_ucb_indices(&b, &arms, 1.0, 0.1, b.mean()).unwrap();
        for (got, want) in idx.iter().zip(expected) {
            assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        }
        let s = gaussian_state(b, &arms);
        assert_eq!(bayes_ucb_select(&s, &arms, 0.1, false, &mut rng(5)).unwrap(), 0);
    }

    #[test]
    fn ucb_is_shift_invariant() {
        let arms = ArmSet::finite(3).unwrap();
        let mut r = rng(6);
        for _ in 0..200 {
            let mean: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
            let var: Vec<f64> = (0..3).map(|_| r.random_range(0.01..1.0)).collect();
            let shift: f64 = r.random_range(-5.0..5.0);
            let shifted: Vec<f64> = mean.iter().map(|m| m + shift).collect();
            let a = gaussian_state(diag_belief(&mean, &var), &arms);
            let b = gaussian_state(diag_belief(&shifted, &var), &arms);
            assert_eq!(
                bayes_ucb_select(&a, &arms, 0.1, false, &mut r).unwrap(),
                bayes_ucb_select(&b, &arms, 0.1, false, &mut r).unwrap()
            );
        }
    }

    #[test]
    fn ucb_falls_back_to_greedy_without_variance() {
        let arms = ArmSet::finite(2).unwrap();
        let s = gaussian_state(diag_belief(&[0.1, 0.4], &[0.0, 0.0]), &arms);
        let policy = PolicyKind::bayes_ucb(0.1).unwrap();
        assert_eq!(select_arm(policy, &s, &arms, &mut rng(7)).unwrap(), 1);
    }

    #[test]
    fn run_task_edge_cases() {
        let arms = ArmSet::finite(3).unwrap();
        let task = TaskInstance::new(vec![0.0, 0.5, 1.0], NoiseModel::Gaussian { sigma: 1.0 }).unwrap();
        let start = gaussian_state(diag_belief(&[0.0; 3], &[1.0; 3]), &arms);
        let (t, rec) = run_task(PolicyKind::Thompson, start.clone(), &task, &arms, 1, &mut rng(8)).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(rec, t.steps()[0].0);
        assert!(run_task(PolicyKind::Thompson, start, &task, &arms, 0, &mut rng(8)).is_err());

        let one = ArmSet::finite(1).unwrap();
        let task = TaskInstance::new(vec![0.3], NoiseModel::Gaussian { sigma: 1.0 }).unwrap();
        let start = gaussian_state(diag_belief(&[0.0], &[1.0]), &one);
        let (t, rec) = run_task(PolicyKind::Thompson, start, &task, &one, 20, &mut rng(9)).unwrap();
        assert_eq!(rec, 0);
        assert_eq!(expected_recommendation_regret(&task, &t).unwrap(), 0.0);
    }

    #[test]
    fn run_task_is_replayable_and_counts_sum_to_n() {
        let arms = ArmSet::finite(4).unwrap();
        let task = TaskInstance::new(vec![0.1, 0.5, 0.2, 0.4], NoiseModel::Gaussian { sigma: 1.0 }).unwrap();
        let start = gaussian_state(diag_belief(&[0.0; 4], &[1.0; 4]), &arms);
        for policy in [PolicyKind::Thompson, PolicyKind::bayes_ucb(0.1).unwrap()] {
            let a = run_task(policy, start.clone(), &task, &arms, 37, &mut rng(10)).unwrap();
            let b = run_task(policy, start.clone(), &task, &arms, 37, &mut rng(10)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.0.pull_counts().iter().sum::<usize>(), 37);
        }
    }

    #[test]
    fn bernoulli_run_task() {
        let arms = ArmSet::finite(2).unwrap();
        let task = TaskInstance::new(vec![0.9, 0.1], NoiseModel::Bernoulli).unwrap();
        let start = PolicyState::beta(BetaBelief::uniform(2));
        let (t, _) = run_task(PolicyKind::Thompson, start, &task, &arms, 200, &mut rng(11)).unwrap();
        assert!(t.pull_counts()[0] > t.pull_counts()[1]);
        assert!(t.steps().iter().all(|&(_, y)| y == 0.0 || y == 1.0));
    }
}
