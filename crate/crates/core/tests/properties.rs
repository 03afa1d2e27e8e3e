//! Property tests for the invariants every module promises.

use metasrm::bandit::{
    best_arm, cumulative_regret, expected_recommendation_regret, NoiseModel, TaskInstance, Trajectory,
};
use metasrm::diagnostics::{beta_binomial_moment_oracle, brute_force_gaussian_posterior, gaussian_kl, tv_report};
use metasrm::environments::GaussianMetaPriorSpec;
use metasrm::estimators::{beta_binomial_moments, invert_beta_binomial_moments};
use metasrm::harness::output::format_sig17;
use metasrm::posteriors::{
    meta_posterior_update, uncertainty_adjusted_prior, within_task_update, GaussianBelief, MetaPosteriorState,
    TaskSummary,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.min()
}

/// Square matrix entries in `[-1, 1]`, turned into `LLᵀ + floor·I`.
fn spd(d: usize, floor: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, d * d).prop_map(move |v| {
        let l = DMatrix::from_vec(d, d, v);
        let m = &l * l.transpose() + DMatrix::identity(d, d) * floor;
        (&m + m.transpose()) * 0.5
    })
}

fn vector(d: usize, scale: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-scale..scale, d).prop_map(DVector::from_vec)
}

fn observations(d: usize, max: usize) -> impl Strategy<Value = Vec<(DVector<f64>, f64)>> {
    prop::collection::vec((vector(d, 1.0), -3.0f64..3.0), 0..=max)
}

fn belief_and_data() -> impl Strategy<Value = (GaussianBelief, Vec<(DVector<f64>, f64)>, f64)> {
    (1usize..=5).prop_flat_map(|d| {
        (vector(d, 2.0), spd(d, 0.05), observations(d, 50), 0.3f64..2.0)
            .prop_map(|(m, c, obs, sigma)| (GaussianBelief::new(m, c).unwrap(), obs, sigma))
    })
}

fn chain(prior: &GaussianBelief, obs: &[(DVector<f64>, f64)], sigma: f64) -> GaussianBelief {
    obs.iter()
        .fold(prior.clone(), |b, (a, y)| within_task_update(&b, a, *y, sigma).unwrap())
}

fn close(a: &GaussianBelief, b: &GaussianBelief, tol: f64) -> bool {
    (a.mean() - b.mean()).amax() < tol && (a.covariance() - b.covariance()).amax() < tol
}

fn meta_setup() -> impl Strategy<Value = (GaussianMetaPriorSpec, DMatrix<f64>, f64, Vec<TaskSummary>)> {
    (1usize..=4).prop_flat_map(|d| {
        let task = prop::collection::vec((vector(d, 1.0), -2.0f64..2.0), 0..10).prop_map(move |obs| {
            let mut s = TaskSummary::zeros(d);
            for (a, y) in obs {
                s.gram += &a * a.transpose();
                s.reward_sum += a * y;
            }
            s
        });
        (
            vector(d, 1.0),
            spd(d, 0.1),
            spd(d, 0.01),
            0.5f64..2.0,
            prop::collection::vec(task, 1..8),
        )
            .prop_map(|(psi, q, s0, sigma, tasks)| {
                (GaussianMetaPriorSpec::new(psi, q).unwrap(), s0 * 0.2, sigma, tasks)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn recursion_matches_batch((prior, obs, sigma) in belief_and_data()) {
        let batch = brute_force_gaussian_posterior(&prior, &obs, sigma).unwrap();
        prop_assert!(close(&chain(&prior, &obs, sigma), &batch, 1e-8));
    }

    #[test]
    fn within_task_posterior_ignores_order((prior, obs, sigma) in belief_and_data(), seed in any::<u64>()) {
        let mut shuffled = obs.clone();
        // deterministic Fisher-Yates driven by the seed
        let mut state = seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        prop_assert!(close(&chain(&prior, &obs, sigma), &chain(&prior, &shuffled, sigma), 1e-8));
    }

    #[test]
    fn meta_precision_grows_and_task_prior_dominates_sigma0((meta, sigma0, sigma, tasks) in meta_setup()) {
        let mut state = MetaPosteriorState::from_meta_prior(&meta).unwrap();
        for t in &tasks {
            let next = meta_posterior_update(&state, t, &sigma0, sigma).unwrap();
            let growth = next.precision() - state.precision();
            prop_assert!(min_eigenvalue(&growth) > -1e-10);
            let prior = uncertainty_adjusted_prior(&next, &sigma0).unwrap();
            prop_assert!(min_eigenvalue(&(prior.covariance() - &sigma0)) > -1e-10);
            prop_assert!((next.theta_hat() - next.covariance() * next.natural()).amax() < 1e-8);
            state = next;
        }
        prop_assert_eq!(state.tasks_seen(), tasks.len());
    }

    #[test]
    fn meta_posterior_ignores_task_order((meta, sigma0, sigma, tasks) in meta_setup()) {
        let fold = |order: Vec<&TaskSummary>| {
            order.into_iter().fold(MetaPosteriorState::from_meta_prior(&meta).unwrap(), |s, t| {
                meta_posterior_update(&s, t, &sigma0, sigma).unwrap()
            })
        };
        let forward = fold(tasks.iter().collect());
        let backward = fold(tasks.iter().rev().collect());
        prop_assert!((forward.theta_hat() - backward.theta_hat()).amax() < 1e-8);
        prop_assert!((forward.covariance() - backward.covariance()).amax() < 1e-8);
    }

    #[test]
    fn reduction_identity_and_signs(
        means in prop::collection::vec(-3.0f64..3.0, 1..10),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 1..60),
    ) {
        let task = TaskInstance::new(means.clone(), NoiseModel::Gaussian { sigma: 1.0 }).unwrap();
        let steps: Vec<(usize, f64)> = picks.iter().map(|i| (i.index(means.len()), 0.0)).collect();
        let traj = Trajectory::from_steps(means.len(), &steps).unwrap();
        let simple = expected_recommendation_regret(&task, &traj).unwrap();
        let cumulative = cumulative_regret(&task, &traj).unwrap();
        prop_assert!(simple.is_finite() && simple >= 0.0);
        prop_assert!(cumulative.is_finite() && cumulative >= 0.0);
        let n = steps.len() as f64;
        prop_assert!((simple - cumulative / n).abs() <= 8.0 * f64::EPSILON * cumulative.max(1.0));
        prop_assert_eq!(traj.pull_counts().iter().sum::<usize>(), steps.len());
    }

    #[test]
    fn best_arm_ignores_a_common_shift(means in prop::collection::vec(-3.0f64..3.0, 1..10), shift in -5.0f64..5.0) {
        let noise = NoiseModel::Gaussian { sigma: 1.0 };
        let base = TaskInstance::new(means.clone(), noise).unwrap();
        let shifted = TaskInstance::new(means.iter().map(|m| m + shift).collect(), noise).unwrap();
        prop_assert_eq!(best_arm(&base).0, best_arm(&shifted).0);
    }

    #[test]
    fn beta_binomial_moments_invert_exactly(alpha in 0.2f64..20.0, beta in 0.2f64..20.0, t0 in 2u32..15) {
        let (m1, m2) = beta_binomial_moment_oracle(alpha, beta, t0).unwrap();
        let (c1, c2) = beta_binomial_moments(alpha, beta, t0);
        prop_assert!((m1 - c1).abs() < 1e-10 * m1.max(1.0));
        prop_assert!((m2 - c2).abs() < 1e-10 * m2.max(1.0));
        let (a, b) = invert_beta_binomial_moments(c1, c2, t0).unwrap();
        prop_assert!(((a - alpha) / alpha).abs() < 1e-6, "alpha {alpha} -> {a}");
        prop_assert!(((b - beta) / beta).abs() < 1e-6, "beta {beta} -> {b}");
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_identical(
        (p, q) in (1usize..=4).prop_flat_map(|d| ((vector(d, 2.0), spd(d, 0.05)), (vector(d, 2.0), spd(d, 0.05))))
    ) {
        let p = GaussianBelief::new(p.0, p.1).unwrap();
        let q = GaussianBelief::new(q.0, q.1).unwrap();
        prop_assert!(gaussian_kl(&p, &q).unwrap() >= 0.0);
        prop_assert_eq!(gaussian_kl(&p, &p).unwrap(), 0.0);
        let twin = GaussianBelief::new(p.mean().clone(), p.covariance().clone()).unwrap();
        prop_assert!(gaussian_kl(&p, &twin).unwrap().abs() < 1e-12);
    }

    #[test]
    fn pinsker_bounds_exact_tv(shift in vector(3, 1.0), sd in 0.05f64..2.0) {
        let cov = DMatrix::identity(3, 3) * (sd * sd);
        let p = GaussianBelief::new(DVector::zeros(3), cov.clone()).unwrap();
        let q = GaussianBelief::new(shift, cov).unwrap();
        let report = tv_report(&p, &q).unwrap();
        let exact = report.exact_tv.expect("isotropic pair");
        prop_assert!(exact <= report.pinsker_tv_bound + 1e-12);
        prop_assert!((report.pinsker_tv_bound - (report.kl / 2.0).sqrt().min(1.0)).abs() < 1e-15);
    }

    #[test]
    fn csv_numbers_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(format_sig17(x).parse::<f64>().unwrap(), x);
    }
}
