//! Conjugate updates: within-task Gaussian posterior, the cross-task
//! Gaussian meta-posterior, the uncertainty-adjusted task prior, and the
//! Beta-Bernoulli posterior.

use nalgebra::{DMatrix, DVector};

use crate::bandit::{ArmSet, Trajectory};
use crate::environments::GaussianMetaPriorSpec;
use crate::error::{Error, Result};
use crate::linalg;

/// A Gaussian `N(mean, covariance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() {
            return Err(Error::Dimension {
                expected: mean.len(),
                got: covariance.nrows(),
                context: "belief covariance",
            });
        }
        linalg::check_psd(&covariance, "belief covariance")?;
        Ok(GaussianBelief {
            mean,
            covariance: linalg::symmetrize(&covariance),
        })
    }

    /// `N(mean, s² I)`.
    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, DMatrix::identity(d, d) * variance)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Rank-one conjugate update with observation `y ~ N(aᵀμ, σ²)`, in place.
    pub(crate) fn observe(&mut self, feature: &DVector<f64>, reward: f64, sigma: f64) {
        let sigma_a = &self.covariance * feature;
        let innovation_var = feature.dot(&sigma_a) + sigma * sigma;
        let gain = sigma_a.clone() / innovation_var;
        let residual = reward - feature.dot(&self.mean);
        self.mean.axpy(residual, &gain, 1.0);
        self.covariance.ger(-1.0, &gain, &sigma_a, 1.0);
        self.covariance = linalg::symmetrize(&self.covariance);
    }

    /// The same update specialised to the basis vector `e_arm` when the
    /// covariance is diagonal. Produces the same floating-point result as
    /// [`GaussianBelief::observe`] on diagonal input.
    pub(crate) fn observe_basis_diagonal(&mut self, arm: usize, reward: f64, sigma: f64) {
        let var = self.covariance[(arm, arm)];
        let innovation_var = var + sigma * sigma;
        let gain = var / innovation_var;
        let residual = reward - self.mean[arm];
        self.mean[arm] += residual * gain;
        self.covariance[(arm, arm)] = var - gain * var;
    }
}

/// Posterior after one observation `(a, y)` with noise `σ`.
///
/// Uses the covariance (gain) form of the precision recursion
/// `Σ⁻¹ ← Σ⁻¹ + aaᵀ/σ²`, `Σ⁻¹θ ← Σ⁻¹θ + a y/σ²`, which also accepts
/// singular prior covariances.
pub fn within_task_update(
    belief: &GaussianBelief,
    feature: &DVector<f64>,
    reward: f64,
    sigma: f64,
) -> Result<GaussianBelief> {
    if !(sigma > 0.0) {
        return Err(Error::precondition(format!(
            "noise sigma must be positive, got {sigma}"
        )));
    }
    if feature.len() != belief.dim() {
        return Err(Error::Dimension {
            expected: belief.dim(),
            got: feature.len(),
            context: "arm feature",
        });
    }
    let mut next = belief.clone();
    next.observe(feature, reward, sigma);
    Ok(next)
}

/// Sufficient statistics of one finished task: `V = Σ_t A_t A_tᵀ` and
/// `B = Σ_t A_t Y_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSummary {
    pub gram: DMatrix<f64>,
    pub reward_sum: DVector<f64>,
}

impl TaskSummary {
    pub fn zeros(dim: usize) -> Self {
        TaskSummary {
            gram: DMatrix::zeros(dim, dim),
            reward_sum: DVector::zeros(dim),
        }
    }

    pub fn from_trajectory(trajectory: &Trajectory, arms: &ArmSet) -> Result<Self> {
        if trajectory.num_arms() != arms.len() {
            return Err(Error::Dimension {
                expected: arms.len(),
                got: trajectory.num_arms(),
                context: "trajectory arm count",
            });
        }
        let mut s = TaskSummary::zeros(arms.dim());
        match arms {
            ArmSet::Finite { .. } => {
                for (arm, &count) in trajectory.pull_counts().iter().enumerate() {
                    s.gram[(arm, arm)] = count as f64;
                }
                for &(arm, y) in trajectory.steps() {
                    s.reward_sum[arm] += y;
                }
            }
            ArmSet::Features { features } => {
                for &(arm, y) in trajectory.steps() {
                    let a = &features[arm];
                    s.gram.ger(1.0, a, a, 1.0);
                    s.reward_sum.axpy(y, a, 1.0);
                }
            }
        }
        Ok(s)
    }
}

/// Meta-posterior `Q_s = N(θ̂_s, Σ̂_s)` stored in natural parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaPosteriorState {
    precision: DMatrix<f64>,
    natural: DVector<f64>,
    theta_hat: DVector<f64>,
    covariance: DMatrix<f64>,
    tasks_seen: usize,
}

impl MetaPosteriorState {
    /// `Q_0 = Q`. The meta-prior covariance must be positive definite.
    pub fn from_meta_prior(meta: &GaussianMetaPriorSpec) -> Result<Self> {
        let precision = linalg::spd_inverse(meta.sigma_q(), "meta-prior covariance")?;
        let natural = &precision * meta.psi_q();
        Self::from_natural(precision, natural, 0)
    }

    fn from_natural(precision: DMatrix<f64>, natural: DVector<f64>, tasks_seen: usize) -> Result<Self> {
        let chol = linalg::cholesky(&precision, "meta-posterior precision")?;
        let theta_hat = chol.solve(&natural);
        let covariance = linalg::symmetrize(&chol.inverse());
        Ok(MetaPosteriorState {
            precision,
            natural,
            theta_hat,
            covariance,
            tasks_seen,
        })
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn natural(&self) -> &DVector<f64> {
        &self.natural
    }

    pub fn tasks_seen(&self) -> usize {
        self.tasks_seen
    }

    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }
}

/// Folds one task into the meta-posterior.
///
/// With `G = V/σ²` the precision grows by `G − G(Σ_0⁻¹ + G)⁻¹G` and the
/// natural parameter by `B/σ² − G(Σ_0⁻¹ + G)⁻¹B/σ²`. Both are evaluated as
/// `(I + GΣ_0)⁻¹G` and `(I + GΣ_0)⁻¹B/σ²` with a single LU factorisation,
/// so `Σ_0` is never inverted and may be singular.
pub fn meta_posterior_update(
    state: &MetaPosteriorState,
    summary: &TaskSummary,
    sigma0: &DMatrix<f64>,
    sigma: f64,
) -> Result<MetaPosteriorState> {
    let d = state.dim();
    if summary.gram.nrows() != d || summary.reward_sum.len() != d || sigma0.nrows() != d {
        return Err(Error::Dimension {
            expected: d,
            got: summary.gram.nrows(),
            context: "task summary",
        });
    }
    if !(sigma > 0.0) {
        return Err(Error::precondition(format!(
            "noise sigma must be positive, got {sigma}"
        )));
    }
    let (precision_inc, natural_inc) = meta_increment(summary, sigma0, sigma)?;
    let precision = linalg::symmetrize(&(&state.precision + precision_inc));
    let natural = &state.natural + natural_inc;
    MetaPosteriorState::from_natural(precision, natural, state.tasks_seen + 1)
}

fn meta_increment(summary: &TaskSummary, sigma0: &DMatrix<f64>, sigma: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let d = sigma0.nrows();
    let s2 = sigma * sigma;
    let g = &summary.gram / s2;
    let b = &summary.reward_sum / s2;
    let system = DMatrix::identity(d, d) + &g * sigma0;
    let lu = system.lu();
    let precision_inc = lu
        .solve(&g)
        .ok_or_else(|| Error::numeric("singular system in meta-posterior update"))?;
    let natural_inc = lu
        .solve(&b)
        .ok_or_else(|| Error::numeric("singular system in meta-posterior update"))?;
    Ok((linalg::symmetrize(&precision_inc), natural_inc))
}

/// Task prior `P_s = N(θ̂_s, Σ̂_s + Σ_0)`.
pub fn uncertainty_adjusted_prior(state: &MetaPosteriorState, sigma0: &DMatrix<f64>) -> Result<GaussianBelief> {
    if sigma0.nrows() != state.dim() {
        return Err(Error::Dimension {
            expected: state.dim(),
            got: sigma0.nrows(),
            context: "prior covariance",
        });
    }
    GaussianBelief::new(state.theta_hat.clone(), &state.covariance + sigma0)
}

/// Independent `Beta(α_a, β_a)` beliefs per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaBelief {
    params: Vec<(f64, f64)>,
}

impl BetaBelief {
    pub fn new(params: Vec<(f64, f64)>) -> Result<Self> {
        if params.iter().any(|&(a, b)| !(a > 0.0 && b > 0.0)) {
            return Err(Error::precondition("beta parameters must be positive"));
        }
        Ok(BetaBelief { params })
    }

    pub fn uniform(num_arms: usize) -> Self {
        BetaBelief {
            params: vec![(1.0, 1.0); num_arms],
        }
    }

    pub fn params(&self) -> &[(f64, f64)] {
        &self.params
    }

    pub fn num_arms(&self) -> usize {
        self.params.len()
    }

    pub(crate) fn observe(&mut self, arm: usize, reward: f64) -> Result<()> {
        if reward != 0.0 && reward != 1.0 {
            return Err(Error::precondition(format!(
                "bernoulli reward must be 0 or 1, got {reward}"
            )));
        }
        let Some(p) = self.params.get_mut(arm) else {
            return Err(Error::precondition(format!("arm {arm} out of range")));
        };
        p.0 += reward;
        p.1 += 1.0 - reward;
        Ok(())
    }
}

pub fn beta_update(belief: &BetaBelief, arm: usize, reward: f64) -> Result<BetaBelief> {
    let mut next = belief.clone();
    next.observe(arm, reward)?;
    Ok(next)
}
