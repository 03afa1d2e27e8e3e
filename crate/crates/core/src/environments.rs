//! Generative models: meta-prior → prior → task means → rewards.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::bandit::{ArmSet, NoiseModel, TaskInstance};
use crate::error::{Error, Result};
use crate::linalg;

/// Gaussian task prior `N(θ_*, Σ_0)` with Gaussian reward noise `σ`.
#[derive(Debug, Clone)]
pub struct GaussianPriorSpec {
    theta_star: DVector<f64>,
    sigma0: DMatrix<f64>,
    noise_sigma: f64,
    arms: ArmSet,
    sigma0_factor: DMatrix<f64>,
}

impl GaussianPriorSpec {
    pub fn new(theta_star: DVector<f64>, sigma0: DMatrix<f64>, noise_sigma: f64, arms: ArmSet) -> Result<Self> {
        let d = arms.dim();
        if theta_star.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: theta_star.len(),
                context: "prior mean",
            });
        }
        if sigma0.nrows() != d {
            return Err(Error::Dimension {
                expected: d,
                got: sigma0.nrows(),
                context: "prior covariance",
            });
        }
        linalg::check_psd(&sigma0, "prior covariance")?;
        if !(noise_sigma > 0.0 && noise_sigma.is_finite()) {
            return Err(Error::precondition(format!(
                "noise sigma must be positive, got {noise_sigma}"
            )));
        }
        let sigma0_factor = linalg::psd_sqrt_factor(&sigma0)?;
        Ok(GaussianPriorSpec {
            theta_star,
            sigma0,
            noise_sigma,
            arms,
            sigma0_factor,
        })
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn sigma0(&self) -> &DMatrix<f64> {
        &self.sigma0
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn arms(&self) -> &ArmSet {
        &self.arms
    }
}

/// Gaussian meta-prior `Q = N(ψ_q, Σ_q)` over `θ_*`.
#[derive(Debug, Clone)]
pub struct GaussianMetaPriorSpec {
    psi_q: DVector<f64>,
    sigma_q: DMatrix<f64>,
    sigma_q_factor: DMatrix<f64>,
}

impl GaussianMetaPriorSpec {
    pub fn new(psi_q: DVector<f64>, sigma_q: DMatrix<f64>) -> Result<Self> {
        if sigma_q.nrows() != psi_q.len() {
            return Err(Error::Dimension {
                expected: psi_q.len(),
                got: sigma_q.nrows(),
                context: "meta-prior covariance",
            });
        }
        linalg::check_psd(&sigma_q, "meta-prior covariance")?;
        let sigma_q_factor = linalg::psd_sqrt_factor(&sigma_q)?;
        Ok(GaussianMetaPriorSpec {
            psi_q,
            sigma_q,
            sigma_q_factor,
        })
    }

    /// `N(ψ, s² I)`.
    pub fn isotropic(psi_q: DVector<f64>, sigma_q: f64) -> Result<Self> {
        let d = psi_q.len();
        Self::new(psi_q, DMatrix::identity(d, d) * (sigma_q * sigma_q))
    }

    pub fn psi_q(&self) -> &DVector<f64> {
        &self.psi_q
    }

    pub fn sigma_q(&self) -> &DMatrix<f64> {
        &self.sigma_q
    }

    pub fn dim(&self) -> usize {
        self.psi_q.len()
    }

    /// Same covariance, different mean.
    pub fn with_mean(&self, psi_q: DVector<f64>) -> Result<Self> {
        if psi_q.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: psi_q.len(),
                context: "meta-prior mean",
            });
        }
        Ok(GaussianMetaPriorSpec {
            psi_q,
            sigma_q: self.sigma_q.clone(),
            sigma_q_factor: self.sigma_q_factor.clone(),
        })
    }
}

/// Product of per-arm Beta priors for Bernoulli bandits.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaPriorSpec {
    params: Vec<(f64, f64)>,
}

impl BetaPriorSpec {
    pub fn new(params: Vec<(f64, f64)>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::precondition("beta prior needs at least one arm"));
        }
        for (i, &(a, b)) in params.iter().enumerate() {
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(Error::precondition(format!(
                    "arm {i}: beta parameters must be positive, got ({a}, {b})"
                )));
            }
        }
        Ok(BetaPriorSpec { params })
    }

    pub fn params(&self) -> &[(f64, f64)] {
        &self.params
    }

    pub fn num_arms(&self) -> usize {
        self.params.len()
    }
}

/// Draws `θ_* ~ Q` and wraps it into a task prior with the given `Σ_0`.
pub fn sample_prior_from_meta<R: Rng + ?Sized>(
    meta: &GaussianMetaPriorSpec,
    sigma0: &DMatrix<f64>,
    arms: &ArmSet,
    sigma: f64,
    rng: &mut R,
) -> Result<GaussianPriorSpec> {
    let theta = linalg::sample_with_factor(&meta.psi_q, &meta.sigma_q_factor, rng);
    GaussianPriorSpec::new(theta, sigma0.clone(), sigma, arms.clone())
}

/// Anything that can generate task instances.
pub trait TaskSampler {
    fn sample_task<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TaskInstance>;
}

impl TaskSampler for GaussianPriorSpec {
    fn sample_task<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TaskInstance> {
        let mu = linalg::sample_with_factor(&self.theta_star, &self.sigma0_factor, rng);
        let noise = NoiseModel::Gaussian {
            sigma: self.noise_sigma,
        };
        match &self.arms {
            ArmSet::Finite { .. } => TaskInstance::new(mu.iter().copied().collect(), noise),
            ArmSet::Features { .. } => TaskInstance::linear(mu, &self.arms, noise),
        }
    }
}

impl TaskSampler for BetaPriorSpec {
    fn sample_task<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TaskInstance> {
        let mut means = Vec::with_capacity(self.params.len());
        for &(a, b) in &self.params {
            let dist = Beta::new(a, b).map_err(|e| Error::numeric(e.to_string()))?;
            means.push(dist.sample(rng));
        }
        TaskInstance::new(means, NoiseModel::Bernoulli)
    }
}

pub fn sample_task<P: TaskSampler, R: Rng + ?Sized>(prior: &P, rng: &mut R) -> Result<TaskInstance> {
    prior.sample_task(rng)
}

/// One reward draw for `arm`.
pub fn sample_reward<R: Rng + ?Sized>(task: &TaskInstance, arm: usize, rng: &mut R) -> f64 {
    let mean = task.means()[arm];
    match task.noise() {
        NoiseModel::Gaussian { sigma } => mean + sigma * rng.sample::<f64, _>(StandardNormal),
        NoiseModel::Bernoulli => {
            if rng.random::<f64>() < mean {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// `k` arms drawn uniformly from the unit sphere in `ℝ^d` (normalised
/// Gaussian vectors).
pub fn random_sphere_arms<R: Rng + ?Sized>(k: usize, d: usize, rng: &mut R) -> Result<ArmSet> {
    let mut features = Vec::with_capacity(k);
    while features.len() < k {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            features.push(v / norm);
        }
    }
    ArmSet::features(features)
}

/// Block-diagonal covariance: `blocks` equal blocks of size `block_size`,
/// each with variance `variance` on the diagonal and correlation
/// `correlation` off the diagonal.
pub fn block_covariance(blocks: usize, block_size: usize, variance: f64, correlation: f64) -> DMatrix<f64> {
    let d = blocks * block_size;
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            variance
        } else if i / block_size == j / block_size {
            variance * correlation
        } else {
            0.0
        }
    })
}
