//! Information distances between Gaussian priors and brute-force oracles.
//!
//! Nothing in here feeds back into agent decisions.

use nalgebra::{DMatrix, DVector};
use statrs::function::beta::ln_beta;
use statrs::function::erf::erf;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg;
use crate::posteriors::GaussianBelief;

/// Largest dimension accepted by [`brute_force_gaussian_posterior`].
pub const BRUTE_FORCE_MAX_DIM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceReport {
    pub kl: f64,
    /// `min(1, √(KL/2))`.
    pub pinsker_tv_bound: f64,
    /// Exact total variation, only for equal isotropic covariances.
    pub exact_tv: Option<f64>,
}

/// `KL(p ‖ q)` between two Gaussians. `q` must have a positive definite
/// covariance; a singular `p` gives `+∞`.
pub fn gaussian_kl(p: &GaussianBelief, q: &GaussianBelief) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::Dimension {
            expected: q.dim(),
            got: p.dim(),
            context: "kl divergence",
        });
    }
    if p == q {
        return Ok(0.0);
    }
    let d = p.dim() as f64;
    let chol_q = linalg::cholesky(q.covariance(), "reference covariance")?;
    let Some(chol_p) = nalgebra::Cholesky::new(p.covariance().clone()) else {
        return Ok(f64::INFINITY);
    };
    let lq = chol_q.l();
    let lp = chol_p.l();
    // tr(Σ_q⁻¹ Σ_p) = ‖L_q⁻¹ L_p‖_F²
    let w = lq
        .solve_lower_triangular(&lp)
        .ok_or_else(|| Error::numeric("triangular solve failed"))?;
    let trace = w.norm_squared();
    let diff = q.mean() - p.mean();
    let z = lq
        .solve_lower_triangular(&diff)
        .ok_or_else(|| Error::numeric("triangular solve failed"))?;
    let mahalanobis = z.norm_squared();
    let logdet_q: f64 = 2.0 * lq.diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let logdet_p: f64 = 2.0 * lp.diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let kl = 0.5 * (trace + mahalanobis - d + logdet_q - logdet_p);
    Ok(kl.max(0.0))
}

fn isotropic_variance(m: &DMatrix<f64>) -> Option<f64> {
    let v = m[(0, 0)];
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let expected = if i == j { v } else { 0.0 };
            if m[(i, j)] != expected {
                return None;
            }
        }
    }
    Some(v)
}

/// KL, the Pinsker bound on total variation and, when both covariances are
/// the same `σ₀² I`, the exact total variation `erf(‖Δθ‖ / (2√2 σ₀))`.
pub fn tv_report(p: &GaussianBelief, q: &GaussianBelief) -> Result<DistanceReport> {
    let kl = gaussian_kl(p, q)?;
    let pinsker_tv_bound = (kl / 2.0).sqrt().min(1.0);
    let exact_tv = match (isotropic_variance(p.covariance()), isotropic_variance(q.covariance())) {
        (Some(vp), Some(vq)) if vp == vq && vp > 0.0 => {
            let dist = (p.mean() - q.mean()).norm();
            Some(erf(dist / (2.0 * std::f64::consts::SQRT_2 * vp.sqrt())))
        }
        _ => None,
    };
    Ok(DistanceReport {
        kl,
        pinsker_tv_bound,
        exact_tv,
    })
}

/// Batch conjugate posterior from the stacked design `X`, computed in one
/// shot: `K = ΣXᵀ(XΣXᵀ + σ²I)⁻¹`, `mean + K(y − Xmean)`, `Σ − KXΣ`.
pub fn brute_force_gaussian_posterior(
    prior: &GaussianBelief,
    observations: &[(DVector<f64>, f64)],
    sigma: f64,
) -> Result<GaussianBelief> {
    let d = prior.dim();
    if d > BRUTE_FORCE_MAX_DIM {
        return Err(Error::precondition(format!(
            "brute-force posterior supports d <= {BRUTE_FORCE_MAX_DIM}, got {d}"
        )));
    }
    if observations.is_empty() {
        return Ok(prior.clone());
    }
    let n = observations.len();
    let mut x = DMatrix::zeros(n, d);
    let mut y = DVector::zeros(n);
    for (i, (a, r)) in observations.iter().enumerate() {
        if a.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: a.len(),
                context: "observation feature",
            });
        }
        x.set_row(i, &a.transpose());
        y[i] = *r;
    }
    let sigma_xt = prior.covariance() * x.transpose();
    let s = &x * &sigma_xt + DMatrix::identity(n, n) * (sigma * sigma);
    let chol = linalg::cholesky(&s, "innovation covariance")?;
    // Kᵀ = S⁻¹ X Σ
    let gain_t = chol.solve(&sigma_xt.transpose());
    let residual = y - &x * prior.mean();
    let mean = prior.mean() + gain_t.transpose() * residual;
    let cov = prior.covariance() - gain_t.transpose() * &x * prior.covariance();
    GaussianBelief::new(mean, linalg::symmetrize(&cov))
}

/// One-dimensional posterior by Simpson integration of prior × likelihood
/// on a dense grid spanning ±12 prior standard deviations.
pub fn grid_gaussian_posterior_1d(
    prior_mean: f64,
    prior_var: f64,
    observations: &[(f64, f64)],
    sigma: f64,
) -> (f64, f64) {
    let sd = prior_var.sqrt();
    let (lo, hi) = (prior_mean - 12.0 * sd, prior_mean + 12.0 * sd);
    let steps = 400_000usize;
    let h = (hi - lo) / steps as f64;
    let log_density = |mu: f64| {
        let mut l = -(mu - prior_mean).powi(2) / (2.0 * prior_var);
        for &(a, y) in observations {
            l -= (y - a * mu).powi(2) / (2.0 * sigma * sigma);
        }
        l
    };
    let peak = (0..=steps)
        .map(|i| log_density(lo + i as f64 * h))
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for i in 0..=steps {
        let mu = lo + i as f64 * h;
        let w = if i == 0 || i == steps {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let dens = (log_density(mu) - peak).exp() * w;
        z += dens;
        m1 += dens * mu;
        m2 += dens * mu * mu;
    }
    let mean = m1 / z;
    (mean, m2 / z - mean * mean)
}

/// `(E[X], E[X²])` for `X ~ BetaBinomial(α, β, t)` by summing the pmf.
pub fn beta_binomial_moment_oracle(alpha: f64, beta: f64, trials: u32) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::precondition("beta-binomial parameters must be positive"));
    }
    if trials == 0 {
        return Err(Error::precondition("beta-binomial needs at least one trial"));
    }
    let t = f64::from(trials);
    let norm = ln_beta(alpha, beta);
    let (mut m1, mut m2) = (0.0, 0.0);
    for k in 0..=trials {
        let k = f64::from(k);
        let ln_choose = ln_gamma(t + 1.0) - ln_gamma(k + 1.0) - ln_gamma(t - k + 1.0);
        let p = (ln_choose + ln_beta(k + alpha, t - k + beta) - norm).exp();
        m1 += p * k;
        m2 += p * k * k;
    }
    Ok((m1, m2))
}
