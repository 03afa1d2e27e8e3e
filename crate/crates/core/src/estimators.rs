//! Frequentist prior estimators: Beta-Binomial method of moments for
//! Bernoulli bandits and ordinary least squares for linear Gaussian bandits.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::bandit::ArmSet;
use crate::error::{Error, Result};

/// Tolerance used when deciding whether exploration arms are linearly
/// independent.
const RANK_TOL: f64 = 1e-8;

/// One exploration pull.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationRecord {
    /// 0-based task index.
    pub task: usize,
    pub arm: usize,
    pub reward: f64,
}

/// Observations gathered during exploration rounds, across tasks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExplorationDataset {
    records: Vec<ExplorationRecord>,
}

impl ExplorationDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, task: usize, arm: usize, reward: f64) {
        self.records.push(ExplorationRecord { task, arm, reward });
    }

    pub fn records(&self) -> &[ExplorationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of distinct tasks with at least one record.
    pub fn num_tasks(&self) -> usize {
        let mut tasks: Vec<usize> = self.records.iter().map(|r| r.task).collect();
        tasks.sort_unstable();
        tasks.dedup();
        tasks.len()
    }

    fn by_task(&self) -> BTreeMap<usize, Vec<(usize, f64)>> {
        let mut out: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.task).or_default().push((r.arm, r.reward));
        }
        out
    }
}

/// Estimated prior parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorEstimate {
    /// Per-arm `(α̂, β̂)`.
    Beta(Vec<(f64, f64)>),
    /// Estimated prior mean `θ̂_*`; the task covariance is taken as known.
    Gaussian(DVector<f64>),
}

/// First and second moments of `X ~ BetaBinomial(t0, α, β)`.
pub fn beta_binomial_moments(alpha: f64, beta: f64, t0: u32) -> (f64, f64) {
    let t = t0 as f64;
    let s = alpha + beta;
    let m1 = t * alpha / s;
    let m2 = t * alpha * (t * (1.0 + alpha) + beta) / (s * (1.0 + s));
    (m1, m2)
}

/// Solves the Beta-Binomial moment equations for `(α, β)`.
///
/// Returns `None` when the moments admit no positive solution, i.e. the
/// dispersion is not strictly between binomial and `t0` times binomial.
pub fn invert_beta_binomial_moments(m1: f64, m2: f64, t0: u32) -> Option<(f64, f64)> {
    let t = t0 as f64;
    if t0 < 2 || !m1.is_finite() || !m2.is_finite() {
        return None;
    }
    let p = m1 / t;
    if !(p > 0.0 && p < 1.0) {
        return None;
    }
    // Var[X] = t p (1-p) (s + t) / (s + 1) with s = α + β.
    let var = m2 - m1 * m1;
    let binomial = t * p * (1.0 - p);
    let num = binomial * t - var;
    let den = var - binomial;
    if !(num > 0.0 && den > 0.0) {
        return None;
    }
    let s = num / den;
    Some((p * s, (1.0 - p) * s))
}

/// Per-task reward sums for `arm`, each over exactly `t0` pulls.
fn arm_task_sums(data: &ExplorationDataset, arm: usize, t0: u32) -> Result<Vec<f64>> {
    let mut sums: BTreeMap<usize, (u32, f64)> = BTreeMap::new();
    for r in data.records.iter().filter(|r| r.arm == arm) {
        let e = sums.entry(r.task).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += r.reward;
    }
    let mut out = Vec::with_capacity(sums.len());
    for (task, (count, sum)) in sums {
        if count != t0 {
            return Err(Error::InsufficientData(format!(
                "task {task} has {count} pulls of arm {arm}, expected {t0}"
            )));
        }
        out.push(sum);
    }
    Ok(out)
}

/// Method-of-moments estimate for one arm. `Ok(None)` means the arm has
/// fewer than two exploration tasks.
pub(crate) fn mom_estimate_arm(data: &ExplorationDataset, arm: usize, t0: u32) -> Result<Option<(f64, f64)>> {
    let sums = arm_task_sums(data, arm, t0)?;
    if sums.len() < 2 {
        return Ok(None);
    }
    let count = sums.len() as f64;
    let m1 = sums.iter().sum::<f64>() / count;
    let m2 = sums.iter().map(|x| x * x).sum::<f64>() / count;
    Ok(Some(invert_beta_binomial_moments(m1, m2, t0).unwrap_or((1.0, 1.0))))
}

/// Per-arm Beta prior from batched exploration. Infeasible moments fall back
/// to `Beta(1, 1)` for that arm.
pub fn mom_estimate_beta(data: &ExplorationDataset, t0: u32, num_arms: usize) -> Result<PriorEstimate> {
    if t0 < 2 {
        return Err(Error::precondition(format!("t0 must be at least 2, got {t0}")));
    }
    let mut params = Vec::with_capacity(num_arms);
    for arm in 0..num_arms {
        match mom_estimate_arm(data, arm, t0)? {
            Some(p) => params.push(p),
            None => {
                return Err(Error::InsufficientData(format!(
                    "arm {arm} needs at least two exploration tasks"
                )))
            }
        }
    }
    Ok(PriorEstimate::Beta(params))
}

/// Picks `d` linearly independent arms, scanning in index order.
pub fn select_basis(arms: &ArmSet) -> Result<Vec<usize>> {
    let d = arms.dim();
    let mut chosen = Vec::with_capacity(d);
    let mut orthonormal: Vec<DVector<f64>> = Vec::with_capacity(d);
    for arm in 0..arms.len() {
        if chosen.len() == d {
            break;
        }
        let a = arms.feature(arm);
        let mut residual = a.clone();
        for q in &orthonormal {
            residual.axpy(-q.dot(&a), q, 1.0);
        }
        let norm = residual.norm();
        if norm > RANK_TOL {
            orthonormal.push(residual / norm);
            chosen.push(arm);
        }
    }
    if chosen.len() < d {
        return Err(Error::InsufficientData(format!(
            "arms span only {} of {d} dimensions",
            chosen.len()
        )));
    }
    Ok(chosen)
}

/// `θ̂_* = V⁻¹ Σ_s Σ_i a_i y_{s,i}` with `V = m0 Σ_i a_i a_iᵀ`, where every
/// one of the `m0` tasks pulled each basis arm exactly once.
pub fn ols_estimate_theta(
    data: &ExplorationDataset,
    arms: &ArmSet,
    basis: &[usize],
    m0: usize,
) -> Result<PriorEstimate> {
    let d = arms.dim();
    if m0 == 0 {
        return Err(Error::InsufficientData("no exploration tasks".into()));
    }
    let by_task = data.by_task();
    if by_task.len() != m0 {
        return Err(Error::InsufficientData(format!(
            "expected {m0} exploration tasks, found {}",
            by_task.len()
        )));
    }
    let mut design = DMatrix::zeros(d, d);
    for &arm in basis {
        let a = arms.feature(arm);
        design.ger(1.0, &a, &a, 1.0);
    }
    let eig = design.clone().symmetric_eigen();
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lo > RANK_TOL * hi.max(1.0)) {
        return Err(Error::InsufficientData("exploration basis is rank deficient".into()));
    }
    let mut reward_sum = DVector::zeros(d);
    for (task, pulls) in &by_task {
        let mut arms_seen: Vec<usize> = pulls.iter().map(|&(a, _)| a).collect();
        arms_seen.sort_unstable();
        let mut expected = basis.to_vec();
        expected.sort_unstable();
        if arms_seen != expected {
            return Err(Error::InsufficientData(format!(
                "task {task} does not pull each basis arm exactly once"
            )));
        }
        for &(arm, y) in pulls {
            reward_sum.axpy(y, &arms.feature(arm), 1.0);
        }
    }
    let v = design * m0 as f64;
    let chol = v
        .cholesky()
        .ok_or_else(|| Error::InsufficientData("exploration basis is rank deficient".into()))?;
    Ok(PriorEstimate::Gaussian(chol.solve(&reward_sum)))
}

/// Minimum-norm least-squares estimate `V⁺ Σ a y` with `V = Σ a aᵀ` over
/// every record. Equals [`ols_estimate_theta`] on a complete basis design and
/// leaves directions the data never touched at zero.
pub fn least_squares_theta(data: &ExplorationDataset, arms: &ArmSet) -> Result<DVector<f64>> {
    let d = arms.dim();
    let mut v = DMatrix::zeros(d, d);
    let mut b = DVector::zeros(d);
    for r in &data.records {
        let a = arms.feature(r.arm);
        v.ger(1.0, &a, &a, 1.0);
        b.axpy(r.reward, &a, 1.0);
    }
    let scale = v.amax().max(1.0);
    v.pseudo_inverse(RANK_TOL * scale)
        .map(|pinv| pinv * b)
        .map_err(|e| Error::numeric(e.to_string()))
}
