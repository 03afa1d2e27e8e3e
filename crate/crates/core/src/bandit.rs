//! Arms, tasks, trajectories and regret accounting.
//!
//! A task ends with a recommendation drawn from the empirical pull
//! distribution `N_a / n`. Under that rule the expected simple regret of the
//! recommendation equals the cumulative regret of the pulls divided by `n`,
//! which is why both are tracked here.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance on `‖a‖ ≤ 1` for feature arms.
const FEATURE_NORM_TOL: f64 = 1e-9;

/// The arm set of a bandit problem.
#[derive(Debug, Clone, PartialEq)]
pub enum ArmSet {
    /// `K` unstructured arms. In Gaussian models these act as the standard
    /// basis of `ℝ^K`.
    Finite { count: usize },
    /// `K` arms given by feature vectors of a common dimension `d`.
    Features { features: Vec<DVector<f64>> },
}

impl ArmSet {
    pub fn finite(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::precondition("arm set needs at least one arm"));
        }
        Ok(ArmSet::Finite { count })
    }

    pub fn features(features: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = features.first() else {
            return Err(Error::precondition("arm set needs at least one arm"));
        };
        let d = first.len();
        if d == 0 {
            return Err(Error::precondition("feature dimension must be at least 1"));
        }
        for (i, f) in features.iter().enumerate() {
            if f.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: f.len(),
                    context: "arm feature vector",
                });
            }
            let norm = f.norm();
            if !norm.is_finite() || norm > 1.0 + FEATURE_NORM_TOL {
                return Err(Error::precondition(format!(
                    "arm {i} has norm {norm}, features must lie in the unit ball"
                )));
            }
        }
        Ok(ArmSet::Features { features })
    }

    /// Number of arms `K`.
    pub fn len(&self) -> usize {
        match self {
            ArmSet::Finite { count } => *count,
            ArmSet::Features { features } => features.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameter dimension: `K` for finite arms, `d` for feature arms.
    pub fn dim(&self) -> usize {
        match self {
            ArmSet::Finite { count } => *count,
            ArmSet::Features { features } => features[0].len(),
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ArmSet::Finite { .. })
    }

    /// Feature vector of `arm` (a standard basis vector for finite arms).
    pub fn feature(&self, arm: usize) -> DVector<f64> {
        match self {
            ArmSet::Finite { count } => {
                let mut e = DVector::zeros(*count);
                e[arm] = 1.0;
                e
            }
            ArmSet::Features { features } => features[arm].clone(),
        }
    }

    /// `d × K` matrix whose columns are the arm features.
    pub fn feature_matrix(&self) -> DMatrix<f64> {
        match self {
            ArmSet::Finite { count } => DMatrix::identity(*count, *count),
            ArmSet::Features { features } => DMatrix::from_columns(features),
        }
    }

    /// Per-arm means `aᵀθ` induced by a parameter vector.
    pub fn induced_means(&self, param: &DVector<f64>) -> Vec<f64> {
        match self {
            ArmSet::Finite { .. } => param.iter().copied().collect(),
            ArmSet::Features { features } => features.iter().map(|a| a.dot(param)).collect(),
        }
    }
}

/// Reward distribution of a task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Gaussian { sigma: f64 },
    Bernoulli,
}

/// One sampled bandit problem.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    means: Vec<f64>,
    param: Option<DVector<f64>>,
    noise: NoiseModel,
}

impl TaskInstance {
    pub fn new(means: Vec<f64>, noise: NoiseModel) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::precondition("task needs at least one arm"));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::precondition("task means must be finite"));
        }
        match noise {
            NoiseModel::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                return Err(Error::precondition(format!(
                    "gaussian noise needs sigma > 0, got {sigma}"
                )));
            }
            NoiseModel::Bernoulli if means.iter().any(|m| !(0.0..=1.0).contains(m)) => {
                return Err(Error::precondition("bernoulli means must lie in [0, 1]"));
            }
            _ => {}
        }
        Ok(TaskInstance {
            means,
            param: None,
            noise,
        })
    }

    /// A linear task: stores `μ_s` together with the induced per-arm means.
    pub fn linear(param: DVector<f64>, arms: &ArmSet, noise: NoiseModel) -> Result<Self> {
        if param.len() != arms.dim() {
            return Err(Error::Dimension {
                expected: arms.dim(),
                got: param.len(),
                context: "task parameter",
            });
        }
        let mut task = TaskInstance::new(arms.induced_means(&param), noise)?;
        task.param = Some(param);
        Ok(task)
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    /// The parameter vector `μ_s` for tasks built from feature arms.
    pub fn param(&self) -> Option<&DVector<f64>> {
        self.param.as_ref()
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    /// Stable 64-bit fingerprint of the arm means, used to check that agents
    /// faced the same task.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for m in &self.means {
            for b in m.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Pulls and rewards of a single task.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    steps: Vec<(usize, f64)>,
    pull_counts: Vec<usize>,
}

impl Trajectory {
    pub fn new(num_arms: usize) -> Self {
        Trajectory {
            steps: Vec::new(),
            pull_counts: vec![0; num_arms],
        }
    }

    /// Builds a trajectory from explicit steps.
    pub fn from_steps(num_arms: usize, steps: &[(usize, f64)]) -> Result<Self> {
        let mut t = Trajectory::new(num_arms);
        for &(arm, reward) in steps {
            t.push(arm, reward)?;
        }
        Ok(t)
    }

    pub fn push(&mut self, arm: usize, reward: f64) -> Result<()> {
        if arm >= self.pull_counts.len() {
            return Err(Error::precondition(format!(
                "arm {arm} out of range for {} arms",
                self.pull_counts.len()
            )));
        }
        self.steps.push((arm, reward));
        self.pull_counts[arm] += 1;
        Ok(())
    }

    pub fn steps(&self) -> &[(usize, f64)] {
        &self.steps
    }

    pub fn pull_counts(&self) -> &[usize] {
        &self.pull_counts
    }

    /// Number of rounds `n` played so far.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn num_arms(&self) -> usize {
        self.pull_counts.len()
    }

    fn require_complete(&self) -> Result<usize> {
        if self.steps.is_empty() {
            return Err(Error::precondition("trajectory has no rounds"));
        }
        Ok(self.steps.len())
    }
}

/// Lowest-index arm with the largest mean.
pub fn best_arm(task: &TaskInstance) -> (usize, f64) {
    argmax(task.means())
}

/// Lowest-index maximiser of a slice. Panics on an empty slice.
pub(crate) fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    (best, values[best])
}

/// Samples the recommended arm with probability `N_a / n`.
pub fn recommend_by_pull_frequency<R: Rng + ?Sized>(trajectory: &Trajectory, rng: &mut R) -> Result<usize> {
    let n = trajectory.require_complete()?;
    let mut ticket = rng.random_range(0..n);
    for (arm, &count) in trajectory.pull_counts().iter().enumerate() {
        if ticket < count {
            return Ok(arm);
        }
        ticket -= count;
    }
    unreachable!("pull counts sum to the trajectory length")
}

fn check_pair(task: &TaskInstance, trajectory: &Trajectory) -> Result<usize> {
    if task.num_arms() != trajectory.num_arms() {
        return Err(Error::Dimension {
            expected: task.num_arms(),
            got: trajectory.num_arms(),
            context: "trajectory arm count",
        });
    }
    trajectory.require_complete()
}

/// `n·μ(A*) − Σ_t μ(A_t)`, accumulated as a sum of non-negative gaps.
pub fn cumulative_regret(task: &TaskInstance, trajectory: &Trajectory) -> Result<f64> {
    check_pair(task, trajectory)?;
    let (_, best) = best_arm(task);
    Ok(task
        .means()
        .iter()
        .zip(trajectory.pull_counts())
        .map(|(&mu, &count)| count as f64 * (best - mu))
        .sum())
}

/// `μ(A*) − Σ_a (N_a/n) μ(a)`: the simple regret averaged over the
/// recommendation draw.
pub fn expected_recommendation_regret(task: &TaskInstance, trajectory: &Trajectory) -> Result<f64> {
    let n = check_pair(task, trajectory)? as f64;
    let (_, best) = best_arm(task);
    Ok(task
        .means()
        .iter()
        .zip(trajectory.pull_counts())
        .map(|(&mu, &count)| (count as f64 / n) * (best - mu))
        .sum())
}

/// Gap between the best arm and a recommended arm.
pub fn simple_regret(task: &TaskInstance, recommended: usize) -> f64 {
    let (_, best) = best_arm(task);
    best - task.means()[recommended]
}

/// Regret figures for one (replication, task, agent) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretRecord {
    pub replication: usize,
    /// 1-based task index.
    pub task: usize,
    pub agent: String,
    /// `Δ̄`: simple regret averaged over the recommendation distribution.
    pub expected_simple_regret: f64,
    /// `Δ`: simple regret of the arm actually recommended.
    pub realized_simple_regret: f64,
    pub cumulative_regret: f64,
    /// Fingerprint of the task means.
    pub task_fingerprint: u64,
}

impl RegretRecord {
    /// Scores a finished task.
    pub fn score(
        replication: usize,
        task_index: usize,
        agent: &str,
        task: &TaskInstance,
        trajectory: &Trajectory,
        recommended: usize,
    ) -> Result<Self> {
        Ok(RegretRecord {
            replication,
            task: task_index,
            agent: agent.to_string(),
            expected_simple_regret: expected_recommendation_regret(task, trajectory)?,
            realized_simple_regret: simple_regret(task, recommended),
            cumulative_regret: cumulative_regret(task, trajectory)?,
            task_fingerprint: task.fingerprint(),
        })
    }
}

/// Append-only collection of regret records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretLedger {
    rows: Vec<RegretRecord>,
}

impl RegretLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: RegretRecord) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = RegretRecord>) {
        self.rows.extend(rows);
    }

    pub fn rows(&self) -> &[RegretRecord] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn into_rows(self) -> Vec<RegretRecord> {
        self.rows
    }
}

/// Which meta simple regret the averaged curve estimates. The arithmetic is
/// identical; only the interpretation differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMode {
    /// Fixed prior across replications: estimates `SR(m, n, P_*)`.
    Frequentist,
    /// Prior resampled from the meta-prior per replication: a Monte-Carlo
    /// estimate of the Bayesian meta simple regret.
    BayesMonteCarlo,
}

/// Per-task mean of `Δ̄` across replications for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretCurve {
    pub mode: AggregationMode,
    pub tasks: Vec<usize>,
    pub mean: Vec<f64>,
    /// Sample standard deviation over replications divided by `√R`.
    pub stderr: Vec<f64>,
    /// Running sum of `mean`, i.e. the meta simple regret up to each task.
    pub cumulative: Vec<f64>,
    pub replications: usize,
}

/// Mean and standard error (sample std / √n) of a slice.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Averages `Δ̄` per task and agent across replications.
pub fn aggregate_regret(ledger: &RegretLedger, mode: AggregationMode) -> Result<BTreeMap<String, RegretCurve>> {
    if ledger.is_empty() {
        return Err(Error::precondition("cannot aggregate an empty ledger"));
    }
    // agent -> replication -> task -> value
    let mut grouped: BTreeMap<&str, BTreeMap<usize, BTreeMap<usize, f64>>> = BTreeMap::new();
    for row in ledger.rows() {
        let per_rep = grouped
            .entry(row.agent.as_str())
            .or_default()
            .entry(row.replication)
            .or_default();
        if per_rep.insert(row.task, row.expected_simple_regret).is_some() {
            return Err(Error::precondition(format!(
                "duplicate row for agent {} replication {} task {}",
                row.agent, row.replication, row.task
            )));
        }
    }

    let mut curves = BTreeMap::new();
    for (agent, reps) in grouped {
        let mut iter = reps.iter();
        let (first_rep, first) = iter.next().expect("non-empty group");
        let tasks: Vec<usize> = first.keys().copied().collect();
        for (rep, per_task) in iter {
            if !per_task.keys().eq(tasks.iter()) {
                return Err(Error::precondition(format!(
                    "agent {agent}: replication {rep} covers a different task range than replication {first_rep}"
                )));
            }
        }
        let mut mean = Vec::with_capacity(tasks.len());
        let mut stderr = Vec::with_capacity(tasks.len());
        let mut cumulative = Vec::with_capacity(tasks.len());
        let mut running = 0.0;
        for task in &tasks {
            let values: Vec<f64> = reps.values().map(|per_task| per_task[task]).collect();
            let (m, se) = mean_and_stderr(&values);
            running += m;
            mean.push(m);
            stderr.push(se);
            cumulative.push(running);
        }
        curves.insert(
            agent.to_string(),
            RegretCurve {
                mode,
                tasks,
                mean,
                stderr,
                cumulative,
                replications: reps.len(),
            },
        );
    }
    Ok(curves)
}
