//! Experiment configuration: a flat `key = value` text format.
//!
//! Blank lines and lines starting with `#` are ignored. Vectors are
//! comma-separated, matrices are semicolon-separated rows of comma-separated
//! entries. A scalar given for a vector key is broadcast.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::environments::block_covariance;
use crate::error::{Error, Result};
use crate::meta::FitMode;
use crate::policies::{PolicyKind, DEFAULT_UCB_DELTA};

/// m₀ values swept by `f-metasrm` when no grid is given; entries above `m`
/// are dropped.
pub const DEFAULT_M0_GRID: [usize; 8] = [1, 2, 5, 10, 20, 50, 100, 200];

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "METASRM_WORKERS";

const KNOWN_KEYS: &[&str] = &[
    "family",
    "k",
    "d",
    "m",
    "n",
    "replications",
    "seed",
    "output",
    "setting",
    "psi_q",
    "sigma_q",
    "sigma_q_matrix",
    "sigma0",
    "sigma0_matrix",
    "sigma0_block_size",
    "sigma0_block_corr",
    "sigma",
    "theta_star",
    "alpha_star",
    "beta_star",
    "agents",
    "m0_grid",
    "t0",
    "delta",
    "ucb_sampled_mean",
    "resample_arms",
    "workers",
    "mis_offset_range",
    "track_distance",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    GaussianMab,
    LinearGaussian,
    Bernoulli,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::GaussianMab => "gaussian-mab",
            Family::LinearGaussian => "linear-gaussian",
            Family::Bernoulli => "bernoulli",
        }
    }

    pub fn is_gaussian(self) -> bool {
        !matches!(self, Family::Bernoulli)
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-mab" => Ok(Family::GaussianMab),
            "linear-gaussian" => Ok(Family::LinearGaussian),
            "bernoulli" => Ok(Family::Bernoulli),
            other => Err(Error::config(format!(
                "unknown family `{other}` (expected gaussian-mab, linear-gaussian or bernoulli)"
            ))),
        }
    }
}

/// Whether `θ_*` is redrawn from the meta-prior in every replication or
/// held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setting {
    Bayesian,
    Frequentist,
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bayesian" => Ok(Setting::Bayesian),
            "frequentist" => Ok(Setting::Frequentist),
            other => Err(Error::config(format!(
                "unknown setting `{other}` (expected bayesian or frequentist)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    /// Base policy with the true prior.
    Oracle,
    /// Base policy with a prior that ignores the task structure.
    Agnostic,
    /// TS with the fixed prior `N(0, I)`.
    MisTs,
    BMetaSrm,
    MisBMetaSrm,
    FMetaSrm {
        mode: FitMode,
        m0: Option<usize>,
    },
}

/// One agent column of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    /// Tag written to the result file.
    pub tag: String,
    pub kind: AgentKind,
    pub policy: PolicyKind,
}

impl AgentSpec {
    /// Tag up to the `@` that separates sweep parameters.
    pub fn family_tag(&self) -> &str {
        family_tag(&self.tag)
    }
}

/// Tag up to the `@` that separates sweep parameters.
pub fn family_tag(tag: &str) -> &str {
    tag.split('@').next().unwrap_or(tag)
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub family: Family,
    pub k: usize,
    pub d: usize,
    pub m: usize,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub setting: Setting,
    pub psi_q: DVector<f64>,
    pub sigma_q: DMatrix<f64>,
    pub sigma0: DMatrix<f64>,
    pub sigma: f64,
    pub theta_star: Option<DVector<f64>>,
    /// Per-arm Beta prior for the Bernoulli family.
    pub beta_prior: Vec<(f64, f64)>,
    pub agents: Vec<AgentSpec>,
    pub t0: u32,
    pub resample_arms: bool,
    pub workers: Option<usize>,
    pub mis_offset_range: f64,
    pub track_distance: bool,
}

/// Raw `key = value` pairs with the line each came from (0 for overrides).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, (usize, String)>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = ConfigMap::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    message: format!("expected `key = value`, got `{trimmed}`"),
                });
            };
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
            if map.entries.contains_key(key) {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate key `{key}`"),
                });
            }
            map.entries.insert(key.to_string(), (line, value.trim().to_string()));
        }
        Ok(map)
    }

    /// Sets `key`, replacing any value from the file.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::config(format!("unknown key `{key}`")));
        }
        self.entries.insert(key.to_string(), (0, value.trim().to_string()));
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override `{assignment}` is not `key=value`")))?;
        self.set(key.trim(), value)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn fail(&self, key: &str, message: impl fmt::Display) -> Error {
        match self.entries.get(key) {
            Some(&(line, _)) if line > 0 => Error::Parse {
                line,
                message: format!("{key}: {message}"),
            },
            _ => Error::config(format!("{key}: {message}")),
        }
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::config(format!("missing required key `{key}`")))
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| self.fail(key, e)),
        }
    }

    fn positive_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.parsed::<usize>(key)? {
            Some(0) => Err(self.fail(key, "must be at least 1")),
            other => Ok(other),
        }
    }

    fn positive_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.parsed::<f64>(key)? {
            Some(v) if !(v > 0.0 && v.is_finite()) => Err(self.fail(key, "must be a positive number")),
            other => Ok(other),
        }
    }

    fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some("true" | "yes" | "1") => Ok(Some(true)),
            Some("false" | "no" | "0") => Ok(Some(false)),
            Some(v) => Err(self.fail(key, format!("expected true or false, got `{v}`"))),
        }
    }

    fn vector(&self, key: &str, len: usize) -> Result<Option<DVector<f64>>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        let values = parse_list::<f64>(v).map_err(|e| self.fail(key, e))?;
        match values.len() {
            1 => Ok(Some(DVector::from_element(len, values[0]))),
            l if l == len => Ok(Some(DVector::from_vec(values))),
            l => Err(self.fail(key, format!("expected {len} entries, got {l}"))),
        }
    }

    fn matrix(&self, key: &str, dim: usize) -> Result<Option<DMatrix<f64>>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        let rows: Vec<Vec<f64>> = v
            .split(';')
            .map(parse_list::<f64>)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| self.fail(key, e))?;
        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
            return Err(self.fail(key, format!("expected a {dim}x{dim} matrix")));
        }
        Ok(Some(DMatrix::from_fn(dim, dim, |i, j| rows[i][j])))
    }
}

fn parse_list<T: FromStr>(text: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    text.split(',')
        .map(|item| {
            let item = item.trim();
            item.parse::<T>().map_err(|e| format!("`{item}`: {e}"))
        })
        .collect()
}

fn parse_agent(tag: &str, family: Family, delta: f64, sampled_mean: bool) -> Result<Vec<AgentSpec>> {
    let ucb = PolicyKind::BayesUcb { delta, sampled_mean };
    let ts = PolicyKind::Thompson;
    let (base, m0) = match tag.split_once('@') {
        None => (tag, None),
        Some((base, rest)) => {
            let value = rest
                .strip_prefix("m0=")
                .ok_or_else(|| Error::config(format!("agent `{tag}`: expected `@m0=<int>`")))?;
            let m0 = value
                .parse::<usize>()
                .map_err(|e| Error::config(format!("agent `{tag}`: {e}")))?;
            (base, Some(m0))
        }
    };
    let (kind, policy) = match base {
        "oracle-ts" => (AgentKind::Oracle, ts),
        "agnostic-ts" => (AgentKind::Agnostic, ts),
        "mis-ts" => (AgentKind::MisTs, ts),
        "b-metasrm" => (AgentKind::BMetaSrm, ts),
        "mis-b-metasrm" => (AgentKind::MisBMetaSrm, ts),
        "oracle-ucb" => (AgentKind::Oracle, ucb),
        "agnostic-ucb" => (AgentKind::Agnostic, ucb),
        "b-metasrm-ucb" => (AgentKind::BMetaSrm, ucb),
        "mis-b-metasrm-ucb" => (AgentKind::MisBMetaSrm, ucb),
        "f-metasrm" => (
            AgentKind::FMetaSrm {
                mode: FitMode::Commit,
                m0,
            },
            ts,
        ),
        "f-metasrm-continual" => (
            AgentKind::FMetaSrm {
                mode: FitMode::Continual,
                m0: None,
            },
            ts,
        ),
        other => return Err(Error::config(format!("unknown agent `{other}`"))),
    };
    if m0.is_some() && base != "f-metasrm" {
        return Err(Error::config(format!("agent `{tag}` takes no m0 parameter")));
    }
    if family == Family::Bernoulli {
        let supported = matches!(
            kind,
            AgentKind::Oracle | AgentKind::Agnostic | AgentKind::FMetaSrm { .. }
        ) && policy == ts;
        if !supported {
            return Err(Error::config(format!(
                "agent `{tag}` is not available for the bernoulli family"
            )));
        }
    }
    Ok(vec![AgentSpec {
        tag: tag.to_string(),
        kind,
        policy,
    }])
}

fn default_agents(family: Family) -> &'static str {
    match family {
        Family::Bernoulli => "oracle-ts, agnostic-ts, f-metasrm",
        _ => "oracle-ts, agnostic-ts, b-metasrm, mis-b-metasrm, f-metasrm",
    }
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_map(&ConfigMap::parse(text)?)
    }

    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        let family: Family = map
            .required("family")?
            .parse()
            .map_err(|e: Error| map.fail("family", e))?;
        let k = map
            .positive_usize("k")?
            .ok_or_else(|| Error::config("missing required key `k`"))?;
        let d = match family {
            Family::LinearGaussian => map
                .positive_usize("d")?
                .ok_or_else(|| Error::config("missing required key `d` for linear-gaussian"))?,
            _ => match map.positive_usize("d")? {
                Some(d) if d != k => return Err(map.fail("d", format!("must equal k = {k} for {}", family.name()))),
                _ => k,
            },
        };
        let m = map
            .positive_usize("m")?
            .ok_or_else(|| Error::config("missing required key `m`"))?;
        let n = map
            .positive_usize("n")?
            .ok_or_else(|| Error::config("missing required key `n`"))?;
        let replications = map.positive_usize("replications")?.unwrap_or(1);
        let seed = map.parsed::<u64>("seed")?.unwrap_or(0);
        let output = map.get("output").map(PathBuf::from);
        let setting = match map.get("setting") {
            None => Setting::Bayesian,
            Some(v) => v.parse().map_err(|e: Error| map.fail("setting", e))?,
        };

        let psi_q = map.vector("psi_q", d)?.unwrap_or_else(|| DVector::zeros(d));
        let sigma_q = match map.matrix("sigma_q_matrix", d)? {
            Some(mat) => mat,
            None => {
                let s = map.positive_f64("sigma_q")?.unwrap_or(1.0);
                DMatrix::identity(d, d) * (s * s)
            }
        };
        let sigma0_scale = match map.parsed::<f64>("sigma0")? {
            Some(v) if !(v >= 0.0 && v.is_finite()) => return Err(map.fail("sigma0", "must be non-negative")),
            Some(v) => v,
            None => 0.1,
        };
        let sigma0 = match (
            map.matrix("sigma0_matrix", d)?,
            map.positive_usize("sigma0_block_size")?,
        ) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "give either sigma0_matrix or sigma0_block_size, not both",
                ));
            }
            (Some(mat), None) => mat,
            (None, Some(block)) => {
                if d % block != 0 {
                    return Err(map.fail("sigma0_block_size", format!("must divide d = {d}")));
                }
                let corr = map.parsed::<f64>("sigma0_block_corr")?.unwrap_or(0.0);
                if !(-1.0..=1.0).contains(&corr) {
                    return Err(map.fail("sigma0_block_corr", "must lie in [-1, 1]"));
                }
                block_covariance(d / block, block, sigma0_scale * sigma0_scale, corr)
            }
            (None, None) => DMatrix::identity(d, d) * (sigma0_scale * sigma0_scale),
        };
        let sigma = map.positive_f64("sigma")?.unwrap_or(1.0);
        let theta_star = map.vector("theta_star", d)?;
        if setting == Setting::Frequentist && family.is_gaussian() && theta_star.is_none() {
            return Err(Error::config("frequentist setting requires `theta_star`"));
        }

        let alpha = map
            .vector("alpha_star", k)?
            .unwrap_or_else(|| DVector::from_element(k, 1.0));
        let beta = map
            .vector("beta_star", k)?
            .unwrap_or_else(|| DVector::from_element(k, 1.0));
        if alpha.iter().chain(beta.iter()).any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::config("alpha_star and beta_star must be positive"));
        }
        let beta_prior: Vec<(f64, f64)> = alpha.iter().copied().zip(beta.iter().copied()).collect();

        let delta = map.parsed::<f64>("delta")?.unwrap_or(DEFAULT_UCB_DELTA);
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(map.fail("delta", "must lie in (0, 1]"));
        }
        let sampled_mean = map.bool("ucb_sampled_mean")?.unwrap_or(false);
        let m0_grid: Vec<usize> = match map.get("m0_grid") {
            Some(v) => parse_list::<usize>(v).map_err(|e| map.fail("m0_grid", e))?,
            None => {
                let grid: Vec<usize> = DEFAULT_M0_GRID.iter().copied().filter(|&g| g <= m).collect();
                if grid.is_empty() {
                    vec![m]
                } else {
                    grid
                }
            }
        };
        let t0 = map.parsed::<u32>("t0")?.unwrap_or(2);
        if family == Family::Bernoulli {
            if t0 < 2 {
                return Err(map.fail("t0", "must be at least 2"));
            }
            if t0 as usize > n {
                return Err(map.fail("t0", format!("must not exceed n = {n}")));
            }
        }

        let agent_text = map.get("agents").unwrap_or(default_agents(family));
        let mut agents = Vec::new();
        for tag in agent_text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            for spec in parse_agent(tag, family, delta, sampled_mean)? {
                if let AgentKind::FMetaSrm {
                    mode: FitMode::Commit,
                    m0: None,
                } = spec.kind
                {
                    for &m0 in &m0_grid {
                        agents.push(AgentSpec {
                            tag: format!("f-metasrm@m0={m0}"),
                            kind: AgentKind::FMetaSrm {
                                mode: FitMode::Commit,
                                m0: Some(m0),
                            },
                            policy: spec.policy,
                        });
                    }
                } else {
                    agents.push(spec);
                }
            }
        }
        if agents.is_empty() {
            return Err(Error::config("no agents configured"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &agents {
            if !seen.insert(a.tag.as_str()) {
                return Err(Error::config(format!("agent `{}` listed twice", a.tag)));
            }
        }

        let workers = map.positive_usize("workers")?;
        let mis_offset_range = match map.parsed::<f64>("mis_offset_range")? {
            Some(v) if !(v >= 0.0 && v.is_finite()) => return Err(map.fail("mis_offset_range", "must be non-negative")),
            Some(v) => v,
            None => 50.0,
        };

        let config = ExperimentConfig {
            family,
            k,
            d,
            m,
            n,
            replications,
            seed,
            output,
            setting,
            psi_q,
            sigma_q,
            sigma0,
            sigma,
            theta_star,
            beta_prior,
            agents,
            t0,
            resample_arms: map.bool("resample_arms")?.unwrap_or(true),
            workers,
            mis_offset_range,
            track_distance: map.bool("track_distance")?.unwrap_or(false),
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks the numeric consistency of the covariance inputs.
    pub fn validate(&self) -> Result<()> {
        if self.family.is_gaussian() {
            crate::linalg::check_psd(&self.sigma0, "sigma0")?;
            crate::linalg::check_psd(&self.sigma_q, "sigma_q")?;
            let needs_meta = self
                .agents
                .iter()
                .any(|a| matches!(a.kind, AgentKind::BMetaSrm | AgentKind::MisBMetaSrm));
            if needs_meta || self.setting == Setting::Bayesian {
                crate::linalg::cholesky(&self.sigma_q, "sigma_q")?;
            }
        }
        if self.family == Family::LinearGaussian && self.k < self.d {
            return Err(Error::config(format!(
                "linear-gaussian needs k >= d to span the space, got k = {}, d = {}",
                self.k, self.d
            )));
        }
        Ok(())
    }

    /// Worker count from the config, then the environment, then rayon's
    /// default.
    pub fn resolved_workers(&self) -> Result<Option<usize>> {
        if let Some(w) = self.workers {
            return Ok(Some(w));
        }
        match std::env::var(WORKERS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(w) if w >= 1 => Ok(Some(w)),
                _ => Err(Error::config(format!(
                    "{WORKERS_ENV} must be a positive integer, got `{v}`"
                ))),
            },
            Err(_) => Ok(None),
        }
    }
}
