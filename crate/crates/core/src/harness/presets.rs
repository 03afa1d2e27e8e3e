//! Shipped experiment presets, stored as config text so they can be printed,
//! edited and fed back through the normal parser.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PresetVariant {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub variants: Vec<PresetVariant>,
}

const GAUSSIAN_AGENTS: &str = "oracle-ts, agnostic-ts, b-metasrm, mis-b-metasrm, f-metasrm";

fn variant(label: String, lines: &[String]) -> PresetVariant {
    let mut text = lines.join("\n");
    text.push('\n');
    PresetVariant { label, text }
}

fn gaussian_mab_fig2() -> Preset {
    let variants = [10, 20, 30]
        .into_iter()
        .map(|k| {
            variant(
                format!("k{k}"),
                &[
                    "family = gaussian-mab".into(),
                    format!("k = {k}"),
                    "n = 20".into(),
                    "m = 200".into(),
                    "replications = 100".into(),
                    "seed = 1".into(),
                    "sigma = 1".into(),
                    "sigma_q = 1".into(),
                    "sigma0 = 0.1".into(),
                    format!("agents = {GAUSSIAN_AGENTS}"),
                    format!("output = gaussian-mab-fig2-k{k}.csv"),
                ],
            )
        })
        .collect();
    Preset {
        name: "gaussian-mab-fig2",
        description: "Gaussian MAB, K in {10, 20, 30}, n = 20, m = 200, 100 replications",
        variants,
    }
}

fn linear(name: &'static str, description: &'static str, arms_per_dim: usize) -> Preset {
    let variants = [2, 4, 8, 16]
        .into_iter()
        .map(|d| {
            variant(
                format!("d{d}"),
                &[
                    "family = linear-gaussian".into(),
                    format!("d = {d}"),
                    format!("k = {}", arms_per_dim * d),
                    "n = 20".into(),
                    "m = 20".into(),
                    "replications = 100".into(),
                    "seed = 1".into(),
                    "sigma = 1".into(),
                    "sigma_q = 1".into(),
                    "sigma0 = 0.1".into(),
                    format!("agents = {GAUSSIAN_AGENTS}"),
                    format!("output = {name}-d{d}.csv"),
                ],
            )
        })
        .collect();
    Preset {
        name,
        description,
        variants,
    }
}

fn frequentist_app_d() -> Preset {
    let common = |lines: &[&str], out: &str| -> Vec<String> {
        let mut v: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
        v.extend([
            "setting = frequentist".into(),
            "n = 20".into(),
            "m = 500".into(),
            "replications = 100".into(),
            "seed = 1".into(),
            "sigma = 1".into(),
            "sigma_q = 1".into(),
            "sigma0_block_size = 3".into(),
            "sigma0_block_corr = 0.95".into(),
            "agents = oracle-ts, mis-ts, b-metasrm, f-metasrm-continual".into(),
            format!("output = {out}"),
        ]);
        v
    };
    Preset {
        name: "frequentist-appD",
        description: "fixed prior with block-correlated covariance, Gaussian MAB (K = 6) and linear (d = 6, K = 30)",
        variants: vec![
            variant(
                "mab".into(),
                &common(
                    &[
                        "family = gaussian-mab",
                        "k = 6",
                        "theta_star = 0.5, 0, 0, 0.1, 0, 0",
                        "sigma0 = 0.2",
                    ],
                    "frequentist-appD-mab.csv",
                ),
            ),
            variant(
                "linear".into(),
                &common(
                    &[
                        "family = linear-gaussian",
                        "d = 6",
                        "k = 30",
                        "theta_star = 1",
                        "sigma0 = 0.1",
                        "resample_arms = false",
                    ],
                    "frequentist-appD-linear.csv",
                ),
            ),
        ],
    }
}

fn bernoulli_etc() -> Preset {
    Preset {
        name: "bernoulli-etc",
        description: "Bernoulli bandit with a Beta(2, 5) prior, explore-then-commit by method of moments",
        variants: vec![variant(
            "k5".into(),
            &[
                "family = bernoulli".into(),
                "k = 5".into(),
                "n = 20".into(),
                "m = 200".into(),
                "replications = 100".into(),
                "seed = 1".into(),
                "alpha_star = 2".into(),
                "beta_star = 5".into(),
                "t0 = 5".into(),
                "m0_grid = 10, 20, 50, 100".into(),
                "agents = oracle-ts, agnostic-ts, f-metasrm, f-metasrm-continual".into(),
                "output = bernoulli-etc-k5.csv".into(),
            ],
        )],
    }
}

pub fn presets() -> Vec<Preset> {
    vec![
        gaussian_mab_fig2(),
        linear(
            "linear-fig3",
            "linear Gaussian, K = 5d, d in {2, 4, 8, 16}, n = m = 20",
            5,
        ),
        linear(
            "linear-10d",
            "linear Gaussian, K = 10d, d in {2, 4, 8, 16}, n = m = 20",
            10,
        ),
        frequentist_app_d(),
        bernoulli_etc(),
    ]
}

pub fn preset(name: &str) -> Result<Preset> {
    presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::config(format!("unknown preset `{name}`")))
}
