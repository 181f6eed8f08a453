//! Group-relative advantages and the clipped GRPO objective, evaluated on
//! sequence-level log-probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoConfig {
    /// Clip radius for the probability ratio.
    pub epsilon: f64,
    /// KL penalty coefficient.
    pub beta: f64,
    /// Lower bound on the group standard deviation.
    pub std_floor: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            epsilon: 0.2,
            beta: 0.0,
            std_floor: 1e-8,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "grpo.epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "grpo.beta must be >= 0, got {}",
                self.beta
            )));
        }
        if !(self.std_floor > 0.0 && self.std_floor.is_finite()) {
            return Err(Error::Config(format!(
                "grpo.std_floor must be > 0, got {}",
                self.std_floor
            )));
        }
        Ok(())
    }
}

/// Rewards and log-probabilities for the `G` outputs sampled for one prompt.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicyGroup {
    pub rewards: Vec<f64>,
    pub logp_current: Option<Vec<f64>>,
    pub logp_old: Option<Vec<f64>>,
    pub logp_ref: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Objective {
    pub objective: f64,
    pub per_sample: Vec<f64>,
    pub kl: f64,
    pub advantages: Vec<f64>,
    pub ratios: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `A_i = (r_i - mean) / max(std, std_floor)` with population std.
pub fn group_advantages(rewards: &[f64], cfg: &GrpoConfig) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::EmptyGroup);
    }
    if let Some(index) = rewards.iter().position(|r| !r.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mu = mean(rewards);
    let var = rewards.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / rewards.len() as f64;
    let std = var.sqrt();
    if std <= cfg.std_floor {
        // Covers the all-equal group exactly, where rounding in `mu` would
        // otherwise leave tiny non-zero numerators.
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mu) / std).collect())
}

/// k3 estimator of `KL(current || ref)`: mean of `e^d - d - 1` with
/// `d = logp_ref - logp_current`. Non-negative term by term.
pub fn kl_estimate(logp_current: &[f64], logp_ref: &[f64]) -> f64 {
    let terms: Vec<f64> = logp_current
        .iter()
        .zip(logp_ref)
        .map(|(cur, reference)| {
            let d = reference - cur;
            // exp_m1 keeps precision near zero; clamp absorbs the last ulp.
            (d.exp_m1() - d).max(0.0)
        })
        .collect();
    mean(&terms)
}

/// `min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

fn check_len(field: &'static str, xs: &[f64], expected: usize) -> Result<()> {
    if xs.len() != expected {
        return Err(Error::LengthMismatch {
            field,
            expected,
            got: xs.len(),
        });
    }
    Ok(())
}

pub fn grpo_objective(group: &PolicyGroup, cfg: &GrpoConfig) -> Result<Objective> {
    let g = group.rewards.len();
    let current = group
        .logp_current
        .as_deref()
        .ok_or(Error::MissingLogProbs("logp_current"))?;
    let old = group
        .logp_old
        .as_deref()
        .ok_or(Error::MissingLogProbs("logp_old"))?;
    check_len("logp_current", current, g)?;
    check_len("logp_old", old, g)?;
    let reference = match group.logp_ref.as_deref() {
        Some(r) => {
            check_len("logp_ref", r, g)?;
            Some(r)
        }
        None if cfg.beta > 0.0 => return Err(Error::MissingLogProbs("logp_ref")),
        None => None,
    };

    let advantages = group_advantages(&group.rewards, cfg)?;
    let ratios: Vec<f64> = current
        .iter()
        .zip(old)
        .map(|(c, o)| (c - o).exp())
        .collect();
    let per_sample: Vec<f64> = ratios
        .iter()
        .zip(&advantages)
        .map(|(&ratio, &adv)| clipped_surrogate(ratio, adv, cfg.epsilon))
        .collect();
    let kl = reference.map_or(0.0, |r| kl_estimate(current, r));
    let objective = mean(&per_sample) - cfg.beta * kl;
    Ok(Objective {
        objective,
        per_sample,
        kl,
        advantages,
        ratios,
    })
}
