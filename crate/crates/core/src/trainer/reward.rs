use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::masked_mse;
use crate::sched::EpisodeTrace;

/// Per-step return parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Reward per accommodated slice (> 0).
    pub alpha: f64,
    /// Penalty per slice left unaccommodated at the end (< 0).
    pub beta: f64,
    /// Discount in [0, 1].
    pub lambda: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { alpha: 0.2, beta: -1.0, lambda: 0.9 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta < 0.0 && (0.0..=1.0).contains(&self.lambda)) {
            return Err(Error::Config(format!(
                "reward needs alpha > 0, beta < 0, lambda in [0, 1]; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Returns computed backwards from the last step, which ends the episode:
/// `P_T = n_T a + (l - n_T) b` and `P_t = n_t a + lambda P_{t+1}` before it.
pub fn returns_from_counts(counts: &[usize], cfg: &RewardConfig, l: usize) -> Vec<f64> {
    let mut out = vec![0.0; counts.len()];
    let mut next: Option<f64> = None;
    for t in (0..counts.len()).rev() {
        let n = counts[t] as f64;
        let p = match next {
            None => n * cfg.alpha + (l as f64 - n) * cfg.beta,
            Some(after) => n * cfg.alpha + cfg.lambda * after,
        };
        out[t] = p;
        next = Some(p);
    }
    out
}

pub fn compute_returns(trace: &EpisodeTrace, cfg: &RewardConfig, l: usize) -> Vec<f64> {
    let counts: Vec<usize> = trace.steps.iter().map(|s| s.n_r_after).collect();
    returns_from_counts(&counts, cfg, l)
}

/// Sum over steps of the masked squared error; each mask must select exactly one slice.
pub fn loss_episode(preds: &[Vec<f64>], targets: &[f64], masks: &[Vec<bool>]) -> Result<f64> {
    if preds.len() != targets.len() || preds.len() != masks.len() {
        return Err(Error::Shape(format!(
            "{} predictions, {} targets, {} masks",
            preds.len(),
            targets.len(),
            masks.len()
        )));
    }
    let mut total = 0.0;
    for (t, ((pred, &target), mask)) in preds.iter().zip(targets).zip(masks).enumerate() {
        if mask.iter().filter(|&&m| m).count() != 1 {
            return Err(Error::Mask(format!("step {t} mask is not one-hot")));
        }
        let target_row = vec![target; pred.len()];
        total += masked_mse(pred, &target_row, mask).0;
    }
    Ok(total)
}
