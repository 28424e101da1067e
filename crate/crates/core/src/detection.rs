//! Per-antenna fault verdicts and trial scoring.

use serde::{Deserialize, Serialize};

use crate::array_model::FaultPattern;
use crate::{CVector, Error, Result};

/// Default magnitude threshold: half the smallest simulated fault amplitude.
pub const DEFAULT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultVerdict {
    pub states: Vec<bool>,
    pub threshold: f64,
    pub magnitudes: Vec<f64>,
}

impl FaultVerdict {
    pub fn flagged(&self) -> Vec<usize> {
        self.states.iter().enumerate().filter_map(|(i, &s)| s.then_some(i)).collect()
    }
}

/// Flags antenna `n` iff `|hf_hat[n]| > threshold`.
pub fn classify_faults(hf_hat: &CVector, threshold: f64) -> Result<FaultVerdict> {
    if !(threshold >= 0.0) {
        return Err(Error::Domain(format!("threshold must be nonnegative, got {threshold}")));
    }
    let magnitudes: Vec<f64> = hf_hat.iter().map(|c| c.norm()).collect();
    let states = magnitudes.iter().map(|&m| m > threshold).collect();
    Ok(FaultVerdict { states, threshold, magnitudes })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub success: bool,
    pub false_alarms: usize,
    pub misses: usize,
    pub channel_nmse: f64,
}

pub fn score_trial(verdict: &FaultVerdict, truth: &FaultPattern, h_hat: &CVector, h_true: &CVector) -> Result<TrialScore> {
    let n = verdict.states.len();
    if truth.h_f.len() != n || h_hat.len() != n || h_true.len() != n {
        return Err(Error::Dimension("verdict, truth and channel lengths differ".into()));
    }
    let mut faulty = vec![false; n];
    for &i in &truth.support {
        faulty[i] = true;
    }
    let false_alarms = (0..n).filter(|&i| verdict.states[i] && !faulty[i]).count();
    let misses = (0..n).filter(|&i| !verdict.states[i] && faulty[i]).count();
    let denom = h_true.norm_squared();
    let err = (h_hat - h_true).norm_squared();
    let channel_nmse = if denom > 0.0 { err / denom } else if err == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(TrialScore { success: false_alarms == 0 && misses == 0, false_alarms, misses, channel_nmse })
}

/// Wilson score interval for `successes / trials` at normal quantile `z`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // clamp so the point estimate always sits inside despite rounding
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

/// 97.5% standard normal quantile.
pub const Z_95: f64 = 1.959963984540054;
