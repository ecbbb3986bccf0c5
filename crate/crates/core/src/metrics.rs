//! Success-rate statistics and the combined ISAC error model.

use serde::Serialize;
use thiserror::Error;

use crate::channel::Position3D;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no trials to aggregate")]
    Empty,
    #[error("{name} must be a probability, got {value}")]
    NotProbability { name: &'static str, value: f64 },
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
}

/// Outcome of one Monte Carlo trial (one TDD cycle).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub true_position: Position3D,
    /// `None` when sensing failed (infeasible ranges or a labeling conflict).
    pub estimated_position: Option<Position3D>,
    /// Euclidean error; `+∞` for failed trials.
    pub loc_error: f64,
    /// `loc_error ≤ ε_Lth` of the scenario.
    pub loc_success: bool,
    pub labeling_correct: bool,
    pub comm_gamma: f64,
    pub bits_sent: u64,
    pub bit_errors: u64,
    pub isac_success: bool,
    /// Analytic probability that this trial's packet is received in error.
    pub packet_error_analytic: f64,
}

impl TrialRecord {
    pub fn packet_ok(&self) -> bool {
        self.bit_errors == 0
    }

    pub fn loc_success_at(&self, eps_lth: f64) -> bool {
        self.loc_error <= eps_lth
    }
}

fn nonempty(records: &[TrialRecord]) -> Result<(), MetricsError> {
    if records.is_empty() {
        Err(MetricsError::Empty)
    } else {
        Ok(())
    }
}

fn check_threshold(eps: f64) -> Result<(), MetricsError> {
    if eps > 0.0 {
        Ok(())
    } else {
        Err(MetricsError::InvalidThreshold(eps))
    }
}

/// Mean squared localization error; infinite if any trial failed.
pub fn mse(records: &[TrialRecord]) -> Result<f64, MetricsError> {
    nonempty(records)?;
    Ok(records.iter().map(|r| r.loc_error * r.loc_error).sum::<f64>() / records.len() as f64)
}

pub fn sensing_success_rate(records: &[TrialRecord], eps_lth: f64) -> Result<f64, MetricsError> {
    nonempty(records)?;
    check_threshold(eps_lth)?;
    let hits = records.iter().filter(|r| r.loc_success_at(eps_lth)).count();
    Ok(hits as f64 / records.len() as f64)
}

/// Fraction of trials where localization and the packet both succeed, using
/// each record's own `isac_success`.
pub fn isac_success_rate_sim(records: &[TrialRecord]) -> Result<f64, MetricsError> {
    nonempty(records)?;
    Ok(records.iter().filter(|r| r.isac_success).count() as f64 / records.len() as f64)
}

/// Same conjunction evaluated at an arbitrary threshold.
pub fn isac_success_rate_at(records: &[TrialRecord], eps_lth: f64) -> Result<f64, MetricsError> {
    nonempty(records)?;
    check_threshold(eps_lth)?;
    let hits = records
        .iter()
        .filter(|r| r.loc_success_at(eps_lth) && r.packet_ok())
        .count();
    Ok(hits as f64 / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsacErrorModel {
    p_loc_fail: f64,
    p_comm_error: f64,
}

impl IsacErrorModel {
    pub fn new(p_loc_fail: f64, p_comm_error: f64) -> Result<Self, MetricsError> {
        for (name, value) in [("p_loc_fail", p_loc_fail), ("p_comm_error", p_comm_error)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(MetricsError::NotProbability { name, value });
            }
        }
        Ok(Self {
            p_loc_fail,
            p_comm_error,
        })
    }

    pub fn p_loc_fail(&self) -> f64 {
        self.p_loc_fail
    }

    pub fn p_comm_error(&self) -> f64 {
        self.p_comm_error
    }
}

/// `P = a + b − ab` for independent localization and communication failures.
pub fn isac_error_probability(model: &IsacErrorModel) -> f64 {
    let (a, b) = (model.p_loc_fail, model.p_comm_error);
    a + b - a * b
}

/// 95% Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: u64, n: u64) -> Result<(f64, f64), MetricsError> {
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    const Z: f64 = 1.959964;
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Ok(((centre - half).max(0.0), (centre + half).min(1.0)))
}

/// Median of the localization errors (failed trials sort last as `+∞`).
pub fn median_error(records: &[TrialRecord]) -> Result<f64, MetricsError> {
    nonempty(records)?;
    let mut e: Vec<f64> = records.iter().map(|r| r.loc_error).collect();
    e.sort_by(f64::total_cmp);
    let n = e.len();
    Ok(if n % 2 == 1 {
        e[n / 2]
    } else {
        (e[n / 2 - 1] + e[n / 2]) / 2.0
    })
}
