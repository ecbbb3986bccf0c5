//! Active (MRT) and passive (RIS phase) beamforming, SNR/SINR evaluation and
//! sensing power accounting.

use num_complex::Complex64;
use thiserror::Error;

use crate::channel::{composite_channel, ChannelError, ChannelRealization, RadioConfig};
use crate::numerics::{linear_to_db, ComplexMatrix, ComplexVector, NumericsError};

const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeamformingError {
    #[error("channel vector is zero")]
    ZeroChannel,
    #[error("beam weights must have unit norm, got {0}")]
    NotUnitNorm(f64),
    #[error("RIS phase entry {index} has modulus {modulus}, expected 1")]
    NotUnitModulus { index: usize, modulus: f64 },
    #[error("user index {index} out of range for {users} users")]
    UserIndex { index: usize, users: usize },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Unit-norm transmit/receive weight column.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamWeights {
    w: ComplexVector,
}

impl BeamWeights {
    pub fn new(w: ComplexVector) -> Result<Self, BeamformingError> {
        let n = w.norm();
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(BeamformingError::NotUnitNorm(n));
        }
        Ok(Self { w })
    }

    pub fn normalized(w: ComplexVector) -> Result<Self, BeamformingError> {
        let n = w.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(BeamformingError::ZeroChannel);
        }
        Ok(Self {
            w: w.scale(Complex64::new(1.0 / n, 0.0)),
        })
    }

    pub fn as_vector(&self) -> &ComplexVector {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// `|hᴴw|²`.
    pub fn gain(&self, h: &ComplexVector) -> Result<f64, BeamformingError> {
        Ok(h.dot_h(&self.w)?.norm_sqr())
    }
}

/// RIS reflection vector θ; entries are unit modulus (lossless elements).
#[derive(Debug, Clone, PartialEq)]
pub struct RisPhaseConfig {
    theta: ComplexVector,
}

impl RisPhaseConfig {
    pub fn new(theta: ComplexVector) -> Result<Self, BeamformingError> {
        for (index, z) in theta.iter().enumerate() {
            let modulus = z.norm();
            if (modulus - 1.0).abs() > UNIT_TOL {
                return Err(BeamformingError::NotUnitModulus { index, modulus });
            }
        }
        Ok(Self { theta })
    }

    pub fn from_phases(phases: &[f64]) -> Self {
        Self {
            theta: ComplexVector::from_phases(phases),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_phases(&vec![0.0; n])
    }

    /// Unchecked constructor for absorbing or partially reflecting surfaces.
    pub fn from_raw(theta: ComplexVector) -> Self {
        Self { theta }
    }

    pub fn as_vector(&self) -> &ComplexVector {
        &self.theta
    }

    pub fn phases(&self) -> Vec<f64> {
        self.theta.iter().map(|z| z.arg()).collect()
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// Maximum-ratio weights `w = h/‖h‖`, so that `hᴴw = ‖h‖`.
pub fn mrt_weights(h: &ComplexVector) -> Result<BeamWeights, BeamformingError> {
    if h.norm() == 0.0 {
        return Err(BeamformingError::ZeroChannel);
    }
    BeamWeights::normalized(h.clone())
}

/// Per-element contributions `c_j = (wᴴGᴴ)_j·h_j` for `G: N×M`, `h: N×1`.
pub fn element_contributions(
    w: &BeamWeights,
    g: &ComplexMatrix,
    h: &ComplexVector,
) -> Result<ComplexVector, BeamformingError> {
    let gw = g.matvec(w.as_vector())?;
    Ok(gw.conj().hadamard(h)?)
}

/// `θ_j = exp(−j·arg c_j)`; every aligned contribution `c_j·θ_j` is real and
/// non-negative. Elements with `c_j = 0` keep `θ_j = 1`.
pub fn passive_beamforming(
    w: &BeamWeights,
    g: &ComplexMatrix,
    h: &ComplexVector,
) -> Result<RisPhaseConfig, BeamformingError> {
    aligned_phases(&element_contributions(w, g, h)?, 0.0)
}

fn aligned_phases(c: &ComplexVector, reference: f64) -> Result<RisPhaseConfig, BeamformingError> {
    let phases: Vec<f64> = c
        .iter()
        .enumerate()
        .map(|(j, z)| {
            if z.norm() == 0.0 {
                log::warn!("RIS element {j} has zero contribution; phase left at 0");
                0.0
            } else {
                reference - z.arg()
            }
        })
        .collect();
    Ok(RisPhaseConfig::from_phases(&phases))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternatingResult {
    pub weights: BeamWeights,
    pub phases: Vec<RisPhaseConfig>,
    /// `|hᴴw|²` after each iteration.
    pub gains: Vec<f64>,
}

/// Alternates MRT on the composite channel with phase alignment of every RIS
/// against the current beam. Each half-step maximizes the gain over its own
/// variable, so the gain sequence never decreases.
pub fn alternate_optimize(
    realization: &ChannelRealization,
    iterations: usize,
) -> Result<AlternatingResult, BeamformingError> {
    if iterations == 0 {
        return Err(BeamformingError::NoIterations);
    }
    let h_direct = realization.h_los.column(0);
    let mut phases: Vec<RisPhaseConfig> = realization
        .g_bs_ris
        .iter()
        .map(|g| RisPhaseConfig::identity(g.rows()))
        .collect();
    let mut gains = Vec::with_capacity(iterations);
    let mut weights = mrt_weights(&composite_channel(realization, &phases)?)?;
    for _ in 0..iterations {
        // wᴴh = wᴴh_d + Σ θ_ij c_ij; align every term with the direct one
        let direct = weights.as_vector().dot_h(&h_direct)?;
        let reference = if direct.norm() > 0.0 { direct.arg() } else { 0.0 };
        phases = realization
            .g_bs_ris
            .iter()
            .zip(&realization.f_ris_ue)
            .map(|(g, f)| {
                let c = element_contributions(&weights, g, f)?;
                aligned_phases(&c, reference)
            })
            .collect::<Result<_, _>>()?;
        let h = composite_channel(realization, &phases)?;
        weights = mrt_weights(&h)?;
        gains.push(weights.gain(&h)?);
    }
    Ok(AlternatingResult {
        weights,
        phases,
        gains,
    })
}

/// `σ² = 10^(N₀/10 − 3)·B` watts, N₀ in dBm/Hz.
pub fn noise_power(cfg: &RadioConfig) -> Result<f64, BeamformingError> {
    if !(cfg.bandwidth_hz > 0.0) {
        return Err(BeamformingError::NonPositive("bandwidth"));
    }
    Ok(10f64.powf(cfg.noise_psd_dbm_hz / 10.0 - 3.0) * cfg.bandwidth_hz)
}

/// Watts to dBm.
pub fn watts_to_dbm(p: f64) -> f64 {
    linear_to_db(p) + 30.0
}

/// `SNR = p_tx·|hᴴw|²/σ²`.
pub fn snr(h: &ComplexVector, w: &BeamWeights, p_tx: f64, sigma2: f64) -> Result<f64, BeamformingError> {
    if !(sigma2 > 0.0) {
        return Err(BeamformingError::NonPositive("noise power"));
    }
    Ok(p_tx * w.gain(h)? / sigma2)
}

pub fn snr_db(h: &ComplexVector, w: &BeamWeights, p_tx: f64, sigma2: f64) -> Result<f64, BeamformingError> {
    Ok(linear_to_db(snr(h, w, p_tx, sigma2)?))
}

/// `SINR_k = |h_kᴴw_k|² / (Σ_{i≠k} |h_iᴴw_k|² + σ²)`.
pub fn sinr(
    h_all: &[ComplexVector],
    w_all: &[BeamWeights],
    k: usize,
    sigma2: f64,
) -> Result<f64, BeamformingError> {
    if k >= h_all.len() || k >= w_all.len() {
        return Err(BeamformingError::UserIndex {
            index: k,
            users: h_all.len().min(w_all.len()),
        });
    }
    if !(sigma2 > 0.0) {
        return Err(BeamformingError::NonPositive("noise power"));
    }
    let wk = &w_all[k];
    let signal = wk.gain(&h_all[k])?;
    let mut interference = 0.0;
    for (i, h) in h_all.iter().enumerate() {
        if i != k {
            interference += wk.gain(h)?;
        }
    }
    Ok(signal / (interference + sigma2))
}

/// Effective reflected channel `GᴴΘh`.
pub fn effective_channel(
    g: &ComplexMatrix,
    theta: &RisPhaseConfig,
    h: &ComplexVector,
) -> Result<ComplexVector, BeamformingError> {
    let th = theta.as_vector().hadamard(h)?;
    Ok(g.hermitian().matvec(&th)?)
}

pub fn nlos_snr(
    g: &ComplexMatrix,
    theta: &RisPhaseConfig,
    h: &ComplexVector,
    w: &BeamWeights,
    p_tx: f64,
    sigma2: f64,
) -> Result<f64, BeamformingError> {
    snr(&effective_channel(g, theta, h)?, w, p_tx, sigma2)
}

/// SINR over effective channels `GᴴΘh_i` for every user `i`.
pub fn nlos_sinr(
    g: &ComplexMatrix,
    theta: &RisPhaseConfig,
    h_all: &[ComplexVector],
    w_all: &[BeamWeights],
    k: usize,
    sigma2: f64,
) -> Result<f64, BeamformingError> {
    let eff = h_all
        .iter()
        .map(|h| effective_channel(g, theta, h))
        .collect::<Result<Vec<_>, _>>()?;
    sinr(&eff, w_all, k, sigma2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingPower {
    pub p_sens: f64,
    pub p_total: f64,
}

/// `P_sens = P_BS·|h_BU·w|²`, `P_total = P_sens + Σ P_RISᵢ`.
pub fn sensing_power(
    p_bs: f64,
    h_bu: &ComplexVector,
    w: &BeamWeights,
    p_ris: &[f64],
) -> Result<SensingPower, BeamformingError> {
    let p_sens = p_bs * h_bu.dot(w.as_vector())?.norm_sqr();
    Ok(SensingPower {
        p_sens,
        p_total: p_sens + p_ris.iter().sum::<f64>(),
    })
}
