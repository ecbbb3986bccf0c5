//! Geometric and stochastic channel synthesis: path loss, LoS steering,
//! Rice fading, the RIS composite channel and the sensing cascades.
//!
//! Matrix convention: a channel from `tx` to `rx` has one row per receive
//! element and one column per transmit element, so `G_{BS-RIS}` is `N × M`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Sub};

use num_complex::Complex64;
use thiserror::Error;

use crate::beamforming::RisPhaseConfig;
use crate::numerics::{sample_complex_gaussian, ComplexMatrix, ComplexVector, NumericsError, SeededRng};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("zero distance between {0} and {1}")]
    ZeroDistance(Position3D, Position3D),
    #[error("coincident element positions at {0}")]
    CoincidentElements(Position3D),
    #[error("invalid array geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid radio configuration: {0}")]
    InvalidConfig(String),
    #[error("RIS phase vector {index} has length {found}, expected {expected}")]
    PhaseLength { index: usize, expected: usize, found: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Deserialize, serde::Serialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Position3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3D {
    pub const ORIGIN: Position3D = Position3D { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Position3D) -> f64 {
        (*self - *other).norm()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn scale(&self, k: f64) -> Position3D {
        Position3D::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Position3D {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Self { x, y, z }
    }
}

impl From<Position3D> for [f64; 3] {
    fn from(p: Position3D) -> Self {
        [p.x, p.y, p.z]
    }
}

impl Add for Position3D {
    type Output = Position3D;

    fn add(self, o: Position3D) -> Position3D {
        Position3D::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Position3D {
    type Output = Position3D;

    fn sub(self, o: Position3D) -> Position3D {
        Position3D::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl fmt::Display for Position3D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Uniform linear array. Element `k` sits at
/// `center + (k − (n−1)/2)·spacing·orientation`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    center: Position3D,
    element_count: usize,
    element_spacing: f64,
    orientation: Position3D,
}

impl ArrayGeometry {
    pub fn new(
        center: Position3D,
        element_count: usize,
        element_spacing: f64,
        orientation: Position3D,
    ) -> Result<Self, ChannelError> {
        if !center.is_finite() {
            return Err(ChannelError::InvalidGeometry(format!("non-finite centre {center}")));
        }
        if element_count == 0 {
            return Err(ChannelError::InvalidGeometry("element count must be positive".into()));
        }
        if element_count > 1 && !(element_spacing > 0.0 && element_spacing.is_finite()) {
            return Err(ChannelError::InvalidGeometry(format!(
                "element spacing must be positive, got {element_spacing}"
            )));
        }
        let n = orientation.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(ChannelError::InvalidGeometry("orientation must be a non-zero vector".into()));
        }
        Ok(Self {
            center,
            element_count,
            element_spacing,
            orientation: orientation.scale(1.0 / n),
        })
    }

    /// Single isotropic element at `p`.
    pub fn point(p: Position3D) -> Self {
        Self {
            center: p,
            element_count: 1,
            element_spacing: 0.0,
            orientation: Position3D::new(1.0, 0.0, 0.0),
        }
    }

    /// Half-wavelength array.
    pub fn half_wavelength(
        center: Position3D,
        element_count: usize,
        orientation: Position3D,
        cfg: &RadioConfig,
    ) -> Result<Self, ChannelError> {
        Self::new(center, element_count, cfg.wavelength() / 2.0, orientation)
    }

    pub fn center(&self) -> Position3D {
        self.center
    }

    pub fn element_count(&self) -> usize {
        self.element_count
    }

    pub fn element_spacing(&self) -> f64 {
        self.element_spacing
    }

    pub fn orientation(&self) -> Position3D {
        self.orientation
    }

    pub fn element_position(&self, k: usize) -> Position3D {
        let offset = k as f64 - (self.element_count as f64 - 1.0) / 2.0;
        self.center + self.orientation.scale(offset * self.element_spacing)
    }

    pub fn element_positions(&self) -> Vec<Position3D> {
        (0..self.element_count).map(|k| self.element_position(k)).collect()
    }

    /// Contiguous sub-array of `count` elements centred on this array's centre.
    pub fn centered_subarray(&self, count: usize) -> Result<Self, ChannelError> {
        if count == 0 || count > self.element_count || !(self.element_count - count).is_multiple_of(2) {
            return Err(ChannelError::InvalidGeometry(format!(
                "cannot take a centred {count}-element sub-array of {} elements",
                self.element_count
            )));
        }
        Self::new(self.center, count, self.element_spacing, self.orientation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig {
    pub carrier_frequency_hz: f64,
    pub antenna_gain: f64,
    pub rice_factor: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub tx_power_w: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            carrier_frequency_hz: 10e9,
            antenna_gain: 1.0,
            rice_factor: 3.0,
            bandwidth_hz: 500e3,
            noise_psd_dbm_hz: -204.0,
            tx_power_w: 10.0,
        }
    }
}

impl RadioConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let positive = [
            ("frequency_hz", self.carrier_frequency_hz),
            ("antenna_gain", self.antenna_gain),
            ("bandwidth_hz", self.bandwidth_hz),
            ("tx_power_w", self.tx_power_w),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ChannelError::InvalidConfig(format!("{key} must be positive, got {v}")));
            }
        }
        if !(self.rice_factor >= 0.0) {
            return Err(ChannelError::InvalidConfig(format!(
                "rice_factor must be non-negative, got {}",
                self.rice_factor
            )));
        }
        if !self.noise_psd_dbm_hz.is_finite() {
            return Err(ChannelError::InvalidConfig("noise_psd_dbm_hz must be finite".into()));
        }
        Ok(())
    }
}

/// Free-space coefficient `β = A·λ²/(4π·d)²`, applied to channel amplitudes.
pub fn path_loss(a: &Position3D, b: &Position3D, cfg: &RadioConfig) -> Result<f64, ChannelError> {
    let d = a.distance(b);
    if d == 0.0 {
        return Err(ChannelError::ZeroDistance(*a, *b));
    }
    let lambda = cfg.wavelength();
    Ok(cfg.antenna_gain * lambda * lambda / (4.0 * PI * d).powi(2))
}

/// LoS phase term `exp(−j·2π/λ·d)`.
pub fn los_entry(d: f64, wavelength: f64) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI / wavelength * d)
}

/// Deterministic LoS channel, `rx.element_count × tx.element_count`.
pub fn los_channel(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    cfg: &RadioConfig,
) -> Result<ComplexMatrix, ChannelError> {
    let lambda = cfg.wavelength();
    let tx_pos = tx.element_positions();
    let rx_pos = rx.element_positions();
    let mut data = Vec::with_capacity(tx_pos.len() * rx_pos.len());
    for r in &rx_pos {
        for t in &tx_pos {
            let d = r.distance(t);
            if d == 0.0 {
                return Err(ChannelError::CoincidentElements(*r));
            }
            data.push(los_entry(d, lambda));
        }
    }
    Ok(ComplexMatrix::new(rx_pos.len(), tx_pos.len(), data)?)
}

/// One Rice-faded coefficient `β·(√(ε/(ε+1))·ḡ + √(1/(ε+1))·g̃)`.
pub fn rice_mix(
    beta: f64,
    los: Complex64,
    rice_factor: f64,
    rng: &mut SeededRng,
) -> Result<Complex64, ChannelError> {
    let k = rice_factor;
    let (w_los, w_nlos) = if k.is_infinite() {
        (1.0, 0.0)
    } else {
        ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
    };
    let scatter = sample_complex_gaussian(rng, 0.5)?;
    Ok((los * w_los + scatter * w_nlos) * beta)
}

/// Rice channel between two arrays; the path loss uses the array centres.
pub fn rice_channel(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    cfg: &RadioConfig,
    rng: &mut SeededRng,
) -> Result<ComplexMatrix, ChannelError> {
    if !(cfg.rice_factor >= 0.0) {
        return Err(ChannelError::InvalidConfig(format!(
            "rice_factor must be non-negative, got {}",
            cfg.rice_factor
        )));
    }
    let beta = path_loss(&tx.center(), &rx.center(), cfg)?;
    let los = los_channel(tx, rx, cfg)?;
    let mut data = Vec::with_capacity(los.rows() * los.cols());
    for g in los.iter() {
        data.push(rice_mix(beta, *g, cfg.rice_factor, rng)?);
    }
    Ok(ComplexMatrix::new(los.rows(), los.cols(), data)?)
}

/// All channel matrices drawn for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Direct BS→UE channels, one column per user (`M × K`).
    pub h_los: ComplexMatrix,
    /// BS→RISᵢ channels (`Nᵢ × M`).
    pub g_bs_ris: Vec<ComplexMatrix>,
    /// RISᵢ→UE channels (`Nᵢ × 1`), for user 0.
    pub f_ris_ue: Vec<ComplexVector>,
    pub h_bu_cascade: ComplexVector,
    pub h_urb_cascade: Vec<ComplexVector>,
    pub theta_ue: Complex64,
}

/// `h_k = h_LoS,k + Σᵢ G_{BS-RISᵢ}ᴴ·Diag(θᵢ)·f_{RISᵢ-k}` for user 0.
pub fn composite_channel(
    realization: &ChannelRealization,
    ris_phases: &[RisPhaseConfig],
) -> Result<ComplexVector, ChannelError> {
    composite_from_parts(
        &realization.h_los.column(0),
        &realization.g_bs_ris,
        &realization.f_ris_ue,
        ris_phases,
    )
}

pub fn composite_from_parts(
    h_direct: &ComplexVector,
    g_bs_ris: &[ComplexMatrix],
    f_ris_ue: &[ComplexVector],
    ris_phases: &[RisPhaseConfig],
) -> Result<ComplexVector, ChannelError> {
    if g_bs_ris.len() != f_ris_ue.len() || g_bs_ris.len() != ris_phases.len() {
        return Err(NumericsError::DimensionMismatch {
            expected: format!("{} RIS links", g_bs_ris.len()),
            found: format!("{} f vectors, {} phase vectors", f_ris_ue.len(), ris_phases.len()),
        }
        .into());
    }
    let mut h = h_direct.clone();
    for (i, ((g, f), theta)) in g_bs_ris.iter().zip(f_ris_ue).zip(ris_phases).enumerate() {
        let theta = theta.as_vector();
        if theta.len() != g.rows() {
            return Err(ChannelError::PhaseLength {
                index: i,
                expected: g.rows(),
                found: theta.len(),
            });
        }
        let reflected = g.hermitian().matvec(&theta.hadamard(f)?)?;
        h = h.try_add(&reflected)?;
    }
    Ok(h)
}

/// Segments of the three sensing paths for a UE position.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingCascade {
    /// Direct reflection `h_BU = conj(h_BS)·Θ_UE·h_UB` (length M).
    pub h_bu: ComplexVector,
    /// `h_URBᵢ = h_URᵢᴴ·Θ_RISᵢ·H_RBᵢ` (length M each).
    pub h_urb: Vec<ComplexVector>,
    pub theta_ue: Complex64,
}

/// User reflection coefficient `α·exp(jφ)`, φ uniform.
pub fn draw_user_reflection(amplitude: f64, rng: &mut SeededRng) -> Complex64 {
    Complex64::from_polar(amplitude, rng.uniform_phase())
}

/// Draws the sensing cascades seen by the `bs` sensing array for a UE at `ue`.
/// Every segment has its own path loss and independent fading.
pub fn sensing_cascade(
    bs: &ArrayGeometry,
    ris: &[ArrayGeometry],
    ris_phases: &[RisPhaseConfig],
    ue: Position3D,
    theta_ue: Complex64,
    cfg: &RadioConfig,
    rng: &mut SeededRng,
) -> Result<SensingCascade, ChannelError> {
    if ris.len() != ris_phases.len() {
        return Err(NumericsError::DimensionMismatch {
            expected: format!("{} phase vectors", ris.len()),
            found: ris_phases.len().to_string(),
        }
        .into());
    }
    for anchor in std::iter::once(bs).chain(ris) {
        if anchor.center() == ue {
            return Err(ChannelError::ZeroDistance(anchor.center(), ue));
        }
    }
    let ue_geom = ArrayGeometry::point(ue);
    let bs_ref = ArrayGeometry::point(bs.center());

    let h_bs = rice_channel(bs, &ue_geom, cfg, rng)?.row(0);
    let h_ub = rice_channel(&ue_geom, &bs_ref, cfg, rng)?.get(0, 0);
    let h_bu = h_bs.conj().scale(theta_ue * h_ub);

    let mut h_urb = Vec::with_capacity(ris.len());
    for (i, (surface, phases)) in ris.iter().zip(ris_phases).enumerate() {
        let theta = phases.as_vector();
        if theta.len() != surface.element_count() {
            return Err(ChannelError::PhaseLength {
                index: i,
                expected: surface.element_count(),
                found: theta.len(),
            });
        }
        // UE reflection feeds every RIS path as well
        let h_ur = rice_channel(&ue_geom, surface, cfg, rng)?.column(0).scale(theta_ue);
        let h_rb = rice_channel(bs, surface, cfg, rng)?;
        let weighted = h_ur.conj().hadamard(theta)?;
        let row = h_rb.transpose().matvec(&weighted)?;
        h_urb.push(row);
    }
    Ok(SensingCascade {
        h_bu,
        h_urb,
        theta_ue,
    })
}
