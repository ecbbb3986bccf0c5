//! Scenario configuration: a flat TOML document whose keys map one-to-one to
//! the simulation parameters. Missing keys take the reference defaults, unknown
//! keys are rejected.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::beamforming::{mrt_weights, passive_beamforming, BeamWeights, RisPhaseConfig};
use crate::channel::{los_channel, ArrayGeometry, Position3D, RadioConfig};
use crate::localization::AnchorSet;
use crate::numerics::ComplexVector;
use crate::protocol::timing::CycleSchedule;
use crate::sensing::steering_vector;

/// ToA noise scale: σ_τ = τ_scale·|h|/√SNR. Calibrated once so that 98% of
/// trials land within 1.5 m at 20 dB with the default UE region.
pub const DEFAULT_TAU_SCALE_S: f64 = 1.05e-8;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {reason}")]
    Validation { key: &'static str, reason: String },
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        key,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToaGain {
    /// `|h| = 1`: the nominal SNR is the instantaneous SNR.
    Normalized,
    /// Cascade gain relative to its LoS-only value.
    Faded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommChannel {
    /// γ from the directive-beam link budget of the drawn channel.
    LinkBudget,
    /// γ equal to the sweep SNR on a unit channel.
    Fixed,
    /// Sweep SNR as average γ over a Rice-faded unit-power channel.
    Rice,
}

/// Raw configuration document. Field names are the accepted keys.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub ris_elements: usize,
    pub bs_antennas: usize,
    pub bs_sensing_antennas: usize,
    pub bs_center: [f64; 3],
    pub ris1_center: [f64; 3],
    pub ris2_center: [f64; 3],
    pub bs_orientation: [f64; 3],
    pub ris1_orientation: [f64; 3],
    pub ris2_orientation: [f64; 3],
    pub element_spacing_wavelengths: f64,
    pub bs_target: [f64; 3],
    pub ris_target: [f64; 3],
    pub tx_power_w: f64,
    pub frequency_hz: f64,
    pub bandwidth_hz: f64,
    pub rice_factor: f64,
    pub noise_psd_dbm_hz: f64,
    pub antenna_gain: f64,
    pub bits_per_symbol: u32,
    pub eps_lth_m: f64,
    pub cycle_period_s: f64,
    pub sensing_slot_s: f64,
    pub response_slot_s: f64,
    pub propagation_guard_s: f64,
    pub ris_power_w: f64,
    pub ue_reflection_amplitude: f64,
    pub tau_scale_s: f64,
    pub toa_gain: ToaGain,
    pub comm_channel: CommChannel,
    pub ue_region_x: [f64; 2],
    pub ue_region_y: [f64; 2],
    pub ue_region_z: [f64; 2],
    pub user_id: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            ris_elements: 3,
            bs_antennas: 31,
            bs_sensing_antennas: 3,
            bs_center: [0.0, 0.0, 0.0],
            ris1_center: [0.0, 55.0, 0.0],
            ris2_center: [55.0, 0.0, 0.0],
            bs_orientation: [1.0, 0.0, 0.0],
            ris1_orientation: [1.0, 0.0, 0.0],
            ris2_orientation: [0.0, 1.0, 0.0],
            element_spacing_wavelengths: 0.5,
            bs_target: [25.0, 25.0, 0.0],
            ris_target: [-55.0, 5.0, 0.0],
            tx_power_w: 10.0,
            frequency_hz: 10e9,
            bandwidth_hz: 500e3,
            rice_factor: 3.0,
            noise_psd_dbm_hz: -204.0,
            antenna_gain: 1.0,
            bits_per_symbol: 4,
            eps_lth_m: 1.5,
            cycle_period_s: 0.5,
            sensing_slot_s: 20e-6,
            response_slot_s: 20e-6,
            propagation_guard_s: 5.3e-6,
            ris_power_w: 1e-3,
            ue_reflection_amplitude: 1.0,
            tau_scale_s: DEFAULT_TAU_SCALE_S,
            toa_gain: ToaGain::Normalized,
            comm_channel: CommChannel::LinkBudget,
            ue_region_x: [10.0, 30.0],
            ue_region_y: [10.0, 30.0],
            ue_region_z: [15.0, 25.0],
            user_id: 0x5A3C1,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.message().to_string()))
    }
}

/// Validated scenario with every derived quantity precomputed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub radio: RadioConfig,
    pub bs_array: ArrayGeometry,
    pub bs_sensing_array: ArrayGeometry,
    pub ris_arrays: Vec<ArrayGeometry>,
    pub anchors: AnchorSet,
    pub schedule: CycleSchedule,
    pub bs_target: Position3D,
    pub ris_target: Position3D,
    /// Wide sensing beam on the sensing sub-array.
    pub w_wide: BeamWeights,
    /// Directive beam of the full array toward the BS target.
    pub w_directive: BeamWeights,
    /// Static RIS configuration used for sensing reflections.
    pub static_ris: Vec<RisPhaseConfig>,
    /// Steering vectors of the sensing sub-array toward RIS1 and RIS2.
    pub sv_ris: [ComplexVector; 2],
}

impl Default for Scenario {
    fn default() -> Self {
        Self::from_config(ScenarioConfig::default()).expect("default scenario is valid")
    }
}

fn finite3(key: &'static str, v: [f64; 3]) -> Result<Position3D, ScenarioError> {
    if v.iter().any(|c| !c.is_finite()) {
        return Err(invalid(key, "coordinates must be finite"));
    }
    Ok(v.into())
}

fn positive(key: &'static str, v: f64) -> Result<f64, ScenarioError> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(key, format!("must be positive, got {v}")));
    }
    Ok(v)
}

fn range(key: &'static str, r: [f64; 2]) -> Result<(), ScenarioError> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(invalid(key, format!("expected [min, max] with min ≤ max, got {r:?}")));
    }
    Ok(())
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        let c = &config;
        let radio = RadioConfig {
            carrier_frequency_hz: positive("frequency_hz", c.frequency_hz)?,
            antenna_gain: positive("antenna_gain", c.antenna_gain)?,
            rice_factor: c.rice_factor,
            bandwidth_hz: positive("bandwidth_hz", c.bandwidth_hz)?,
            noise_psd_dbm_hz: c.noise_psd_dbm_hz,
            tx_power_w: positive("tx_power_w", c.tx_power_w)?,
        };
        if !(c.rice_factor >= 0.0) {
            return Err(invalid("rice_factor", "must be non-negative"));
        }
        if !c.noise_psd_dbm_hz.is_finite() {
            return Err(invalid("noise_psd_dbm_hz", "must be finite"));
        }
        positive("eps_lth_m", c.eps_lth_m)?;
        positive("tau_scale_s", c.tau_scale_s)?;
        if !(c.ris_power_w >= 0.0 && c.ris_power_w.is_finite()) {
            return Err(invalid("ris_power_w", "must be non-negative"));
        }
        if !(c.ue_reflection_amplitude > 0.0 && c.ue_reflection_amplitude <= 1.0) {
            return Err(invalid("ue_reflection_amplitude", "must lie in (0, 1]"));
        }
        if c.bits_per_symbol == 0 {
            return Err(invalid("bits_per_symbol", "must be positive"));
        }
        if c.ris_elements == 0 {
            return Err(invalid("ris_elements", "must be positive"));
        }
        if c.bs_antennas == 0 {
            return Err(invalid("bs_antennas", "must be positive"));
        }
        if c.bs_sensing_antennas == 0
            || c.bs_sensing_antennas > c.bs_antennas
            || !(c.bs_antennas - c.bs_sensing_antennas).is_multiple_of(2)
        {
            return Err(invalid(
                "bs_sensing_antennas",
                format!(
                    "must be a centred sub-array of the {} BS antennas (same parity)",
                    c.bs_antennas
                ),
            ));
        }
        if c.user_id >= 1 << 20 {
            return Err(invalid("user_id", "must fit in 20 bits"));
        }
        range("ue_region_x", c.ue_region_x)?;
        range("ue_region_y", c.ue_region_y)?;
        range("ue_region_z", c.ue_region_z)?;
        if c.ue_region_z[0] < 0.0 || c.ue_region_z[1] > crate::protocol::frame::MAX_HEIGHT_M {
            return Err(invalid(
                "ue_region_z",
                "heights must be reportable by the response frame (0–25.5 m)",
            ));
        }

        let spacing = positive("element_spacing_wavelengths", c.element_spacing_wavelengths)? * radio.wavelength();
        let bs_center = finite3("bs_center", c.bs_center)?;
        let ris1_center = finite3("ris1_center", c.ris1_center)?;
        let ris2_center = finite3("ris2_center", c.ris2_center)?;
        let array = |key: &'static str, center, n, orientation: [f64; 3]| {
            ArrayGeometry::new(center, n, spacing, finite3(key, orientation)?)
                .map_err(|e| invalid(key, e.to_string()))
        };
        let bs_array = array("bs_orientation", bs_center, c.bs_antennas, c.bs_orientation)?;
        let bs_sensing_array = bs_array
            .centered_subarray(c.bs_sensing_antennas)
            .map_err(|e| invalid("bs_sensing_antennas", e.to_string()))?;
        let ris_arrays = vec![
            array("ris1_orientation", ris1_center, c.ris_elements, c.ris1_orientation)?,
            array("ris2_orientation", ris2_center, c.ris_elements, c.ris2_orientation)?,
        ];

        if ris1_center == bs_center {
            return Err(invalid("ris1_center", "coincides with bs_center"));
        }
        if ris2_center == bs_center {
            return Err(invalid("ris2_center", "coincides with bs_center"));
        }
        if ris1_center == ris2_center {
            return Err(invalid("ris2_center", "coincides with ris1_center"));
        }
        let anchors = AnchorSet::new(bs_center, ris1_center, ris2_center).map_err(|e| {
            use crate::localization::LocalizationError as L;
            match e {
                L::NonCoplanar { name: "ris1", .. } => invalid("ris1_center", e.to_string()),
                L::NonCoplanar { .. } => invalid("ris2_center", e.to_string()),
                _ => invalid("ris2_center", e.to_string()),
            }
        })?;

        let schedule = CycleSchedule::from_seconds(
            c.cycle_period_s,
            c.sensing_slot_s,
            c.response_slot_s,
            c.propagation_guard_s,
        )
        .map_err(|e| invalid("cycle_period_s", e.to_string()))?;

        let bs_target = finite3("bs_target", c.bs_target)?;
        let ris_target = finite3("ris_target", c.ris_target)?;
        let beam_to = |key: &'static str, geom: &ArrayGeometry, target: Position3D| {
            let g = los_channel(geom, &ArrayGeometry::point(target), &radio).map_err(|e| invalid(key, e.to_string()))?;
            mrt_weights(&g.row(0).conj()).map_err(|e| invalid(key, e.to_string()))
        };
        let w_wide = beam_to("bs_target", &bs_sensing_array, bs_target)?;
        let w_directive = beam_to("bs_target", &bs_array, bs_target)?;

        let mut static_ris = Vec::with_capacity(2);
        for (key, ris) in [("ris1_center", &ris_arrays[0]), ("ris2_center", &ris_arrays[1])] {
            let g = los_channel(&bs_sensing_array, ris, &radio).map_err(|e| invalid(key, e.to_string()))?;
            let h = los_channel(ris, &ArrayGeometry::point(ris_target), &radio)
                .map_err(|e| invalid("ris_target", e.to_string()))?
                .row(0);
            let theta = passive_beamforming(&w_wide, &g, &h).map_err(|e| invalid(key, e.to_string()))?;
            static_ris.push(theta);
        }

        let sv = |key: &'static str, target: Position3D| {
            steering_vector(&bs_sensing_array, target, &radio).map_err(|e| invalid(key, e.to_string()))
        };
        let sv_ris = [sv("ris1_center", ris1_center)?, sv("ris2_center", ris2_center)?];

        Ok(Self {
            config,
            radio,
            bs_array,
            bs_sensing_array,
            ris_arrays,
            anchors,
            schedule,
            bs_target,
            ris_target,
            w_wide,
            w_directive,
            static_ris,
            sv_ris,
        })
    }

    pub fn eps_lth(&self) -> f64 {
        self.config.eps_lth_m
    }
}

pub fn load_scenario_str(text: &str) -> Result<Scenario, ScenarioError> {
    Scenario::from_config(ScenarioConfig::from_toml(text)?)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_scenario_str(&text)
}

/// Rectangular sweep grid in a horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub resolution: f64,
    pub z: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x: (0.0, 50.0),
            y: (0.0, 50.0),
            resolution: 0.5,
            z: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid grid: {0}")]
pub struct GridError(pub String);

impl GridSpec {
    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(GridError(format!("resolution must be positive, got {}", self.resolution)));
        }
        for (name, (lo, hi)) in [("x", self.x), ("y", self.y)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(GridError(format!("{name} range [{lo}, {hi}] is empty or non-finite")));
            }
        }
        if !self.z.is_finite() {
            return Err(GridError("z must be finite".into()));
        }
        if self.axis(self.x).len() * self.axis(self.y).len() > 50_000_000 {
            return Err(GridError("grid has more than 5e7 points".into()));
        }
        Ok(())
    }

    fn axis(&self, (lo, hi): (f64, f64)) -> Vec<f64> {
        let n = ((hi - lo) / self.resolution + 1e-9).floor() as usize + 1;
        (0..n).map(|i| lo + i as f64 * self.resolution).collect()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.axis(self.x)
    }

    pub fn ys(&self) -> Vec<f64> {
        self.axis(self.y)
    }

    /// Row-major points (y outer, x inner).
    pub fn points(&self) -> Result<Vec<Position3D>, GridError> {
        self.validate()?;
        let xs = self.xs();
        Ok(self
            .ys()
            .into_iter()
            .flat_map(|y| xs.iter().map(move |&x| Position3D::new(x, y, self.z)))
            .collect())
    }
}
