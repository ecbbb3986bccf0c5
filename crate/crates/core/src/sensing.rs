//! Three-path sensing: ToA generation, AoA path identification by
//! steering-vector correlation, range inversion and trilateration.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::channel::{
    draw_user_reflection, sensing_cascade, ArrayGeometry, ChannelError, Position3D, RadioConfig, SPEED_OF_LIGHT,
};
use crate::localization::{solve_closed_form, AnchorSet, LocalizationError, PositionEstimate, RangeTriple};
use crate::numerics::{sample_complex_gaussian, ComplexVector, NumericsError, SeededRng};
use crate::scenario::{Scenario, ToaGain};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensingError {
    #[error("SNR must be positive, got {0}")]
    InvalidSnr(f64),
    #[error("observation is infeasible: {0}")]
    InfeasibleObservation(String),
    #[error("both RIS steering vectors picked signal {0}")]
    LabelingConflict(usize),
    #[error(transparent)]
    Localization(#[from] LocalizationError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

impl SensingError {
    /// Outcomes that count as a failed trial rather than a broken run.
    pub fn is_trial_failure(&self) -> bool {
        matches!(
            self,
            SensingError::InfeasibleObservation(_)
                | SensingError::LabelingConflict(_)
                | SensingError::Localization(LocalizationError::InfeasibleRanges { .. })
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathLabel {
    /// BS → UE → BS.
    Direct,
    /// BS → UE → RIS1 → BS.
    ViaRis1,
    /// BS → UE → RIS2 → BS.
    ViaRis2,
}

impl PathLabel {
    pub const ALL: [PathLabel; 3] = [PathLabel::Direct, PathLabel::ViaRis1, PathLabel::ViaRis2];

    pub fn index(self) -> usize {
        match self {
            PathLabel::Direct => 0,
            PathLabel::ViaRis1 => 1,
            PathLabel::ViaRis2 => 2,
        }
    }
}

/// Unlabeled three-path observation; index `i` of every array refers to the
/// same received signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingObservation {
    pub times: [f64; 3],
    pub rx_signals: [ComplexVector; 3],
    pub snr_at_bs_db: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathLabeling {
    /// `assignment[i]` is the path of received signal `i`.
    pub assignment: [PathLabel; 3],
    /// `|a_RIS1ᴴx̂ᵢ|`, `|a_RIS2ᴴx̂ᵢ|` per signal.
    pub correlation_scores: [[f64; 2]; 3],
    pub conflict: bool,
}

impl PathLabeling {
    pub fn signal_for(&self, label: PathLabel) -> usize {
        self.assignment
            .iter()
            .position(|&l| l == label)
            .expect("assignment is a bijection")
    }

    /// Times reordered as (t1, t2, t3).
    pub fn labeled_times(&self, obs: &SensingObservation) -> [f64; 3] {
        PathLabel::ALL.map(|l| obs.times[self.signal_for(l)])
    }
}

/// Unit-norm spherical-wave steering vector, element `m` ∝ exp(−j2π‖s_m − p‖/λ).
pub fn steering_vector(
    geometry: &ArrayGeometry,
    target: Position3D,
    cfg: &RadioConfig,
) -> Result<ComplexVector, ChannelError> {
    if geometry.center() == target {
        return Err(ChannelError::ZeroDistance(geometry.center(), target));
    }
    let k = 2.0 * std::f64::consts::PI / cfg.wavelength();
    let elements = geometry.element_positions();
    let scale = 1.0 / (elements.len() as f64).sqrt();
    Ok(ComplexVector::from_fn(elements.len(), |m| {
        Complex64::from_polar(scale, -k * elements[m].distance(&target))
    }))
}

/// Noiseless propagation times of the three paths.
pub fn noiseless_toa(anchors: &AnchorSet, p: &Position3D) -> [f64; 3] {
    let d = anchors.ranges_to(p);
    let d_r1 = anchors.ris1().distance(&anchors.bs());
    let d_r2 = anchors.ris2().distance(&anchors.bs());
    [
        2.0 * d.d1 / SPEED_OF_LIGHT,
        (d.d1 + d.d2 + d_r1) / SPEED_OF_LIGHT,
        (d.d1 + d.d3 + d_r2) / SPEED_OF_LIGHT,
    ]
}

/// Noisy times (t1, t2, t3) with independent errors of standard deviation
/// `tau_scale·|h|/√snr`.
pub fn toa_model(
    anchors: &AnchorSet,
    p: &Position3D,
    h: Complex64,
    snr: f64,
    tau_scale: f64,
    rng: &mut SeededRng,
) -> Result<[f64; 3], SensingError> {
    if !(snr > 0.0) {
        return Err(SensingError::InvalidSnr(snr));
    }
    let sigma = tau_scale * h.norm() / snr.sqrt();
    Ok(noiseless_toa(anchors, p).map(|t| t + sigma * rng.standard_normal()))
}

/// Inverts the ToA equations; a non-positive derived range is infeasible.
pub fn ranges_from_toa(t: [f64; 3], anchors: &AnchorSet) -> Result<RangeTriple, SensingError> {
    if !(t.iter().all(|x| x.is_finite()) && t[0] > 0.0) {
        return Err(SensingError::InfeasibleObservation(format!("t1 = {} s", t[0])));
    }
    let d1 = SPEED_OF_LIGHT * t[0] / 2.0;
    let d2 = SPEED_OF_LIGHT * t[1] - d1 - anchors.ris1().distance(&anchors.bs());
    let d3 = SPEED_OF_LIGHT * t[2] - d1 - anchors.ris2().distance(&anchors.bs());
    if d2 <= 0.0 || d3 <= 0.0 {
        return Err(SensingError::InfeasibleObservation(format!(
            "derived ranges d2 = {d2:.3} m, d3 = {d3:.3} m"
        )));
    }
    Ok(RangeTriple::new(d1, d2, d3)?)
}

fn argmax(v: [f64; 3]) -> usize {
    (0..3).fold(0, |best, i| if v[i] > v[best] { i } else { best })
}

/// Labels the three signals: the one best matching RIS1 is Path2, the one best
/// matching RIS2 Path3, the leftover is the direct path.
pub fn identify_paths(
    obs: &SensingObservation,
    sv_ris1: &ComplexVector,
    sv_ris2: &ComplexVector,
) -> Result<PathLabeling, SensingError> {
    let mut scores = [[0.0; 2]; 3];
    for (i, x) in obs.rx_signals.iter().enumerate() {
        scores[i] = [sv_ris1.dot_h(x)?.norm(), sv_ris2.dot_h(x)?.norm()];
    }
    let i2 = argmax(scores.map(|s| s[0]));
    let i3 = argmax(scores.map(|s| s[1]));
    let (i2, i3, conflict) = if i2 != i3 {
        (i2, i3, false)
    } else {
        let mut best = (0, 1, f64::NEG_INFINITY);
        for a in 0..3 {
            for b in (0..3).filter(|&b| b != a) {
                let total = scores[a][0] + scores[b][1];
                if total > best.2 {
                    best = (a, b, total);
                }
            }
        }
        log::debug!("labeling conflict on signal {i2}; resolved to ({}, {})", best.0, best.1);
        (best.0, best.1, true)
    };
    let mut assignment = [PathLabel::Direct; 3];
    assignment[i2] = PathLabel::ViaRis1;
    assignment[i3] = PathLabel::ViaRis2;
    Ok(PathLabeling {
        assignment,
        correlation_scores: scores,
        conflict,
    })
}

/// Observation plus the ground-truth path of every received signal.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedObservation {
    pub observation: SensingObservation,
    pub truth: [PathLabel; 3],
}

/// Per-path channel coefficients from a drawn sensing cascade, combined with
/// the wide beam. Under `ToaGain::Faded` the magnitude is relative to the
/// LoS-only cascade; otherwise only the phase is kept.
fn path_gains(scenario: &Scenario, ue: Position3D, rng: &mut SeededRng) -> Result<[Complex64; 3], SensingError> {
    let theta_ue = draw_user_reflection(scenario.config.ue_reflection_amplitude, rng);
    let draw = |radio: &RadioConfig, rng: &mut SeededRng| -> Result<[Complex64; 3], SensingError> {
        let c = sensing_cascade(
            &scenario.bs_sensing_array,
            &scenario.ris_arrays,
            &scenario.static_ris,
            ue,
            theta_ue,
            radio,
            rng,
        )?;
        let w = scenario.w_wide.as_vector();
        Ok([c.h_bu.dot(w)?, c.h_urb[0].dot(w)?, c.h_urb[1].dot(w)?])
    };
    let faded = draw(&scenario.radio, rng)?;
    Ok(match scenario.config.toa_gain {
        ToaGain::Normalized => faded.map(|z| if z.norm() > 0.0 { z / z.norm() } else { Complex64::new(1.0, 0.0) }),
        ToaGain::Faded => {
            let los_radio = RadioConfig {
                rice_factor: f64::INFINITY,
                ..scenario.radio.clone()
            };
            let los = draw(&los_radio, &mut rng.fork(u64::MAX))?;
            let mut out = [Complex64::new(0.0, 0.0); 3];
            for k in 0..3 {
                out[k] = if los[k].norm() > 0.0 { faded[k] / los[k].norm() } else { faded[k] };
            }
            out
        }
    })
}

/// Draws a complete unlabeled observation for a UE at `ue`.
pub fn generate_observation(
    scenario: &Scenario,
    ue: Position3D,
    snr: f64,
    rng: &mut SeededRng,
) -> Result<GeneratedObservation, SensingError> {
    if !(snr > 0.0) {
        return Err(SensingError::InvalidSnr(snr));
    }
    let gains = path_gains(scenario, ue, rng)?;
    let anchors = &scenario.anchors;
    let tau = scenario.config.tau_scale_s;
    let noiseless = noiseless_toa(anchors, &ue);
    let mut times = [0.0; 3];
    for k in 0..3 {
        times[k] = noiseless[k] + tau * gains[k].norm() / snr.sqrt() * rng.standard_normal();
    }

    let geom = &scenario.bs_sensing_array;
    let directions = [
        steering_vector(geom, ue, &scenario.radio)?,
        scenario.sv_ris[0].clone(),
        scenario.sv_ris[1].clone(),
    ];
    let amplitude = (geom.element_count() as f64).sqrt();
    let noise_var = 1.0 / snr;
    let mut signals = Vec::with_capacity(3);
    for (a, h) in directions.iter().zip(gains) {
        let phase = if h.norm() > 0.0 { h / h.norm() } else { Complex64::new(1.0, 0.0) };
        let mut x = a.scale(phase * amplitude);
        for m in 0..x.len() {
            x[m] += sample_complex_gaussian(rng, noise_var)?;
        }
        signals.push(x);
    }

    let mut order = [0usize, 1, 2];
    order.shuffle(rng);
    let snr_db = 10.0 * snr.log10();
    Ok(GeneratedObservation {
        observation: SensingObservation {
            times: order.map(|k| times[k]),
            rx_signals: order.map(|k| signals[k].clone()),
            snr_at_bs_db: [snr_db; 3],
        },
        truth: order.map(|k| PathLabel::ALL[k]),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingOutcome {
    pub estimate: PositionEstimate,
    pub labeling: PathLabeling,
    pub ranges: RangeTriple,
    pub labeling_correct: bool,
}

/// Full sensing cycle: observation → labeling → ranges → closed form.
pub fn sense_and_locate(
    scenario: &Scenario,
    ue: Position3D,
    reported_height: f64,
    snr: f64,
    rng: &mut SeededRng,
) -> Result<SensingOutcome, SensingError> {
    let generated = generate_observation(scenario, ue, snr, rng)?;
    locate_observation(scenario, &generated, reported_height)
}

pub fn locate_observation(
    scenario: &Scenario,
    generated: &GeneratedObservation,
    reported_height: f64,
) -> Result<SensingOutcome, SensingError> {
    let obs = &generated.observation;
    let labeling = identify_paths(obs, &scenario.sv_ris[0], &scenario.sv_ris[1])?;
    if labeling.conflict {
        return Err(SensingError::LabelingConflict(labeling.signal_for(PathLabel::ViaRis1)));
    }
    let ranges = ranges_from_toa(labeling.labeled_times(obs), &scenario.anchors)?;
    let estimate = solve_closed_form(&scenario.anchors, &ranges, reported_height)?;
    Ok(SensingOutcome {
        labeling_correct: labeling.assignment == generated.truth,
        estimate,
        labeling,
        ranges,
    })
}
