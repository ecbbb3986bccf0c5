//! Parallel Monte Carlo over SNR points. Trial `i` always uses RNG stream `i`,
//! so every SNR point sees the same UE positions and results do not depend on
//! thread scheduling.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::beamforming::{alternate_optimize, noise_power, BeamformingError};
use crate::channel::{rice_channel, ArrayGeometry, ChannelError, ChannelRealization, Position3D};
use crate::metrics::{
    isac_error_probability, isac_success_rate_at, median_error, mse, sensing_success_rate, wilson_interval,
    IsacErrorModel, MetricsError, TrialRecord,
};
use crate::modem::{count_bit_errors, theoretical_ber, transmit, BerChannel, ModScheme, ModemError};
use crate::numerics::{db_to_linear, ComplexVector, SeededRng};
use crate::protocol::frame::{
    decode_response_frame, encode_response_frame, encode_sensing_frame, FrameError, ResponseFrame, SensingFrame,
};
use crate::scenario::{CommChannel, Scenario};
use crate::sensing::{sense_and_locate, SensingError};

/// Offsets the master seed for the communication draws so they never share a
/// stream with sensing.
const COMM_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;
const ALTERNATING_ITERATIONS: usize = 3;

#[derive(Debug, Error)]
pub enum MonteCarloError {
    #[error("n_trials must be positive")]
    NoTrials,
    #[error("no SNR points given")]
    NoSnrPoints,
    #[error("SNR {0} dB is not finite")]
    InvalidSnr(f64),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Beamforming(#[from] BeamformingError),
    #[error(transparent)]
    Modem(#[from] ModemError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Uniform draw from the scenario's UE region.
pub fn draw_ue_position(scenario: &Scenario, rng: &mut SeededRng) -> Position3D {
    let c = &scenario.config;
    Position3D::new(
        rng.uniform(c.ue_region_x[0], c.ue_region_x[1]),
        rng.uniform(c.ue_region_y[0], c.ue_region_y[1]),
        rng.uniform(c.ue_region_z[0], c.ue_region_z[1]),
    )
}

/// Height as the BS sees it after the response-frame round trip.
pub fn reported_height(scenario: &Scenario, ue: &Position3D) -> Result<f64, FrameError> {
    let frame = ResponseFrame {
        user_id: scenario.config.user_id,
        permission: true,
        height_m: ue.z,
    };
    Ok(decode_response_frame(&encode_response_frame(&frame)?)?.height_m)
}

/// Draws a Rice-faded realization for the full BS array and runs the
/// alternating active/passive optimization; returns the link SNR.
pub fn link_budget_gamma(scenario: &Scenario, ue: Position3D, rng: &mut SeededRng) -> Result<f64, MonteCarloError> {
    let radio = &scenario.radio;
    let ue_geom = ArrayGeometry::point(ue);
    let direct = rice_channel(&scenario.bs_array, &ue_geom, radio, rng)?.row(0);
    let mut g_bs_ris = Vec::with_capacity(scenario.ris_arrays.len());
    let mut f_ris_ue = Vec::with_capacity(scenario.ris_arrays.len());
    for ris in &scenario.ris_arrays {
        g_bs_ris.push(rice_channel(&scenario.bs_array, ris, radio, rng)?);
        f_ris_ue.push(rice_channel(ris, &ue_geom, radio, rng)?.row(0));
    }
    let realization = ChannelRealization {
        h_los: direct.as_column(),
        g_bs_ris,
        f_ris_ue,
        h_bu_cascade: ComplexVector::zeros(0),
        h_urb_cascade: Vec::new(),
        theta_ue: num_complex::Complex64::new(1.0, 0.0),
    };
    let result = alternate_optimize(&realization, ALTERNATING_ITERATIONS)?;
    let gain = *result.gains.last().expect("at least one iteration");
    Ok(radio.tx_power_w * gain / noise_power(radio)?)
}

fn packet_error_analytic(gamma: f64, bits: usize) -> Result<f64, ModemError> {
    let ber = theoretical_ber(ModScheme::Bpsk, gamma)?;
    Ok(1.0 - (1.0 - ber).powi(bits as i32))
}

/// One TDD cycle: sense and locate, then send one encoded frame.
pub fn run_trial(scenario: &Scenario, snr_db: f64, trial: u64, master_seed: u64) -> Result<TrialRecord, MonteCarloError> {
    let snr = db_to_linear(snr_db);
    let mut rng = SeededRng::new(master_seed, trial);
    let ue = draw_ue_position(scenario, &mut rng);
    let height = reported_height(scenario, &ue)?;

    let (estimated_position, loc_error, labeling_correct) = match sense_and_locate(scenario, ue, height, snr, &mut rng) {
        Ok(out) => (Some(out.estimate.p_hat), out.estimate.p_hat.distance(&ue), out.labeling_correct),
        Err(e) if e.is_trial_failure() => {
            log::trace!("trial {trial} at {snr_db} dB failed: {e}");
            (None, f64::INFINITY, false)
        }
        Err(e) => return Err(e.into()),
    };

    let mut comm_rng = SeededRng::new(master_seed ^ COMM_SEED_SALT, trial);
    let (gamma, channel) = match scenario.config.comm_channel {
        CommChannel::LinkBudget => (link_budget_gamma(scenario, ue, &mut comm_rng)?, BerChannel::Fixed),
        CommChannel::Fixed => (snr, BerChannel::Fixed),
        CommChannel::Rice => (
            snr,
            BerChannel::Rice {
                k_factor: scenario.radio.rice_factor,
            },
        ),
    };
    let frame = encode_sensing_frame(&SensingFrame::new(scenario.config.user_id, (trial % 128) as u8))?;
    let bits = frame.bits();
    let received = transmit(&bits, ModScheme::Bpsk, gamma, channel, &mut comm_rng)?;
    let bit_errors = count_bit_errors(&bits, &received);

    let loc_success = loc_error <= scenario.eps_lth();
    Ok(TrialRecord {
        trial,
        true_position: ue,
        estimated_position,
        loc_error,
        loc_success,
        labeling_correct,
        comm_gamma: gamma,
        bits_sent: bits.len() as u64,
        bit_errors,
        isac_success: loc_success && bit_errors == 0,
        packet_error_analytic: packet_error_analytic(gamma, bits.len())?,
    })
}

pub fn run_trials(
    scenario: &Scenario,
    snr_db: f64,
    n_trials: u64,
    master_seed: u64,
) -> Result<Vec<TrialRecord>, MonteCarloError> {
    if n_trials == 0 {
        return Err(MonteCarloError::NoTrials);
    }
    if !snr_db.is_finite() {
        return Err(MonteCarloError::InvalidSnr(snr_db));
    }
    (0..n_trials)
        .into_par_iter()
        .map(|i| run_trial(scenario, snr_db, i, master_seed))
        .collect()
}

/// One output row per (SNR, threshold).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub threshold_m: f64,
    pub n_trials: u64,
    pub sr_sens: f64,
    pub sr_isac_sim: f64,
    pub sr_isac_analytic: f64,
    pub ber_sim: f64,
    pub ber_theory: f64,
    /// Wilson 95% interval of `sr_isac_sim`.
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Localization summary per SNR point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizeRow {
    pub snr_db: f64,
    pub n_trials: u64,
    pub threshold_m: f64,
    pub sr_sens: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub median_error_m: f64,
    pub mse_m2: f64,
    /// MSE over the trials that produced an estimate.
    pub mse_feasible_m2: f64,
    pub failures: u64,
    pub labeling_accuracy: f64,
}

pub fn summarize_isac(snr_db: f64, records: &[TrialRecord], thresholds: &[f64]) -> Result<Vec<SweepRow>, MonteCarloError> {
    let n = records.len() as u64;
    if n == 0 {
        return Err(MonteCarloError::NoTrials);
    }
    let bits: u64 = records.iter().map(|r| r.bits_sent).sum();
    let errors: u64 = records.iter().map(|r| r.bit_errors).sum();
    let ber_theory = records
        .iter()
        .map(|r| theoretical_ber(ModScheme::Bpsk, r.comm_gamma))
        .sum::<Result<f64, _>>()?
        / n as f64;
    let p_comm = records.iter().map(|r| r.packet_error_analytic).sum::<f64>() / n as f64;
    thresholds
        .iter()
        .map(|&eps| {
            let sr_sens = sensing_success_rate(records, eps)?;
            let sr_isac_sim = isac_success_rate_at(records, eps)?;
            let model = IsacErrorModel::new(1.0 - sr_sens, p_comm.clamp(0.0, 1.0))?;
            let hits = (sr_isac_sim * n as f64).round() as u64;
            let (ci_low, ci_high) = wilson_interval(hits, n)?;
            Ok(SweepRow {
                snr_db,
                threshold_m: eps,
                n_trials: n,
                sr_sens,
                sr_isac_sim,
                sr_isac_analytic: 1.0 - isac_error_probability(&model),
                ber_sim: errors as f64 / bits as f64,
                ber_theory,
                ci_low,
                ci_high,
            })
        })
        .collect()
}

pub fn summarize_localization(
    snr_db: f64,
    records: &[TrialRecord],
    threshold_m: f64,
) -> Result<LocalizeRow, MonteCarloError> {
    let n = records.len() as u64;
    let sr_sens = sensing_success_rate(records, threshold_m)?;
    let hits = records.iter().filter(|r| r.loc_success_at(threshold_m)).count() as u64;
    let (ci_low, ci_high) = wilson_interval(hits, n)?;
    let feasible: Vec<TrialRecord> = records.iter().filter(|r| r.loc_error.is_finite()).cloned().collect();
    Ok(LocalizeRow {
        snr_db,
        n_trials: n,
        threshold_m,
        sr_sens,
        ci_low,
        ci_high,
        median_error_m: median_error(records)?,
        mse_m2: mse(records)?,
        mse_feasible_m2: if feasible.is_empty() { f64::NAN } else { mse(&feasible)? },
        failures: n - feasible.len() as u64,
        labeling_accuracy: records.iter().filter(|r| r.labeling_correct).count() as f64 / n as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub rows: Vec<SweepRow>,
    pub localization: Vec<LocalizeRow>,
    pub records: Vec<(f64, Vec<TrialRecord>)>,
}

/// Runs `n_trials` cycles at every SNR point and aggregates them for every
/// threshold. Deterministic in `master_seed`.
pub fn run_monte_carlo(
    scenario: &Scenario,
    snr_points_db: &[f64],
    thresholds_m: &[f64],
    n_trials: u64,
    master_seed: u64,
) -> Result<MonteCarloResult, MonteCarloError> {
    if snr_points_db.is_empty() {
        return Err(MonteCarloError::NoSnrPoints);
    }
    if n_trials == 0 {
        return Err(MonteCarloError::NoTrials);
    }
    if let Some(&bad) = thresholds_m.iter().find(|t| !(**t > 0.0)) {
        return Err(MetricsError::InvalidThreshold(bad).into());
    }
    if let Some(&bad) = snr_points_db.iter().find(|s| !s.is_finite()) {
        return Err(MonteCarloError::InvalidSnr(bad));
    }
    let mut result = MonteCarloResult {
        rows: Vec::new(),
        localization: Vec::new(),
        records: Vec::new(),
    };
    for &snr_db in snr_points_db {
        let records = run_trials(scenario, snr_db, n_trials, master_seed)?;
        log::info!("{snr_db} dB: {n_trials} trials done");
        result.rows.extend(summarize_isac(snr_db, &records, thresholds_m)?);
        result
            .localization
            .push(summarize_localization(snr_db, &records, scenario.eps_lth())?);
        result.records.push((snr_db, records));
    }
    Ok(result)
}

/// Serializes rows as CSV with a header line.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;

    fn scenario_with(f: impl FnOnce(&mut ScenarioConfig)) -> Scenario {
        let mut c = ScenarioConfig::default();
        f(&mut c);
        Scenario::from_config(c).unwrap()
    }

    #[test]
    fn noiseless_single_trial_succeeds() {
        let s = scenario_with(|c| c.tau_scale_s = 1e-300);
        let r = run_monte_carlo(&s, &[200.0], &[1.5], 1, 7).unwrap();
        assert_eq!(r.rows[0].sr_sens, 1.0);
        assert_eq!(r.rows[0].sr_isac_sim, 1.0);
        assert!(r.records[0].1[0].loc_error < 1e-6);
    }

    #[test]
    fn deterministic_csv() {
        let s = Scenario::default();
        let a = run_monte_carlo(&s, &[10.0, 20.0], &[1.0, 1.5], 300, 42).unwrap();
        let b = run_monte_carlo(&s, &[10.0, 20.0], &[1.0, 1.5], 300, 42).unwrap();
        assert_eq!(to_csv(&a.rows).unwrap(), to_csv(&b.rows).unwrap());
        assert_eq!(to_csv(&a.localization).unwrap(), to_csv(&b.localization).unwrap());
        let header = to_csv(&a.rows).unwrap().lines().next().unwrap().to_string();
        assert_eq!(
            header,
            "snr_db,threshold_m,n_trials,sr_sens,sr_isac_sim,sr_isac_analytic,ber_sim,ber_theory,ci_low,ci_high"
        );
    }

    #[test]
    fn common_positions_across_snr() {
        let s = Scenario::default();
        let a = run_trial(&s, 10.0, 17, 3).unwrap();
        let b = run_trial(&s, 40.0, 17, 3).unwrap();
        assert_eq!(a.true_position, b.true_position);
        assert_eq!(a.comm_gamma, b.comm_gamma);
    }

    #[test]
    fn link_budget_is_strong() {
        let s = Scenario::default();
        let mut rng = SeededRng::new(1, 0);
        for _ in 0..20 {
            let ue = draw_ue_position(&s, &mut rng);
            let g = link_budget_gamma(&s, ue, &mut rng).unwrap();
            assert!(10.0 * g.log10() > 15.0, "{}", 10.0 * g.log10());
        }
    }

    #[test]
    fn curves_monotone_in_threshold_and_snr() {
        let s = Scenario::default();
        let r = run_monte_carlo(&s, &[10.0, 20.0, 40.0], &[0.5, 1.0, 1.5, 3.0], 400, 9).unwrap();
        for snr in [10.0, 20.0, 40.0] {
            let rows: Vec<_> = r.rows.iter().filter(|x| x.snr_db == snr).collect();
            for w in rows.windows(2) {
                assert!(w[0].sr_sens <= w[1].sr_sens);
                assert!(w[0].sr_isac_sim <= w[1].sr_isac_sim);
            }
        }
        for eps in [0.5, 1.0, 1.5, 3.0] {
            let rows: Vec<_> = r.rows.iter().filter(|x| x.threshold_m == eps).collect();
            for w in rows.windows(2) {
                assert!(w[1].sr_sens + 0.02 >= w[0].sr_sens);
            }
        }
        let med: Vec<f64> = r.localization.iter().map(|l| l.median_error_m).collect();
        assert!(med[0] >= med[1] && med[1] >= med[2], "{med:?}");
    }

    #[test]
    fn independent_failures_factorize() {
        // fixed position, fixed-γ link: sensing and packet failures come from
        // separate streams, so the joint rate approaches the product
        let s = scenario_with(|c| {
            c.comm_channel = CommChannel::Fixed;
            c.tau_scale_s = 2e-9;
            c.ue_region_x = [20.0, 20.0];
            c.ue_region_y = [20.0, 20.0];
            c.ue_region_z = [18.0, 18.0];
        });
        let n = 4000;
        let recs = run_trials(&s, 2.0, n, 5).unwrap();
        let loc = sensing_success_rate(&recs, 1.5).unwrap();
        let pkt = recs.iter().filter(|r| r.packet_ok()).count() as f64 / n as f64;
        let joint = isac_success_rate_at(&recs, 1.5).unwrap();
        assert!(loc > 0.05 && loc < 0.98 && pkt > 0.05 && pkt < 0.98, "{loc} {pkt}");
        let sigma = (loc * pkt * (1.0 - loc * pkt) / n as f64).sqrt();
        assert!((joint - loc * pkt).abs() < 4.0 * sigma, "{joint} vs {}", loc * pkt);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = Scenario::default();
        assert!(matches!(run_monte_carlo(&s, &[], &[1.5], 10, 0), Err(MonteCarloError::NoSnrPoints)));
        assert!(matches!(run_monte_carlo(&s, &[10.0], &[1.5], 0, 0), Err(MonteCarloError::NoTrials)));
        assert!(run_monte_carlo(&s, &[10.0], &[0.0], 10, 0).is_err());
        assert!(run_monte_carlo(&s, &[f64::NAN], &[1.5], 10, 0).is_err());
    }
}
