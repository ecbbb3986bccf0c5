//! Simulation engine for RIS-assisted integrated sensing and communication:
//! channel synthesis, beamforming, three-path ToA/AoA sensing, closed-form
//! trilateration, the frame protocol, BER measurement and Monte Carlo
//! success-rate analysis.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamforming;
pub mod channel;
pub mod numerics;
pub mod localization;
pub mod protocol;
pub mod modem;
pub mod scenario;
pub mod sensing;
pub mod metrics;
pub mod montecarlo;
pub mod experiments;
