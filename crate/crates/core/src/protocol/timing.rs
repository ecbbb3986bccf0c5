//! TDD cycle schedule and sensing timing/energy budget, in exact arithmetic.

use std::time::Duration;

use num_rational::Ratio;
use thiserror::Error;

pub type Rational = Ratio<i64>;

const JOULES_PER_KWH: i64 = 3_600_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimingError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("slots ({slots:?}) exceed the cycle period ({cycle:?})")]
    Overbooked { slots: Duration, cycle: Duration },
    #[error("{0} is not representable as an exact ratio")]
    NotRepresentable(f64),
}

/// One TDD cycle: sensing slot, guard, response slot, guard, communication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleSchedule {
    pub cycle_period: Duration,
    pub sensing_slot: Duration,
    pub response_slot: Duration,
    pub propagation_guard: Duration,
}

impl Default for CycleSchedule {
    fn default() -> Self {
        Self {
            cycle_period: Duration::from_millis(500),
            sensing_slot: Duration::from_micros(20),
            response_slot: Duration::from_micros(20),
            propagation_guard: Duration::from_nanos(5_300),
        }
    }
}

impl CycleSchedule {
    pub fn from_seconds(cycle: f64, sensing: f64, response: f64, guard: f64) -> Result<Self, TimingError> {
        let d = |name: &'static str, v: f64, allow_zero: bool| {
            if !(v.is_finite() && (v > 0.0 || (allow_zero && v == 0.0))) {
                return Err(TimingError::NonPositive(name));
            }
            Ok(Duration::from_nanos((v * 1e9).round() as u64))
        };
        let s = Self {
            cycle_period: d("cycle_period_s", cycle, false)?,
            sensing_slot: d("sensing_slot_s", sensing, false)?,
            response_slot: d("response_slot_s", response, false)?,
            propagation_guard: d("propagation_guard_s", guard, true)?,
        };
        s.communication_window()?;
        Ok(s)
    }

    /// Cycle minus both slots and both guards.
    pub fn communication_window(&self) -> Result<Duration, TimingError> {
        let used = self.sensing_slot + self.response_slot + self.propagation_guard * 2;
        self.cycle_period
            .checked_sub(used)
            .ok_or(TimingError::Overbooked {
                slots: used,
                cycle: self.cycle_period,
            })
    }

    pub fn slots(&self) -> Result<[Duration; 5], TimingError> {
        Ok([
            self.sensing_slot,
            self.propagation_guard,
            self.response_slot,
            self.propagation_guard,
            self.communication_window()?,
        ])
    }
}

/// Converts a float that is an exact decimal of modest precision to a ratio.
pub fn rational(v: f64) -> Result<Rational, TimingError> {
    for scale in [1i64, 1_000, 1_000_000, 1_000_000_000] {
        let scaled = v * scale as f64;
        if scaled.is_finite() && scaled.abs() < 9.0e15 && scaled == scaled.round() {
            return Ok(Rational::new(scaled as i64, scale));
        }
    }
    Rational::approximate_float(v).ok_or(TimingError::NotRepresentable(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkParams {
    pub frame_bits: i64,
    pub bandwidth_hz: i64,
    pub bits_per_symbol: i64,
    pub tx_power_w: Rational,
    /// Frames per cycle that the BS transmits (sensing + response).
    pub slots_per_cycle: i64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            frame_bits: 40,
            bandwidth_hz: 500_000,
            bits_per_symbol: 4,
            tx_power_w: Rational::from_integer(10),
            slots_per_cycle: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimingBudget {
    pub bit_rate_bps: Rational,
    pub frame_time_s: Rational,
    pub sensing_time_s: Rational,
    pub energy_per_cycle_j: Rational,
    pub energy_per_cycle_kwh: Rational,
}

/// One symbol per hertz: bit rate = bandwidth × bits/symbol.
pub fn timing_budget(link: &LinkParams) -> Result<TimingBudget, TimingError> {
    if link.bandwidth_hz <= 0 || link.bits_per_symbol <= 0 {
        return Err(TimingError::NonPositive("bit rate"));
    }
    if link.frame_bits <= 0 || link.slots_per_cycle <= 0 {
        return Err(TimingError::NonPositive("frame size"));
    }
    let bit_rate = Rational::from_integer(link.bandwidth_hz * link.bits_per_symbol);
    let frame_time = Rational::from_integer(link.frame_bits) / bit_rate;
    let sensing_time = frame_time * link.slots_per_cycle;
    let energy = link.tx_power_w * sensing_time;
    Ok(TimingBudget {
        bit_rate_bps: bit_rate,
        frame_time_s: frame_time,
        sensing_time_s: sensing_time,
        energy_per_cycle_j: energy,
        energy_per_cycle_kwh: energy / JOULES_PER_KWH,
    })
}

pub fn to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}
