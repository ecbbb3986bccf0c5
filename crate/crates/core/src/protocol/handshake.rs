//! Sensing/communication handshake run by the BS once per TDD cycle.
//!
//! The BS sends a sensing frame, the user answers with its height, the BS
//! switches to a directive beam and keeps it while the user keeps answering.
//! Either side stopping ends the session.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    SensingSent,
    ResponseReceived,
    Communicating,
    Terminating,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HandshakeEvent {
    SensingFrameSent,
    ResponseReceived { height_m: f64 },
    CycleTick,
    BsStopsSensing,
    UeStopsResponding,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("protocol violation: {event:?} in state {phase:?}")]
pub struct ProtocolViolation {
    pub phase: Phase,
    pub event: HandshakeEvent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandshakeState {
    pub phase: Phase,
    pub last_height: Option<f64>,
    /// 7-bit counter carried in the sensing frame.
    pub last_timestamp: u8,
    /// A response arrived since the last sensing frame of this cycle.
    pub fresh_response: bool,
}

impl Default for HandshakeState {
    fn default() -> Self {
        Self {
            phase: Phase::Idle,
            last_height: None,
            last_timestamp: 0,
            fresh_response: false,
        }
    }
}

pub fn step_handshake(state: HandshakeState, event: HandshakeEvent) -> Result<HandshakeState, ProtocolViolation> {
    use HandshakeEvent as E;
    use Phase as P;
    let next_ts = (state.last_timestamp + 1) & 0x7F;
    let next = match (state.phase, event) {
        (P::Idle, E::SensingFrameSent) => HandshakeState {
            phase: P::SensingSent,
            last_timestamp: next_ts,
            fresh_response: false,
            ..state
        },
        (P::SensingSent, E::ResponseReceived { height_m }) => HandshakeState {
            phase: P::ResponseReceived,
            last_height: Some(height_m),
            fresh_response: true,
            ..state
        },
        // no answer within the cycle
        (P::SensingSent, E::CycleTick) => HandshakeState {
            phase: P::Idle,
            ..state
        },
        (P::ResponseReceived, E::CycleTick) => HandshakeState {
            phase: P::Communicating,
            ..state
        },
        (P::Communicating, E::SensingFrameSent) => HandshakeState {
            last_timestamp: next_ts,
            fresh_response: false,
            ..state
        },
        (P::Communicating, E::ResponseReceived { height_m }) => HandshakeState {
            last_height: Some(height_m),
            fresh_response: true,
            ..state
        },
        (P::Communicating, E::CycleTick) if state.fresh_response => state,
        (P::Communicating, E::CycleTick) => HandshakeState {
            phase: P::Terminating,
            ..state
        },
        (P::ResponseReceived | P::Communicating, E::UeStopsResponding | E::BsStopsSensing) => {
            HandshakeState {
                phase: P::Terminating,
                ..state
            }
        }
        (P::Terminating, E::CycleTick) => HandshakeState {
            phase: P::Idle,
            fresh_response: false,
            ..state
        },
        (phase, event) => return Err(ProtocolViolation { phase, event }),
    };
    Ok(next)
}
