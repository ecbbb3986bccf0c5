//! Frame codec, CRC, handshake state machine and TDD timing.

pub mod crc;
pub mod frame;
pub mod handshake;
pub mod timing;

pub use crc::crc8;
pub use frame::{
    decode_response_frame, decode_sensing_frame, encode_response_frame, encode_sensing_frame, FrameBits,
    FrameError, ResponseFrame, SensingFrame,
};
pub use handshake::{step_handshake, HandshakeEvent, HandshakeState, Phase, ProtocolViolation};
pub use timing::{timing_budget, CycleSchedule, LinkParams, TimingBudget};
