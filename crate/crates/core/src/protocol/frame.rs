//! 40-bit sensing and response frames, MSB-first, CRC over the first 32 bits.
//!
//! Sensing: preamble(5) | user_id(20) | timestamp(7) | crc(8).
//! Response: user_id(20) | permission(1) | height(8) | reserved(3) | crc(8),
//! height in units of 0.1 m (0–25.5 m).

use std::fmt;

use thiserror::Error;

use super::crc::{crc8, from_bits, to_bits};

pub const FRAME_BITS: usize = 40;
pub const PAYLOAD_BITS: usize = 32;
pub const SENSING_PREAMBLE: u8 = 0b10110;
pub const PREAMBLE_BITS: usize = 5;
pub const USER_ID_BITS: usize = 20;
pub const TIMESTAMP_BITS: usize = 7;
pub const HEIGHT_BITS: usize = 8;
/// Height quantum of the response frame, metres.
pub const HEIGHT_STEP_M: f64 = 0.1;
pub const MAX_HEIGHT_M: f64 = 25.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("frame must be exactly {FRAME_BITS} bits, got {0}")]
    WrongLength(usize),
    #[error("CRC mismatch: computed {computed:#04x}, received {received:#04x}")]
    CrcMismatch { computed: u8, received: u8 },
    #[error("preamble {found:#07b} is not the sensing preamble {SENSING_PREAMBLE:#07b}")]
    PreambleMismatch { found: u8 },
    #[error("{field} = {value} does not fit in {bits} bits")]
    FieldOverflow { field: &'static str, value: u64, bits: usize },
    #[error("height {0} m outside the representable range 0–{MAX_HEIGHT_M} m")]
    HeightOutOfRange(f64),
    #[error("malformed hex frame {0:?}: expected 10 hex digits")]
    MalformedHex(String),
}

/// The low 40 bits of a `u64`, bit 39 transmitted first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameBits(u64);

impl FrameBits {
    const MASK: u64 = (1 << FRAME_BITS) - 1;

    pub fn from_bits(bits: &[bool]) -> Result<Self, FrameError> {
        if bits.len() != FRAME_BITS {
            return Err(FrameError::WrongLength(bits.len()));
        }
        Ok(Self(from_bits(bits)))
    }

    pub fn from_hex(hex: &str) -> Result<Self, FrameError> {
        let hex = hex.trim();
        if hex.len() != FRAME_BITS / 4 || !hex.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(FrameError::MalformedHex(hex.to_string()));
        }
        u64::from_str_radix(hex, 16)
            .map(Self)
            .map_err(|_| FrameError::MalformedHex(hex.to_string()))
    }

    pub fn value(&self) -> u64 {
        self.0
    }

    pub fn bits(&self) -> Vec<bool> {
        to_bits(self.0, FRAME_BITS)
    }

    pub fn to_hex(&self) -> String {
        format!("{:010X}", self.0)
    }

    /// Inverts bit `index` (0 = first transmitted).
    pub fn flip(&self, index: usize) -> Self {
        assert!(index < FRAME_BITS, "bit index {index} out of range");
        Self((self.0 ^ (1 << (FRAME_BITS - 1 - index))) & Self::MASK)
    }

    fn payload(&self) -> u64 {
        self.0 >> 8
    }

    fn crc(&self) -> u8 {
        (self.0 & 0xFF) as u8
    }

    fn seal(payload: u64) -> Self {
        let crc = crc8(&to_bits(payload, PAYLOAD_BITS));
        Self((payload << 8) | u64::from(crc))
    }

    fn check_crc(&self) -> Result<u64, FrameError> {
        let payload = self.payload();
        let computed = crc8(&to_bits(payload, PAYLOAD_BITS));
        if computed != self.crc() {
            return Err(FrameError::CrcMismatch {
                computed,
                received: self.crc(),
            });
        }
        Ok(payload)
    }
}

impl fmt::Display for FrameBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

fn fit(field: &'static str, value: u64, bits: usize) -> Result<u64, FrameError> {
    if value >> bits != 0 {
        return Err(FrameError::FieldOverflow { field, value, bits });
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensingFrame {
    pub preamble: u8,
    pub user_id: u32,
    /// Cyclic 7-bit counter.
    pub timestamp: u8,
}

impl SensingFrame {
    pub fn new(user_id: u32, timestamp: u8) -> Self {
        Self {
            preamble: SENSING_PREAMBLE,
            user_id,
            timestamp,
        }
    }
}

pub fn encode_sensing_frame(frame: &SensingFrame) -> Result<FrameBits, FrameError> {
    let preamble = fit("preamble", frame.preamble.into(), PREAMBLE_BITS)?;
    let user = fit("user_id", frame.user_id.into(), USER_ID_BITS)?;
    let ts = fit("timestamp", frame.timestamp.into(), TIMESTAMP_BITS)?;
    let payload = (preamble << (USER_ID_BITS + TIMESTAMP_BITS)) | (user << TIMESTAMP_BITS) | ts;
    Ok(FrameBits::seal(payload))
}

/// CRC is checked before the preamble: a corrupted frame reports a CRC
/// mismatch, an intact frame of another type reports a preamble mismatch.
pub fn decode_sensing_frame(bits: &FrameBits) -> Result<SensingFrame, FrameError> {
    let payload = bits.check_crc()?;
    let preamble = (payload >> (USER_ID_BITS + TIMESTAMP_BITS)) as u8;
    if preamble != SENSING_PREAMBLE {
        return Err(FrameError::PreambleMismatch { found: preamble });
    }
    Ok(SensingFrame {
        preamble,
        user_id: ((payload >> TIMESTAMP_BITS) & ((1 << USER_ID_BITS) - 1)) as u32,
        timestamp: (payload & ((1 << TIMESTAMP_BITS) - 1)) as u8,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseFrame {
    pub user_id: u32,
    pub permission: bool,
    pub height_m: f64,
}

pub fn quantize_height(height_m: f64) -> Result<u8, FrameError> {
    if !(0.0..=MAX_HEIGHT_M + HEIGHT_STEP_M / 2.0).contains(&height_m) {
        return Err(FrameError::HeightOutOfRange(height_m));
    }
    Ok((height_m / HEIGHT_STEP_M).round().min(255.0) as u8)
}

pub fn encode_response_frame(frame: &ResponseFrame) -> Result<FrameBits, FrameError> {
    let user = fit("user_id", frame.user_id.into(), USER_ID_BITS)?;
    let height = u64::from(quantize_height(frame.height_m)?);
    let payload = (user << 12) | (u64::from(frame.permission) << 11) | (height << 3);
    Ok(FrameBits::seal(payload))
}

pub fn decode_response_frame(bits: &FrameBits) -> Result<ResponseFrame, FrameError> {
    let payload = bits.check_crc()?;
    Ok(ResponseFrame {
        user_id: (payload >> 12) as u32,
        permission: (payload >> 11) & 1 == 1,
        height_m: ((payload >> 3) & 0xFF) as f64 * HEIGHT_STEP_M,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;
    use rand::Rng;

    /// Independent reference: builds the frame as a character string and runs
    /// a shift-register CRC over it.
    fn reference_frame(user: u32, ts: u8) -> String {
        let mut s = format!("10110{user:020b}{ts:07b}");
        let mut reg = 0u8;
        for ch in s.chars() {
            let fb = (reg >> 7) ^ u8::from(ch == '1');
            reg <<= 1;
            if fb == 1 {
                reg ^= 0x07;
            }
        }
        s.push_str(&format!("{reg:08b}"));
        s
    }

    fn as_string(bits: &FrameBits) -> String {
        bits.bits().iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    #[test]
    fn zero_payload_matches_reference() {
        let bits = encode_sensing_frame(&SensingFrame::new(0, 0)).unwrap();
        assert_eq!(as_string(&bits), reference_frame(0, 0));
        assert_eq!(bits.bits().len(), FRAME_BITS);
    }

    #[test]
    fn random_frames_round_trip_and_match_reference() {
        let mut rng = SeededRng::new(41, 0);
        for _ in 0..10_000 {
            let f = SensingFrame::new(rng.random_range(0..1 << 20), rng.random_range(0..128));
            let bits = encode_sensing_frame(&f).unwrap();
            assert_eq!(bits.bits().len(), 40);
            assert_eq!(as_string(&bits), reference_frame(f.user_id, f.timestamp));
            assert_eq!(decode_sensing_frame(&bits).unwrap(), f);
            assert_eq!(FrameBits::from_hex(&bits.to_hex()).unwrap(), bits);
        }
    }

    #[test]
    fn every_single_bit_flip_is_a_crc_error() {
        let bits = encode_sensing_frame(&SensingFrame::new(0xABCDE, 0x55)).unwrap();
        for i in 0..FRAME_BITS {
            assert!(matches!(
                decode_sensing_frame(&bits.flip(i)),
                Err(FrameError::CrcMismatch { .. })
            ));
        }
    }

    #[test]
    fn bursts_up_to_eight_bits_are_detected() {
        let bits = encode_sensing_frame(&SensingFrame::new(12345, 99)).unwrap();
        let mut rng = SeededRng::new(42, 0);
        for _ in 0..5000 {
            let len = rng.random_range(1..=8usize);
            let start = rng.random_range(0..=FRAME_BITS - len);
            // burst: first and last bit flipped, interior random
            let mut corrupted = bits.flip(start);
            if len > 1 {
                corrupted = corrupted.flip(start + len - 1);
                for i in start + 1..start + len - 1 {
                    if rng.random::<bool>() {
                        corrupted = corrupted.flip(i);
                    }
                }
            }
            assert!(decode_sensing_frame(&corrupted).is_err());
        }
    }

    #[test]
    fn foreign_preamble_with_valid_crc() {
        let f = SensingFrame {
            preamble: 0b01001,
            user_id: 7,
            timestamp: 3,
        };
        let bits = encode_sensing_frame(&f).unwrap();
        assert_eq!(
            decode_sensing_frame(&bits),
            Err(FrameError::PreambleMismatch { found: 0b01001 })
        );
    }

    #[test]
    fn field_overflow_rejected() {
        assert!(matches!(
            encode_sensing_frame(&SensingFrame::new(1 << 20, 0)),
            Err(FrameError::FieldOverflow { field: "user_id", .. })
        ));
        assert!(encode_sensing_frame(&SensingFrame::new(0, 128)).is_err());
    }

    #[test]
    fn hex_format() {
        let bits = encode_sensing_frame(&SensingFrame::new(1, 1)).unwrap();
        let hex = bits.to_hex();
        assert_eq!(hex.len(), 10);
        assert!(hex.starts_with('B'));
        assert!(FrameBits::from_hex("B0000").is_err());
        assert!(FrameBits::from_hex("B0000000G0").is_err());
        assert!(FrameBits::from_bits(&[true; 39]).is_err());
    }

    #[test]
    fn response_round_trip() {
        let mut rng = SeededRng::new(43, 0);
        for _ in 0..2000 {
            let f = ResponseFrame {
                user_id: rng.random_range(0..1 << 20),
                permission: rng.random(),
                height_m: rng.uniform(0.0, 25.5),
            };
            let back = decode_response_frame(&encode_response_frame(&f).unwrap()).unwrap();
            assert_eq!(back.user_id, f.user_id);
            assert_eq!(back.permission, f.permission);
            assert!((back.height_m - f.height_m).abs() <= HEIGHT_STEP_M / 2.0 + 1e-12);
        }
        let bad = ResponseFrame {
            user_id: 1,
            permission: true,
            height_m: 30.0,
        };
        assert!(matches!(encode_response_frame(&bad), Err(FrameError::HeightOutOfRange(_))));
        let flipped = encode_response_frame(&ResponseFrame { height_m: 1.7, ..bad }).unwrap().flip(3);
        assert!(matches!(decode_response_frame(&flipped), Err(FrameError::CrcMismatch { .. })));
    }
}
