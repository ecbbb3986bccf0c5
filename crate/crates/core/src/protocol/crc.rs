//! CRC-8, polynomial 0x07, init 0x00, MSB-first, no reflection, no final xor
//! (the CRC-8/SMBUS parameter set).

pub const POLYNOMIAL: u8 = 0x07;

/// CRC over a bit sequence, most significant bit first.
pub fn crc8(bits: &[bool]) -> u8 {
    let mut crc = 0u8;
    for &bit in bits {
        let top = (crc & 0x80 != 0) ^ bit;
        crc <<= 1;
        if top {
            crc ^= POLYNOMIAL;
        }
    }
    crc
}

/// CRC over whole bytes.
pub fn crc8_bytes(bytes: &[u8]) -> u8 {
    let mut crc = 0u8;
    for &b in bytes {
        crc ^= b;
        for _ in 0..8 {
            crc = if crc & 0x80 != 0 { (crc << 1) ^ POLYNOMIAL } else { crc << 1 };
        }
    }
    crc
}

/// Unpacks the low `width` bits of `value`, MSB first.
pub fn to_bits(value: u64, width: usize) -> Vec<bool> {
    (0..width).rev().map(|i| (value >> i) & 1 == 1).collect()
}

pub fn from_bits(bits: &[bool]) -> u64 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | u64::from(b))
}
