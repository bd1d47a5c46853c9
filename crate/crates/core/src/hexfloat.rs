//! Bit-exact text encoding for f64 values.
//!
//! Floats are written as the 16-hex-digit IEEE-754 bit pattern, so files
//! round-trip doubles exactly (including signed zeros and subnormals).

/// Encode as a fixed-width lowercase hex bit pattern, e.g. 1.0 → "3ff0000000000000".
pub fn encode(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

/// Decode a 16-hex-digit bit pattern.
pub fn decode(s: &str) -> Option<f64> {
    if s.len() != 16 {
        return None;
    }
    u64::from_str_radix(s, 16).ok().map(f64::from_bits)
}
