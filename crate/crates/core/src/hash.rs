//! FNV-1a hashing for config provenance stamps.
//!
//! Output files embed a 64-bit FNV-1a hash of the canonical config text so
//! that chained pipeline stages can refuse inputs produced under a different
//! configuration. This is a provenance check, not a security boundary.

use alloc::format;
use alloc::string::String;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over a byte slice.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Hash rendered as 16 lowercase hex digits.
pub fn hex64(h: u64) -> String {
    format!("{h:016x}")
}
