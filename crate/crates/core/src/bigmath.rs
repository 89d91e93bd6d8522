//! Exact wide-integer helpers.

use num_bigint::BigUint;
use num_traits::ToPrimitive;

/// `floor(a * b / c)`, exact for any operands that fit the result.
pub(crate) fn mul_div_floor(a: u128, b: u128, c: u128) -> u128 {
    assert!(c != 0, "division by zero");
    match a.checked_mul(b) {
        Some(p) => p / c,
        None => (BigUint::from(a) * BigUint::from(b) / BigUint::from(c))
            .to_u128()
            .expect("quotient overflows u128"),
    }
}

/// `floor(2^256 * num / den)` as a 256-bit big-endian bound, or `None` when
/// the ratio is at least one (every 256-bit value lies below it).
pub(crate) fn scaled_bound(num: &BigUint, den: &BigUint) -> Option<[u8; 32]> {
    if num >= den {
        return None;
    }
    let q: BigUint = (num << 256u32) / den;
    let bytes = q.to_bytes_be();
    let mut out = [0u8; 32];
    out[32 - bytes.len()..].copy_from_slice(&bytes);
    Some(out)
}
