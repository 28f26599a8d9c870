//! Canonical number formatting for byte-stable output files.

use serde::Serializer;

/// Number of fractional digits kept when writing real numbers.
pub const FRACTION_DIGITS: i32 = 6;

/// Rounds `x` to [`FRACTION_DIGITS`] fractional digits.
///
/// The result is the double nearest to the rounded decimal, so its shortest
/// round-trip representation never carries more than six fractional digits.
/// Negative zero is folded into zero.
pub fn canonical(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(FRACTION_DIGITS);
    let scaled = x * scale;
    // beyond 2^53 the value already has no fractional part to round
    if scaled.abs() >= 9.007_199_254_740_992e15 {
        return x;
    }
    let r = scaled.round() / scale;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Serializes through [`canonical`]; integral values are written without a
/// fractional part.
pub(crate) fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    let c = canonical(*x);
    if c.fract() == 0.0 && c.abs() < 9.007_199_254_740_992e15 {
        s.serialize_i64(c as i64)
    } else {
        s.serialize_f64(c)
    }
}
