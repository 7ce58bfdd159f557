//! Unit conversions between the Hz/ns values people quote and the rad/s,
//! seconds values used internally.

use core::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

/// Cyclic frequency in Hz to angular frequency in rad/s.
#[inline]
pub fn hz(f: f64) -> f64 {
    TWO_PI * f
}

#[inline]
pub fn mhz(f: f64) -> f64 {
    TWO_PI * f * 1e6
}

#[inline]
pub fn ghz(f: f64) -> f64 {
    TWO_PI * f * 1e9
}

/// Angular frequency in rad/s back to Hz.
#[inline]
pub fn to_hz(w: f64) -> f64 {
    w / TWO_PI
}

#[inline]
pub fn to_mhz(w: f64) -> f64 {
    w / TWO_PI / 1e6
}

#[inline]
pub fn ns(t: f64) -> f64 {
    t * 1e-9
}

#[inline]
pub fn us(t: f64) -> f64 {
    t * 1e-6
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let w = ghz(6.7);
        assert!((to_hz(w) - 6.7e9).abs() < 1e-3);
        assert!((to_mhz(mhz(204.0)) - 204.0).abs() < 1e-12);
    }
}
