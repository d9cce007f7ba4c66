//! Small ground-plane helpers shared across modules.

use std::f64::consts::{PI, TAU};

/// Wraps an angle into `(-pi, pi]`. Angles already in range come back
/// bit for bit.
pub fn normalize_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// Absolute angular difference in `[0, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b).abs()
}

/// Rounds to six decimals. Values produced this way survive a
/// format-with-six-decimals / parse round trip bit for bit.
pub fn quantize6(x: f64) -> f64 {
    let q = (x * 1e6).round() / 1e6;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

/// Like [`quantize6`] but keeps the result inside `(-pi, pi]`.
pub fn quantize_angle6(a: f64) -> f64 {
    let mut q = quantize6(normalize_angle(a));
    if q > PI {
        q = quantize6(q - 1e-6);
    }
    if q <= -PI {
        q = quantize6(q + 1e-6);
    }
    q
}

pub fn dist2d(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).sqrt()
}
