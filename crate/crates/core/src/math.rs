//! Scalar math shims and small special functions.
//!
//! Transcendentals go through `libm` so the crate builds without `std`
//! and produces identical bits on every platform.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

/// tanh via `(1 − e^{−2|x|}) / (1 + e^{−2|x|})` with the sign restored.
///
/// Noticeably faster than `libm::tanh` and algebraically consistent
/// with the backward rule `1 − y²`: the derivative of this exact
/// expression is `4u/(u+1)²` with `u = e^{−2|x|}`, which equals
/// `(1 − y)(1 + y)` identically, so gradient checks hold to rounding.
/// The exponential argument is always non-positive, so no overflow.
#[inline]
pub fn tanh(x: f64) -> f64 {
    let u = libm::exp(-2.0 * libm::fabs(x));
    libm::copysign((1.0 - u) / (1.0 + u), x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}

/// Natural log of 2π.
pub const LN_2PI: f64 = 1.8378770664093453;

/// Digamma function ψ(x) for x > 0.
///
/// Upward recurrence onto x ≥ 8, then the standard asymptotic series.
/// Accurate to well below 1e-12 over the arguments used here (integer
/// sample counts and neighbor ranks).
pub fn digamma(x: f64) -> f64 {
    assert!(x > 0.0, "digamma requires x > 0, got {x}");
    let mut x = x;
    let mut acc = 0.0;
    while x < 8.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // ψ(x) ≈ ln x − 1/(2x) − Σ B_{2n} / (2n x^{2n})
    acc + ln(x) - 0.5 * inv
        - inv2
            * (1.0 / 12.0
                - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))))
}

/// Volume of the unit ball in `d` dimensions: π^{d/2} / Γ(d/2 + 1).
///
/// Γ at integer and half-integer arguments is evaluated exactly by
/// recurrence, so no general gamma implementation is needed.
pub fn unit_ball_volume(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    // Γ(d/2 + 1) via Γ(x+1) = x Γ(x), seeded at Γ(1)=1 or Γ(3/2)=√π/2.
    let mut gamma;
    let mut x;
    if d % 2 == 0 {
        gamma = 1.0;
        x = 1.0;
    } else {
        gamma = 0.5 * sqrt(core::f64::consts::PI);
        x = 1.5;
    }
    while x < half + 1.0 - 1e-9 {
        gamma *= x;
        x += 1.0;
    }
    libm::pow(core::f64::consts::PI, half) / gamma
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_MASCHERONI: f64 = 0.5772156649015329;

    #[test]
    fn digamma_known_values() {
        // ψ(1) = −γ
        assert!((digamma(1.0) + EULER_MASCHERONI).abs() < 1e-12);
        // ψ(2) = 1 − γ
        assert!((digamma(2.0) - (1.0 - EULER_MASCHERONI)).abs() < 1e-12);
        // ψ(3) = 3/2 − γ
        assert!((digamma(3.0) - (1.5 - EULER_MASCHERONI)).abs() < 1e-12);
        // ψ(1/2) = −γ − 2 ln 2
        assert!((digamma(0.5) + EULER_MASCHERONI + 2.0 * ln(2.0)).abs() < 1e-12);
    }

    #[test]
    fn unit_ball_volumes() {
        let pi = core::f64::consts::PI;
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-12);
        assert!((unit_ball_volume(2) - pi).abs() < 1e-12);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * pi).abs() < 1e-12);
        assert!((unit_ball_volume(4) - pi * pi / 2.0).abs() < 1e-12);
    }
}
