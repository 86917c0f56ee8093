//! Closed-form reduction of the distance on two states.
//!
//! With `m = (1, 1)` and a single edge of weight `γ`, mass conservation
//! forces `ν₀₁ = ṗ` where `p` is the mass at state 1, so the action is
//! `ṗ²/(γ θ(1−p, p))` and the optimal curve has constant speed in the
//! metric `dp/√θ`.

use crate::error::{Error, Result};
use crate::means::Mean;
use crate::numeric::tanh_sinh;

pub const ORACLE_TOL: f64 = 1e-10;

/// `W = γ^{-1/2} |∫_{p0}^{p1} dp / √θ(1−p, p)|`.
pub fn two_point_oracle(p0: f64, p1: f64, gamma: f64, mean: Mean) -> Result<f64> {
    for p in [p0, p1] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("mass {p} outside [0, 1]")));
        }
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("edge weight must be positive, got {gamma}")));
    }
    if p0 == p1 {
        return Ok(0.0);
    }
    let (lo, hi) = if p0 < p1 { (p0, p1) } else { (p1, p0) };
    let integral = tanh_sinh(|p| 1.0 / mean.theta(1.0 - p, p).sqrt(), lo, hi, ORACLE_TOL)?;
    Ok(integral / gamma.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_values() {
        // 30-digit references from an independent arbitrary-precision quadrature
        let cases = [
            (0.1, 0.9, 1.0, Mean::Logarithmic, 1.18358080277436634576901761536),
            (0.1, 0.9, 1.0, Mean::Geometric, 1.21492357011787463949616404414),
            (0.1, 0.9, 1.0, Mean::Harmonic, 1.31139347362159585083169408787),
            (0.0, 1.0, 1.0, Mean::Logarithmic, 1.55870745145365931898815171425),
            (0.2, 0.7, 2.0, Mean::Logarithmic, 0.508688170854572298375960528035),
        ];
        for (p0, p1, g, mean, want) in cases {
            let got = two_point_oracle(p0, p1, g, mean).unwrap();
            assert!((got - want).abs() < 1e-9 * want, "{mean} {p0}->{p1}: {got} vs {want}");
        }
    }

    #[test]
    fn harmonic_closed_form() {
        // 1/√θ = √((1)/(2p(1−p))) integrates to √2·arcsin(2p−1)/... ; compare directly
        let want = 2.0 * (0.8f64).asin() / 2f64.sqrt();
        let got = two_point_oracle(0.1, 0.9, 1.0, Mean::Harmonic).unwrap();
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn trivial_cases() {
        assert_eq!(two_point_oracle(0.3, 0.3, 1.0, Mean::Logarithmic).unwrap(), 0.0);
        let a = two_point_oracle(0.2, 0.6, 1.5, Mean::Geometric).unwrap();
        let b = two_point_oracle(0.6, 0.2, 1.5, Mean::Geometric).unwrap();
        assert_eq!(a, b);
        assert!(two_point_oracle(-0.1, 0.5, 1.0, Mean::Logarithmic).is_err());
        assert!(two_point_oracle(0.1, 0.5, 0.0, Mean::Logarithmic).is_err());
    }
}
