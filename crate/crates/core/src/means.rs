//! Mean functions `θ(s, t)` and the action density.
//!
//! Every shipped mean is symmetric and positively 1-homogeneous, so it can
//! be evaluated through the normalized difference `r = (s − t)/(s + t)`:
//! `θ(s, t) = ½(s + t)·φ(r)`. The logarithmic mean has `φ(r) = r / artanh r`,
//! whose power series is used near the diagonal where the closed form
//! cancels catastrophically.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this `|r|` the logarithmic mean itself is evaluated by its series.
pub const LOG_MEAN_SERIES_THRESHOLD: f64 = 1e-4;

/// Below this `|r|` the log-mean derivatives use the series: the closed-form
/// derivative expressions lose `~log10(1/r)` digits to cancellation.
const LOG_MEAN_DERIVATIVE_SERIES: f64 = 0.1;

/// Coefficients of `r / artanh(r) = Σ_k c_k r^{2k}`.
const PHI_SERIES: [f64; 12] = [
    1.0,
    -1.0 / 3.0,
    -4.0 / 45.0,
    -44.0 / 945.0,
    -428.0 / 14175.0,
    -10196.0 / 467775.0,
    -10719068.0 / 638512875.0,
    -25865068.0 / 1915538625.0,
    -5472607916.0 / 488462349375.0,
    -74185965772.0 / 7795859096025.0,
    -264698472181028.0 / 32157918771103125.0,
    -2290048394728148.0 / 316985199315159375.0,
];

/// `(φ, φ', φ'')` for `φ(r) = r / artanh r`, by the series.
fn phi_series(r: f64) -> (f64, f64, f64) {
    let u = r * r;
    let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
    // Horner in u for φ, and for the derivative series
    for (k, &c) in PHI_SERIES.iter().enumerate().rev() {
        p = p * u + c;
        if k >= 1 {
            dp = dp * u + 2.0 * k as f64 * c;
            ddp = ddp * u + (2 * k * (2 * k - 1)) as f64 * c;
        }
    }
    (p, dp * r, ddp)
}

/// First partial derivatives `(θ_s, θ_t)` and the Hessian entries
/// `(θ_ss, θ_st, θ_tt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanDerivatives {
    pub grad: (f64, f64),
    pub hess: (f64, f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mean {
    Logarithmic,
    Geometric,
    Harmonic,
    /// Fails `θ(0, t) = 0`; shipped as a negative control.
    Arithmetic,
}

impl Mean {
    pub const ALL: [Mean; 4] = [Mean::Logarithmic, Mean::Geometric, Mean::Harmonic, Mean::Arithmetic];

    pub fn tag(self) -> &'static str {
        match self {
            Mean::Logarithmic => "logarithmic",
            Mean::Geometric => "geometric",
            Mean::Harmonic => "harmonic",
            Mean::Arithmetic => "arithmetic",
        }
    }

    /// `θ(s, t)` for `s, t ≥ 0`. Exactly symmetric in its arguments.
    pub fn theta(self, s: f64, t: f64) -> f64 {
        let (a, b) = if s >= t { (s, t) } else { (t, s) };
        match self {
            Mean::Logarithmic => log_mean_sorted(a, b),
            Mean::Geometric => (a * b).sqrt(),
            Mean::Harmonic => {
                if a == 0.0 {
                    0.0
                } else {
                    2.0 * a * b / (a + b)
                }
            }
            Mean::Arithmetic => 0.5 * (a + b),
        }
    }

    /// Partial derivatives for `s, t ≥ 0`. On the boundary `s = 0 < t` the
    /// derivative `θ_s` may be `+∞` (logarithmic and geometric means);
    /// Hessian entries are only meaningful in the open quadrant.
    pub fn derivatives(self, s: f64, t: f64) -> MeanDerivatives {
        if s == 0.0 || t == 0.0 {
            return self.boundary_derivatives(s, t);
        }
        match self {
            Mean::Logarithmic => log_mean_derivatives(s, t),
            Mean::Geometric => {
                let g = (s * t).sqrt();
                let ds = 0.5 * (t / s).sqrt();
                let dt = 0.5 * (s / t).sqrt();
                MeanDerivatives {
                    grad: (ds, dt),
                    hess: (-ds / (2.0 * s), 0.25 / g, -dt / (2.0 * t)),
                }
            }
            Mean::Harmonic => {
                let sum = s + t;
                let sum2 = sum * sum;
                let sum3 = sum2 * sum;
                MeanDerivatives {
                    grad: (2.0 * t * t / sum2, 2.0 * s * s / sum2),
                    hess: (-4.0 * t * t / sum3, 4.0 * s * t / sum3, -4.0 * s * s / sum3),
                }
            }
            Mean::Arithmetic => MeanDerivatives {
                grad: (0.5, 0.5),
                hess: (0.0, 0.0, 0.0),
            },
        }
    }

    fn boundary_derivatives(self, s: f64, t: f64) -> MeanDerivatives {
        let zero_hess = (0.0, 0.0, 0.0);
        if self == Mean::Arithmetic {
            return MeanDerivatives {
                grad: (0.5, 0.5),
                hess: zero_hess,
            };
        }
        // θ vanishes on both axes, so the derivative along an axis is 0
        let across = |other: f64| -> f64 {
            if other == 0.0 {
                0.0
            } else {
                match self {
                    Mean::Harmonic => 2.0,
                    _ => f64::INFINITY,
                }
            }
        };
        let grad = match (s == 0.0, t == 0.0) {
            (true, true) => (0.0, 0.0),
            (true, false) => (across(t), 0.0),
            _ => (0.0, across(s)),
        };
        MeanDerivatives { grad, hess: zero_hess }
    }
}

impl fmt::Display for Mean {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Mean {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mean::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::Domain(format!("unknown mean {s:?}")))
    }
}

fn log_mean_sorted(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    if a == b {
        return a;
    }
    let r = (a - b) / (a + b);
    if r < LOG_MEAN_SERIES_THRESHOLD {
        0.5 * (a + b) * phi_series(r).0
    } else if r <= 0.5 {
        (a - b) / (2.0 * r.atanh())
    } else {
        (a - b) / (a.ln() - b.ln())
    }
}

fn log_mean_derivatives(s: f64, t: f64) -> MeanDerivatives {
    let r = (s - t) / (s + t);
    if r.abs() < LOG_MEAN_DERIVATIVE_SERIES {
        let (p, dp, ddp) = phi_series(r);
        let c = ddp / (2.0 * (s + t));
        return MeanDerivatives {
            grad: (0.5 * (p + (1.0 - r) * dp), 0.5 * (p - (1.0 + r) * dp)),
            hess: (c * (1.0 - r) * (1.0 - r), -c * (1.0 - r * r), c * (1.0 + r) * (1.0 + r)),
        };
    }
    let d = if r.abs() <= 0.5 {
        2.0 * r.atanh()
    } else {
        s.ln() - t.ln()
    };
    let d2 = d * d;
    let ss = (2.0 * (s - t) - (s + t) * d) / (s * s * d2 * d);
    let x = s / t;
    MeanDerivatives {
        grad: ((d - 1.0 + t / s) / d2, (x - 1.0 - d) / d2),
        hess: (ss, -x * ss, x * x * ss),
    }
}

/// Logarithmic mean `(s − t)/(log s − log t)`, with `θ(s, s) = s` and
/// `θ(0, t) = 0`.
pub fn log_mean(s: f64, t: f64) -> Result<f64> {
    if !(s >= 0.0) || !(t >= 0.0) {
        return Err(Error::Domain(format!(
            "log mean needs nonnegative arguments, got ({s}, {t})"
        )));
    }
    Ok(Mean::Logarithmic.theta(s, t))
}

/// Action density `α(w, s, t) = w² / (2 θ(s, t))`, with `α = 0` when
/// `θ = w = 0` and `α = +∞` when `θ = 0 ≠ w`.
pub fn action_density(w: f64, s: f64, t: f64, mean: Mean) -> f64 {
    let theta = mean.theta(s, t);
    if theta > 0.0 {
        w * w / (2.0 * theta)
    } else if w == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Worst observed violation of each mean axiom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanReport {
    pub samples: usize,
    pub symmetry: f64,
    pub normalization: f64,
    pub vanishing_on_boundary: f64,
    pub monotonicity: f64,
    pub homogeneity: f64,
    pub concavity: f64,
    pub arithmetic_bound: f64,
}

impl MeanReport {
    pub fn worst(&self) -> f64 {
        self.entries().iter().map(|(_, v)| *v).fold(0.0, f64::max)
    }

    pub fn entries(&self) -> [(&'static str, f64); 7] {
        [
            ("symmetry", self.symmetry),
            ("normalization", self.normalization),
            ("vanishing_on_boundary", self.vanishing_on_boundary),
            ("monotonicity", self.monotonicity),
            ("homogeneity", self.homogeneity),
            ("concavity", self.concavity),
            ("arithmetic_bound", self.arithmetic_bound),
        ]
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.worst() <= tol
    }
}

/// Samples the mean axioms on `(0, 10]²` with a seeded generator.
pub fn check_mean_properties(mean: Mean, samples: usize, seed: u64) -> MeanReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| 10.0 * (1.0 - rng.random::<f64>());
    let th = |s: f64, t: f64| mean.theta(s, t);
    let mut report = MeanReport {
        samples,
        symmetry: 0.0,
        normalization: (th(1.0, 1.0) - 1.0).abs(),
        vanishing_on_boundary: 0.0,
        monotonicity: 0.0,
        homogeneity: 0.0,
        concavity: 0.0,
        arithmetic_bound: 0.0,
    };
    for _ in 0..samples.max(1) {
        let (s, t) = (draw(&mut rng), draw(&mut rng));
        let (s2, t2) = (draw(&mut rng), draw(&mut rng));
        let lambda = draw(&mut rng);
        let v = th(s, t);
        report.symmetry = report.symmetry.max((v - th(t, s)).abs());
        report.vanishing_on_boundary = report.vanishing_on_boundary.max(th(0.0, t).abs()).max(th(s, 0.0).abs());
        // monotone in each argument
        let (lo, hi) = (s.min(s2), s.max(s2));
        report.monotonicity = report.monotonicity.max(th(lo, t) - th(hi, t));
        let (lo, hi) = (t.min(t2), t.max(t2));
        report.monotonicity = report.monotonicity.max(th(s, lo) - th(s, hi));
        let scaled = th(lambda * s, lambda * t);
        report.homogeneity = report
            .homogeneity
            .max((scaled - lambda * v).abs() / (lambda * v).abs().max(1.0));
        let mid = th(0.5 * (s + s2), 0.5 * (t + t2));
        report.concavity = report.concavity.max(0.5 * (v + th(s2, t2)) - mid);
        report.arithmetic_bound = report.arithmetic_bound.max(v - 0.5 * (s + t));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn log_mean_examples() {
        assert_eq!(log_mean(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(log_mean(0.0, 5.0).unwrap(), 0.0);
        assert_eq!(log_mean(2.0, 2.0).unwrap(), 2.0);
        let e = std::f64::consts::E;
        assert!((log_mean(e, 1.0).unwrap() - (e - 1.0)).abs() < 1e-15);
        assert!(log_mean(-1.0, 1.0).is_err());
    }

    #[test]
    fn log_mean_near_diagonal_matches_series() {
        // reference: ½(s+t)(1 − r²/3 − 4r⁴/45), exact to far below 1e-13 here
        for &(s, rel) in &[(1.0, 1e-9), (3.7, 5e-9), (1e-6, 1e-8), (1e5, 2e-10)] {
            let t = s * (1.0 + rel);
            let r: f64 = (s - t) / (s + t);
            let reference = 0.5 * (s + t) * (1.0 - r * r / 3.0 - 4.0 * r.powi(4) / 45.0);
            let v = log_mean(s, t).unwrap();
            assert!(((v - reference) / reference).abs() < 1e-13, "{s} {t}");
        }
    }

    #[test]
    fn log_mean_branches_agree() {
        // the closed form and the series overlap across the switch points
        for &r in &[0.99e-4, 1.01e-4, 0.4999, 0.5001] {
            let (s, t): (f64, f64) = (1.0 + r, 1.0 - r);
            let closed = (s - t) / (s.ln() - t.ln());
            let v = log_mean(s, t).unwrap();
            assert!(((v - closed) / closed).abs() < 1e-12, "r={r}");
        }
    }

    #[test]
    fn log_mean_extreme_ratio() {
        let v = log_mean(1e-20, 1.0).unwrap();
        let expected = (1.0 - 1e-20) / (20.0 * std::f64::consts::LN_10);
        assert!(((v - expected) / expected).abs() < 1e-14);
    }

    #[test]
    fn action_density_examples() {
        let lm = Mean::Logarithmic;
        assert_eq!(action_density(0.0, 0.0, 0.0, lm), 0.0);
        assert_eq!(action_density(1.0, 0.0, 1.0, lm), f64::INFINITY);
        assert_eq!(action_density(2.0, 1.0, 1.0, lm), 2.0);
        let a = action_density(1.0, 1.0, 4.0, lm);
        let b = action_density(3.0, 3.0, 12.0, lm);
        assert!((b - 3.0 * a).abs() < 1e-14);
    }

    #[test]
    fn harness_flags_arithmetic_mean() {
        let rep = check_mean_properties(Mean::Arithmetic, 1000, 7);
        assert!(rep.vanishing_on_boundary > 0.1);
        assert!(!rep.passes(1e-10));
        for mean in [Mean::Logarithmic, Mean::Geometric, Mean::Harmonic] {
            let rep = check_mean_properties(mean, 20_000, 3);
            assert!(rep.passes(1e-10), "{mean}: {rep:?}");
        }
    }

    #[test]
    fn tags_roundtrip() {
        for m in Mean::ALL {
            assert_eq!(m.tag().parse::<Mean>().unwrap(), m);
        }
        assert!("median".parse::<Mean>().is_err());
    }

    fn finite_difference(mean: Mean, s: f64, t: f64) -> ((f64, f64), (f64, f64, f64)) {
        let hs = 1e-5 * s;
        let ht = 1e-5 * t;
        let th = |a, b| mean.theta(a, b);
        let gs = (th(s + hs, t) - th(s - hs, t)) / (2.0 * hs);
        let gt = (th(s, t + ht) - th(s, t - ht)) / (2.0 * ht);
        let d = |a: f64, b: f64| mean.derivatives(a, b).grad;
        let hss = (d(s + hs, t).0 - d(s - hs, t).0) / (2.0 * hs);
        let hst = (d(s, t + ht).0 - d(s, t - ht).0) / (2.0 * ht);
        let htt = (d(s, t + ht).1 - d(s, t - ht).1) / (2.0 * ht);
        ((gs, gt), (hss, hst, htt))
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(
            s in 1e-3f64..10.0,
            ratio in prop_oneof![0.5f64..2.0, 1e-3f64..1e3, (1.0 - 1e-3)..(1.0 + 1e-3)],
            which in 0usize..3,
        ) {
            let mean = [Mean::Logarithmic, Mean::Geometric, Mean::Harmonic][which];
            let t = s * ratio;
            let exact = mean.derivatives(s, t);
            let (g, h) = finite_difference(mean, s, t);
            let scale_g = exact.grad.0.abs() + exact.grad.1.abs();
            prop_assert!((exact.grad.0 - g.0).abs() <= 1e-6 * scale_g);
            prop_assert!((exact.grad.1 - g.1).abs() <= 1e-6 * scale_g);
            let scale_h = exact.hess.0.abs() + exact.hess.2.abs() + 1e-12;
            prop_assert!((exact.hess.0 - h.0).abs() <= 1e-4 * scale_h, "{:?} {:?}", exact, h);
            prop_assert!((exact.hess.1 - h.1).abs() <= 1e-4 * scale_h, "{:?} {:?}", exact, h);
            prop_assert!((exact.hess.2 - h.2).abs() <= 1e-4 * scale_h, "{:?} {:?}", exact, h);
        }

        #[test]
        fn euler_identity(s in 1e-4f64..100.0, t in 1e-4f64..100.0) {
            // 1-homogeneity: s θ_s + t θ_t = θ
            let mean = Mean::Logarithmic;
            let d = mean.derivatives(s, t);
            let v = mean.theta(s, t);
            prop_assert!((s * d.grad.0 + t * d.grad.1 - v).abs() <= 1e-12 * v);
        }

        #[test]
        fn alpha_is_homogeneous_and_convex(
            w in -5.0f64..5.0, s in 0.0f64..5.0, t in 0.0f64..5.0,
            w2 in -5.0f64..5.0, s2 in 0.0f64..5.0, t2 in 0.0f64..5.0,
            lambda in 0.0f64..1.0, scale in 0.01f64..50.0,
        ) {
            let mean = Mean::Logarithmic;
            let a = action_density(w, s, t, mean);
            let scaled = action_density(scale * w, scale * s, scale * t, mean);
            if a.is_finite() {
                prop_assert!((scaled - scale * a).abs() <= 1e-12 * (scale * a).max(1e-300));
            }
            let b = action_density(w2, s2, t2, mean);
            let mix = action_density(
                lambda * w + (1.0 - lambda) * w2,
                lambda * s + (1.0 - lambda) * s2,
                lambda * t + (1.0 - lambda) * t2,
                mean,
            );
            let rhs = lambda * a + (1.0 - lambda) * b;
            if rhs.is_finite() {
                prop_assert!(mix <= rhs + 1e-9 * rhs.max(1.0));
            }
        }
    }
}
