//! Proximal map of one space-time cell of the action.
//!
//! Minimizes `c·w²/θ(s,t) + ½a(w−u_w)² + ½b_s(s−u_s)² + ½b_t(t−u_t)²` over
//! `s, t ≥ 0`. For fixed `(s,t)` the optimal `w = u_w θ/(θ+β)` with
//! `β = 2c/a`, leaving the convex two-variable problem
//! `g(s,t) = c u_w²/(θ+β) + ½b_s(s−u_s)² + ½b_t(t−u_t)²`.

use crate::means::Mean;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CellProx {
    pub w: f64,
    pub s: f64,
    pub t: f64,
    /// Natural (projected) optimality residual in `(s, t)`.
    pub kkt: f64,
    pub iterations: usize,
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy)]
struct Reduced {
    mean: Mean,
    kappa: f64,
    beta: f64,
    bs: f64,
    bt: f64,
    us: f64,
    ut: f64,
}

impl Reduced {
    fn value(&self, s: f64, t: f64) -> f64 {
        let th = self.mean.theta(s, t);
        self.kappa / (th + self.beta) + 0.5 * self.bs * (s - self.us).powi(2) + 0.5 * self.bt * (t - self.ut).powi(2)
    }

    fn grad(&self, s: f64, t: f64) -> (f64, f64) {
        let th = self.mean.theta(s, t);
        let d = self.mean.derivatives(s, t);
        let f = -self.kappa / (th + self.beta).powi(2);
        (
            f * d.grad.0 + self.bs * (s - self.us),
            f * d.grad.1 + self.bt * (t - self.ut),
        )
    }

    fn hess(&self, s: f64, t: f64) -> (f64, f64, f64) {
        let th = self.mean.theta(s, t);
        let d = self.mean.derivatives(s, t);
        let den = th + self.beta;
        let a = 2.0 * self.kappa / den.powi(3);
        let b = -self.kappa / den.powi(2);
        let (gs, gt) = d.grad;
        let (hss, hst, htt) = d.hess;
        (
            a * gs * gs + b * hss + self.bs,
            a * gs * gt + b * hst,
            a * gt * gt + b * htt + self.bt,
        )
    }

    fn residual(&self, s: f64, t: f64) -> f64 {
        let (gs, gt) = self.grad(s, t);
        let rs = (s - (s - gs / self.bs).max(0.0)).abs();
        let rt = (t - (t - gt / self.bt).max(0.0)).abs();
        let r = rs.max(rt);
        if r.is_nan() {
            f64::INFINITY
        } else {
            r
        }
    }
}

/// `weights = (a, b_s, b_t)`, `u = (u_w, u_s, u_t)`; `start` warm-starts `(s, t)`.
pub(crate) fn prox_cell(mean: Mean, c: f64, weights: [f64; 3], u: [f64; 3], start: (f64, f64), tol: f64) -> CellProx {
    let [a, bs, bt] = weights;
    let [uw, us, ut] = u;
    if uw == 0.0 {
        return CellProx {
            w: 0.0,
            s: us.max(0.0),
            t: ut.max(0.0),
            kkt: 0.0,
            iterations: 0,
            fallback: false,
        };
    }
    let red = Reduced {
        mean,
        kappa: c * uw * uw,
        beta: 2.0 * c / a,
        bs,
        bt,
        us,
        ut,
    };
    let scale = 1.0 + us.abs() + ut.abs();
    let tol_abs = tol * scale;
    let seed = 1e-3 * scale;
    let pos = |x: f64, fallback: f64| if x > 0.0 && x.is_finite() { x } else { fallback };
    let mut s = pos(start.0, pos(us, seed));
    let mut t = pos(start.1, pos(ut, seed));
    let finish = |s: f64, t: f64, kkt: f64, iterations: usize, fallback: bool| {
        let th = mean.theta(s, t);
        CellProx {
            w: uw * th / (th + red.beta),
            s,
            t,
            kkt,
            iterations,
            fallback,
        }
    };

    let mut r = red.residual(s, t);
    for iter in 0..60 {
        if r <= tol_abs {
            return finish(s, t, r, iter, false);
        }
        let (gs, gt) = red.grad(s, t);
        let (hss, hst, htt) = red.hess(s, t);
        let det = hss * htt - hst * hst;
        if !(det > 0.0) || !det.is_finite() {
            break;
        }
        let ds = -(htt * gs - hst * gt) / det;
        let dt = -(hss * gt - hst * gs) / det;
        let f0 = red.value(s, t);
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cs = (s + alpha * ds).max(0.01 * s);
            let ct = (t + alpha * dt).max(0.01 * t);
            let f1 = red.value(cs, ct);
            if f1 <= f0 + 1e-4 * (gs * (cs - s) + gt * (ct - t)) {
                s = cs;
                t = ct;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            // objective differences are below rounding; try the full step on the residual
            let cs = (s + ds).max(0.01 * s);
            let ct = (t + dt).max(0.01 * t);
            let rc = red.residual(cs, ct);
            if rc < r {
                s = cs;
                t = ct;
            } else {
                break;
            }
        }
        r = red.residual(s, t);
    }
    if r <= tol_abs {
        return finish(s, t, r, 60, false);
    }
    let (s, t, r, it) = coordinate_bisection(&red, s, t, tol_abs);
    finish(s, t, r, it, true)
}

/// Cyclic exact minimization in `s` then `t`, each by bisection on the
/// monotone partial derivative.
fn coordinate_bisection(red: &Reduced, mut s: f64, mut t: f64, tol: f64) -> (f64, f64, f64, usize) {
    let minimize = |other: f64, first: bool| -> f64 {
        let deriv = |x: f64| {
            let g = if first { red.grad(x, other) } else { red.grad(other, x) };
            if first {
                g.0
            } else {
                g.1
            }
        };
        if deriv(0.0) >= 0.0 {
            return 0.0;
        }
        let anchor = if first { red.us } else { red.ut };
        let mut hi = anchor.max(0.0) + 1.0;
        while deriv(hi) < 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if deriv(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let mut r = red.residual(s, t);
    let mut cycles = 0;
    while cycles < 2000 && r > tol {
        s = minimize(t, true);
        t = minimize(s, false);
        r = red.residual(s, t);
        cycles += 1;
    }
    (s, t, r, cycles)
}
