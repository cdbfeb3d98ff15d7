//! Self-similar solutions of the supercooled Stefan problem
//!
//! ```text
//! U(t, x) = 2β e^{β²} / α ∫_β^{(x-c)/√(2t)} e^{-z²} dz,    S(t) = (c + β√(2t)) / α,
//! ```
//!
//! which solve `U_t = ½U_xx` on `x > αS(t)` with `U(t, αS) = 0` and
//! `S' = ½U_x(t, αS)`. All evaluations go through the substitution
//! `z = β + w/(2β)`, giving the overflow-free integrand `e^{-w - w²/(4β²)}`.

use crate::error::{domain, Result};
use crate::num::Real;
use crate::quad;

const PROFILE_TOL: f64 = 1e-12;
// e^{-60} is far below the quadrature tolerance
const W_CAP: f64 = 60.0;

fn integrand<T: Real>(beta: T) -> impl Fn(T) -> T {
    let k = (T::lit(4.0) * beta * beta).recip();
    move |w: T| (-w - w * w * k).exp()
}

fn profile_integral<T: Real>(beta: T, upper: T) -> T {
    let upper = upper.min(T::lit(W_CAP));
    // the Gaussian factor is negligible past 2β√50
    let upper = upper.min(T::lit(2.0) * beta * T::lit(50.0).sqrt());
    quad::gauss_kronrod(integrand(beta), T::zero(), upper, T::lit(PROFILE_TOL))
}

/// `β_∞(β) = 2β e^{β²} ∫_β^∞ e^{-z²} dz`, the far-field value of `αU`.
pub fn beta_inf<T: Real>(beta: T) -> Result<T> {
    if !(beta > T::zero()) || !beta.is_finite() {
        return domain(format!("beta_inf needs beta > 0, got {beta}"));
    }
    Ok(profile_integral(beta, T::infinity()))
}

/// The pair `(U, S)` for offset `c`, rate `β` and feedback strength `α`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelfSimilar<T> {
    c: T,
    beta: T,
    alpha: T,
}

impl<T: Real> SelfSimilar<T> {
    pub fn new(c: T, beta: T, alpha: T) -> Result<Self> {
        if !(beta > T::zero() && alpha > T::zero() && c.is_finite()) {
            return domain(format!("self-similar pair needs beta, alpha > 0 (beta = {beta}, alpha = {alpha})"));
        }
        Ok(Self { c, beta, alpha })
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// Free boundary `S(t) = (c + β√(2t)) / α`.
    pub fn s_eval(&self, t: T) -> T {
        (self.c + self.beta * (T::lit(2.0) * t.max(T::zero())).sqrt()) / self.alpha
    }

    /// `S'(t) = β / (α√(2t))`.
    pub fn s_rate(&self, t: T) -> T {
        self.beta / (self.alpha * (T::lit(2.0) * t).sqrt())
    }

    /// Boundary position in the Stefan frame, `αS(t)`.
    pub fn front(&self, t: T) -> T {
        self.alpha * self.s_eval(t)
    }

    fn w(&self, t: T, x: T) -> T {
        let two = T::lit(2.0);
        two * self.beta * ((x - self.c) / (two * t).sqrt() - self.beta)
    }

    /// `U(t, x)` together with a flag set when `x` lies strictly behind the
    /// front, where the formula is negative and the value is clamped to 0.
    /// At `t <= 0` the step profile `β_∞/α · 1{x > c}` is returned.
    pub fn u_eval_flagged(&self, t: T, x: T) -> (T, bool) {
        if t <= T::zero() {
            return if x > self.c {
                (profile_integral(self.beta, T::infinity()) / self.alpha, false)
            } else {
                (T::zero(), x < self.c)
            };
        }
        let w = self.w(t, x);
        if w < T::zero() {
            return (T::zero(), true);
        }
        (profile_integral(self.beta, w) / self.alpha, false)
    }

    pub fn u_eval(&self, t: T, x: T) -> T {
        self.u_eval_flagged(t, x).0
    }

    /// Closed-form `U_x` for `x` at or ahead of the front.
    pub fn u_x(&self, t: T, x: T) -> T {
        let w = self.w(t, x).max(T::zero());
        integrand(self.beta)(w) * T::lit(2.0) * self.beta / (self.alpha * (T::lit(2.0) * t).sqrt())
    }

    /// Maximum over `xs × ts` of `|U_t - ½U_xx|` from centred differences of
    /// the closed form with steps `h` and `dt`, plus the largest mismatch
    /// `|S' - ½U_x|` at the front (one-sided second-order `U_x`).
    pub fn residual(&self, xs: &[T], ts: &[T], h: T, dt: T) -> Result<T> {
        if !(h > T::zero() && dt > T::zero()) {
            return domain("residual needs positive steps");
        }
        let two = T::lit(2.0);
        let half = T::lit(0.5);
        let mut worst = T::zero();
        for &t in ts {
            if t - dt <= T::zero() {
                return domain(format!("time {t} too close to the origin for step {dt}"));
            }
            let front = self.front(t + dt);
            for &x in xs {
                if x - h <= front {
                    return domain(format!("grid point {x} touches the front {front}"));
                }
                let u = |tt, xx| self.u_eval(tt, xx);
                let ut = (u(t + dt, x) - u(t - dt, x)) / (two * dt);
                let uxx = (u(t, x + h) - two * u(t, x) + u(t, x - h)) / (h * h);
                worst = worst.max((ut - half * uxx).abs());
            }
            let f = self.front(t);
            let ux = (-T::lit(3.0) * self.u_eval(t, f) + T::lit(4.0) * self.u_eval(t, f + h)
                - self.u_eval(t, f + two * h))
                / (two * h);
            let s_rate = (self.s_eval(t + dt) - self.s_eval(t - dt)) / (two * dt);
            worst = worst.max((s_rate - half * ux).abs());
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn beta_inf_oracle_values() {
        assert_abs_diff_eq!(beta_inf(1.0).unwrap(), 0.757_872_156_141_312_1, epsilon = 1e-12);
        assert_abs_diff_eq!(beta_inf(2.0).unwrap(), 0.905_354_099_962_349_2, epsilon = 1e-12);
        assert!(beta_inf(1e-6).unwrap() < 1e-5);
        assert!(beta_inf(0.0).is_err());
        assert!(beta_inf(-1.0f64).is_err());
    }

    #[test]
    fn beta_inf_large_beta_does_not_overflow() {
        let v = beta_inf(200.0).unwrap();
        assert!(v < 1.0 && v > 1.0 - 1.0 / (200.0f64 * 200.0));
    }

    #[test]
    fn free_boundary_arithmetic() {
        assert_eq!(SelfSimilar::new(0.0, 1.0, 1.0).unwrap().s_eval(0.5), 1.0);
        assert_eq!(SelfSimilar::new(0.7, 1.0, 2.0).unwrap().s_eval(0.0), 0.35);
        assert_eq!(SelfSimilar::new(0.0, 2.0, 0.5).unwrap().s_eval(2.0), 8.0);
    }

    #[test]
    fn profile_values() {
        let ss = SelfSimilar::new(0.0, 1.0, 1.0).unwrap();
        assert_eq!(ss.u_eval(0.5, 1.0), 0.0);
        assert_abs_diff_eq!(ss.u_eval(0.5, 2.0), 0.735_334_692_905_336_4, epsilon = 1e-12);
        assert_abs_diff_eq!(ss.u_eval(0.5, 1e3), beta_inf(1.0).unwrap(), epsilon = 1e-12);
        let (v, flagged) = ss.u_eval_flagged(0.5, 0.5);
        assert!(v == 0.0 && flagged);
        assert_abs_diff_eq!(ss.u_eval(0.0, 0.1), beta_inf(1.0).unwrap(), epsilon = 1e-12);
        assert_eq!(ss.u_eval(0.0, -0.1), 0.0);
    }

    #[test]
    fn stefan_condition_at_front() {
        let ss = SelfSimilar::new(0.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(ss.s_rate(0.5), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(0.5 * ss.u_x(0.5, 1.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn residual_small_and_shrinking() {
        let ss = SelfSimilar::new(0.0, 1.0, 1.0).unwrap();
        let ts = [0.5, 0.75, 1.0];
        let xs: Vec<f64> = (0..40).map(|i| 1.8 + 0.1 * i as f64).collect();
        let coarse = ss.residual(&xs, &ts, 0.1, 1e-2).unwrap();
        let fine = ss.residual(&xs, &ts, 0.05, 5e-3).unwrap();
        assert!(coarse < 0.05, "coarse residual {coarse}");
        assert!(fine < coarse / 3.0, "fine {fine} vs coarse {coarse}");
        assert!(ss.residual(&[1.0], &ts, 0.1, 1e-2).is_err());
    }
}
