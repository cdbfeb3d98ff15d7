//! Pieces shared by the two Fokker-Planck solvers: the implicit
//! drift-diffusion stencil, the boundary flux stencil and the per-step
//! fixed point on the flux-dependent coefficient.

use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::tridiag::{Stencil, Sweep};

/// Backward-Euler stencil for `u_t = ½u_xx - v u_x - k u` on spacing `h`.
/// Centred drift while the cell Péclet number `|v|h` stays below one,
/// upwind beyond, so the matrix is always an M-matrix.
pub(crate) fn stencil<T: Real>(h: T, dt: T, v: T, k: T) -> Stencil<T> {
    let half = T::lit(0.5);
    let diff = half * dt / (h * h);
    let base = T::one() + T::lit(2.0) * diff + dt * k;
    if v.abs() * h <= T::one() {
        let adv = half * dt * v / h;
        Stencil { lower: -(diff + adv), diag: base, upper: -(diff - adv) }
    } else if v > T::zero() {
        let adv = dt * v / h;
        Stencil { lower: -(diff + adv), diag: base + adv, upper: -diff }
    } else {
        let adv = -dt * v / h;
        Stencil { lower: -diff, diag: base + adv, upper: -(diff + adv) }
    }
}

/// `½ u_x(0)` from the one-sided second-order stencil with `u(0) = 0`.
pub(crate) fn half_slope<T: Real>(u1: T, u2: T, h: T) -> T {
    T::lit(0.25) * (T::lit(4.0) * u1 - u2) / h
}

pub(crate) const FIXED_POINT_TOL: f64 = 1e-10;
pub(crate) const FIXED_POINT_MAX_ITERS: usize = 50;

pub(crate) enum FixedPoint<T> {
    /// `value` is the converged coefficient, `iters` the number of solves.
    Converged {
        value: T,
        iters: usize,
    },
    Diverged,
}

/// Rate at which mass leaves through the origin according to the discrete
/// operator itself: the column of the first interior node loses exactly
/// the coupling `-upper/dt` to the absent node at the origin. Using this
/// as the flux makes the discrete mass ledger exact; it agrees with
/// `½u_x(0)` to second order because the first-order error cancels against
/// the boundary relation `½u_xx(0) = v u_x(0)`.
pub(crate) fn outflow<T: Real>(st: &Stencil<T>, h: T, dt: T, u1: T) -> T {
    -h * st.upper / dt * u1
}

/// Iterates `θ ← g(θ)` where `g` solves the implicit system with the
/// coefficient built from `θ` and reads the boundary flux back. Leaves the
/// elimination for the last accepted `θ` in `sweep`.
pub(crate) fn resolve<T: Real>(
    sweep: &mut Sweep<T>,
    rhs: &[T],
    right: T,
    guess: T,
    build: impl Fn(T) -> Stencil<T>,
    readback: impl Fn(&Stencil<T>, T) -> T,
) -> FixedPoint<T> {
    let mut theta = guess;
    for iters in 1..=FIXED_POINT_MAX_ITERS {
        let st = build(theta);
        let (u1, _) = sweep.eliminate(st, rhs, T::zero(), right);
        let next = readback(&st, u1);
        if !next.is_finite() {
            return FixedPoint::Diverged;
        }
        let tol = T::lit(FIXED_POINT_TOL) * T::one().max(next.abs());
        if (next - theta).abs() < tol {
            return FixedPoint::Converged { value: next, iters };
        }
        theta = next;
    }
    FixedPoint::Diverged
}

/// What stopped a run before its final time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// The per-step flux fixed point failed to converge.
    FixedPointDivergence,
    /// Mass leaving in one step exceeded `10³ h`.
    FluxStep,
    /// The cascade condition holds on the whole window next to the origin.
    Jump,
    /// More than 1% of the current mass (or survival) left in one step.
    MassLoss,
    /// The running `∫λ²` exceeded its cap per unit time.
    LambdaBudget,
    /// The survival probability dropped below `1e-300`.
    SurvivalUnderflow,
}

impl Trigger {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::FixedPointDivergence => "fixed_point_divergence",
            Self::FluxStep => "flux_step",
            Self::Jump => "jump",
            Self::MassLoss => "mass_loss",
            Self::LambdaBudget => "lambda_budget",
            Self::SurvivalUnderflow => "survival_underflow",
        }
    }
}

/// Blow-up event recorded instead of an error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupEvent<T> {
    pub t: T,
    pub trigger: Trigger,
}

/// `min_{1≤i≤K} a(x_i) F(x_i) / x_i`, where `F` is the running trapezoid
/// integral of the node values and `a` the cascade amplification. A value of
/// at least one means that removing the mass in `(0, x)` pushes the
/// survivors past `x` for every `x` in the window, so the loss jumps.
pub(crate) fn local_cascade<T: Real>(u: &[T], h: T, window: usize, amplify: impl Fn(T) -> T) -> T {
    let mut cum = T::zero();
    let mut worst = T::infinity();
    for i in 1..=window.min(u.len() - 1) {
        cum = cum + T::lit(0.5) * h * (u[i - 1] + u[i]);
        let x = h * T::from_usize_lossy(i);
        worst = worst.min(amplify(cum) / x);
    }
    worst
}

/// `sup_i a(F(x_i)) / x_i` over the whole grid.
pub(crate) fn global_cascade<T: Real>(u: &[T], h: T, amplify: impl Fn(T) -> T) -> T {
    let mut cum = T::zero();
    let mut best = T::zero();
    for i in 1..u.len() {
        cum = cum + T::lit(0.5) * h * (u[i - 1] + u[i]);
        let x = h * T::from_usize_lossy(i);
        best = best.max(amplify(cum) / x);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencil_rows_conserve_without_reaction() {
        // columns of the interior operator sum to one: mass is only lost
        // through the boundaries
        for &v in &[0.0, 3.0, -3.0, 500.0, -500.0] {
            let st = stencil(0.01f64, 1e-5, v, 0.0);
            assert!((st.lower + st.diag + st.upper - 1.0).abs() < 1e-12);
            assert!(st.lower <= 0.0 && st.upper <= 0.0);
        }
    }

    #[test]
    fn outflow_is_second_order() {
        // u = x e^{-x} solves ½u_xx = v u_x at the origin for v = -1
        let (dt, v) = (1e-6, -1.0f64);
        let err = |h: f64| {
            let st = stencil(h, dt, v, 0.0);
            (outflow(&st, h, dt, h * (-h).exp()) - 0.5).abs()
        };
        assert!(err(0.01) < 1e-4);
        assert!(err(0.005) < err(0.01) / 3.5);
    }

    #[test]
    fn half_slope_exact_on_quadratics() {
        let h = 0.1f64;
        let u = |x: f64| 3.0 * x - 2.0 * x * x;
        assert!((half_slope(u(h), u(2.0 * h), h) - 1.5).abs() < 1e-13);
    }
}
