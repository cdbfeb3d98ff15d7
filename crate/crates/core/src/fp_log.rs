//! Solver for the non-local Fokker-Planck equation of the log-feedback
//! model,
//!
//! ```text
//! q_t = ½q_xx - (αλ + β) q_x,   q(t, 0) = 0,   λ = -½ q_x(t, 0) / ∫q,
//! ```
//!
//! through the normalised density `r = q / q̄`, `q̄(t) = ∫q`, which solves the
//! local problem `r_t = ½r_xx - (αλ + β) r_x - λ r` with `λ = -½ r_x(t, 0)`
//! and keeps unit mass. The survival probability follows from `q̄' = λ q̄`.
//!
//! Entropy diagnostics compare `r` against the stationary profile
//! `ω(x) = 2κ x e^{-√(2κ) x}` inside the bump `φ(x) = e^{-1/(1-x²)}`.

use std::io::Write;

use crate::error::{config, domain, Error, Result};
use crate::fp_linear::{GridConfig, RunStats, Snapshot};
use crate::model::{Density, Feedback, ModelParams};
use crate::num::Real;
use crate::output::csv_row;
use crate::quad;
use crate::scheme::{self, BlowupEvent, FixedPoint, Trigger};
use crate::series::TimeSeries;
use crate::tridiag::Sweep;

const POSITIVITY_FLOOR: f64 = -1e-10;
const FLUX_STEP_FACTOR: f64 = 1e3;
const SURVIVAL_DROP: f64 = 0.01;
const SURVIVAL_FLOOR: f64 = 1e-300;
const ORIGIN_TOL: f64 = 1e-6;

/// `φ(x) = e^{-1/(1-x²)}` on `[0, 1)`, zero beyond.
pub fn phi_bump<T: Real>(x: T) -> T {
    phi_derivatives(x)[0]
}

/// `[φ, φ', φ'', φ''']` in closed form. With `g = -1/(1-x²)`,
/// `φ' = g'φ`, `φ'' = (g'' + g'²)φ` and `φ''' = (g''' + 3g'g'' + g'³)φ`.
pub fn phi_derivatives<T: Real>(x: T) -> [T; 4] {
    let one = T::one();
    if x.abs() >= one {
        return [T::zero(); 4];
    }
    let w = one - x * x;
    let phi = (-w.recip()).exp();
    let g1 = -T::lit(2.0) * x / (w * w);
    let g2 = -(T::lit(2.0) + T::lit(6.0) * x * x) / (w * w * w);
    let g3 = -T::lit(24.0) * x * (one + x * x) / (w * w * w * w);
    [phi, g1 * phi, (g2 + g1 * g1) * phi, (g3 + T::lit(3.0) * g1 * g2 + g1 * g1 * g1) * phi]
}

/// The zero of `φ''` in `(0, 1)`, by bisection.
pub fn phi_inflection<T: Real>() -> T {
    let (mut lo, mut hi) = (T::lit(0.1), T::lit(0.99));
    for _ in 0..200 {
        let mid = T::lit(0.5) * (lo + hi);
        if phi_derivatives(mid)[2] <= T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    T::lit(0.5) * (lo + hi)
}

/// Stationary profile and bump on the solver nodes inside `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyKit<T> {
    kappa: T,
    h: T,
    x: Vec<T>,
    omega: Vec<T>,
    phi: Vec<T>,
}

impl<T: Real> EntropyKit<T> {
    pub fn new(kappa: T, h: T) -> Result<Self> {
        if !(kappa > T::zero() && kappa <= T::lit(0.125)) {
            return domain(format!("kappa = {kappa} outside (0, 1/8]"));
        }
        if !(h > T::zero() && h < T::lit(0.25)) {
            return domain(format!("entropy grid step {h} must lie in (0, 1/4)"));
        }
        let omega_d = Density::stationary_profile(kappa)?;
        let n = (T::one() / h).floor().to_usize().unwrap_or(0);
        let x: Vec<T> = (0..=n).map(|i| h * T::from_usize_lossy(i)).collect();
        let omega = x.iter().map(|&x| omega_d.eval(x)).collect();
        let phi = x.iter().map(|&x| phi_bump(x)).collect();
        Ok(Self { kappa, h, x, omega, phi })
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn omega(&self) -> &[T] {
        &self.omega
    }

    pub fn phi(&self) -> &[T] {
        &self.phi
    }

    /// `ω'(0) = 2κ`.
    pub fn omega_slope(&self) -> T {
        T::lit(2.0) * self.kappa
    }

    /// `h = r/ω` on the kit nodes, with the origin value replaced by the
    /// one-sided limit `r_x(0)/ω'(0)`.
    pub fn ratio(&self, r: &[T]) -> Vec<T> {
        let mut out: Vec<T> = self.x.iter().enumerate().map(|(i, _)| r[i] / self.omega[i]).collect();
        out[0] = T::lit(2.0) * scheme::half_slope(r[1], r[2], self.h) / self.omega_slope();
        out
    }

    /// `(I, J) = (∫h²ωφ, ∫h_x²ωφ)` over `(0, 1)`.
    pub fn functionals(&self, r: &[T]) -> (T, T) {
        let hr = self.ratio(r);
        let n = hr.len();
        let two_h = T::lit(2.0) * self.h;
        let slope = |i: usize| {
            if i == 0 {
                (-T::lit(3.0) * hr[0] + T::lit(4.0) * hr[1] - hr[2]) / two_h
            } else if i == n - 1 {
                (T::lit(3.0) * hr[n - 1] - T::lit(4.0) * hr[n - 2] + hr[n - 3]) / two_h
            } else {
                (hr[i + 1] - hr[i - 1]) / two_h
            }
        };
        let wi: Vec<T> = (0..n).map(|i| hr[i] * hr[i] * self.omega[i] * self.phi[i]).collect();
        let wj: Vec<T> = (0..n).map(|i| slope(i) * slope(i) * self.omega[i] * self.phi[i]).collect();
        (quad::simpson_uniform(self.h, &wi), quad::simpson_uniform(self.h, &wj))
    }

    /// `∫ωφ`, the value of `I` when `r = ω`.
    pub fn stationary_i(&self) -> T {
        let w: Vec<T> = self.omega.iter().zip(&self.phi).map(|(&o, &p)| o * p).collect();
        quad::simpson_uniform(self.h, &w)
    }
}

#[derive(Clone, Debug)]
pub struct LogSolution<T> {
    pub params: ModelParams<T>,
    pub grid: GridConfig<T>,
    pub x: Vec<T>,
    /// Normalised profiles `r`; `level` holds `ln q̄`.
    pub r_snapshots: Vec<Snapshot<T>>,
    pub lambda: TimeSeries<T>,
    pub qbar: TimeSeries<T>,
    pub entropy_i: TimeSeries<T>,
    pub entropy_j: TimeSeries<T>,
    /// Running `∫_0^t λ²`.
    pub budget: TimeSeries<T>,
    pub blowup: Option<BlowupEvent<T>>,
    pub stats: RunStats<T>,
}

/// Running `∫λ²` with its least-squares line.
#[derive(Clone, Debug, PartialEq)]
pub struct BudgetReport<T> {
    pub cumulative: TimeSeries<T>,
    pub intercept: T,
    pub slope: T,
    /// Largest amount by which the budget rises above its fitted line, as
    /// a fraction of the budget's range.
    pub excess_fraction: T,
    /// Largest absolute deviation from the fitted line, as a fraction of
    /// the range.
    pub deviation_fraction: T,
}

fn check_initial<T: Real>(q0: &Density<T>, h: T, values: &[T]) -> Result<()> {
    if q0.eval(T::zero()) > T::lit(ORIGIN_TOL) {
        return Err(Error::InvalidDensity(format!("q0(0) = {} is not zero", q0.eval(T::zero()))));
    }
    let grad: T = values.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0]) / h).sum();
    let l2: T = values.iter().map(|&v| v * v * h).sum();
    let near = (T::one() / h).floor().to_usize().unwrap_or(1).min(values.len() - 1);
    let singular: T = (1..=near).map(|i| values[i] * values[i] / T::from_usize_lossy(i)).sum();
    for (what, v) in [("H1 norm", grad + l2), ("integral of q0²/x near the origin", singular)] {
        if !v.is_finite() {
            return Err(Error::InvalidDensity(format!("{what} is not finite")));
        }
    }
    Ok(())
}

/// Runs the log-feedback solver from `q0`.
pub fn solve_log<T: Real>(
    q0: &Density<T>,
    params: &ModelParams<T>,
    t_end: T,
    grid: &GridConfig<T>,
) -> Result<LogSolution<T>> {
    params.validate()?;
    if params.model != Feedback::Log {
        return config("solve_log needs log feedback parameters");
    }
    if !(t_end > T::zero()) {
        return config(format!("final time must be positive, got {t_end}"));
    }
    let mass0 = q0.mass();
    if !(mass0 > T::zero() && mass0 <= T::one() + T::lit(1e-6)) {
        return Err(Error::InvalidDensity(format!("initial mass {mass0} outside (0, 1]")));
    }
    let h = grid.h;
    let x_max = grid.x_max.unwrap_or(T::lit(40.0) * q0.scale());
    let n = grid.intervals(x_max)?;
    let mut r = q0.sample_grid(h, n + 1);
    check_initial(q0, h, &r)?;
    r[0] = T::zero();
    r[n] = T::zero();
    let sampled = quad::trapezoid(h, &r);
    r.iter_mut().for_each(|v| *v = *v / sampled);

    let (alpha, beta) = (params.alpha, params.beta);
    let kit = EntropyKit::new(params.kappa, h)?;
    let x: Vec<T> = (0..=n).map(|i| h * T::from_usize_lossy(i)).collect();
    let mut sweep = Sweep::new(n - 1);
    let mut rhs = vec![T::zero(); n - 1];
    let mut snapshot_times: Vec<T> = grid.snapshots.iter().copied().filter(|&t| t >= T::zero()).collect();
    snapshot_times.sort_by(|a, b| a.partial_cmp(b).expect("finite snapshot times"));
    let mut next_snapshot = 0;
    let record_dt = grid.record_interval(t_end);
    let budget_cap = T::lit(grid.budget_cap);
    let amplify = |f: T| alpha * -(-f.min(T::one())).ln_1p();

    let mut lambda = -scheme::half_slope(r[1], r[2], h);
    let mut lambda_prev = lambda;
    let mut log_qbar = mass0.ln();
    let mut budget = T::zero();
    let mut t = T::zero();

    let mut sol = LogSolution {
        params: *params,
        grid: grid.clone(),
        x,
        r_snapshots: Vec::new(),
        lambda: TimeSeries::new(),
        qbar: TimeSeries::new(),
        entropy_i: TimeSeries::new(),
        entropy_j: TimeSeries::new(),
        budget: TimeSeries::new(),
        blowup: None,
        stats: RunStats { min_value: T::infinity(), ..RunStats::default() },
    };
    let record = |sol: &mut LogSolution<T>, t: T, lambda: T, log_qbar: T, budget: T, r: &[T]| {
        let (i, j) = kit.functionals(r);
        sol.lambda.push(t, lambda);
        sol.qbar.push(t, log_qbar.exp());
        sol.entropy_i.push(t, i);
        sol.entropy_j.push(t, j);
        sol.budget.push(t, budget);
    };
    record(&mut sol, t, lambda, log_qbar, budget, &r);
    let mut next_record = record_dt;
    let mut pending_companion = false;
    if snapshot_times.first().is_some_and(|&ts| ts <= T::zero()) {
        sol.r_snapshots.push(Snapshot { t, level: log_qbar, values: r.clone(), companion: false });
        next_snapshot = 1;
        pending_companion = true;
    }

    let dt_cap = T::lit(0.5) * h * h;
    while t < t_end {
        let stable = dt_cap / (T::one() + (alpha * lambda + beta).abs() * h);
        let mut dt = grid.dt.min(stable);
        let mut last = false;
        if t + dt >= t_end * (T::one() - T::epsilon() * T::lit(4.0)) {
            dt = t_end - t;
            last = true;
        }
        let t_next = if last { t_end } else { t + dt };
        rhs.copy_from_slice(&r[1..n]);
        let guess = if sol.stats.steps == 0 { lambda } else { T::lit(2.0) * lambda - lambda_prev };
        let outcome = scheme::resolve(
            &mut sweep,
            &rhs,
            T::zero(),
            guess,
            |l| scheme::stencil(h, dt, alpha * l + beta, l),
            |st, u1| {
                // the reaction term must replace exactly what leaves
                -scheme::outflow(st, h, dt, u1)
            },
        );
        let lambda_new = match outcome {
            FixedPoint::Converged { value, iters } => {
                sol.stats.max_fixed_point_iters = sol.stats.max_fixed_point_iters.max(iters);
                value
            }
            FixedPoint::Diverged => {
                sol.blowup = Some(BlowupEvent { t: t_next, trigger: Trigger::FixedPointDivergence });
                break;
            }
        };
        sweep.substitute(T::zero(), &mut r[1..n]);
        let min_value = r.iter().copied().fold(T::infinity(), T::min);
        if min_value < T::lit(POSITIVITY_FLOOR) {
            return Err(Error::SchemeFailure {
                t: t_next.as_f64(),
                reason: format!("normalised density dropped to {min_value}"),
            });
        }
        sol.stats.min_value = sol.stats.min_value.min(min_value);
        let pre_mass = quad::trapezoid(h, &r);
        sol.stats.max_ledger_error = sol.stats.max_ledger_error.max((pre_mass - T::one()).abs());
        r.iter_mut().for_each(|v| *v = *v / pre_mass);
        sol.stats.steps += 1;

        lambda_prev = lambda;
        lambda = lambda_new;
        t = t_next;
        log_qbar = log_qbar + dt * lambda;
        budget = budget + dt * lambda * lambda;

        let trigger = if budget > budget_cap * (T::one() + t) {
            Some(Trigger::LambdaBudget)
        } else if lambda.abs() * dt > T::lit(FLUX_STEP_FACTOR) * h {
            Some(Trigger::FluxStep)
        } else if -lambda * dt > T::lit(SURVIVAL_DROP) {
            Some(Trigger::MassLoss)
        } else if alpha > T::zero() && scheme::local_cascade(&r, h, grid.jump_window, amplify) >= T::one() {
            Some(Trigger::Jump)
        } else if log_qbar < T::lit(SURVIVAL_FLOOR).ln() {
            Some(Trigger::SurvivalUnderflow)
        } else {
            None
        };

        if pending_companion {
            sol.r_snapshots.push(Snapshot { t, level: log_qbar, values: r.clone(), companion: true });
            pending_companion = false;
        }
        while next_snapshot < snapshot_times.len() && t >= snapshot_times[next_snapshot] {
            if !pending_companion && sol.r_snapshots.last().is_none_or(|sn| sn.t != t) {
                sol.r_snapshots.push(Snapshot { t, level: log_qbar, values: r.clone(), companion: false });
                pending_companion = true;
            }
            next_snapshot += 1;
        }
        if t >= next_record || last || trigger.is_some() {
            record(&mut sol, t, lambda, log_qbar, budget, &r);
            while next_record <= t {
                next_record = next_record + record_dt;
            }
        }
        if let Some(trigger) = trigger {
            sol.blowup = Some(BlowupEvent { t, trigger });
            break;
        }
    }
    sol.stats.t_end = t;
    if sol.r_snapshots.last().is_none_or(|sn| sn.t != t) {
        sol.r_snapshots.push(Snapshot { t, level: log_qbar, values: r, companion: false });
    }
    Ok(sol)
}

impl<T: Real> LogSolution<T> {
    pub fn h(&self) -> T {
        self.grid.h
    }

    pub fn blew_up(&self) -> bool {
        self.blowup.is_some()
    }

    /// The sub-probability density `q = q̄ r` of a stored snapshot.
    pub fn q_profile(&self, snapshot: &Snapshot<T>) -> Vec<T> {
        let qbar = snapshot.level.exp();
        snapshot.values.iter().map(|&r| r * qbar).collect()
    }

    /// `-½ q_x(0) / ∫q` evaluated on a reconstructed profile.
    pub fn lambda_from_q(&self, snapshot: &Snapshot<T>) -> T {
        let q = self.q_profile(snapshot);
        -scheme::half_slope(q[1], q[2], self.h()) / quad::trapezoid(self.h(), &q)
    }

    pub const SERIES_HEADER: &'static str = "t,lambda,qbar,I,J,lambda_l2_cum";

    pub fn write_series_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::SERIES_HEADER)?;
        for (i, &t) in self.lambda.times().iter().enumerate() {
            let row = [
                t,
                self.lambda.values()[i],
                self.qbar.values()[i],
                self.entropy_i.values()[i],
                self.entropy_j.values()[i],
                self.budget.values()[i],
            ];
            writeln!(out, "{}", csv_row(&row))?;
        }
        Ok(())
    }

    pub fn write_snapshot_csv<W: Write>(&self, mut out: W, snapshot: &Snapshot<T>) -> Result<()> {
        writeln!(out, "x,r,q")?;
        let q = self.q_profile(snapshot);
        for ((&x, &r), &q) in self.x.iter().zip(&snapshot.values).zip(&q) {
            writeln!(out, "{}", csv_row(&[x, r, q]))?;
        }
        Ok(())
    }
}

/// `I(t)` and `J(t)` at every stored snapshot.
pub fn entropy_series<T: Real>(sol: &LogSolution<T>, kit: &EntropyKit<T>) -> Result<(TimeSeries<T>, TimeSeries<T>)> {
    if (kit.h - sol.h()).abs() > T::epsilon() * sol.h() {
        return config("entropy kit grid does not match the solution grid");
    }
    let (mut i_series, mut j_series) = (TimeSeries::new(), TimeSeries::new());
    for sn in &sol.r_snapshots {
        let (i, j) = kit.functionals(&sn.values);
        i_series.push(sn.t, i);
        j_series.push(sn.t, j);
    }
    Ok((i_series, j_series))
}

/// The running `∫λ²` and its least-squares line over the run.
pub fn lambda_l2_budget<T: Real>(sol: &LogSolution<T>) -> BudgetReport<T> {
    let cumulative = sol.budget.clone();
    let (intercept, slope) = cumulative.linear_fit().unwrap_or((T::zero(), T::zero()));
    let range = match (cumulative.max_value(), cumulative.min_value()) {
        (Some(a), Some(b)) if a > b => a - b,
        _ => T::one(),
    };
    let (mut excess, mut deviation) = (T::zero(), T::zero());
    for (t, v) in cumulative.iter() {
        let d = v - (intercept + slope * t);
        excess = excess.max(d);
        deviation = deviation.max(d.abs());
    }
    BudgetReport {
        cumulative,
        intercept,
        slope,
        excess_fraction: excess / range,
        deviation_fraction: deviation / range,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bump_values() {
        assert_abs_diff_eq!(phi_bump(0.0f64), (-1.0f64).exp(), epsilon = 1e-16);
        assert_eq!(phi_bump(1.0f64), 0.0);
        assert_eq!(phi_bump(3.0f64), 0.0);
        for i in 1..250 {
            let x = i as f64 * 1e-3;
            let [phi, d1, _, _] = phi_derivatives(x);
            assert!(0.0 <= -d1 && -d1 <= phi, "x = {x}");
        }
    }

    #[test]
    fn bump_derivatives_match_differences() {
        let e = 1e-5;
        for &x in &[0.1f64, 0.4, 0.7, 0.9] {
            let d = phi_derivatives(x);
            for k in 0..3 {
                let fd = (phi_derivatives(x + e)[k] - phi_derivatives(x - e)[k]) / (2.0 * e);
                assert!((fd - d[k + 1]).abs() < 1e-6 * (1.0 + d[k + 1].abs()), "order {} at {x}", k + 1);
            }
        }
    }

    #[test]
    fn inflection_point() {
        let x0: f64 = phi_inflection();
        assert_abs_diff_eq!(x0, 3f64.powf(-0.25), epsilon = 1e-14);
        assert!((1..100).all(|i| phi_derivatives(x0 * i as f64 / 100.0)[2] <= 0.0));
    }

    #[test]
    fn kit_invariants() {
        let kit = EntropyKit::new(0.125f64, 1e-3).unwrap();
        assert_eq!(kit.omega_slope(), 0.25);
        assert_abs_diff_eq!(kit.phi()[0], (-1.0f64).exp(), epsilon = 1e-16);
        assert!(EntropyKit::new(0.2f64, 1e-3).is_err());
        // h ≡ 1 when r = ω
        let (i, j) = kit.functionals(kit.omega());
        assert_abs_diff_eq!(i, kit.stationary_i(), epsilon = 1e-9);
        assert!(j < 1e-6);
    }

    #[test]
    fn rejects_mass_at_origin() {
        let q0 = Density::exponential(1.0).unwrap();
        let params = ModelParams::log(1.0, 0.0).unwrap();
        assert!(matches!(solve_log(&q0, &params, 1.0, &GridConfig::new(0.05, 1e-3)), Err(Error::InvalidDensity(_))));
    }
}
