//! Finite-difference solver for the free-boundary Fokker-Planck equation
//!
//! ```text
//! p_t = ½p_xx + αN(t) p_x,   p(t, 0) = 0,   N(t) = ½p_x(t, 0),
//! ```
//!
//! posed on the fixed half-line; the drift `αN p_x` carries the motion of
//! the free boundary `αs(t)`, `s = ∫N`, of the equivalent Stefan problem.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::model::{Density, Feedback, ModelParams};
use crate::num::Real;
use crate::output::csv_row;
use crate::quad;
use crate::scheme::{self, BlowupEvent, FixedPoint, Trigger};
use crate::series::TimeSeries;
use crate::tridiag::Sweep;

const POSITIVITY_FLOOR: f64 = -1e-10;
const FLUX_STEP_FACTOR: f64 = 1e3;
const MASS_LOSS_FRACTION: f64 = 0.01;

fn default_window() -> usize {
    4
}

fn default_budget_cap() -> f64 {
    1.0
}

/// Discretisation shared by both solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig<T> {
    /// Spatial step.
    pub h: T,
    /// Largest time step; must not exceed `h²/2`.
    pub dt: T,
    /// Truncation point; defaults to `40 ×` the initial density's scale.
    #[serde(default)]
    pub x_max: Option<T>,
    /// Interval between recorded series points; defaults to `T / 2000`.
    #[serde(default)]
    pub record_dt: Option<T>,
    /// Times at which the full profile is kept, each together with the
    /// following step so that time derivatives can be formed.
    #[serde(default)]
    pub snapshots: Vec<T>,
    /// Number of nodes next to the origin inspected by the jump trigger.
    #[serde(default = "default_window")]
    pub jump_window: usize,
    /// Log model only: stop once `∫λ² > cap (1 + t)`.
    #[serde(default = "default_budget_cap")]
    pub budget_cap: f64,
}

impl<T: Real> GridConfig<T> {
    pub fn new(h: T, dt: T) -> Self {
        Self {
            h,
            dt,
            x_max: None,
            record_dt: None,
            snapshots: Vec::new(),
            jump_window: default_window(),
            budget_cap: default_budget_cap(),
        }
    }

    pub fn with_x_max(mut self, x_max: T) -> Self {
        self.x_max = Some(x_max);
        self
    }

    pub fn with_record_dt(mut self, record_dt: T) -> Self {
        self.record_dt = Some(record_dt);
        self
    }

    pub fn with_snapshots(mut self, times: Vec<T>) -> Self {
        self.snapshots = times;
        self
    }

    pub fn with_budget_cap(mut self, cap: f64) -> Self {
        self.budget_cap = cap;
        self
    }

    /// Checks the steps and returns the number of intervals on `[0, x_max]`.
    pub(crate) fn intervals(&self, x_max: T) -> Result<usize> {
        let (h, dt) = (self.h, self.dt);
        if !(h > T::zero() && dt > T::zero() && h.is_finite() && dt.is_finite()) {
            return config(format!("grid steps must be positive (h = {h}, dt = {dt})"));
        }
        if dt > T::lit(0.5) * h * h * (T::one() + T::lit(1e-9)) {
            return config(format!("dt = {dt} exceeds the step restriction h²/2 = {}", T::lit(0.5) * h * h));
        }
        let n = (x_max / h).round().to_usize().unwrap_or(0);
        if n < 4 {
            return config(format!("x_max = {x_max} leaves fewer than four cells of width {h}"));
        }
        if self.jump_window == 0 || self.jump_window >= n {
            return config(format!("jump window {} outside 1..{n}", self.jump_window));
        }
        Ok(n)
    }

    pub(crate) fn record_interval(&self, t_end: T) -> T {
        self.record_dt.unwrap_or(t_end / T::lit(2000.0))
    }
}

/// Stored profile at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot<T> {
    pub t: T,
    /// Cumulative loss `s(t)` (linear) or `ln q̄(t)` (log) at `t`.
    pub level: T,
    pub values: Vec<T>,
    /// Set on the step immediately following a requested snapshot.
    pub companion: bool,
}

/// Step statistics gathered along a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats<T> {
    pub steps: usize,
    pub max_fixed_point_iters: usize,
    pub min_value: T,
    /// Largest `|mass(t) + s(t) - mass(0)|` over all steps (linear) or the
    /// largest pre-normalisation mass drift of one step (log).
    pub max_ledger_error: T,
    pub t_end: T,
}

#[derive(Clone, Debug)]
pub struct LinearSolution<T> {
    pub params: ModelParams<T>,
    pub grid: GridConfig<T>,
    /// Node positions `x_i = i h`, `i = 0..=M`.
    pub x: Vec<T>,
    pub snapshots: Vec<Snapshot<T>>,
    pub flux: TimeSeries<T>,
    pub loss: TimeSeries<T>,
    pub mass: TimeSeries<T>,
    pub jump: TimeSeries<T>,
    pub blowup: Option<BlowupEvent<T>>,
    pub stats: RunStats<T>,
}

/// `½ p_x(0)` from the one-sided second-order stencil (with `p(0) = 0`).
pub fn boundary_flux<T: Real>(p: &[T], h: T) -> Result<T> {
    if p.len() < 3 {
        return config("boundary flux needs at least three nodes");
    }
    Ok(scheme::half_slope(p[1], p[2], h))
}

/// `sup_{x>0} α F(x) / x` with `F(x) = ∫_0^x p`. Values of at least one
/// flag that the cascade condition holds somewhere on the grid.
pub fn jump_indicator<T: Real>(p: &[T], h: T, alpha: T) -> T {
    if alpha == T::zero() {
        return T::zero();
    }
    scheme::global_cascade(p, h, |f| alpha * f)
}

/// Runs the solver from a density; homogeneous Dirichlet data at `x_max`.
pub fn solve_linear<T: Real>(
    p0: &Density<T>,
    params: &ModelParams<T>,
    t_end: T,
    grid: &GridConfig<T>,
) -> Result<LinearSolution<T>> {
    let mass = p0.mass();
    if !(mass > T::zero() && mass <= T::one() + T::lit(1e-6)) {
        return Err(Error::InvalidDensity(format!("initial mass {mass} outside (0, 1]")));
    }
    let x_max = grid.x_max.unwrap_or(T::lit(40.0) * p0.scale());
    let n = grid.intervals(x_max)?;
    let mut values = p0.sample_grid(grid.h, n + 1);
    values[0] = T::zero();
    values[n] = T::zero();
    solve_linear_profile(values, params, t_end, grid, |_| T::zero())
}

/// Runs the solver from node values `p0[i] ≈ p(0, i h)` with time-dependent
/// Dirichlet data `right(t)` at the last node.
pub fn solve_linear_profile<T: Real>(
    p0: Vec<T>,
    params: &ModelParams<T>,
    t_end: T,
    grid: &GridConfig<T>,
    right: impl Fn(T) -> T,
) -> Result<LinearSolution<T>> {
    params.validate()?;
    if params.model != Feedback::Linear {
        return config("solve_linear needs linear feedback parameters");
    }
    if !(t_end > T::zero()) {
        return config(format!("final time must be positive, got {t_end}"));
    }
    let h = grid.h;
    let n = p0.len() - 1;
    grid.intervals(h * T::from_usize_lossy(n))?;
    if let Some(v) = p0.iter().find(|v| !v.is_finite() || **v < T::lit(POSITIVITY_FLOOR)) {
        return Err(Error::InvalidDensity(format!("initial profile contains {v}")));
    }
    let alpha = params.alpha;
    let x: Vec<T> = (0..=n).map(|i| h * T::from_usize_lossy(i)).collect();
    let mut p = p0;
    p[0] = T::zero();
    p[n] = right(T::zero());

    let mut sweep = Sweep::new(n - 1);
    let mut rhs = vec![T::zero(); n - 1];
    let mut snapshot_times: Vec<T> = grid.snapshots.iter().copied().filter(|&t| t >= T::zero()).collect();
    snapshot_times.sort_by(|a, b| a.partial_cmp(b).expect("finite snapshot times"));
    let mut next_snapshot = 0;
    let record_dt = grid.record_interval(t_end);

    // Mass is measured with the trapezoid rule, under which the scheme
    // conserves exactly: what leaves is what the flux reports.
    let mass0 = quad::trapezoid(h, &p);
    let mut flux_now = boundary_flux(&p, h)?;
    let mut flux_prev = flux_now;
    let mut t = T::zero();
    let mut s = T::zero();
    let mut mass_now = mass0;

    let mut sol = LinearSolution {
        params: *params,
        grid: grid.clone(),
        x,
        snapshots: Vec::new(),
        flux: TimeSeries::new(),
        loss: TimeSeries::new(),
        mass: TimeSeries::new(),
        jump: TimeSeries::new(),
        blowup: None,
        stats: RunStats { min_value: T::infinity(), ..RunStats::default() },
    };
    let record = |sol: &mut LinearSolution<T>, t: T, flux: T, s: T, mass: T, p: &[T]| {
        sol.flux.push(t, flux);
        sol.loss.push(t, s);
        sol.mass.push(t, mass);
        sol.jump.push(t, jump_indicator(p, h, alpha));
    };
    record(&mut sol, t, flux_now, s, mass_now, &p);
    let mut next_record = record_dt;
    let mut pending_companion = false;
    if snapshot_times.first().is_some_and(|&ts| ts <= T::zero()) {
        sol.snapshots.push(Snapshot { t, level: s, values: p.clone(), companion: false });
        next_snapshot = 1;
        pending_companion = true;
    }

    let dt_cap = T::lit(0.5) * h * h;
    while t < t_end {
        let stable = dt_cap / (T::one() + alpha * flux_now.abs() * h);
        let mut dt = grid.dt.min(stable);
        let mut last = false;
        if t + dt >= t_end * (T::one() - T::epsilon() * T::lit(4.0)) {
            dt = t_end - t;
            last = true;
        }
        let t_next = if last { t_end } else { t + dt };
        let p_right = right(t_next);
        rhs.copy_from_slice(&p[1..n]);
        let guess = if sol.stats.steps == 0 { flux_now } else { T::lit(2.0) * flux_now - flux_prev };
        let outcome = scheme::resolve(
            &mut sweep,
            &rhs,
            p_right,
            guess,
            |nn| scheme::stencil(h, dt, -alpha * nn, T::zero()),
            |st, u1| scheme::outflow(st, h, dt, u1),
        );
        let flux_new = match outcome {
            FixedPoint::Converged { value, iters } => {
                sol.stats.max_fixed_point_iters = sol.stats.max_fixed_point_iters.max(iters);
                value
            }
            FixedPoint::Diverged => {
                sol.blowup = Some(BlowupEvent { t: t_next, trigger: Trigger::FixedPointDivergence });
                break;
            }
        };
        sweep.substitute(T::zero(), &mut p[1..n]);
        p[n] = p_right;
        let min_value = p.iter().copied().fold(T::infinity(), T::min);
        if min_value < T::lit(POSITIVITY_FLOOR) {
            return Err(Error::SchemeFailure { t: t_next.as_f64(), reason: format!("density dropped to {min_value}") });
        }
        sol.stats.min_value = sol.stats.min_value.min(min_value);
        sol.stats.steps += 1;

        flux_prev = flux_now;
        flux_now = flux_new;
        t = t_next;
        let lost = dt * flux_now;
        s = s + lost;
        let mass_prev = mass_now;
        mass_now = quad::trapezoid(h, &p);
        sol.stats.max_ledger_error = sol.stats.max_ledger_error.max((mass_now + s - mass0).abs());

        let trigger = if lost > T::lit(FLUX_STEP_FACTOR) * h {
            Some(Trigger::FluxStep)
        } else if mass_prev - mass_now > T::lit(MASS_LOSS_FRACTION) * mass_prev {
            Some(Trigger::MassLoss)
        } else if alpha > T::zero() && scheme::local_cascade(&p, h, grid.jump_window, |f| alpha * f) >= T::one() {
            Some(Trigger::Jump)
        } else {
            None
        };

        if pending_companion {
            sol.snapshots.push(Snapshot { t, level: s, values: p.clone(), companion: true });
            pending_companion = false;
        }
        while next_snapshot < snapshot_times.len() && t >= snapshot_times[next_snapshot] {
            if !pending_companion && sol.snapshots.last().is_none_or(|sn| sn.t != t) {
                sol.snapshots.push(Snapshot { t, level: s, values: p.clone(), companion: false });
                pending_companion = true;
            }
            next_snapshot += 1;
        }
        if t >= next_record || last || trigger.is_some() {
            record(&mut sol, t, flux_now, s, mass_now, &p);
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
    if sol.snapshots.last().is_none_or(|sn| sn.t != t) {
        sol.snapshots.push(Snapshot { t, level: s, values: p, companion: false });
    }
    Ok(sol)
}

/// The double integral `m(t, x) = ∫∫ (1 - αu)` measured from the free
/// boundary, in the fixed frame `ξ = x - αs(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MTransform<T> {
    pub t: T,
    /// Front position `αs(t)` in the Stefan frame.
    pub front: T,
    /// `ξ_i = x_i`, so the Stefan coordinate is `front + ξ_i`.
    pub xi: Vec<T>,
    pub m: Vec<T>,
    /// `m_t - ½m_xx` at interior nodes, from the snapshot pair.
    pub operator: Vec<T>,
    /// `|m| + |m_x|` at the front, as represented by the construction.
    pub boundary: T,
}

impl<T: Real> MTransform<T> {
    /// Max-norm of `m_t - ½m_xx + c` over the interior. The function
    /// satisfies the equation with `c = ½`.
    pub fn residual_against(&self, c: T) -> T {
        self.operator.iter().fold(T::zero(), |acc, &v| acc.max((v + c).abs()))
    }

    pub fn residual(&self) -> T {
        self.residual_against(T::lit(0.5))
    }
}

/// Barrier comparison of the loss against `α⁻¹β(√(2(t+t0)) - √(2 t0))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport<T> {
    pub holds: bool,
    /// `sup_t s(t) / barrier(t)`.
    pub max_ratio: T,
    /// `max N(t)√t` over `[t_min, T]`.
    pub max_flux_sqrt_t: T,
}

impl<T: Real> LinearSolution<T> {
    pub fn h(&self) -> T {
        self.grid.h
    }

    pub fn blew_up(&self) -> bool {
        self.blowup.is_some()
    }

    /// Builds the m-transform from the snapshot at `t` (nearest requested
    /// snapshot) and its companion step.
    pub fn m_transform(&self, t: T) -> Result<MTransform<T>> {
        let idx = self
            .snapshots
            .windows(2)
            .enumerate()
            .filter(|(_, w)| !w[0].companion && w[1].companion)
            .min_by(|(_, a), (_, b)| {
                (a[0].t - t).abs().partial_cmp(&(b[0].t - t).abs()).expect("finite snapshot times")
            })
            .map(|(i, _)| i);
        let Some(i) = idx else {
            return config("no snapshot pair available for the m-transform");
        };
        let (a, b) = (&self.snapshots[i], &self.snapshots[i + 1]);
        let tol = self.grid.record_interval(self.stats.t_end).max(self.grid.dt);
        if (a.t - t).abs() > tol {
            return config(format!("nearest snapshot pair at {} is too far from {t}", a.t));
        }
        let h = self.h();
        let alpha = self.params.alpha;
        let half = T::lit(0.5);
        let double = |p: &[T]| -> (Vec<T>, Vec<T>) {
            let f = quad::cumulative_trapezoid(h, p);
            let g = quad::cumulative_trapezoid(h, &f);
            let m = self.x.iter().zip(&g).map(|(&x, &g)| half * x * x - alpha * g).collect();
            (m, f)
        };
        let (ma, _) = double(&a.values);
        let (mb, fb) = double(&b.values);
        let delta = b.t - a.t;
        let flux = (b.level - a.level) / delta;
        let n = self.x.len();
        let operator = (1..n - 1)
            .map(|i| {
                let mt = (mb[i] - ma[i]) / delta;
                let mx = (mb[i + 1] - mb[i - 1]) / (T::lit(2.0) * h);
                let mxx = (mb[i + 1] - T::lit(2.0) * mb[i] + mb[i - 1]) / (h * h);
                // chain rule: the Stefan frame moves with speed αN
                mt - alpha * flux * mx - half * mxx
            })
            .collect();
        let boundary = mb[0].abs() + (self.x[0] - alpha * fb[0]).abs();
        Ok(MTransform { t: b.t, front: alpha * b.level, xi: self.x.clone(), m: mb, operator, boundary })
    }

    /// Compares the loss against the shifted barrier over recorded times and
    /// reports `max N√t` over `[t_min, T]`.
    pub fn barrier_check_shifted(&self, beta: T, t0: T, t_min: T, tol: T) -> BarrierReport<T> {
        let two = T::lit(2.0);
        let alpha = self.params.alpha;
        let mut max_ratio = T::zero();
        for (t, s) in self.loss.iter().filter(|(t, _)| *t > T::zero()) {
            let barrier = beta / alpha * ((two * (t + t0)).sqrt() - (two * t0).sqrt());
            max_ratio = max_ratio.max(s / barrier);
        }
        let max_flux_sqrt_t =
            self.flux.iter().filter(|(t, _)| *t >= t_min).fold(T::zero(), |acc, (t, n)| acc.max(n * t.sqrt()));
        BarrierReport { holds: max_ratio <= T::one() + tol && max_flux_sqrt_t.is_finite(), max_ratio, max_flux_sqrt_t }
    }

    /// `s(t) ≤ α⁻¹β√(2t)` at every recorded time and `N√t` finite.
    pub fn barrier_check(&self, beta: T, t_min: T) -> BarrierReport<T> {
        self.barrier_check_shifted(beta, T::zero(), t_min, T::zero())
    }

    /// Smallest `β` for which the unshifted barrier holds on the record.
    pub fn minimal_barrier_beta(&self) -> T {
        let two = T::lit(2.0);
        self.loss
            .iter()
            .filter(|(t, _)| *t > T::zero())
            .fold(T::zero(), |acc, (t, s)| acc.max(self.params.alpha * s / (two * t).sqrt()))
    }

    pub const SERIES_HEADER: &'static str = "t,N,s,mass,jump_indicator";

    pub fn write_series_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::SERIES_HEADER)?;
        for (i, &t) in self.flux.times().iter().enumerate() {
            let row = [t, self.flux.values()[i], self.loss.values()[i], self.mass.values()[i], self.jump.values()[i]];
            writeln!(out, "{}", csv_row(&row))?;
        }
        Ok(())
    }

    pub fn write_snapshot_csv<W: Write>(&self, mut out: W, snapshot: &Snapshot<T>) -> Result<()> {
        writeln!(out, "x,p")?;
        for (&x, &p) in self.x.iter().zip(&snapshot.values) {
            writeln!(out, "{}", csv_row(&[x, p]))?;
        }
        Ok(())
    }
}
