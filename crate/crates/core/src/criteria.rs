//! Mechanical blow-up and global-existence verdicts.
//!
//! Linear feedback blows up when `μα ∫e^{-μx}p0 ≥ 1` for some `μ > 0`, in
//! which case the flux is infinite before `T = (2/μ²) ln(∫p0 / ∫e^{-μx}p0)`,
//! or when `α > 2 ∫x p0`. It exists globally when `p0` vanishes at both ends
//! and `∫_0^x (1 - α p0) > 0` for every `x > 0`. Log feedback blows up when
//! `(1 + αμ) ∫e^{-μx}q0 ≥ ∫q0` for some `μ > 2β`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::model::{Density, Feedback};
use crate::num::Real;
use crate::output::fmt_num;

/// Relative slack accepted when a criterion holds with equality.
const FEASIBILITY_SLACK: f64 = 1e-12;
/// Margin required of the partial deficit on the check grid.
const DEFICIT_MARGIN: f64 = 1e-10;
const DEFICIT_POINTS: usize = 10_000;
const DEFICIT_RANGE: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerdictKind<T> {
    /// Blow-up no later than `t_bound`; `+∞` when only the mean clause
    /// applies, which carries no explicit time.
    Blowup {
        t_bound: T,
    },
    NoBlowup,
    Indeterminate,
}

/// Where a verdict was decided: the `μ` that certifies blow-up, or the `x`
/// at which the partial deficit is smallest together with that minimum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Witness<T> {
    pub mu: Option<T>,
    pub x: Option<T>,
    pub margin: Option<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict<T> {
    pub kind: VerdictKind<T>,
    pub witness: Option<Witness<T>>,
}

impl<T: Real> Verdict<T> {
    fn indeterminate() -> Self {
        Self { kind: VerdictKind::Indeterminate, witness: None }
    }

    pub fn is_blowup(&self) -> bool {
        matches!(self.kind, VerdictKind::Blowup { .. })
    }

    pub fn t_bound(&self) -> Option<T> {
        match self.kind {
            VerdictKind::Blowup { t_bound } => Some(t_bound),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            VerdictKind::Blowup { .. } => "blowup",
            VerdictKind::NoBlowup => "no_blowup",
            VerdictKind::Indeterminate => "indeterminate",
        }
    }

    pub const CSV_HEADER: &'static str = "model,alpha,beta,kind,T_bound,witness_mu,witness_x";

    /// One CSV record matching [`Self::CSV_HEADER`]; absent fields are empty.
    pub fn csv_record(&self, model: Feedback, alpha: T, beta: T) -> String {
        let opt = |v: Option<T>| v.map(fmt_num).unwrap_or_default();
        let w = self.witness.unwrap_or_default();
        let model = match model {
            Feedback::Linear => "linear",
            Feedback::Log => "log",
        };
        format!(
            "{model},{},{},{},{},{},{}",
            fmt_num(alpha),
            fmt_num(beta),
            self.label(),
            opt(self.t_bound()),
            opt(w.mu),
            opt(w.x)
        )
    }
}

impl<T: Real> fmt::Display for Verdict<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            VerdictKind::Blowup { t_bound } => write!(f, "blowup before {t_bound}"),
            VerdictKind::NoBlowup => f.write_str("no blowup"),
            VerdictKind::Indeterminate => f.write_str("indeterminate"),
        }
    }
}

/// 64 log-spaced values on `[1e-2, 1e3]` merged with the exact decades in
/// that range, so that integer-valued witnesses such as `μ = 1` are hit.
pub fn default_mu_grid<T: Real>() -> Vec<T> {
    let (lo, hi) = (-2.0f64, 3.0f64);
    let mut grid: Vec<f64> = (0..64).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / 63.0)).collect();
    grid.extend((-2..=3).map(|k| 10f64.powi(k)));
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| ((*a - *b) / *b).abs() < 1e-12);
    grid.into_iter().map(T::lit).collect()
}

fn check_grid<T: Real>(mu_grid: &[T]) -> Result<()> {
    if mu_grid.is_empty() {
        return config("mu grid is empty");
    }
    if let Some(m) = mu_grid.iter().find(|m| !(**m > T::zero() && m.is_finite())) {
        return config(format!("mu grid entries must be positive and finite, found {m}"));
    }
    Ok(())
}

/// Partial deficit on the check grid (`10⁴` points up to `40 × scale`).
/// Returns the smallest grid value and the tightest interior point: the
/// lowest local minimum refined by golden-section search, or the first
/// node when the deficit is increasing throughout.
pub fn deficit_minimum<T: Real>(p0: &Density<T>, alpha: T) -> Result<DeficitScan<T>> {
    let x_max = T::lit(DEFICIT_RANGE) * p0.scale();
    let h = x_max / T::from_usize_lossy(DEFICIT_POINTS);
    let node = |i: usize| h * T::from_usize_lossy(i);
    let d = (1..=DEFICIT_POINTS).map(|i| p0.partial_deficit(alpha, node(i))).collect::<Result<Vec<T>>>()?;
    let grid_min = d.iter().copied().fold(T::infinity(), T::min);
    let mut tight = 0;
    for k in 1..d.len() - 1 {
        if d[k] <= d[k - 1] && d[k] <= d[k + 1] && (tight == 0 || d[k] < d[tight]) {
            tight = k;
        }
    }
    if tight == 0 {
        return Ok(DeficitScan { grid_min, x: node(1), value: d[0] });
    }
    let f = |x: T| p0.partial_deficit(alpha, x).unwrap_or(T::infinity());
    let (mut a, mut b) = (node(tight), node(tight + 2));
    let g = T::lit(0.618_033_988_749_894_9);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let e = a + g * (b - a);
        if f(c) < f(e) {
            b = e;
        } else {
            a = c;
        }
    }
    let x = T::lit(0.5) * (a + b);
    let (x, value) = if f(x) < d[tight] { (x, f(x)) } else { (node(tight + 1), d[tight]) };
    Ok(DeficitScan { grid_min, x, value })
}

/// Outcome of [`deficit_minimum`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeficitScan<T> {
    /// Smallest deficit over the check grid.
    pub grid_min: T,
    /// Tightest interior point and the deficit there.
    pub x: T,
    pub value: T,
}

/// Verdict for linear feedback from initial density `p0`.
pub fn blowup_linear<T: Real>(p0: &Density<T>, alpha: T, mu_grid: &[T]) -> Result<Verdict<T>> {
    check_grid(mu_grid)?;
    if !(alpha > T::zero()) {
        return domain(format!("linear criteria need alpha > 0, got {alpha}"));
    }
    let mass = p0.mass();
    let slack = T::one() - T::lit(FEASIBILITY_SLACK);
    let mut best: Option<(T, T)> = None;
    for &mu in mu_grid {
        let moment = p0.exp_moment(mu)?;
        if mu * alpha * moment >= slack {
            let t = T::lit(2.0) / (mu * mu) * (mass / moment).ln();
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, mu));
            }
        }
    }
    if let Some((t_bound, mu)) = best {
        return Ok(Verdict {
            kind: VerdictKind::Blowup { t_bound },
            witness: Some(Witness { mu: Some(mu), ..Witness::default() }),
        });
    }
    if let Ok(mean) = p0.mean() {
        if alpha > T::lit(2.0) * mean {
            return Ok(Verdict { kind: VerdictKind::Blowup { t_bound: T::infinity() }, witness: None });
        }
    }
    if p0.vanishes_at_endpoints() {
        let scan = deficit_minimum(p0, alpha)?;
        if scan.grid_min > T::lit(DEFICIT_MARGIN) {
            return Ok(Verdict {
                kind: VerdictKind::NoBlowup,
                witness: Some(Witness { x: Some(scan.x), margin: Some(scan.value), ..Witness::default() }),
            });
        }
    }
    Ok(Verdict::indeterminate())
}

/// Verdict for log feedback; never `NoBlowup` because the global existence
/// result for this model has no explicit constants.
pub fn blowup_log<T: Real>(q0: &Density<T>, alpha: T, beta: T, mu_grid: &[T]) -> Result<Verdict<T>> {
    check_grid(mu_grid)?;
    let mass = q0.mass();
    let slack = T::one() - T::lit(FEASIBILITY_SLACK);
    let mut best: Option<(T, T)> = None;
    for &mu in mu_grid.iter().filter(|&&m| m > T::lit(2.0) * beta) {
        let moment = q0.exp_moment(mu)?;
        if (T::one() + alpha * mu) * moment >= slack * mass {
            let t = T::lit(2.0) / (mu * (mu - T::lit(2.0) * beta)) * (mass / moment).ln();
            if t > T::zero() && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, mu));
            }
        }
    }
    Ok(match best {
        Some((t_bound, mu)) => Verdict {
            kind: VerdictKind::Blowup { t_bound },
            witness: Some(Witness { mu: Some(mu), ..Witness::default() }),
        },
        None => Verdict::indeterminate(),
    })
}

/// Verdict for a point mass at `x0`: global existence when `α < x0`, blow-up
/// when `α > 2 x0`. The blow-up time uses `∫e^{-μx}δ = e^{-μ x0}`, so the
/// exponential condition holds iff `α ≥ e x0` and the best time `2 x0 / μ*`
/// comes from the largest root of `μ α e^{-μ x0} = 1`.
pub fn delta_verdict<T: Real>(x0: T, alpha: T) -> Result<Verdict<T>> {
    if !(x0 > T::zero() && alpha > T::zero()) {
        return domain(format!("delta verdict needs x0, alpha > 0 (x0 = {x0}, alpha = {alpha})"));
    }
    if alpha < x0 {
        return Ok(Verdict { kind: VerdictKind::NoBlowup, witness: None });
    }
    if alpha <= T::lit(2.0) * x0 {
        return Ok(Verdict::indeterminate());
    }
    let g = |mu: T| mu * alpha * (-mu * x0).exp() - T::one();
    let peak = x0.recip();
    if g(peak) < T::zero() {
        return Ok(Verdict { kind: VerdictKind::Blowup { t_bound: T::infinity() }, witness: None });
    }
    let (mut lo, mut hi) = (peak, peak * T::lit(2.0));
    while g(hi) >= T::zero() {
        lo = hi;
        hi = hi * T::lit(2.0);
    }
    for _ in 0..200 {
        let mid = T::lit(0.5) * (lo + hi);
        if g(mid) >= T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Verdict {
        kind: VerdictKind::Blowup { t_bound: T::lit(2.0) * x0 / lo },
        witness: Some(Witness { mu: Some(lo), ..Witness::default() }),
    })
}
