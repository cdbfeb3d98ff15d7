//! Model parameters and initial/evolved densities on the half-line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::num::Real;
use crate::quad;

/// Which feedback enters the dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    /// `X = X0 + B - α P(τ ≤ t)`.
    Linear,
    /// `X = X0 + βt + B + α log P(τ > t)`.
    Log,
}

/// Feedback strength, drift and the auxiliary entropy rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub alpha: T,
    pub beta: T,
    pub kappa: T,
    pub model: Feedback,
}

impl<T: Real> ModelParams<T> {
    /// Default entropy rate, the largest admissible value.
    pub fn default_kappa() -> T {
        T::lit(0.125)
    }

    pub fn linear(alpha: T) -> Result<Self> {
        let p = Self { alpha, beta: T::zero(), kappa: Self::default_kappa(), model: Feedback::Linear };
        p.validate()?;
        Ok(p)
    }

    pub fn log(alpha: T, beta: T) -> Result<Self> {
        let p = Self { alpha, beta, kappa: Self::default_kappa(), model: Feedback::Log };
        p.validate()?;
        Ok(p)
    }

    pub fn with_kappa(mut self, kappa: T) -> Result<Self> {
        self.kappa = kappa;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return domain("alpha and beta must be finite");
        }
        if !(self.kappa > T::zero() && self.kappa <= T::lit(0.125)) {
            return domain(format!("kappa = {} outside (0, 1/8]", self.kappa));
        }
        if self.model == Feedback::Linear && self.alpha < T::zero() {
            return domain(format!("linear feedback needs alpha >= 0, got {}", self.alpha));
        }
        Ok(())
    }
}

/// A sub-probability density on `[0, ∞)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Density<T> {
    /// `rate · e^{-rate x}`.
    Exponential { rate: T },
    /// `rate² · x · e^{-rate x}`.
    GammaShape2 { rate: T },
    /// Gaussian `N(center, width²)` restricted to `x > 0` and renormalised;
    /// stands in for a point mass at `center`.
    NarrowGaussian { center: T, width: T },
    /// Piecewise linear interpolation of node values, zero off the grid.
    Tabulated(Tabulated<T>),
}

/// Node values of a tabulated density.
#[derive(Clone, Debug, PartialEq)]
pub struct Tabulated<T> {
    grid: Vec<T>,
    values: Vec<T>,
    cum: Vec<T>,
}

impl<T: Real> Tabulated<T> {
    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    fn eval(&self, x: T) -> T {
        let n = self.grid.len();
        if x < self.grid[0] || x > self.grid[n - 1] {
            return T::zero();
        }
        let k = self.grid.partition_point(|&g| g <= x).clamp(1, n - 1);
        let (x0, x1) = (self.grid[k - 1], self.grid[k]);
        let w = (x - x0) / (x1 - x0);
        self.values[k - 1] + w * (self.values[k] - self.values[k - 1])
    }

    fn integrate_weighted(&self, weight: impl Fn(T) -> T) -> T {
        let ys: Vec<T> = self.grid.iter().zip(&self.values).map(|(&x, &v)| weight(x) * v).collect();
        quad::simpson(&self.grid, &ys)
    }

    fn cdf(&self, x: T) -> T {
        let n = self.grid.len();
        if x <= self.grid[0] {
            return T::zero();
        }
        let cum = &self.cum;
        if x >= self.grid[n - 1] {
            return cum[n - 1];
        }
        let k = self.grid.partition_point(|&g| g <= x).clamp(1, n - 1);
        let x0 = self.grid[k - 1];
        // partial interval integrated on the linear interpolant
        cum[k - 1] + T::lit(0.5) * (x - x0) * (self.values[k - 1] + self.eval(x))
    }
}

const ENDPOINT_THRESHOLD: f64 = 1e-6;
const MASS_SLACK: f64 = 1e-6;

impl<T: Real> Density<T> {
    pub fn exponential(rate: T) -> Result<Self> {
        positive("rate", rate)?;
        Ok(Self::Exponential { rate })
    }

    pub fn gamma_shape2(rate: T) -> Result<Self> {
        positive("rate", rate)?;
        Ok(Self::GammaShape2 { rate })
    }

    pub fn narrow_gaussian(center: T, width: T) -> Result<Self> {
        positive("center", center)?;
        positive("width", width)?;
        Ok(Self::NarrowGaussian { center, width })
    }

    /// Smoothed point mass at `center` with the default width `center / 50`.
    pub fn delta_like(center: T) -> Result<Self> {
        Self::narrow_gaussian(center, center / T::lit(50.0))
    }

    /// The stationary profile `ω(x) = 2κ x e^{-√(2κ) x}` of the normalised
    /// log-feedback equation; a shape-2 gamma density with rate `√(2κ)`.
    pub fn stationary_profile(kappa: T) -> Result<Self> {
        if !(kappa > T::zero() && kappa <= T::lit(0.125)) {
            return domain(format!("kappa = {kappa} outside (0, 1/8]"));
        }
        Self::gamma_shape2((T::lit(2.0) * kappa).sqrt())
    }

    pub fn tabulated(grid: Vec<T>, values: Vec<T>) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidDensity(m));
        if grid.len() != values.len() {
            return bad(format!("{} grid nodes but {} values", grid.len(), values.len()));
        }
        if grid.len() < 2 {
            return bad("tabulated density needs at least two nodes".into());
        }
        if let Some(i) = grid.iter().chain(&values).position(|v| !v.is_finite()) {
            return bad(format!("non-finite entry at position {i}"));
        }
        if grid[0] < T::zero() {
            return bad("grid starts below zero".into());
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("grid must be strictly increasing".into());
        }
        if let Some(v) = values.iter().find(|v| **v < T::zero()) {
            return bad(format!("negative density value {v}"));
        }
        // exact running integral of the piecewise linear interpolant
        let mut cum = Vec::with_capacity(grid.len());
        let mut acc = T::zero();
        cum.push(acc);
        for i in 1..grid.len() {
            acc = acc + T::lit(0.5) * (grid[i] - grid[i - 1]) * (values[i] + values[i - 1]);
            cum.push(acc);
        }
        let tab = Tabulated { grid, values, cum };
        let mass = tab.integrate_weighted(|_| T::one());
        if mass > T::one() + T::lit(MASS_SLACK) {
            return bad(format!("total mass {mass} exceeds one"));
        }
        Ok(Self::Tabulated(tab))
    }

    /// Density value at `x`; zero for `x < 0`.
    pub fn eval(&self, x: T) -> T {
        if x < T::zero() {
            return T::zero();
        }
        match self {
            Self::Exponential { rate } => *rate * (-*rate * x).exp(),
            Self::GammaShape2 { rate } => *rate * *rate * x * (-*rate * x).exp(),
            Self::NarrowGaussian { center, width } => {
                ((x - *center) / *width).norm_pdf() / (*width * gaussian_norm(*center, *width))
            }
            Self::Tabulated(t) => t.eval(x),
        }
    }

    /// Mass in `(0, x)`.
    pub fn cdf(&self, x: T) -> T {
        if x <= T::zero() {
            return T::zero();
        }
        match self {
            Self::Exponential { rate } => -(-*rate * x).exp_m1(),
            Self::GammaShape2 { rate } => {
                let y = *rate * x;
                -(-y).exp_m1() - y * (-y).exp()
            }
            Self::NarrowGaussian { center, width } => {
                let lo = (-*center / *width).norm_cdf();
                (((x - *center) / *width).norm_cdf() - lo) / gaussian_norm(*center, *width)
            }
            Self::Tabulated(t) => t.cdf(x),
        }
    }

    /// `∫_0^∞ d(x) dx`.
    pub fn mass(&self) -> T {
        match self {
            Self::Tabulated(t) => t.integrate_weighted(|_| T::one()),
            _ => T::one(),
        }
    }

    /// `∫_0^∞ e^{-μx} d(x) dx`.
    pub fn exp_moment(&self, mu: T) -> Result<T> {
        if !(mu >= T::zero()) {
            return domain(format!("exponential moment needs mu >= 0, got {mu}"));
        }
        Ok(match self {
            Self::Exponential { rate } => *rate / (*rate + mu),
            Self::GammaShape2 { rate } => {
                let r = *rate / (*rate + mu);
                r * r
            }
            Self::NarrowGaussian { center, width } => {
                let (c, s) = (*center, *width);
                let shifted = (c - mu * s * s) / s;
                (-mu * c + T::lit(0.5) * mu * mu * s * s).exp() * shifted.norm_cdf() / gaussian_norm(c, s)
            }
            Self::Tabulated(t) => t.integrate_weighted(|x| (-mu * x).exp()),
        })
    }

    /// `∫_0^∞ x d(x) dx`.
    pub fn mean(&self) -> Result<T> {
        Ok(match self {
            Self::Exponential { rate } => rate.recip(),
            Self::GammaShape2 { rate } => T::lit(2.0) / *rate,
            Self::NarrowGaussian { center, width } => {
                let z = *center / *width;
                *center + *width * z.norm_pdf() / gaussian_norm(*center, *width)
            }
            Self::Tabulated(t) => {
                let first = t.integrate_weighted(|x| x);
                let n = t.grid.len();
                let (x_end, v_end) = (t.grid[n - 1], t.values[n - 1]);
                // The first moment of the untabulated tail cannot be bounded
                // unless the table has decayed by its last node.
                let tail = x_end * v_end * (x_end - t.grid[0]);
                if tail > T::lit(1e-3) * first.max(T::min_positive_value()) {
                    return Err(Error::UnboundedMoment(format!(
                        "tabulated density has not decayed at x = {x_end} (value {v_end})"
                    )));
                }
                first
            }
        })
    }

    /// `∫_0^x (1 - α d(y)) dy`.
    pub fn partial_deficit(&self, alpha: T, x: T) -> Result<T> {
        if !(x >= T::zero()) {
            return domain(format!("partial deficit needs x >= 0, got {x}"));
        }
        Ok(x - alpha * self.cdf(x))
    }

    /// Characteristic length used to size truncated domains.
    pub fn scale(&self) -> T {
        match self {
            Self::Exponential { rate } | Self::GammaShape2 { rate } => rate.recip(),
            Self::NarrowGaussian { center, width } => *center + T::lit(5.0) * *width,
            Self::Tabulated(t) => t.grid[t.grid.len() - 1],
        }
    }

    /// Whether `limsup` of the density vanishes at `0` and at `∞`. Decided
    /// from the family for closed forms, from endpoint values otherwise.
    pub fn vanishes_at_endpoints(&self) -> bool {
        let small = |v: T| v < T::lit(ENDPOINT_THRESHOLD);
        match self {
            Self::Exponential { .. } => false,
            Self::GammaShape2 { .. } => true,
            Self::NarrowGaussian { .. } => small(self.eval(T::zero())),
            Self::Tabulated(t) => small(t.values[0]) && small(t.values[t.values.len() - 1]),
        }
    }

    /// Node values on `x_i = i h`, `i = 0..n`.
    pub fn sample_grid(&self, h: T, n: usize) -> Vec<T> {
        (0..n).map(|i| self.eval(T::from_usize_lossy(i) * h)).collect()
    }

    /// Inverse distribution function of the normalised density, used to
    /// draw initial particle positions from a uniform `u ∈ (0, 1)`.
    pub fn quantile(&self, u: T) -> T {
        match self {
            Self::Exponential { rate } => -(-u).ln_1p() / *rate,
            _ => {
                // normalise by the mass the distribution function reaches
                let total = match self {
                    Self::Tabulated(t) => t.cum[t.cum.len() - 1],
                    _ => T::one(),
                };
                let target = u * total;
                let mut lo = T::zero();
                let mut hi = self.scale().max(T::one());
                while self.cdf(hi) < target && hi < T::lit(1e12) {
                    hi = hi * T::lit(2.0);
                }
                for _ in 0..200 {
                    let mid = T::lit(0.5) * (lo + hi);
                    if self.cdf(mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= T::epsilon() * hi {
                        break;
                    }
                }
                T::lit(0.5) * (lo + hi)
            }
        }
    }

    /// Writes the density as `x,density` rows on the given nodes.
    pub fn write_csv<W: Write>(&self, mut out: W, grid: &[T]) -> Result<()> {
        writeln!(out, "x,density")?;
        for &x in grid {
            writeln!(out, "{},{}", crate::output::fmt_num(x), crate::output::fmt_num(self.eval(x)))?;
        }
        Ok(())
    }

    /// Reads a two-column `x,density` table into a tabulated density.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "x,density" {
            return Err(Error::Csv(format!("expected header `x,density`, found `{}`", header.trim())));
        }
        let (mut grid, mut values) = (Vec::new(), Vec::new());
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let mut field = |name: &str| -> Result<T> {
                let raw = cols.next().ok_or_else(|| Error::Csv(format!("line {}: missing {name}", lineno + 2)))?;
                raw.trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| Error::Csv(format!("line {}: {name}: {e}", lineno + 2)))
            };
            grid.push(field("x")?);
            values.push(field("density")?);
        }
        Self::tabulated(grid, values)
    }
}

fn gaussian_norm<T: Real>(center: T, width: T) -> T {
    (center / width).norm_cdf()
}

fn positive<T: Real>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidDensity(format!("{name} must be positive and finite, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn exp_table() -> Density<f64> {
        let grid: Vec<f64> = (0..4000).map(|i| 40.0 * i as f64 / 3999.0).collect();
        let values = grid.iter().map(|x| (-x).exp()).collect();
        Density::tabulated(grid, values).unwrap()
    }

    #[test]
    fn masses() {
        assert_eq!(Density::exponential(1.0).unwrap().mass(), 1.0);
        assert_eq!(Density::gamma_shape2(1.0).unwrap().mass(), 1.0);
        assert_abs_diff_eq!(exp_table().mass(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn exponential_moments_closed_form() {
        let e = Density::exponential(1.0).unwrap();
        let g = Density::gamma_shape2(1.0).unwrap();
        assert_eq!(e.exp_moment(1.0).unwrap(), 0.5);
        assert_eq!(g.exp_moment(1.0).unwrap(), 0.25);
        for d in [&e, &g, &exp_table()] {
            assert_eq!(d.exp_moment(0.0).unwrap(), d.mass());
        }
        assert_abs_diff_eq!(exp_table().exp_moment(1.0).unwrap(), 0.5, epsilon = 1e-6);
        assert!(matches!(e.exp_moment(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn means() {
        assert_eq!(Density::exponential(1.0).unwrap().mean().unwrap(), 1.0);
        assert_eq!(Density::gamma_shape2(1.0).unwrap().mean().unwrap(), 2.0);
        let sigma = 1e-3;
        let m: f64 = Density::narrow_gaussian(1.0, sigma).unwrap().mean().unwrap();
        assert!((m - 1.0).abs() <= 3.0 * sigma);
        assert_abs_diff_eq!(exp_table().mean().unwrap(), 1.0, epsilon = 1e-5);
    }

    #[test]
    fn undecayed_table_has_unbounded_mean() {
        let grid: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let values = vec![0.5; 100];
        let d = Density::tabulated(grid, values).unwrap();
        assert!(matches!(d.mean(), Err(Error::UnboundedMoment(_))));
    }

    #[test]
    fn partial_deficit_examples() {
        let g = Density::gamma_shape2(1.0).unwrap();
        let expected = 2.0 - 3.0 * (1.0 - 3.0 * (-2.0f64).exp());
        assert_abs_diff_eq!(g.partial_deficit(3.0, 2.0).unwrap(), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(expected, 0.218, epsilon = 5e-4);
        assert_eq!(g.partial_deficit(0.0, 1.7).unwrap(), 1.7);
        let n = Density::narrow_gaussian(1.0, 0.05).unwrap();
        assert_abs_diff_eq!(n.partial_deficit(0.5, 2.0).unwrap(), 1.5, epsilon = 0.01);
    }

    #[test]
    fn partial_deficit_matches_direct_quadrature() {
        for d in [
            Density::exponential(0.7).unwrap(),
            Density::gamma_shape2(1.3).unwrap(),
            Density::narrow_gaussian(1.0, 0.2).unwrap(),
        ] {
            for &x in &[0.1, 0.9, 2.5, 7.0] {
                let direct = crate::quad::gauss_kronrod(|y| 1.0 - 2.0 * d.eval(y), 0.0, x, 1e-13);
                assert_abs_diff_eq!(d.partial_deficit(2.0, x).unwrap(), direct, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(matches!(Density::tabulated(vec![0.0, 1.0], vec![0.0, f64::NAN]), Err(Error::InvalidDensity(_))));
        assert!(Density::tabulated(vec![0.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(Density::tabulated(vec![0.0, 1.0], vec![0.0, -1.0]).is_err());
        assert!(Density::tabulated(vec![0.0, 1.0], vec![3.0, 3.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = Density::gamma_shape2(1.0).unwrap();
        let grid: Vec<f64> = (0..2000).map(|i| i as f64 * 0.01).collect();
        let mut buf = Vec::new();
        d.write_csv(&mut buf, &grid).unwrap();
        assert!(buf.starts_with(b"x,density\n"));
        let back = Density::read_csv(buf.as_slice()).unwrap();
        for &x in &[0.05, 1.0, 3.33] {
            assert_abs_diff_eq!(back.eval(x), d.eval(x), epsilon = 2e-5);
        }
        assert!(Density::<f64>::read_csv("x,p\n0,0\n".as_bytes()).is_err());
    }

    #[test]
    fn quantiles_invert_cdf() {
        for d in [
            Density::exponential(2.0).unwrap(),
            Density::gamma_shape2(1.0).unwrap(),
            Density::narrow_gaussian(1.0, 0.02).unwrap(),
        ] {
            for &u in &[0.01, 0.3, 0.5, 0.97] {
                assert_abs_diff_eq!(d.cdf(d.quantile(u)), u, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn params_invariants() {
        assert!(ModelParams::linear(-0.1).is_err());
        assert!(ModelParams::log(-0.1, 1.0).is_ok());
        assert!(ModelParams::linear(1.0).unwrap().with_kappa(0.2).is_err());
        assert!(ModelParams::linear(1.0).unwrap().with_kappa(0.0).is_err());
    }

    #[test]
    fn stationary_profile_is_omega() {
        let w = Density::stationary_profile(0.125).unwrap();
        assert_abs_diff_eq!(w.eval(2.0), 0.5 * (-1.0f64).exp(), epsilon = 1e-15);
    }
}
