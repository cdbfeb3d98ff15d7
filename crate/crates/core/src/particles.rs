//! Interacting particle systems with default cascades.
//!
//! Linear feedback: `X_i = X_i(0) + B_i - α·(defaulted / n)`.
//! Log feedback: `X_i = X_i(0) + βt + B_i + α·ln(alive / n)`.
//!
//! Each particle carries a stream id; its Gaussian increment at step `k`
//! is the Philox block at counter `(stream, k, 0, 0)` under key
//! `(seed, 0)`, and its initial position comes from counter
//! `(stream, u64::MAX, 1, 0)`. Results therefore do not depend on thread
//! count or on the order in which particles are stored.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::model::{Density, Feedback, ModelParams};
use crate::num::Real;
use crate::output::csv_row;
use crate::rng::Philox;
use crate::series::TimeSeries;

const CHUNK: usize = 4096;
const INIT_STEP: u64 = u64::MAX;

/// Where particles start.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialLaw<T> {
    /// Every particle at `x0`.
    Point(T),
    Density(Density<T>),
}

impl<T: Real> InitialLaw<T> {
    fn sample(&self, u: T) -> T {
        match self {
            Self::Point(x0) => *x0,
            Self::Density(d) => d.quantile(u),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble<T> {
    pub positions: Vec<T>,
    pub alive: Vec<bool>,
    pub streams: Vec<u64>,
    pub defaulted: usize,
    pub seed: u64,
    pub t: T,
    pub step: u64,
}

impl<T: Real> ParticleEnsemble<T> {
    /// Draws `n` initial positions; particle `i` gets stream id `i`.
    pub fn sample(law: &InitialLaw<T>, n: usize, seed: u64) -> Self {
        let rng = Philox::new(seed, 0);
        let positions = (0..n as u64)
            .into_par_iter()
            .map(|i| law.sample(T::lit(crate::rng::open_unit(rng.block(i, INIT_STEP, 1)[0]))))
            .collect();
        Self::from_parts(positions, (0..n as u64).collect(), seed)
    }

    /// An ensemble with explicit positions and stream ids.
    pub fn from_parts(positions: Vec<T>, streams: Vec<u64>, seed: u64) -> Self {
        assert_eq!(positions.len(), streams.len(), "one stream id per particle");
        let alive = positions.iter().map(|&x| x > T::zero()).collect::<Vec<_>>();
        let defaulted = alive.iter().filter(|a| !**a).count();
        Self { positions, alive, streams, defaulted, seed, t: T::zero(), step: 0 }
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn alive_count(&self) -> usize {
        self.n() - self.defaulted
    }
}

fn count_new_defaults<T: Real>(positions: &[T], alive: &mut [bool]) -> usize {
    positions
        .par_chunks(CHUNK)
        .zip(alive.par_chunks_mut(CHUNK))
        .map(|(xs, al)| {
            let mut k = 0;
            for (x, a) in xs.iter().zip(al.iter_mut()) {
                if *a && *x <= T::zero() {
                    *a = false;
                    k += 1;
                }
            }
            k
        })
        .sum()
}

fn shift_survivors<T: Real>(positions: &mut [T], alive: &[bool], by: T) {
    positions.par_chunks_mut(CHUNK).zip(alive.par_chunks(CHUNK)).for_each(|(xs, al)| {
        for (x, a) in xs.iter_mut().zip(al) {
            if *a {
                *x = *x + by;
            }
        }
    });
}

/// Outcome of one cascade.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CascadeOutcome {
    pub newly_defaulted: usize,
    pub rounds: usize,
    /// Log feedback only: every particle has defaulted.
    pub terminal: bool,
}

/// Resolves a default cascade: all particles at or below zero default at
/// once, the survivors are shifted by the resulting feedback, and this is
/// repeated until a round produces no new default. `n` is the original
/// population size that normalises the linear feedback.
pub fn cascade_resolve<T: Real>(
    positions: &mut [T],
    alive: &mut [bool],
    alpha: T,
    model: Feedback,
    n: usize,
) -> CascadeOutcome {
    let n_t = T::from_usize_lossy(n);
    let mut alive_count = alive.iter().filter(|a| **a).count();
    let mut out = CascadeOutcome { newly_defaulted: 0, rounds: 0, terminal: false };
    loop {
        let k = count_new_defaults(positions, alive);
        if k == 0 {
            break;
        }
        out.rounds += 1;
        out.newly_defaulted += k;
        let before = alive_count;
        alive_count -= k;
        let shift = match model {
            Feedback::Linear => -alpha * T::from_usize_lossy(k) / n_t,
            Feedback::Log => {
                if alive_count == 0 {
                    out.terminal = true;
                    break;
                }
                alpha * (T::from_usize_lossy(alive_count) / T::from_usize_lossy(before)).ln()
            }
        };
        if shift == T::zero() {
            break;
        }
        shift_survivors(positions, alive, shift);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleConfig<T> {
    pub n: usize,
    pub dt: T,
    pub seed: u64,
    /// Brownian-bridge crossing test between monitoring times. Off by
    /// default; without it crossings are only seen at the grid times.
    #[serde(default)]
    pub bridge: bool,
}

/// Aggregates of a simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleRun<T> {
    pub model: Feedback,
    /// Empirical loss `defaulted / n` (linear) or survival `alive / n` (log).
    pub empirical: TimeSeries<T>,
    /// Defaults at each step, aligned with `empirical`.
    pub newly_defaulted: Vec<usize>,
    /// Largest fraction of the population lost in one step.
    pub max_step_loss: T,
    /// Time of that step.
    pub max_step_loss_t: T,
    /// Set when every particle defaulted under log feedback.
    pub terminated_at: Option<T>,
    pub ensemble: ParticleEnsemble<T>,
}

impl<T: Real> ParticleRun<T> {
    /// `newly / (n dt)`, a noisy estimate of the flux.
    pub fn flux_estimate(&self, dt: T) -> TimeSeries<T> {
        let n = T::from_usize_lossy(self.ensemble.n());
        let mut out = TimeSeries::new();
        for (i, &t) in self.empirical.times().iter().enumerate().skip(1) {
            out.push(t, T::from_usize_lossy(self.newly_defaulted[i]) / (n * dt));
        }
        out
    }

    pub const CSV_HEADER: &'static str = "t,loss_or_survival,newly_defaulted";

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for (i, (t, v)) in self.empirical.iter().enumerate() {
            writeln!(out, "{},{}", csv_row(&[t, v]), self.newly_defaulted[i])?;
        }
        Ok(())
    }
}

/// Draws the initial ensemble and runs it to `t_end`.
pub fn simulate<T: Real>(
    law: &InitialLaw<T>,
    params: &ModelParams<T>,
    t_end: T,
    cfg: &ParticleConfig<T>,
) -> Result<ParticleRun<T>> {
    if cfg.n < 100 {
        return config(format!("particle count {} below 100", cfg.n));
    }
    let ensemble = ParticleEnsemble::sample(law, cfg.n, cfg.seed);
    simulate_ensemble(ensemble, params, t_end, cfg)
}

/// Runs a prepared ensemble (its seed and stream ids drive the noise).
pub fn simulate_ensemble<T: Real>(
    mut ens: ParticleEnsemble<T>,
    params: &ModelParams<T>,
    t_end: T,
    cfg: &ParticleConfig<T>,
) -> Result<ParticleRun<T>> {
    params.validate()?;
    let dt = cfg.dt;
    if !(dt > T::zero()) || dt >= t_end {
        return config(format!("time step {dt} must be positive and below the horizon {t_end}"));
    }
    let n = ens.n();
    let n_t = T::from_usize_lossy(n);
    let (alpha, beta, model) = (params.alpha, params.beta, params.model);
    let level = |ens: &ParticleEnsemble<T>| match model {
        Feedback::Linear => T::from_usize_lossy(ens.defaulted) / n_t,
        Feedback::Log => T::from_usize_lossy(ens.alive_count()) / n_t,
    };
    let rng = Philox::new(ens.seed, 0);
    let drift = if model == Feedback::Log { beta * dt } else { T::zero() };
    let sqrt_dt = dt.sqrt();
    let two_over_dt = T::lit(2.0) / dt;

    // defaults present at time zero cascade first
    let first = cascade_resolve(&mut ens.positions, &mut ens.alive, alpha, model, n);
    ens.defaulted += first.newly_defaulted;
    let mut run = ParticleRun {
        model,
        empirical: TimeSeries::new(),
        newly_defaulted: vec![first.newly_defaulted],
        max_step_loss: T::zero(),
        max_step_loss_t: T::zero(),
        terminated_at: if first.terminal { Some(T::zero()) } else { None },
        ensemble: ens.clone(),
    };
    run.empirical.push(T::zero(), level(&ens));

    let steps = (t_end / dt).ceil().to_u64().unwrap_or(0);
    while ens.step < steps && run.terminated_at.is_none() {
        let k = ens.step;
        let bridge = cfg.bridge;
        ens.positions
            .par_chunks_mut(CHUNK)
            .zip(ens.alive.par_chunks(CHUNK))
            .zip(ens.streams.par_chunks(CHUNK))
            .for_each(|((xs, al), ids)| {
                for ((x, a), id) in xs.iter_mut().zip(al).zip(ids) {
                    if !*a {
                        continue;
                    }
                    let ([z, _], [u, _]) = rng.normals(*id, k, 0);
                    let before = *x;
                    let after = before + drift + sqrt_dt * T::lit(z);
                    *x = after;
                    // conditional probability that the bridge dipped below zero
                    if bridge && after > T::zero() && T::lit(u) < (-two_over_dt * before * after).exp() {
                        *x = T::zero();
                    }
                }
            });
        let outcome = cascade_resolve(&mut ens.positions, &mut ens.alive, alpha, model, n);
        ens.defaulted += outcome.newly_defaulted;
        ens.step += 1;
        ens.t = T::from_u64(ens.step).expect("step count") * dt;
        let frac = T::from_usize_lossy(outcome.newly_defaulted) / n_t;
        if frac > run.max_step_loss {
            run.max_step_loss = frac;
            run.max_step_loss_t = ens.t;
        }
        if outcome.terminal {
            run.terminated_at = Some(ens.t);
        }
        run.empirical.push(ens.t, level(&ens));
        run.newly_defaulted.push(outcome.newly_defaulted);
    }
    run.ensemble = ens;
    Ok(run)
}

/// Sup distance between two series with a tolerance
/// `3·max(n^{-1/2}, h, √dt)·calibration`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison<T> {
    pub sup_distance: T,
    pub tolerance: T,
    pub pass: bool,
}

pub fn compare_to_pde<T: Real>(
    empirical: &TimeSeries<T>,
    pde: &TimeSeries<T>,
    n: usize,
    h: T,
    dt: T,
    calibration: T,
) -> Result<Comparison<T>> {
    let sup_distance = empirical.sup_distance(pde)?;
    let scale = T::from_usize_lossy(n).sqrt().recip().max(h).max(dt.sqrt());
    let tolerance = T::lit(3.0) * scale * calibration;
    Ok(Comparison { sup_distance, tolerance, pass: sup_distance <= tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cascade_examples() {
        let mut x = vec![0.5f64, 1.0, -0.1];
        let mut alive = vec![true; 3];
        let out = cascade_resolve(&mut x, &mut alive, 0.3, Feedback::Linear, 3);
        assert_eq!(out.newly_defaulted, 1);
        assert!((x[0] - 0.4).abs() < 1e-15 && (x[1] - 0.9).abs() < 1e-15);

        let mut x = vec![0.5f64, 1.0, -0.1];
        let mut alive = vec![true; 3];
        let out = cascade_resolve(&mut x, &mut alive, 1.6, Feedback::Linear, 3);
        assert_eq!(out.newly_defaulted, 3);
        assert_eq!(out.rounds, 3);

        let mut x = vec![0.5f64, 1.0, 2.0];
        let mut alive = vec![true; 3];
        let out = cascade_resolve(&mut x, &mut alive, 5.0, Feedback::Linear, 3);
        assert_eq!(out.newly_defaulted, 0);
        assert_eq!(x, vec![0.5, 1.0, 2.0]);
    }

    #[test]
    fn log_cascade_shift_and_terminal_state() {
        let mut x = vec![0.5f64, 1.0, -0.1, 3.0];
        let mut alive = vec![true; 4];
        let out = cascade_resolve(&mut x, &mut alive, 0.2, Feedback::Log, 4);
        assert_eq!(out.newly_defaulted, 1);
        assert!((x[0] - (0.5 + 0.2 * (0.75f64).ln())).abs() < 1e-15);

        let mut x = vec![-1.0f64, -2.0];
        let mut alive = vec![true; 2];
        assert!(cascade_resolve(&mut x, &mut alive, 0.2, Feedback::Log, 2).terminal);
    }

    #[test]
    fn rejects_bad_configs() {
        let params = ModelParams::linear(0.0).unwrap();
        let law = InitialLaw::Point(1.0);
        let cfg = ParticleConfig { n: 1000, dt: 1.0, seed: 1, bridge: true };
        assert!(simulate(&law, &params, 1.0, &cfg).is_err());
        let cfg = ParticleConfig { n: 10, dt: 0.01, seed: 1, bridge: true };
        assert!(simulate(&law, &params, 1.0, &cfg).is_err());
    }

    #[test]
    fn identical_series_compare_to_zero() {
        let s = TimeSeries::from_parts(vec![0.0, 1.0], vec![0.0, 0.5]).unwrap();
        let c = compare_to_pde(&s, &s, 1000, 0.01, 1e-4, 1.0).unwrap();
        assert_eq!(c.sup_distance, 0.0);
        assert!(c.pass);
    }
}
