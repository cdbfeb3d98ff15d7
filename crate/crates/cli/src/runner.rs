use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mckv_core::criteria::{blowup_linear, blowup_log, default_mu_grid, delta_verdict, Verdict};
use mckv_core::fp_linear::{solve_linear, solve_linear_profile, GridConfig};
use mckv_core::fp_log::{lambda_l2_budget, solve_log};
use mckv_core::particles::{compare_to_pde, simulate, Comparison, ParticleRun};
use mckv_core::selfsim::SelfSimilar;
use mckv_core::{BlowupEvent, Feedback, Real, TimeSeries};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{self, InitialSpec, Scenario};

/// A single step loss above this fraction counts as a macroscopic cascade.
const CASCADE_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Criteria,
    SolveLinear,
    SolveLog,
    Particles,
    Compare,
    All,
}

impl Mode {
    fn criteria(self, s: &Scenario) -> bool {
        self == Mode::Criteria || (self == Mode::All && s.criteria.is_some())
    }

    fn solver(self, s: &Scenario) -> bool {
        matches!(self, Mode::SolveLinear | Mode::SolveLog | Mode::Compare) || (self == Mode::All && s.solver.is_some())
    }

    fn particles(self, s: &Scenario) -> bool {
        matches!(self, Mode::Particles | Mode::Compare) || (self == Mode::All && s.particles.is_some())
    }
}

/// Exit statuses.
pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_BLOWUP: u8 = 2;
pub const EXIT_TOLERANCE: u8 = 3;

#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub name: String,
    pub verdict: Option<Verdict<f64>>,
    pub solver_event: Option<BlowupEvent<f64>>,
    /// Time of the largest cascade when it is macroscopic, or of extinction.
    pub particle_event: Option<f64>,
    pub oracle_error: Option<f64>,
    pub comparison: Option<Comparison<f64>>,
    pub budget_slope: Option<f64>,
    pub failures: Vec<String>,
    pub exit_code: u8,
}

impl Report {
    pub fn blowup_seen(&self) -> bool {
        self.solver_event.is_some() || self.particle_event.is_some()
    }

    pub fn event_time(&self) -> Option<f64> {
        match (self.solver_event.map(|e| e.t), self.particle_event) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn finish(&mut self, s: &Scenario) {
        let seen = self.blowup_seen();
        match s.expect.blowup {
            Some(true) if !seen => self.failures.push("expected a blow-up event, none detected".into()),
            Some(false) if seen => {
                self.failures.push(format!("unexpected blow-up event at t = {:?}", self.event_time()))
            }
            _ => {}
        }
        if let (Some(limit), Some(t)) = (s.expect.event_before, self.event_time()) {
            if t >= limit {
                self.failures.push(format!("event at t = {t} is not before {limit}"));
            }
        }
        self.exit_code = if !self.failures.is_empty() {
            EXIT_TOLERANCE
        } else if seen {
            EXIT_BLOWUP
        } else {
            EXIT_OK
        };
    }
}

struct Artifacts {
    dir: Option<PathBuf>,
}

impl Artifacts {
    fn create(&self, name: &str) -> Result<Option<BufWriter<File>>> {
        let Some(dir) = &self.dir else { return Ok(None) };
        let path = dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Some(BufWriter::new(file)))
    }

    fn json<S: Serialize>(&self, name: &str, value: &S) -> Result<()> {
        if let Some(mut w) = self.create(name)? {
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    scenario: &'a Scenario,
    x_max: Option<f64>,
    trigger: Option<BlowupEvent<f64>>,
    stats: Option<mckv_core::fp_linear::RunStats<f64>>,
}

/// Runs the requested parts of a scenario; `base` resolves relative paths
/// and `out` receives artifacts.
pub fn run(s: &Scenario, mode: Mode, base: &Path, out: Option<&Path>) -> Result<Report> {
    let params = s.model.params()?;
    match (mode, params.model) {
        (Mode::SolveLinear, Feedback::Log) => bail!("solve-linear needs model.kind = linear"),
        (Mode::SolveLog, Feedback::Linear) => bail!("solve-log needs model.kind = log"),
        _ => {}
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let art = Artifacts { dir: out.map(Path::to_path_buf) };
    let mut report = Report { name: s.name.clone(), ..Report::default() };
    let mut meta = Meta { scenario: s, x_max: None, trigger: None, stats: None };

    if mode.criteria(s) {
        let grid = s.criteria.as_ref().and_then(|c| c.mu_grid.clone()).unwrap_or_else(default_mu_grid);
        let verdict = match (&s.initial, params.model) {
            (InitialSpec::SelfSimilar { .. }, _) => bail!("criteria do not apply to initial.kind = self_similar"),
            (InitialSpec::Point { x0 }, Feedback::Linear) => delta_verdict(*x0, params.alpha)?,
            (init, Feedback::Linear) => blowup_linear(&init.density(&s.model, base)?, params.alpha, &grid)?,
            (init, Feedback::Log) => blowup_log(&init.density(&s.model, base)?, params.alpha, params.beta, &grid)?,
        };
        if let Some(mut w) = art.create("verdict.csv")? {
            writeln!(w, "{}", Verdict::<f64>::CSV_HEADER)?;
            writeln!(w, "{}", verdict.csv_record(params.model, params.alpha, params.beta))?;
        }
        report.verdict = Some(verdict);
    }

    let mut pde_loss: Option<(TimeSeries<f64>, f64)> = None;
    if mode.solver(s) {
        let Some(grid) = s.solver.clone() else { bail!("this command needs a `solver` section") };
        match params.model {
            Feedback::Linear => {
                let sol = match &s.initial {
                    InitialSpec::SelfSimilar { beta, t0 } => {
                        let ss = SelfSimilar::new(0.0, *beta, params.alpha)?;
                        let x_max = grid.x_max.unwrap_or(2.0);
                        let n = (x_max / grid.h).round() as usize;
                        let p0 = (0..=n).map(|i| ss.u_eval(*t0, i as f64 * grid.h + ss.front(*t0))).collect();
                        let grid = GridConfig { x_max: Some(x_max), ..grid.clone() };
                        let sol = solve_linear_profile(p0, &params, s.horizon, &grid, |t| {
                            ss.u_eval(t0 + t, x_max + ss.front(t0 + t))
                        })?;
                        let err = sol
                            .loss
                            .iter()
                            .map(|(t, v)| (v - (ss.s_eval(t0 + t) - ss.s_eval(*t0))).abs())
                            .fold(0.0, f64::max);
                        report.oracle_error = Some(err);
                        sol
                    }
                    init => {
                        let sol = solve_linear(&init.density(&s.model, base)?, &params, s.horizon, &grid)?;
                        if let (InitialSpec::Point { x0 }, true) = (init, params.alpha == 0.0) {
                            // the Brownian first-passage law
                            let err = sol
                                .loss
                                .iter()
                                .filter(|(t, _)| *t > 0.0)
                                .map(|(t, v)| (v - 2.0 * f64::norm_cdf(-x0 / t.sqrt())).abs())
                                .fold(0.0, f64::max);
                            report.oracle_error = Some(err);
                        }
                        sol
                    }
                };
                if let Some(w) = art.create("series.csv")? {
                    sol.write_series_csv(w)?;
                }
                for snap in sol.snapshots.iter().filter(|sn| !sn.companion) {
                    if let Some(w) = art.create(&format!("snapshot_{:.6}.csv", snap.t))? {
                        sol.write_snapshot_csv(w, snap)?;
                    }
                }
                meta.x_max = sol.x.last().copied();
                meta.stats = Some(sol.stats);
                report.solver_event = sol.blowup;
                pde_loss = Some((sol.loss.clone(), grid.h));
            }
            Feedback::Log => {
                let sol = solve_log(&s.initial.density(&s.model, base)?, &params, s.horizon, &grid)?;
                if let Some(w) = art.create("series.csv")? {
                    sol.write_series_csv(w)?;
                }
                for snap in sol.r_snapshots.iter().filter(|sn| !sn.companion) {
                    if let Some(w) = art.create(&format!("snapshot_{:.6}.csv", snap.t))? {
                        sol.write_snapshot_csv(w, snap)?;
                    }
                }
                report.budget_slope = Some(lambda_l2_budget(&sol).slope);
                meta.x_max = sol.x.last().copied();
                meta.stats = Some(sol.stats);
                report.solver_event = sol.blowup;
                pde_loss = Some((sol.qbar.clone(), grid.h));
            }
        }
        meta.trigger = report.solver_event;
        if let Some(err) = report.oracle_error {
            if err > s.expect.oracle_tolerance {
                report.failures.push(format!("oracle error {err:.3e} exceeds {}", s.expect.oracle_tolerance));
            }
        }
    }

    if mode.particles(s) {
        let Some(cfg) = s.particles else { bail!("this command needs a `particles` section") };
        let run: ParticleRun<f64> = simulate(&s.initial.law(&s.model, base)?, &params, s.horizon, &cfg)?;
        if let Some(w) = art.create("empirical.csv")? {
            run.write_csv(w)?;
        }
        report.particle_event =
            run.terminated_at.or((run.max_step_loss >= CASCADE_FRACTION).then_some(run.max_step_loss_t));
        if let Some((pde, h)) = &pde_loss {
            let cmp = compare_to_pde(&run.empirical, pde, cfg.n, *h, cfg.dt, s.expect.calibration)?;
            // paths that blew up are not comparable past the event
            if !cmp.pass && !report.blowup_seen() {
                report.failures.push(format!(
                    "particle and solver paths differ by {:.3e} (tolerance {:.3e})",
                    cmp.sup_distance, cmp.tolerance
                ));
            }
            report.comparison = Some(cmp);
        }
    }

    report.finish(s);
    art.json("meta.json", &meta)?;
    art.json("summary.json", &report)?;
    Ok(report)
}

/// One row of a sweep table.
pub struct SweepRow {
    pub value: f64,
    pub report: Result<Report>,
}

pub const SWEEP_HEADER: &str = "value,verdict,event_time,sup_errors,budget_slope,exit_code";

/// Re-runs the scenario text with `field` set to each value, in parallel.
pub fn sweep(text: &str, field: &str, values: &[f64], base: &Path, out: Option<&Path>) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    let scenarios = values
        .iter()
        .map(|&v| {
            let mut s =
                config::parse(&config::with_field(text, field, v)?).with_context(|| format!("{field} = {v}"))?;
            // the varied field decides whether blow-up is expected
            s.expect.blowup = None;
            s.expect.event_before = None;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(values
        .par_iter()
        .zip(scenarios.par_iter())
        .enumerate()
        .map(|(i, (&value, s))| {
            let dir = out.map(|d| d.join(format!("run_{i:03}")));
            SweepRow { value, report: run(s, Mode::All, base, dir.as_deref()) }
        })
        .collect())
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(String::new, mckv_core::output::fmt_num)
}

pub fn sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for row in rows {
        let value = mckv_core::output::fmt_num(row.value);
        match &row.report {
            Ok(r) => {
                let mut errs = Vec::new();
                if let Some(e) = r.oracle_error {
                    errs.push(format!("oracle={}", mckv_core::output::fmt_num(e)));
                }
                if let Some(c) = r.comparison {
                    errs.push(format!("particles={}", mckv_core::output::fmt_num(c.sup_distance)));
                }
                writeln!(
                    w,
                    "{value},{},{},{},{},{}",
                    r.verdict.map_or("", |v| v.label()),
                    num(r.event_time()),
                    errs.join(";"),
                    num(r.budget_slope),
                    r.exit_code
                )?;
            }
            Err(_) => writeln!(w, "{value},error,,,,{EXIT_CONFIG}")?,
        }
    }
    Ok(())
}
