//! Scenario files: JSON with a `version` field.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mckv_core::fp_linear::GridConfig;
use mckv_core::particles::{InitialLaw, ParticleConfig};
use mckv_core::{Density, Feedback, ModelParams};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub model: ModelSpec,
    pub initial: InitialSpec,
    /// Final time of every engine run.
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<GridConfig<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<ParticleConfig<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<CriteriaSpec>,
    #[serde(default)]
    pub expect: Expect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: Feedback,
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_kappa() -> f64 {
    0.125
}

impl ModelSpec {
    pub fn params(&self) -> Result<ModelParams<f64>> {
        let base = match self.kind {
            Feedback::Linear => {
                if self.beta != 0.0 {
                    bail!("model.beta applies to the log model only");
                }
                ModelParams::linear(self.alpha)?
            }
            Feedback::Log => ModelParams::log(self.alpha, self.beta)?,
        };
        Ok(base.with_kappa(self.kappa)?)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Exponential {
        rate: f64,
    },
    GammaShape2 {
        rate: f64,
    },
    NarrowGaussian {
        center: f64,
        width: f64,
    },
    /// Point mass; solvers see a Gaussian of width `x0 / 50`.
    Point {
        x0: f64,
    },
    /// The stationary profile for the model's `kappa`.
    StationaryProfile,
    /// Two-column CSV (`x,density`); relative paths resolve against the
    /// scenario file.
    Tabulated {
        path: PathBuf,
    },
    /// The exact travelling profile at time `t0` (linear model, `c = 0`).
    SelfSimilar {
        beta: f64,
        t0: f64,
    },
}

impl InitialSpec {
    pub fn density(&self, model: &ModelSpec, base: &Path) -> Result<Density<f64>> {
        Ok(match self {
            Self::Exponential { rate } => Density::exponential(*rate)?,
            Self::GammaShape2 { rate } => Density::gamma_shape2(*rate)?,
            Self::NarrowGaussian { center, width } => Density::narrow_gaussian(*center, *width)?,
            Self::Point { x0 } => Density::delta_like(*x0)?,
            Self::StationaryProfile => Density::stationary_profile(model.kappa)?,
            Self::Tabulated { path } => {
                let path = base.join(path);
                let file = std::fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
                Density::read_csv(std::io::BufReader::new(file))?
            }
            Self::SelfSimilar { .. } => bail!("initial.kind = self_similar has no density form"),
        })
    }

    pub fn law(&self, model: &ModelSpec, base: &Path) -> Result<InitialLaw<f64>> {
        match self {
            Self::Point { x0 } => Ok(InitialLaw::Point(*x0)),
            Self::SelfSimilar { .. } => bail!("particles cannot start from initial.kind = self_similar"),
            other => Ok(InitialLaw::Density(other.density(model, base)?)),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriteriaSpec {
    /// Defaults to the built-in log-spaced grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_grid: Option<Vec<f64>>,
}

/// What the run is expected to show; mismatches exit with status 3.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blowup: Option<bool>,
    /// Any detected event must come strictly before this time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_before: Option<f64>,
    /// Sup error allowed against an exact solution.
    #[serde(default = "default_oracle_tolerance")]
    pub oracle_tolerance: f64,
    /// Multiplies the particle-versus-solver tolerance.
    #[serde(default = "default_calibration")]
    pub calibration: f64,
}

fn default_oracle_tolerance() -> f64 {
    0.01
}

fn default_calibration() -> f64 {
    1.0
}

impl Default for Expect {
    fn default() -> Self {
        Self {
            blowup: None,
            event_before: None,
            oracle_tolerance: default_oracle_tolerance(),
            calibration: default_calibration(),
        }
    }
}

/// Parses a scenario, reporting schema violations with their field path.
pub fn parse(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow::anyhow!("invalid scenario at `{path}`: {}", e.into_inner())
    })?;
    if scenario.version != SCHEMA_VERSION {
        bail!("invalid scenario at `version`: expected {SCHEMA_VERSION}, found {}", scenario.version);
    }
    if scenario.horizon.is_nan() || scenario.horizon <= 0.0 {
        bail!("invalid scenario at `horizon`: must be positive");
    }
    scenario.model.params().context("invalid scenario at `model`")?;
    Ok(scenario)
}

/// Applies `field = value` to the raw JSON; a bare name refers to a
/// `model` field.
pub fn with_field(text: &str, field: &str, value: f64) -> Result<String> {
    let mut doc: serde_json::Value = serde_json::from_str(text).context("scenario is not valid JSON")?;
    let path = if field.contains('.') { field.to_string() } else { format!("model.{field}") };
    let mut slot = &mut doc;
    for key in path.split('.') {
        slot =
            slot.get_mut(key).with_context(|| format!("sweep parameter `{field}` does not name a scenario field"))?;
    }
    if !slot.is_number() {
        bail!("sweep parameter `{field}` is not numeric");
    }
    *slot = serde_json::json!(value);
    Ok(doc.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"version":1,"name":"t","model":{"kind":"linear","alpha":1.5},
        "initial":{"kind":"point","x0":1.0},"horizon":1.0,"criteria":{}}"#;

    #[test]
    fn minimal_scenario_parses() {
        let s = parse(MINIMAL).unwrap();
        assert_eq!(s.model.kappa, 0.125);
        assert!(s.solver.is_none() && s.criteria.is_some());
    }

    #[test]
    fn missing_field_names_its_path() {
        let err = parse(&MINIMAL.replace(r#","alpha":1.5"#, "")).unwrap_err().to_string();
        assert!(err.contains("model") && err.contains("alpha"), "{err}");
        let err = parse(&MINIMAL.replace(r#""x0":1.0"#, r#""x0":1.0,"y":2"#)).unwrap_err().to_string();
        assert!(err.contains("initial"), "{err}");
        assert!(parse(&MINIMAL.replace(r#""version":1"#, r#""version":9"#)).is_err());
    }

    #[test]
    fn sweep_field_paths() {
        let text = with_field(MINIMAL, "alpha", 2.5).unwrap();
        assert_eq!(parse(&text).unwrap().model.alpha, 2.5);
        let text = with_field(MINIMAL, "initial.x0", 3.0).unwrap();
        assert!(matches!(parse(&text).unwrap().initial, InitialSpec::Point { x0 } if x0 == 3.0));
        assert!(with_field(MINIMAL, "nope", 1.0).is_err());
        assert!(with_field(MINIMAL, "name", 1.0).is_err());
    }
}
