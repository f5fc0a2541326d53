//! Scenario files.
//!
//! A scenario is a TOML document with the sections `[domain]`, `[density]`,
//! `[agents]`, `[controller]` and `[sim]`, plus optional `[compare]` and
//! `[sweep]` sections read by the batch commands:
//!
//! ```toml
//! [domain]
//! kind = "box"
//! lower = [-10.0, -10.0]
//! upper = [10.0, 10.0]
//!
//! [density]
//! kind = "phi1"
//!
//! [agents]
//! count = 10
//!
//! [controller]
//! kind = "tvd-sp"
//! epsilon = 0.05
//! variant = "two-delayed"
//!
//! [sim]
//! dt = 0.1
//! horizon = 31.5
//! seed = 7
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controllers::ControllerSpec;
use crate::density::DensityField;
use crate::engine::{sample_positions, Scenario};
use crate::error::{Error, Result};
use crate::geometry::{ConvexPolytope, Halfspace};
use crate::moments::{MomentOptions, Quadrature, DEFAULT_JACOBIAN_STEP, DEFAULT_TIME_STEP};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub domain: DomainConfig,
    pub density: DensityField,
    pub agents: AgentsConfig,
    pub controller: ControllerSpec,
    pub sim: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainConfig {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Convex polygon, vertices in order.
    Polygon { vertices: Vec<[f64; 2]> },
    /// `normal · x >= offset` for every entry.
    Halfspaces { dim: usize, halfspaces: Vec<Halfspace> },
}

impl DomainConfig {
    pub fn build(&self) -> Result<ConvexPolytope> {
        let domain = match self {
            DomainConfig::Box { lower, upper } => ConvexPolytope::cuboid(lower, upper),
            DomainConfig::Polygon { vertices } => ConvexPolytope::polygon(vertices),
            DomainConfig::Halfspaces { dim, halfspaces } => {
                let hs = halfspaces
                    .iter()
                    .map(|h| Halfspace::new(h.normal.clone(), h.offset))
                    .collect::<Result<Vec<_>>>()?;
                ConvexPolytope::from_halfspaces(*dim, hs)
            }
        };
        domain.map_err(|e| Error::config("domain", e.to_string()))
    }
}

/// Either `count` agents sampled from the seed, or explicit positions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub quadrature: Quadrature,
    #[serde(default = "default_jacobian_step")]
    pub jacobian_step: f64,
    #[serde(default = "default_time_step")]
    pub time_step: f64,
}

fn default_jacobian_step() -> f64 {
    DEFAULT_JACOBIAN_STEP
}

fn default_time_step() -> f64 {
    DEFAULT_TIME_STEP
}

/// Controllers and densities for a cost table. Entries use the short
/// syntax `lloyd`, `tvd-c`, `tvd-d:K` and `tvd-sp:EPS[:VARIANT]` and inherit
/// `kappa` from `[controller]`. Densities are preset names; when omitted the
/// scenario density is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub controllers: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub densities: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    /// Canonical text: fixed section and key order, defaults spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config is representable in TOML")
    }

    /// Checks everything that can be checked without running a simulation.
    pub fn validate(&self) -> Result<()> {
        self.scenario()?.validate()?;
        self.compare_controllers()?;
        self.compare_densities()?;
        if let Some(sweep) = &self.sweep {
            if sweep.epsilons.len() < 3 {
                return Err(Error::config("sweep.epsilons", "at least three values are required"));
            }
            if !sweep.epsilons.iter().all(|e| *e > 0.0 && e.is_finite()) {
                return Err(Error::config("sweep.epsilons", "values must be positive and finite"));
            }
        }
        Ok(())
    }

    pub fn moment_options(&self) -> Result<MomentOptions> {
        if !(self.sim.jacobian_step > 0.0 && self.sim.jacobian_step < 1.0) {
            return Err(Error::config("sim.jacobian_step", "must lie in (0, 1)"));
        }
        if !(self.sim.time_step > 0.0 && self.sim.time_step.is_finite()) {
            return Err(Error::config("sim.time_step", "must be positive and finite"));
        }
        Ok(MomentOptions {
            quadrature: self.sim.quadrature.clone(),
            jacobian_step: self.sim.jacobian_step,
            time_step: self.sim.time_step,
        })
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let domain = self.domain.build()?;
        let d = domain.dim();
        let initial = match (&self.agents.count, &self.agents.positions) {
            (_, Some(points)) => {
                if let Some(n) = self.agents.count {
                    if n != points.len() {
                        return Err(Error::config(
                            "agents.count",
                            format!("{n} does not match the {} listed positions", points.len()),
                        ));
                    }
                }
                if let Some(bad) = points.iter().position(|p| p.len() != d) {
                    return Err(Error::config(
                        format!("agents.positions[{bad}]"),
                        format!("expected {d} coordinates"),
                    ));
                }
                points.concat()
            }
            (Some(0), None) => return Err(Error::config("agents.count", "must be at least 1")),
            (Some(n), None) => sample_positions(&domain, *n, self.sim.seed)?,
            (None, None) => return Err(Error::config("agents", "either `count` or `positions` is required")),
        };
        let scenario = Scenario {
            domain,
            density: self.density.clone(),
            initial,
            controller: self.controller.clone(),
            dt: self.sim.dt,
            horizon: self.sim.horizon,
            moments: self.moment_options()?,
            seed: self.sim.seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// The `[compare]` controllers with the scenario's gain.
    pub fn compare_controllers(&self) -> Result<Vec<ControllerSpec>> {
        let Some(compare) = &self.compare else {
            return Ok(Vec::new());
        };
        if compare.controllers.len() < 2 {
            return Err(Error::config("compare.controllers", "at least two controllers are required"));
        }
        compare
            .controllers
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let mut spec: ControllerSpec = s
                    .parse()
                    .map_err(|e: String| Error::config(format!("compare.controllers[{k}]"), e))?;
                spec.kappa = self.controller.kappa;
                Ok(spec)
            })
            .collect()
    }

    /// The `[compare]` densities as `(name, field)`, falling back to the
    /// scenario density.
    pub fn compare_densities(&self) -> Result<Vec<(String, DensityField)>> {
        let names = self.compare.as_ref().map(|c| c.densities.as_slice()).unwrap_or(&[]);
        if names.is_empty() {
            return Ok(vec![(density_name(&self.density), self.density.clone())]);
        }
        names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let field = DensityField::preset(name).ok_or_else(|| {
                    Error::config(format!("compare.densities[{k}]"), format!("unknown preset `{name}`"))
                })?;
                if field.dim() != self.domain.dim() {
                    return Err(Error::config(
                        format!("compare.densities[{k}]"),
                        format!("`{name}` does not match the domain dimension"),
                    ));
                }
                Ok((name.clone(), field))
            })
            .collect()
    }
}

impl DomainConfig {
    pub fn dim(&self) -> usize {
        match self {
            DomainConfig::Box { lower, .. } => lower.len(),
            DomainConfig::Polygon { .. } => 2,
            DomainConfig::Halfspaces { dim, .. } => *dim,
        }
    }
}

/// Short name used as a table column.
pub fn density_name(field: &DensityField) -> String {
    match field {
        DensityField::Phi1 => "phi1".into(),
        DensityField::Phi2 => "phi2".into(),
        DensityField::Phi3 => "phi3".into(),
        DensityField::Phi4 => "phi4".into(),
        DensityField::GaussianSum { .. } => "gaussian-sum".into(),
        DensityField::Uniform { .. } => "uniform".into(),
    }
}
