//! Time-varying densities `φ(q, t) > 0`.
//!
//! The four presets are unit-amplitude, unit-width Gaussians whose centers
//! move along closed curves. Config files may also describe arbitrary sums
//! of isotropic Gaussians with trigonometric/polynomial center trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values are clamped from below so far-away cells keep a positive mass.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// `amplitude · sin(frequency · t + phase)`, or the cosine analogue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

/// One coordinate of a moving center:
/// `Σ_k poly[k]·t^k + Σ sin terms + Σ cos terms`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    #[serde(default)]
    pub poly: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<Harmonic>,
    #[serde(default)]
    pub cos: Vec<Harmonic>,
}

impl Trajectory {
    pub fn constant(value: f64) -> Self {
        Self {
            poly: vec![value],
            ..Self::default()
        }
    }

    fn sin(amplitude: f64, frequency: f64) -> Self {
        Self {
            sin: vec![Harmonic {
                amplitude,
                frequency,
                phase: 0.0,
            }],
            ..Self::default()
        }
    }

    fn cos(amplitude: f64, frequency: f64) -> Self {
        Self {
            cos: vec![Harmonic {
                amplitude,
                frequency,
                phase: 0.0,
            }],
            ..Self::default()
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let poly = self.poly.iter().rev().fold(0.0, |acc, c| acc * t + c);
        let sin: f64 = self
            .sin
            .iter()
            .map(|h| h.amplitude * (h.frequency * t + h.phase).sin())
            .sum();
        let cos: f64 = self
            .cos
            .iter()
            .map(|h| h.amplitude * (h.frequency * t + h.phase).cos())
            .sum();
        poly + sin + cos
    }

    fn is_finite(&self) -> bool {
        self.poly.iter().all(|c| c.is_finite())
            && self
                .sin
                .iter()
                .chain(&self.cos)
                .all(|h| h.amplitude.is_finite() && h.frequency.is_finite() && h.phase.is_finite())
    }
}

/// `amplitude · exp(-‖q - center(t)‖² / width²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianTerm {
    pub amplitude: f64,
    pub width: f64,
    pub center: Vec<Trajectory>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensityField {
    /// Center `(2 sin(t/5), 0)`.
    Phi1,
    /// Center `(sin(t/5), -sin(2t/5))`.
    Phi2,
    /// Center `(2 cos(t/5), 2 sin(t/5))`.
    Phi3,
    /// Center `(4 cos(t/5), 4 sin(t/5), 0)`, in 3D.
    Phi4,
    GaussianSum { terms: Vec<GaussianTerm> },
    /// Constant density.
    Uniform { dim: usize, value: f64 },
}

impl DensityField {
    pub fn dim(&self) -> usize {
        match self {
            DensityField::Phi1 | DensityField::Phi2 | DensityField::Phi3 => 2,
            DensityField::Phi4 => 3,
            DensityField::GaussianSum { terms } => terms.first().map_or(0, |t| t.center.len()),
            DensityField::Uniform { dim, .. } => *dim,
        }
    }

    /// `"phi1"` to `"phi4"`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "phi1" => Some(DensityField::Phi1),
            "phi2" => Some(DensityField::Phi2),
            "phi3" => Some(DensityField::Phi3),
            "phi4" => Some(DensityField::Phi4),
            _ => None,
        }
    }

    /// A Gaussian that never moves.
    pub fn static_gaussian(center: &[f64], amplitude: f64, width: f64) -> Self {
        DensityField::GaussianSum {
            terms: vec![GaussianTerm {
                amplitude,
                width,
                center: center.iter().map(|&c| Trajectory::constant(c)).collect(),
            }],
        }
    }

    /// Checks amplitudes, widths and dimensions. `field` names the config
    /// section in error messages.
    pub fn validate(&self, field: &str) -> Result<()> {
        match self {
            DensityField::GaussianSum { terms } => {
                if terms.is_empty() {
                    return Err(Error::config(format!("{field}.terms"), "at least one term is required"));
                }
                let d = self.dim();
                if d != 2 && d != 3 {
                    return Err(Error::config(
                        format!("{field}.terms"),
                        format!("centers must have 2 or 3 coordinates, found {d}"),
                    ));
                }
                for (k, term) in terms.iter().enumerate() {
                    let at = |name: &str| format!("{field}.terms[{k}].{name}");
                    if !(term.amplitude > 0.0 && term.amplitude.is_finite()) {
                        return Err(Error::config(at("amplitude"), "must be positive and finite"));
                    }
                    if !(term.width > 0.0 && term.width.is_finite()) {
                        return Err(Error::config(at("width"), "must be positive and finite"));
                    }
                    if term.center.len() != d {
                        return Err(Error::config(
                            at("center"),
                            format!("expected {d} coordinates, found {}", term.center.len()),
                        ));
                    }
                    if !term.center.iter().all(Trajectory::is_finite) {
                        return Err(Error::config(at("center"), "coefficients must be finite"));
                    }
                }
                Ok(())
            }
            DensityField::Uniform { dim, value } => {
                if *dim != 2 && *dim != 3 {
                    return Err(Error::config(format!("{field}.dim"), "must be 2 or 3"));
                }
                if !(*value > 0.0 && value.is_finite()) {
                    return Err(Error::config(format!("{field}.value"), "must be positive and finite"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// True when `φ` does not depend on `t`.
    pub fn is_static(&self) -> bool {
        match self {
            DensityField::GaussianSum { terms } => terms.iter().all(|term| {
                term.center
                    .iter()
                    .all(|c| c.poly.len() <= 1 && c.sin.is_empty() && c.cos.is_empty())
            }),
            DensityField::Uniform { .. } => true,
            _ => false,
        }
    }

    /// Freezes the field at time `t`.
    pub fn at(&self, t: f64) -> Snapshot {
        let unit = |center: Vec<f64>| SnapshotTerm {
            amplitude: 1.0,
            width: 1.0,
            inv_width2: 1.0,
            center,
        };
        let (s1, s2) = ((t / 5.0).sin(), (2.0 * t / 5.0).sin());
        let c1 = (t / 5.0).cos();
        let terms = match self {
            DensityField::Phi1 => vec![unit(vec![2.0 * s1, 0.0])],
            DensityField::Phi2 => vec![unit(vec![s1, -s2])],
            DensityField::Phi3 => vec![unit(vec![2.0 * c1, 2.0 * s1])],
            DensityField::Phi4 => vec![unit(vec![4.0 * c1, 4.0 * s1, 0.0])],
            DensityField::GaussianSum { terms } => terms
                .iter()
                .map(|term| SnapshotTerm {
                    amplitude: term.amplitude,
                    width: term.width,
                    inv_width2: 1.0 / (term.width * term.width),
                    center: term.center.iter().map(|c| c.eval(t)).collect(),
                })
                .collect(),
            DensityField::Uniform { value, .. } => {
                return Snapshot {
                    constant: *value,
                    terms: Vec::new(),
                }
            }
        };
        Snapshot { constant: 0.0, terms }
    }

    /// `φ(q, t)`.
    pub fn eval(&self, q: &[f64], t: f64) -> Result<f64> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: q.len(),
            });
        }
        Ok(self.at(t).eval(q))
    }

    /// Expands a preset into the equivalent Gaussian sum.
    pub fn to_gaussian_sum(&self) -> Self {
        let unit = |center: Vec<Trajectory>| GaussianTerm {
            amplitude: 1.0,
            width: 1.0,
            center,
        };
        let zero = || Trajectory::constant(0.0);
        let term = match self {
            DensityField::Phi1 => unit(vec![Trajectory::sin(2.0, 0.2), zero()]),
            DensityField::Phi2 => unit(vec![Trajectory::sin(1.0, 0.2), Trajectory::sin(-1.0, 0.4)]),
            DensityField::Phi3 => unit(vec![Trajectory::cos(2.0, 0.2), Trajectory::sin(2.0, 0.2)]),
            DensityField::Phi4 => unit(vec![Trajectory::cos(4.0, 0.2), Trajectory::sin(4.0, 0.2), zero()]),
            other => return other.clone(),
        };
        DensityField::GaussianSum { terms: vec![term] }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct SnapshotTerm {
    pub amplitude: f64,
    pub width: f64,
    inv_width2: f64,
    pub center: Vec<f64>,
}

/// A density field frozen at one instant.
#[derive(Clone, Debug)]
pub struct Snapshot {
    constant: f64,
    terms: Vec<SnapshotTerm>,
}

impl Snapshot {
    pub(crate) fn constant(&self) -> f64 {
        self.constant
    }

    pub(crate) fn terms(&self) -> &[SnapshotTerm] {
        &self.terms
    }

    pub fn eval(&self, q: &[f64]) -> f64 {
        let mut value = self.constant;
        for term in &self.terms {
            let r2: f64 = term.center.iter().zip(q).map(|(c, x)| (x - c) * (x - c)).sum();
            value += term.amplitude * (-r2 * term.inv_width2).exp();
        }
        value.max(DENSITY_FLOOR)
    }
}
