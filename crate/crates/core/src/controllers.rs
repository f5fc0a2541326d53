//! Control laws: Lloyd, the exact time-varying law, its Neumann-series
//! truncations, and the two-timescale law whose fast loop runs one of the
//! fresh/delayed gradient iterations.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::blocks::BlockMatrix;
use crate::error::{Error, Result};
use crate::gradsys::{condition_number, Certificate, GradientSystem, Scheme, CONDITION_LIMIT, DEFAULT_SAFETY};
use crate::moments::CellMoments;

/// Settings of the two-timescale controller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastLoop {
    pub epsilon: f64,
    pub variant: Scheme,
    /// Fast iterations per slow step; `round(1/ε)` when absent.
    pub fast_steps: Option<usize>,
    /// Fixed fast step `δη`; `safety × bound` of the current system when
    /// absent.
    pub step: Option<f64>,
    pub safety: f64,
}

impl FastLoop {
    pub fn new(epsilon: f64, variant: Scheme) -> Self {
        Self {
            epsilon,
            variant,
            fast_steps: None,
            step: None,
            safety: DEFAULT_SAFETY,
        }
    }

    /// `N`, the number of fast iterations per slow step.
    pub fn iterations(&self) -> usize {
        self.fast_steps
            .unwrap_or_else(|| (1.0 / self.epsilon).round() as usize)
            .max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlLaw {
    Lloyd,
    TvdC,
    TvdD { k: usize },
    TvdSp(FastLoop),
}

/// A control law with its gain. Serialized as the flat `[controller]`
/// section of a scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ControllerConfig", into = "ControllerConfig")]
pub struct ControllerSpec {
    pub law: ControlLaw,
    pub kappa: f64,
}

impl ControllerSpec {
    pub fn new(law: ControlLaw, kappa: f64) -> Self {
        Self { law, kappa }
    }

    pub fn lloyd(kappa: f64) -> Self {
        Self::new(ControlLaw::Lloyd, kappa)
    }

    pub fn tvd_c(kappa: f64) -> Self {
        Self::new(ControlLaw::TvdC, kappa)
    }

    pub fn tvd_d(k: usize, kappa: f64) -> Self {
        Self::new(ControlLaw::TvdD { k }, kappa)
    }

    pub fn tvd_sp(epsilon: f64, variant: Scheme, kappa: f64) -> Self {
        Self::new(ControlLaw::TvdSp(FastLoop::new(epsilon, variant)), kappa)
    }

    /// Whether the law needs `∂c/∂p` and `∂c/∂t`.
    pub fn needs_sensitivities(&self) -> bool {
        !matches!(self.law, ControlLaw::Lloyd)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::config("controller.kappa", "must be positive and finite"));
        }
        if let ControlLaw::TvdSp(fl) = &self.law {
            if !(fl.epsilon > 0.0 && fl.epsilon.is_finite()) {
                return Err(Error::config("controller.epsilon", "must be positive and finite"));
            }
            if fl.fast_steps == Some(0) {
                return Err(Error::config("controller.fast_steps", "must be at least 1"));
            }
            if let Some(step) = fl.step {
                if !(step > 0.0 && step.is_finite()) {
                    return Err(Error::config("controller.step", "must be positive and finite"));
                }
            }
            if !(fl.safety > 0.0 && fl.safety < 1.0) {
                return Err(Error::config("controller.safety", "must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    /// Short name used in tables and file names, e.g. `tvd-sp0.05`.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ControllerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.law {
            ControlLaw::Lloyd => write!(f, "lloyd"),
            ControlLaw::TvdC => write!(f, "tvd-c"),
            ControlLaw::TvdD { k } => write!(f, "tvd-d{k}"),
            ControlLaw::TvdSp(fl) if fl.variant == Scheme::Fresh => write!(f, "tvd-sp{}", fl.epsilon),
            ControlLaw::TvdSp(fl) => write!(f, "tvd-sp{}-{}", fl.epsilon, fl.variant),
        }
    }
}

/// Parses `lloyd`, `tvd-c`, `tvd-d:K` and `tvd-sp:EPS[:VARIANT]`, with
/// `κ = 1`.
impl FromStr for ControllerSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let spec = match parts.as_slice() {
            ["lloyd"] => ControllerSpec::lloyd(1.0),
            ["tvd-c"] => ControllerSpec::tvd_c(1.0),
            ["tvd-d", k] => {
                let k = k.parse().map_err(|_| format!("invalid order `{k}` in `{s}`"))?;
                ControllerSpec::tvd_d(k, 1.0)
            }
            ["tvd-sp", eps, rest @ ..] if rest.len() <= 1 => {
                let eps: f64 = eps.parse().map_err(|_| format!("invalid epsilon `{eps}` in `{s}`"))?;
                let variant = match rest.first() {
                    Some(v) => v.parse()?,
                    None => Scheme::Fresh,
                };
                ControllerSpec::tvd_sp(eps, variant, 1.0)
            }
            _ => return Err(format!("unrecognized controller `{s}`")),
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

/// `u_i = -κ(p_i - c_i)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Lloyd,
    TvdC,
    TvdD,
    TvdSp,
}

/// On-disk form of [`ControllerSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    #[serde(default = "unit_gain")]
    pub kappa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fast_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety: Option<f64>,
}

fn unit_gain() -> f64 {
    1.0
}

impl TryFrom<ControllerConfig> for ControllerSpec {
    type Error = Error;

    fn try_from(c: ControllerConfig) -> Result<Self> {
        let unused = |name: &str, present: bool| {
            if present {
                Err(Error::config(
                    format!("controller.{name}"),
                    format!("not used by kind `{}`", kind_name(c.kind)),
                ))
            } else {
                Ok(())
            }
        };
        let sp_only = [
            ("epsilon", c.epsilon.is_some()),
            ("variant", c.variant.is_some()),
            ("fast_steps", c.fast_steps.is_some()),
            ("step", c.step.is_some()),
            ("safety", c.safety.is_some()),
        ];
        let law = match c.kind {
            ControllerKind::TvdSp => {
                unused("k", c.k.is_some())?;
                let epsilon = c
                    .epsilon
                    .ok_or_else(|| Error::config("controller.epsilon", "required for kind `tvd-sp`"))?;
                ControlLaw::TvdSp(FastLoop {
                    epsilon,
                    variant: c.variant.unwrap_or_default(),
                    fast_steps: c.fast_steps,
                    step: c.step,
                    safety: c.safety.unwrap_or(DEFAULT_SAFETY),
                })
            }
            kind => {
                for (name, present) in sp_only {
                    unused(name, present)?;
                }
                match kind {
                    ControllerKind::Lloyd => {
                        unused("k", c.k.is_some())?;
                        ControlLaw::Lloyd
                    }
                    ControllerKind::TvdC => {
                        unused("k", c.k.is_some())?;
                        ControlLaw::TvdC
                    }
                    _ => ControlLaw::TvdD {
                        k: c.k.ok_or_else(|| Error::config("controller.k", "required for kind `tvd-d`"))?,
                    },
                }
            }
        };
        let spec = ControllerSpec::new(law, c.kappa);
        spec.validate()?;
        Ok(spec)
    }
}

impl From<ControllerSpec> for ControllerConfig {
    fn from(spec: ControllerSpec) -> Self {
        let mut c = ControllerConfig {
            kind: ControllerKind::Lloyd,
            kappa: spec.kappa,
            k: None,
            epsilon: None,
            variant: None,
            fast_steps: None,
            step: None,
            safety: None,
        };
        match spec.law {
            ControlLaw::Lloyd => {}
            ControlLaw::TvdC => c.kind = ControllerKind::TvdC,
            ControlLaw::TvdD { k } => {
                c.kind = ControllerKind::TvdD;
                c.k = Some(k);
            }
            ControlLaw::TvdSp(fl) => {
                c.kind = ControllerKind::TvdSp;
                c.epsilon = Some(fl.epsilon);
                c.variant = Some(fl.variant);
                c.fast_steps = fl.fast_steps;
                c.step = fl.step;
                c.safety = Some(fl.safety);
            }
        }
        c
    }
}

fn kind_name(kind: ControllerKind) -> &'static str {
    match kind {
        ControllerKind::Lloyd => "lloyd",
        ControllerKind::TvdC => "tvd-c",
        ControllerKind::TvdD => "tvd-d",
        ControllerKind::TvdSp => "tvd-sp",
    }
}

pub fn lloyd_velocity(positions: &[f64], moments: &[CellMoments], kappa: f64) -> DVector<f64> {
    let d = positions.len() / moments.len().max(1);
    DVector::from_iterator(
        positions.len(),
        (0..positions.len()).map(|k| -kappa * (positions[k] - moments[k / d].centroid[k % d])),
    )
}

/// Solves `(I - J) u = r` densely. Returns the velocity and the condition
/// number of `I - J`.
pub fn tvd_c_velocity(jacobian: &BlockMatrix, r: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let m = jacobian.dim();
    let system = DMatrix::identity(m, m) - jacobian.to_dense();
    let condition = condition_number(&system);
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::IllConditioned { condition });
    }
    let u = system.lu().solve(r).ok_or(Error::IllConditioned { condition })?;
    Ok((u, condition))
}

/// `u = Σ_{m=0}^{k} J^m r`, evaluated as `u ← r + J u` `k` times.
pub fn tvd_d_velocity(jacobian: &BlockMatrix, r: &DVector<f64>, k: usize) -> DVector<f64> {
    let mut u = r.clone();
    let mut ju = DVector::zeros(r.len());
    for _ in 0..k {
        jacobian.mul_vec_into(&u, &mut ju);
        u.copy_from(r);
        u += &ju;
    }
    u
}

/// The fast iterate and its predecessor.
#[derive(Clone, Debug, PartialEq)]
pub struct FastLoopState {
    pub current: DVector<f64>,
    pub previous: DVector<f64>,
    pub iterations: usize,
}

impl FastLoopState {
    /// `u_0 = u_1 = 0`.
    pub fn zeros(dim: usize) -> Self {
        Self {
            current: DVector::zeros(dim),
            previous: DVector::zeros(dim),
            iterations: 0,
        }
    }

    /// `u⁺ = u - δη(Ā^f u + Ā^d u_prev + b)`, shifting `u` into `u_prev`.
    pub fn step(&mut self, splitting: &crate::gradsys::Splitting, b: &DVector<f64>, step: f64) {
        let next = splitting.step(&self.current, &self.previous, b, step);
        self.previous = std::mem::replace(&mut self.current, next);
        self.iterations += 1;
    }
}

/// Runs `N` fast iterations on a frozen system and returns `u_{Nk}` with
/// the certificate of the step used.
pub fn sp_velocity(
    state: &mut FastLoopState,
    system: &GradientSystem,
    settings: &FastLoop,
) -> Result<(DVector<f64>, Certificate)> {
    let splitting = system.split(settings.variant);
    let cert = splitting.certify(system, settings.step, settings.safety)?;
    if !cert.admissible {
        return Err(Error::InadmissibleStep {
            step: cert.step,
            bound: cert.bound,
        });
    }
    if !cert.dominance && settings.variant != Scheme::Fresh && settings.variant != Scheme::AllDelayed {
        log::debug!(
            "{} splitting violates eigenvalue dominance (γ = {:.4})",
            settings.variant,
            cert.gamma
        );
    }
    for _ in 0..settings.iterations() {
        state.step(&splitting, system.b(), cert.step);
    }
    Ok((state.current.clone(), cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::NeighborGraph;

    #[test]
    fn lloyd_points_toward_centroid() {
        let m = vec![CellMoments {
            mass: 1.0,
            centroid: vec![0.0, 0.0],
        }];
        assert_eq!(lloyd_velocity(&[1.0, 0.0], &m, 1.0).as_slice(), &[-1.0, 0.0]);
        assert_eq!(lloyd_velocity(&[0.0, 0.0], &m, 2.0).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn zero_jacobian_laws_agree() {
        let j = BlockMatrix::new(2, 2);
        let r = DVector::from_vec(vec![0.3, -0.2, 1.0, 0.5]);
        assert_eq!(tvd_c_velocity(&j, &r).unwrap().0, r);
        for k in 0..4 {
            assert_eq!(tvd_d_velocity(&j, &r, k), r);
        }
    }

    #[test]
    fn neumann_series_converges_to_exact() {
        let mut j = BlockMatrix::new(2, 2);
        j.insert(0, 0, DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.0, 0.3]));
        j.insert(0, 1, DMatrix::from_row_slice(2, 2, &[0.1, -0.1, 0.05, 0.0]));
        j.insert(1, 0, DMatrix::from_row_slice(2, 2, &[0.0, 0.2, 0.1, 0.1]));
        j.insert(1, 1, DMatrix::from_row_slice(2, 2, &[0.25, 0.0, -0.1, 0.2]));
        let r = DVector::from_vec(vec![1.0, -1.0, 0.5, 2.0]);
        let (exact, _) = tvd_c_velocity(&j, &r).unwrap();
        assert!((tvd_d_velocity(&j, &r, 60) - exact).amax() < 1e-8);
    }

    #[test]
    fn fresh_scalar_geometric_convergence() {
        let graph = NeighborGraph::from_adjacency(vec![vec![]]);
        let v = DVector::from_vec(vec![2.0, -1.0]);
        let sys = GradientSystem::from_jacobian(&BlockMatrix::new(1, 2), &v, &graph).unwrap();
        let split = sys.split(Scheme::Fresh);
        let mut state = FastLoopState::zeros(2);
        let step = 0.3;
        for l in 1..=20 {
            state.step(&split, sys.b(), step);
            let want = &v * (1.0 - (1.0 - step).powi(l));
            assert!((&state.current - want).amax() < 1e-14);
        }
    }

    #[test]
    fn parse_and_label() {
        let c: ControllerSpec = "tvd-sp:0.05:two-delayed".parse().unwrap();
        assert_eq!(c.label(), "tvd-sp0.05-two-delayed");
        assert_eq!("tvd-d:3".parse::<ControllerSpec>().unwrap().label(), "tvd-d3");
        assert!("tvd-sp:-1".parse::<ControllerSpec>().is_err());
        assert!("newton".parse::<ControllerSpec>().is_err());
        match "tvd-sp:0.01".parse::<ControllerSpec>().unwrap().law {
            ControlLaw::TvdSp(fl) => assert_eq!(fl.iterations(), 100),
            _ => unreachable!(),
        }
    }
}
