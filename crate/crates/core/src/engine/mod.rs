//! The slow Euler loop and everything it records.

mod continuous;
mod trace;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use continuous::{reference_path, reference_trajectory, run_two_timescale, sweep, Path, SweepReport};
pub use trace::{Diagnostics, SimTrace, StepRecord, Summary, CertificateSummary};

use crate::blocks::BlockMatrix;
use crate::controllers::{lloyd_velocity, sp_velocity, tvd_c_velocity, tvd_d_velocity, ControlLaw, ControllerSpec, FastLoopState};
use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::geometry::{compute_voronoi, project_to_domain, ConvexPolytope, NeighborGraph, VoronoiCell};
use crate::gradsys::{tracking_residual, GradientSystem};
use crate::moments::{centroid_jacobian, centroid_time_derivative, moments_and_costs, CellMoments, MomentOptions};

/// Minimum pairwise distance between sampled initial positions, relative to
/// `diam(Q)`.
const SAMPLE_SEPARATION: f64 = 1e-3;
const SAMPLE_ATTEMPTS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub domain: ConvexPolytope,
    pub density: DensityField,
    /// Stacked initial positions `(p_1, …, p_n)`.
    pub initial: Vec<f64>,
    pub controller: ControllerSpec,
    /// Slow step `δt` in seconds.
    pub dt: f64,
    /// Horizon `T` in seconds.
    pub horizon: f64,
    pub moments: MomentOptions,
    pub seed: u64,
}

impl Scenario {
    pub fn d(&self) -> usize {
        self.domain.dim()
    }

    pub fn n(&self) -> usize {
        self.initial.len() / self.d()
    }

    /// `K = floor(T/δt)`; the trace has `K + 1` rows.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        if self.density.dim() != d {
            return Err(Error::config(
                "density",
                format!("density is {}-dimensional but the domain is {d}-dimensional", self.density.dim()),
            ));
        }
        self.density.validate("density")?;
        self.controller.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("sim.dt", "must be positive and finite"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config("sim.horizon", "must be positive and finite"));
        }
        if self.initial.is_empty() || self.initial.len() % d != 0 {
            return Err(Error::config("agents.positions", format!("expected a multiple of {d} coordinates")));
        }
        crate::geometry::validate_positions(&self.initial, &self.domain)
            .map_err(|e| Error::config("agents.positions", e.to_string()))?;
        Ok(())
    }
}

/// `n` positions drawn uniformly from `Q` by rejection sampling, pairwise
/// at least `10⁻³ diam(Q)` apart.
pub fn sample_positions(domain: &ConvexPolytope, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = domain.bounds();
    let d = domain.dim();
    let min_sep = SAMPLE_SEPARATION * domain.diameter();
    let mut out: Vec<f64> = Vec::with_capacity(n * d);
    let mut attempts = 0;
    while out.len() < n * d {
        attempts += 1;
        if attempts > SAMPLE_ATTEMPTS {
            return Err(Error::config("agents.count", "could not place the agents inside the domain"));
        }
        let q: Vec<f64> = (0..d).map(|k| rng.gen_range(lo[k]..hi[k])).collect();
        if !domain.contains(&q, 0.0) {
            continue;
        }
        let far = out.chunks(d).all(|p| {
            p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() > min_sep
        });
        if far {
            out.extend(q);
        }
    }
    Ok(out)
}

/// Everything computed from one configuration at one time.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub cells: Vec<VoronoiCell>,
    pub graph: NeighborGraph,
    pub moments: Vec<CellMoments>,
    /// Per-cell `∫_{V_i} ‖q - p_i‖² φ dq`.
    pub costs: Vec<f64>,
    pub jacobian: Option<BlockMatrix>,
    pub dcdt: Option<Vec<f64>>,
}

impl Evaluation {
    /// `H(p, t)`.
    pub fn cost(&self) -> f64 {
        self.costs.iter().sum()
    }

    /// `‖p_i - c_i‖` per agent.
    pub fn tracking_errors(&self, positions: &[f64]) -> Vec<f64> {
        let d = positions.len() / self.moments.len();
        self.moments
            .iter()
            .enumerate()
            .map(|(i, m)| {
                m.centroid
                    .iter()
                    .zip(&positions[i * d..(i + 1) * d])
                    .map(|(c, p)| (p - c) * (p - c))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// `r = -κ(p - c) + ∂c/∂t`.
    pub fn residual(&self, positions: &[f64], kappa: f64) -> DVector<f64> {
        let zeros;
        let dcdt = match &self.dcdt {
            Some(v) => v.as_slice(),
            None => {
                zeros = vec![0.0; positions.len()];
                &zeros
            }
        };
        tracking_residual(positions, &self.moments, dcdt, kappa)
    }

    pub fn system(&self, positions: &[f64], kappa: f64) -> Result<GradientSystem> {
        let jacobian = self.jacobian.as_ref().expect("sensitivities were not computed");
        GradientSystem::from_jacobian(jacobian, &self.residual(positions, kappa), &self.graph)
    }
}

/// Tessellates, integrates, and optionally differentiates.
pub fn evaluate(
    positions: &[f64],
    t: f64,
    domain: &ConvexPolytope,
    field: &DensityField,
    opts: &MomentOptions,
    sensitivities: bool,
) -> Result<Evaluation> {
    let cells = compute_voronoi(positions, domain)?;
    let graph = NeighborGraph::from_cells(&cells);
    let (moments, costs) = moments_and_costs(&cells, positions, field, t, &opts.quadrature)?;
    let (jacobian, dcdt) = if sensitivities {
        (
            Some(centroid_jacobian(positions, domain, &cells, &graph, field, t, opts)?),
            Some(centroid_time_derivative(&cells, field, t, opts)?),
        )
    } else {
        (None, None)
    };
    Ok(Evaluation {
        cells,
        graph,
        moments,
        costs,
        jacobian,
        dcdt,
    })
}

/// `H(p, t) = Σ_i ∫_{V_i} ‖q - p_i‖² φ(q, t) dq`.
pub fn coverage_cost(
    positions: &[f64],
    domain: &ConvexPolytope,
    field: &DensityField,
    t: f64,
    opts: &MomentOptions,
) -> Result<f64> {
    Ok(evaluate(positions, t, domain, field, opts, false)?.cost())
}

/// A controller together with its persistent state.
pub struct Controller {
    spec: ControllerSpec,
    fast: Option<FastLoopState>,
}

impl Controller {
    pub fn new(spec: ControllerSpec, dim: usize) -> Self {
        let fast = matches!(spec.law, ControlLaw::TvdSp(_)).then(|| FastLoopState::zeros(dim));
        Self { spec, fast }
    }

    pub fn spec(&self) -> &ControllerSpec {
        &self.spec
    }

    /// The velocity for the current evaluation, plus diagnostics.
    pub fn velocity(&mut self, positions: &[f64], eval: &Evaluation) -> Result<(DVector<f64>, Diagnostics)> {
        let kappa = self.spec.kappa;
        let mut diag = Diagnostics::default();
        let u = match &self.spec.law {
            ControlLaw::Lloyd => lloyd_velocity(positions, &eval.moments, kappa),
            ControlLaw::TvdC => {
                let (u, condition) = tvd_c_velocity(jacobian(eval), &eval.residual(positions, kappa))?;
                diag.condition = Some(condition);
                u
            }
            ControlLaw::TvdD { k } => tvd_d_velocity(jacobian(eval), &eval.residual(positions, kappa), *k),
            ControlLaw::TvdSp(settings) => {
                let system = eval.system(positions, kappa)?;
                let state = self.fast.as_mut().expect("fast state exists for tvd-sp");
                let (u, cert) = sp_velocity(state, &system, settings)?;
                diag.certificate = Some(cert);
                u
            }
        };
        Ok((u, diag))
    }
}

fn jacobian(eval: &Evaluation) -> &BlockMatrix {
    eval.jacobian.as_ref().expect("sensitivities were not computed")
}

/// `p⁺ = Π_Q(p + δt u)`, agent by agent.
pub fn euler_step(positions: &[f64], u: &DVector<f64>, dt: f64, domain: &ConvexPolytope) -> Vec<f64> {
    let d = domain.dim();
    let moved: Vec<f64> = positions.iter().zip(u.iter()).map(|(p, v)| p + dt * v).collect();
    moved.chunks(d).flat_map(|p| project_to_domain(p, domain)).collect()
}

/// Simulates the scenario with forward Euler in `p`, recording one row per
/// slow step.
pub fn run(scenario: &Scenario) -> Result<SimTrace> {
    scenario.validate()?;
    let steps = scenario.steps();
    let mut controller = Controller::new(scenario.controller.clone(), scenario.initial.len());
    let mut positions = scenario.initial.clone();
    let mut records = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * scenario.dt;
        let record = (|| -> Result<(StepRecord, DVector<f64>)> {
            let eval = evaluate(
                &positions,
                t,
                &scenario.domain,
                &scenario.density,
                &scenario.moments,
                scenario.controller.needs_sensitivities(),
            )?;
            let (u, diagnostics) = controller.velocity(&positions, &eval)?;
            let record = StepRecord {
                step: k,
                t,
                positions: positions.clone(),
                controls: u.as_slice().to_vec(),
                tracking: eval.tracking_errors(&positions),
                cost: eval.cost(),
                diagnostics,
            };
            Ok((record, u))
        })()
        .map_err(|e| e.at_step(k, t))?;
        let (record, u) = record;
        log::debug!("step {k} t={t:.3} H={:.6}", record.cost);
        records.push(record);
        if k < steps {
            positions = euler_step(&positions, &u, scenario.dt, &scenario.domain);
        }
    }
    Ok(SimTrace::new(scenario, scenario.controller.label(), records))
}
