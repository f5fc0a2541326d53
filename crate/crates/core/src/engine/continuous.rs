//! Fine-step integrators of the continuous-time laws, used as references for
//! the discrete runs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{evaluate, Diagnostics, Evaluation, Scenario, SimTrace, StepRecord};
use crate::controllers::tvd_c_velocity;
use crate::error::{Error, Result};
use crate::geometry::project_to_domain;

/// Integrator substeps per slow step.
pub const SUBSTEPS: usize = 10;

/// Positions sampled on the fine grid `t_n = n δt / SUBSTEPS`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
}

impl Path {
    /// `sup_n ‖p(t_n) - q(t_n)‖` over the common samples.
    pub fn sup_distance(&self, other: &Path) -> f64 {
        self.positions
            .iter()
            .zip(&other.positions)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

fn project(scenario: &Scenario, p: &[f64]) -> Vec<f64> {
    p.chunks(scenario.d())
        .flat_map(|x| project_to_domain(x, &scenario.domain))
        .collect()
}

fn axpy(p: &[f64], h: f64, v: &DVector<f64>) -> Vec<f64> {
    p.iter().zip(v.iter()).map(|(a, b)| a + h * b).collect()
}

fn sensitivities(scenario: &Scenario, p: &[f64], t: f64) -> Result<Evaluation> {
    evaluate(p, t, &scenario.domain, &scenario.density, &scenario.moments, true)
}

/// The exact-law velocity `(I - ∂c/∂p)⁻¹ (-κ(p - c) + ∂c/∂t)`.
fn exact_velocity(scenario: &Scenario, eval: &Evaluation, p: &[f64]) -> Result<(DVector<f64>, f64)> {
    let r = eval.residual(p, scenario.controller.kappa);
    tvd_c_velocity(eval.jacobian.as_ref().expect("sensitivities requested"), &r)
}

fn grid(scenario: &Scenario) -> (usize, f64) {
    (scenario.steps() * SUBSTEPS, scenario.dt / SUBSTEPS as f64)
}

/// Integrates the exact law with classical RK4 at `δt / 10`, calling
/// `visit` with the first-stage evaluation at every grid point.
fn integrate_exact(
    scenario: &Scenario,
    mut visit: impl FnMut(usize, f64, &[f64], &Evaluation, &DVector<f64>, f64),
) -> Result<Path> {
    scenario.validate()?;
    let (count, h) = grid(scenario);
    let mut p = scenario.initial.clone();
    let mut path = Path {
        times: Vec::with_capacity(count + 1),
        positions: Vec::with_capacity(count + 1),
    };
    for n in 0..=count {
        let t = n as f64 * h;
        let stage = |q: &[f64], s: f64| -> Result<DVector<f64>> {
            let q = project(scenario, q);
            let eval = sensitivities(scenario, &q, s)?;
            Ok(exact_velocity(scenario, &eval, &q)?.0)
        };
        let step = (|| -> Result<Vec<f64>> {
            let eval = sensitivities(scenario, &p, t)?;
            let (k1, condition) = exact_velocity(scenario, &eval, &p)?;
            visit(n, t, &p, &eval, &k1, condition);
            if n == count {
                return Ok(p.clone());
            }
            let k2 = stage(&axpy(&p, 0.5 * h, &k1), t + 0.5 * h)?;
            let k3 = stage(&axpy(&p, 0.5 * h, &k2), t + 0.5 * h)?;
            let k4 = stage(&axpy(&p, h, &k3), t + h)?;
            let slope = (k1 + k2 * 2.0 + k3 * 2.0 + k4) / 6.0;
            Ok(project(scenario, &axpy(&p, h, &slope)))
        })()
        .map_err(|e| e.at_step(n / SUBSTEPS, t))?;
        path.times.push(t);
        path.positions.push(std::mem::replace(&mut p, step));
    }
    Ok(path)
}

/// The exact-law trajectory `p̄(t)` on the fine grid.
pub fn reference_path(scenario: &Scenario) -> Result<Path> {
    integrate_exact(scenario, |_, _, _, _, _, _| {})
}

/// The exact law integrated with RK4 at `δt / 10`, recorded at the slow
/// steps like [`run`](super::run).
pub fn reference_trajectory(scenario: &Scenario) -> Result<SimTrace> {
    let mut records = Vec::with_capacity(scenario.steps() + 1);
    integrate_exact(scenario, |n, t, p, eval, u, condition| {
        if n % SUBSTEPS == 0 {
            records.push(StepRecord {
                step: n / SUBSTEPS,
                t,
                positions: p.to_vec(),
                controls: u.as_slice().to_vec(),
                tracking: eval.tracking_errors(p),
                cost: eval.cost(),
                diagnostics: Diagnostics {
                    certificate: None,
                    condition: Some(condition),
                },
            });
        }
    })?;
    Ok(SimTrace::new(scenario, "reference".into(), records))
}

/// `φ_k(z) = Σ_m z^m / (m + k)!`.
fn phi(k: usize, z: f64) -> f64 {
    if z.abs() < 1.0 {
        let mut term = 1.0;
        for j in 1..=k {
            term /= j as f64;
        }
        let mut sum = term;
        for m in 1..40 {
            term *= z / (m + k) as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        let mut value = z.exp();
        let mut factorial = 1.0;
        for j in 1..=k {
            value = (value - 1.0 / factorial) / z;
            factorial *= j as f64;
        }
        value
    }
}

/// Coefficients of the fourth-order exponential Runge–Kutta step for one
/// eigenvalue `z = -λ h / ε`.
struct Coefficients {
    half: f64,
    half_phi: f64,
    full: f64,
    f1: f64,
    f2: f64,
    f3: f64,
}

impl Coefficients {
    fn new(z: f64) -> Self {
        let (p1, p2, p3) = (phi(1, z), phi(2, z), phi(3, z));
        Self {
            half: (0.5 * z).exp(),
            half_phi: phi(1, 0.5 * z),
            full: z.exp(),
            f1: p1 - 3.0 * p2 + 4.0 * p3,
            f2: p2 - 2.0 * p3,
            f3: -p2 + 4.0 * p3,
        }
    }
}

/// Integrates `ṗ = u`, `ε u̇ = -∇F(u)` from `u(0) = 0` on the fine grid.
///
/// The stiff part `-A(p_n, t_n) u / ε` is integrated exactly in the
/// eigenbasis of `A` at the start of each step (Cox–Matthews exponential
/// RK4); the remainder, including the drift of `A` and `b` within the step,
/// is treated explicitly.
pub fn run_two_timescale(scenario: &Scenario, epsilon: f64) -> Result<Path> {
    scenario.validate()?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::config("epsilon", "must be positive and finite"));
    }
    let (count, h) = grid(scenario);
    let kappa = scenario.controller.kappa;
    let m = scenario.initial.len();
    let mut p = scenario.initial.clone();
    let mut u = DVector::<f64>::zeros(m);
    let mut path = Path {
        times: Vec::with_capacity(count + 1),
        positions: Vec::with_capacity(count + 1),
    };

    // Non-stiff part of the fast field: -(A u + b)/ε + A₀ u/ε.
    let field = |q: &[f64], v: &DVector<f64>, s: f64, a0: &DMatrix<f64>| -> Result<DVector<f64>> {
        let q = project(scenario, q);
        let sys = sensitivities(scenario, &q, s)?.system(&q, kappa)?;
        Ok((a0 * v - sys.gradient(v)) / epsilon)
    };

    for n in 0..=count {
        let t = n as f64 * h;
        path.times.push(t);
        path.positions.push(p.clone());
        if n == count {
            break;
        }
        let step = (|| -> Result<(Vec<f64>, DVector<f64>)> {
            let sys = sensitivities(scenario, &p, t)?.system(&p, kappa)?;
            let a0 = sys.matrix().to_dense();
            let eig = SymmetricEigen::new(a0.clone());
            let basis = &eig.eigenvectors;
            let coef: Vec<Coefficients> = eig
                .eigenvalues
                .iter()
                .map(|&l| Coefficients::new(-l.max(0.0) * h / epsilon))
                .collect();
            // Apply a diagonal function of the eigenvalues.
            let apply = |v: &DVector<f64>, f: &dyn Fn(&Coefficients) -> f64| -> DVector<f64> {
                let mut w = basis.tr_mul(v);
                for (x, c) in w.iter_mut().zip(&coef) {
                    *x *= f(c);
                }
                basis * w
            };
            let nonlinear_n = (&a0 * &u - sys.gradient(&u)) / epsilon;

            let u_a = apply(&u, &|c| c.half) + apply(&nonlinear_n, &|c| 0.5 * h * c.half_phi);
            let p_a = axpy(&p, 0.5 * h, &u);
            let n_a = field(&p_a, &u_a, t + 0.5 * h, &a0)?;

            let u_b = apply(&u, &|c| c.half) + apply(&n_a, &|c| 0.5 * h * c.half_phi);
            let p_b = axpy(&p, 0.5 * h, &u_a);
            let n_b = field(&p_b, &u_b, t + 0.5 * h, &a0)?;

            let u_c = apply(&u_a, &|c| c.half) + apply(&(&n_b * 2.0 - &nonlinear_n), &|c| 0.5 * h * c.half_phi);
            let p_c = axpy(&p, h, &u_b);
            let n_c = field(&p_c, &u_c, t + h, &a0)?;

            let u_next = apply(&u, &|c| c.full)
                + apply(&nonlinear_n, &|c| h * c.f1)
                + apply(&(&n_a + &n_b), &|c| 2.0 * h * c.f2)
                + apply(&n_c, &|c| h * c.f3);
            let slope = (&u + (&u_a + &u_b) * 2.0 + &u_c) / 6.0;
            Ok((project(scenario, &axpy(&p, h, &slope)), u_next))
        })()
        .map_err(|e| e.at_step(n / SUBSTEPS, t))?;
        (p, u) = step;
    }
    Ok(path)
}

/// Sup-norm gaps between the two-timescale trajectories and the exact-law
/// reference, one per `ε`, and the ratios of consecutive gaps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub epsilons: Vec<f64>,
    pub gaps: Vec<f64>,
    pub ratios: Vec<f64>,
}

pub fn sweep(scenario: &Scenario, epsilons: &[f64]) -> Result<SweepReport> {
    if epsilons.len() < 3 {
        return Err(Error::config("sweep.epsilons", "at least three values are required"));
    }
    let reference = reference_path(scenario)?;
    let mut gaps = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let path = run_two_timescale(scenario, eps)?;
        let gap = path.sup_distance(&reference);
        log::info!("epsilon {eps}: gap {gap:e}");
        gaps.push(gap);
    }
    let ratios = gaps.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(SweepReport {
        epsilons: epsilons.to_vec(),
        gaps,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_functions_match_closed_forms() {
        for z in [-30.0, -3.0, -1.0, -0.999, -0.3, -1e-6, 0.0, 0.5] {
            let e = f64::exp(z);
            if z != 0.0 {
                assert!((phi(1, z) - z.exp_m1() / z).abs() < 1e-13);
                assert!((phi(2, z) - (e - 1.0 - z) / (z * z)).abs() < 1e-9_f64.max(1e-13 / (z * z)));
            }
            assert!((phi(0, z) - e).abs() < 1e-14 * e.max(1.0));
        }
        assert!((phi(3, 0.0) - 1.0 / 6.0).abs() < 1e-16);
        let c = Coefficients::new(0.0);
        for f in [c.f1, c.f2, c.f3] {
            assert!((f - 1.0 / 6.0).abs() < 1e-15);
        }
    }
}
