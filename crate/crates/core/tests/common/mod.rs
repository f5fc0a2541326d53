//! Random gradient systems built from real tessellations.
#![allow(dead_code)]

use coverage_core::density::{DensityField, GaussianTerm, Harmonic, Trajectory};
use coverage_core::engine::evaluate;
use coverage_core::moments::MomentOptions;
use coverage_core::{BlockMatrix, ConvexPolytope, GradientSystem, NeighborGraph};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct Sample {
    pub positions: Vec<f64>,
    pub graph: NeighborGraph,
    pub jacobian: BlockMatrix,
    /// `r = -κ(p - c) + ∂c/∂t`.
    pub residual: DVector<f64>,
    pub system: GradientSystem,
}

pub fn cube(d: usize) -> ConvexPolytope {
    ConvexPolytope::cuboid(&vec![-10.0; d], &vec![10.0; d]).unwrap()
}

/// A wide Gaussian drifting in a circle: every cell keeps a healthy mass,
/// so `I - ∂c/∂p` stays well conditioned.
pub fn broad_density(d: usize) -> DensityField {
    let mut center = vec![
        Trajectory {
            cos: vec![Harmonic { amplitude: 3.0, frequency: 0.2, phase: 0.0 }],
            ..Trajectory::default()
        },
        Trajectory {
            sin: vec![Harmonic { amplitude: 3.0, frequency: 0.2, phase: 0.0 }],
            ..Trajectory::default()
        },
    ];
    if d == 3 {
        center.push(Trajectory::constant(1.0));
    }
    DensityField::GaussianSum {
        terms: vec![GaussianTerm { amplitude: 1.0, width: 6.0, center }],
    }
}

/// Uniform in `[-9.5, 9.5]^d`, pairwise at least `separation` apart.
pub fn positions(rng: &mut ChaCha8Rng, n: usize, d: usize, separation: f64) -> Vec<f64> {
    loop {
        let p: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-9.5..9.5)).collect();
        let separated = (0..n).all(|i| {
            (0..i).all(|j| {
                let dist: f64 = (0..d).map(|k| (p[i * d + k] - p[j * d + k]).powi(2)).sum();
                dist.sqrt() > separation
            })
        });
        if separated {
            return p;
        }
    }
}

/// Tessellates random positions, differentiates the centroids and assembles
/// `A`, `b` for `field` at time `t`.
pub fn random_system(rng: &mut ChaCha8Rng, n: usize, d: usize, field: &DensityField, t: f64) -> Sample {
    system_at(positions(rng, n, d, 0.5), field, t)
}

/// A random system with agents at least 4 apart and `cond(A) <= max_condition`.
/// `I - ∂c/∂p` is singular on a hypersurface of configuration space, so
/// unconditioned draws occasionally land next to it.
pub fn well_conditioned_system(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    field: &DensityField,
    t: f64,
    max_condition: f64,
) -> Sample {
    loop {
        let s = system_at(positions(rng, n, d, 4.0), field, t);
        if s.system.condition() <= max_condition {
            return s;
        }
    }
}

pub fn system_at(positions: Vec<f64>, field: &DensityField, t: f64) -> Sample {
    let d = field.dim();
    let eval = evaluate(&positions, t, &cube(d), field, &MomentOptions::default(), true).unwrap();
    let system = eval.system(&positions, 1.0).unwrap();
    let residual = eval.residual(&positions, 1.0);
    Sample {
        positions,
        graph: eval.graph,
        jacobian: eval.jacobian.unwrap(),
        residual,
        system,
    }
}

/// `∇F(u) = (I - J)ᵀ((I - J)u - r)` from dense matrices.
pub fn dense_gradient(jacobian: &BlockMatrix, r: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let m = jacobian.dim();
    let k = DMatrix::identity(m, m) - jacobian.to_dense();
    k.transpose() * (&k * u - r)
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
