//! Fixtures shared by the benchmarks.

use coverage_core::engine::{evaluate, sample_positions, Evaluation};
use coverage_core::moments::MomentOptions;
use coverage_core::{ConvexPolytope, DensityField};

/// `[-10, 10]^d`.
pub fn domain(d: usize) -> ConvexPolytope {
    ConvexPolytope::cuboid(&vec![-10.0; d], &vec![10.0; d]).unwrap()
}

pub fn density(d: usize) -> DensityField {
    if d == 2 {
        DensityField::Phi1
    } else {
        DensityField::Phi4
    }
}

/// `n` seeded positions in `[-10, 10]^d`.
pub fn positions(n: usize, d: usize) -> Vec<f64> {
    sample_positions(&domain(d), n, 17).unwrap()
}

/// A full evaluation, sensitivities included, at `t = 1`.
pub fn evaluation(n: usize, d: usize) -> (Vec<f64>, Evaluation) {
    let p = positions(n, d);
    let e = evaluate(&p, 1.0, &domain(d), &density(d), &MomentOptions::default(), true).unwrap();
    (p, e)
}
