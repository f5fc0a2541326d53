//! The quadratic least-squares system `∇F(u) = A u + b` behind the
//! distributed controllers, its fresh/delayed splittings and spectral
//! certificates.
//!
//! With `J = ∂c/∂p` and `r = -κ(p - c) + ∂c/∂t`, `F(u) = ½‖(I - J)u - r‖²`,
//! so `A = (I - J)ᵀ(I - J)` and `b = -(I - J)ᵀ r`. The blocks are assembled
//! locally from the 1-hop and 2-hop Delaunay neighborhoods.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::blocks::BlockMatrix;
use crate::error::{Error, Result};
use crate::geometry::NeighborGraph;
use crate::moments::CellMoments;

/// Condition number above which `A` (or `I - J`) is treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Default fraction of the admissible step used by the fast loop.
pub const DEFAULT_SAFETY: f64 = 0.9;

/// How `A` is divided between fresh and one-step-delayed information.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Everything fresh: requires 2-hop communication every round.
    #[default]
    Fresh,
    /// Everything delayed by one round.
    AllDelayed,
    /// Only the 2-hop neighbors that are not 1-hop neighbors are delayed.
    TwoMinusOneDelayed,
    /// Every 2-hop contribution is delayed.
    TwoDelayed,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Fresh,
        Scheme::AllDelayed,
        Scheme::TwoMinusOneDelayed,
        Scheme::TwoDelayed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Fresh => "fresh",
            Scheme::AllDelayed => "all-delayed",
            Scheme::TwoMinusOneDelayed => "two-minus-one-delayed",
            Scheme::TwoDelayed => "two-delayed",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

#[derive(Clone, Debug)]
pub struct GradientSystem {
    graph: NeighborGraph,
    /// `A`, with every off-diagonal block stored as `bracket + correction`.
    matrix: BlockMatrix,
    /// `A_ii`.
    diagonal: Vec<DMatrix<f64>>,
    /// The 1-hop term of `A_ij`, `j ∈ N_i`.
    bracket: BlockMatrix,
    /// `Σ_{k ∈ N_i ∩ N_j} J_kiᵀ J_kj` for `j ∈ N_i²`.
    correction: BlockMatrix,
    b: DVector<f64>,
}

/// `r = -κ(p - c) + ∂c/∂t`, the velocity the exact controller imposes on
/// the tracking error.
pub fn tracking_residual(positions: &[f64], moments: &[CellMoments], dcdt: &[f64], kappa: f64) -> DVector<f64> {
    let d = positions.len() / moments.len().max(1);
    DVector::from_iterator(
        positions.len(),
        (0..positions.len()).map(|k| -kappa * (positions[k] - moments[k / d].centroid[k % d]) + dcdt[k]),
    )
}

impl GradientSystem {
    /// Assembles `A` and `b` from the centroid Jacobian, the centroid time
    /// derivative and the current moments.
    pub fn assemble(
        positions: &[f64],
        jacobian: &BlockMatrix,
        dcdt: &[f64],
        moments: &[CellMoments],
        graph: &NeighborGraph,
        kappa: f64,
    ) -> Result<Self> {
        let n = graph.len();
        let d = jacobian.d();
        for (what, len) in [("positions", positions.len()), ("dcdt", dcdt.len())] {
            if len != n * d {
                return Err(Error::GraphMismatch(format!("{what} has length {len}, expected {}", n * d)));
            }
        }
        if moments.len() != n {
            return Err(Error::GraphMismatch(format!("{} moments for {n} agents", moments.len())));
        }
        let r = tracking_residual(positions, moments, dcdt, kappa);
        Self::from_jacobian(jacobian, &r, graph)
    }

    /// Assembles the system for an arbitrary right-hand side `r`.
    pub fn from_jacobian(jacobian: &BlockMatrix, r: &DVector<f64>, graph: &NeighborGraph) -> Result<Self> {
        let n = graph.len();
        let d = jacobian.d();
        if jacobian.n() != n {
            return Err(Error::GraphMismatch(format!(
                "Jacobian has {} block rows, graph has {n} agents",
                jacobian.n()
            )));
        }
        if r.len() != n * d {
            return Err(Error::GraphMismatch(format!("residual has length {}, expected {}", r.len(), n * d)));
        }
        for (i, j) in jacobian.support() {
            if i != j && !graph.is_neighbor(i, j) {
                return Err(Error::GraphMismatch(format!(
                    "Jacobian block ({i}, {j}) lies outside the 1-hop stencil"
                )));
            }
        }

        let eye = DMatrix::<f64>::identity(d, d);
        let jb = |i: usize, j: usize| jacobian.block(i, j);
        // I - J_ii
        let fresh_self: Vec<DMatrix<f64>> = (0..n).map(|i| &eye - jb(i, i)).collect();

        let mut diagonal = Vec::with_capacity(n);
        let mut bracket = BlockMatrix::new(n, d);
        let mut correction = BlockMatrix::new(n, d);
        let mut b = DVector::zeros(n * d);
        for i in 0..n {
            let mut aii = fresh_self[i].tr_mul(&fresh_self[i]);
            let mut bi = -fresh_self[i].tr_mul(&r.rows(i * d, d));
            for &j in graph.one_hop(i) {
                let jji = jb(j, i);
                aii += jji.tr_mul(&jji);
                bi += jji.tr_mul(&r.rows(j * d, d));
                let block = -(fresh_self[i].tr_mul(&jb(i, j)) + jji.tr_mul(&fresh_self[j]));
                bracket.insert(i, j, block);
            }
            for &j in graph.two_hop(i) {
                let mut sum = DMatrix::zeros(d, d);
                for k in graph.common(i, j) {
                    sum += jb(k, i).tr_mul(&jb(k, j));
                }
                correction.insert(i, j, sum);
            }
            diagonal.push(aii);
            b.rows_mut(i * d, d).copy_from(&bi);
        }

        let mut matrix = BlockMatrix::new(n, d);
        for i in 0..n {
            matrix.insert(i, i, diagonal[i].clone());
            for &j in graph.one_hop(i) {
                let block = match correction.get(i, j) {
                    Some(c) => bracket.block(i, j) + c,
                    None => bracket.block(i, j),
                };
                matrix.insert(i, j, block);
            }
            for &j in graph.two_hop(i) {
                if !graph.is_neighbor(i, j) {
                    matrix.insert(i, j, correction.block(i, j));
                }
            }
        }

        Ok(Self {
            graph: graph.clone(),
            matrix,
            diagonal,
            bracket,
            correction,
            b,
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn d(&self) -> usize {
        self.matrix.d()
    }

    pub fn graph(&self) -> &NeighborGraph {
        &self.graph
    }

    /// `A`.
    pub fn matrix(&self) -> &BlockMatrix {
        &self.matrix
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// `∇F(u) = A u + b`.
    pub fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        self.matrix.mul_vec(u) + &self.b
    }

    /// `F(u)` up to the constant `½‖r‖²`: `½ uᵀA u + bᵀu`.
    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&self.matrix.mul_vec(u)) + self.b.dot(u)
    }

    /// Divides `A` into fresh and delayed parts. Every block is copied from
    /// the stored terms rather than recomputed, so the two parts add up to
    /// `A` exactly.
    pub fn split(&self, scheme: Scheme) -> Splitting {
        let (n, d) = (self.n(), self.d());
        let mut fresh = BlockMatrix::new(n, d);
        let mut delayed = BlockMatrix::new(n, d);
        match scheme {
            Scheme::Fresh => fresh = self.matrix.clone(),
            Scheme::AllDelayed => delayed = self.matrix.clone(),
            Scheme::TwoMinusOneDelayed => {
                for (i, j) in self.matrix.support() {
                    let block = self.matrix.block(i, j);
                    if i == j || self.graph.is_neighbor(i, j) {
                        fresh.insert(i, j, block);
                    } else {
                        delayed.insert(i, j, block);
                    }
                }
            }
            Scheme::TwoDelayed => {
                for i in 0..n {
                    fresh.insert(i, i, self.diagonal[i].clone());
                }
                for (i, j) in self.bracket.support() {
                    fresh.insert(i, j, self.bracket.block(i, j));
                }
                for (i, j) in self.correction.support() {
                    delayed.insert(i, j, self.correction.block(i, j));
                }
            }
        }
        Splitting { scheme, fresh, delayed }
    }

    /// Condition number of `A` from its singular values.
    pub fn condition(&self) -> f64 {
        condition_number(&self.matrix.to_dense())
    }

    /// `u_* = -A⁻¹ b`, the unique minimizer of `F`.
    pub fn solve_exact(&self) -> Result<DVector<f64>> {
        let dense = self.matrix.to_dense();
        let condition = condition_number(&dense);
        if !(condition <= CONDITION_LIMIT) {
            return Err(Error::IllConditioned { condition });
        }
        let lu = dense.clone().lu();
        let mut u = lu.solve(&(-&self.b)).ok_or(Error::IllConditioned { condition })?;
        // One step of iterative refinement recovers digits lost to moderate
        // ill-conditioning.
        if let Some(c) = lu.solve(&(-(&dense * &u + &self.b))) {
            u += c;
        }
        Ok(u)
    }
}

pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `A = Ā^f + Ā^d` for one [`Scheme`].
#[derive(Clone, Debug)]
pub struct Splitting {
    pub scheme: Scheme,
    pub fresh: BlockMatrix,
    pub delayed: BlockMatrix,
}

impl Splitting {
    /// One step of `u⁺ = u - δη(Ā^f u + Ā^d u_prev + b)`.
    pub fn step(&self, current: &DVector<f64>, previous: &DVector<f64>, b: &DVector<f64>, step: f64) -> DVector<f64> {
        let mut g = self.fresh.mul_vec(current);
        if self.delayed.nnz_blocks() > 0 {
            g += self.delayed.mul_vec(previous);
        }
        g += b;
        current - g * step
    }

    /// The `2nd × 2nd` matrix advancing `(e_ℓ, e_{ℓ-1})` for the error
    /// recursion `e⁺ = (I - δηĀ^f) e - δηĀ^d e_prev`.
    pub fn iteration_matrix(&self, step: f64) -> DMatrix<f64> {
        let m = self.fresh.dim();
        let mut t = DMatrix::zeros(2 * m, 2 * m);
        let top_left = DMatrix::identity(m, m) - self.fresh.to_dense() * step;
        t.view_mut((0, 0), (m, m)).copy_from(&top_left);
        t.view_mut((0, m), (m, m)).copy_from(&(self.delayed.to_dense() * -step));
        t.view_mut((m, 0), (m, m)).fill_with_identity();
        t
    }
}

/// Spectral facts about one splitting at one fast step size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub scheme: Scheme,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub condition: f64,
    pub fresh_lambda_min: f64,
    pub fresh_lambda_max: f64,
    pub delayed_lambda_min: f64,
    pub delayed_lambda_max: f64,
    /// Largest admissible `δη` (exclusive).
    pub bound: f64,
    /// The step the certificate was evaluated at.
    pub step: f64,
    pub admissible: bool,
    /// `1 - δη λ_min(Ā^f) + δη max(λ_max(Ā^d), |λ_min(Ā^d)|)`.
    pub gamma: f64,
    /// `λ_min(B² - 2Λ)` with `B = I - δηĀ^f` and `Λ = δηĀ^d`.
    pub margin: f64,
    /// `λ_min(Ā^f) > max(λ_max(Ā^d), |λ_min(Ā^d)|)`.
    pub dominance: bool,
}

fn extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    (eig.min(), eig.max())
}

fn check_symmetric(m: &BlockMatrix) -> Result<()> {
    let scale = m.support().map(|(i, j)| m.block(i, j).amax()).fold(1.0, f64::max);
    let asymmetry = m.asymmetry();
    if asymmetry > 1e-9 * scale {
        return Err(Error::NotSymmetric { asymmetry });
    }
    Ok(())
}

/// Largest fast step admitted for a splitting with the given eigenvalue
/// extremes.
///
/// It is the smaller of `1/(2λ_f)` and the first root of
/// `(1 - δη λ_f)² = 4 δη λ_d`, where `λ_f = λ_max(Ā^f)⁺` and
/// `λ_d = λ_max(Ā^d)⁺`. The fresh scheme reduces to `1/(2λ_max(A))` and the
/// all-delayed scheme to `1/(4λ_max(A))`; below the bound
/// `λ_min(B² - 2Λ) ≥ 2δη λ_d ≥ 0`.
pub fn step_bound(fresh_lambda_max: f64, delayed_lambda_max: f64) -> f64 {
    let lf = fresh_lambda_max.max(0.0);
    let ld = delayed_lambda_max.max(0.0);
    if lf == 0.0 && ld == 0.0 {
        return f64::INFINITY;
    }
    let s = lf + 2.0 * ld;
    let root = 1.0 / (s + (s * s - lf * lf).max(0.0).sqrt());
    if lf > 0.0 {
        root.min(0.5 / lf)
    } else {
        root
    }
}

impl Splitting {
    /// Certifies `step`, or `safety × bound` when no step is given.
    pub fn certify(&self, system: &GradientSystem, step: Option<f64>, safety: f64) -> Result<Certificate> {
        for m in [system.matrix(), &self.fresh, &self.delayed] {
            check_symmetric(m)?;
        }
        let a = system.matrix().to_dense();
        let (lambda_min, lambda_max) = extremes(&a);
        let fresh = self.fresh.to_dense();
        let delayed = self.delayed.to_dense();
        let (fresh_lambda_min, fresh_lambda_max) = extremes(&fresh);
        let (delayed_lambda_min, delayed_lambda_max) = extremes(&delayed);

        let bound = step_bound(fresh_lambda_max, delayed_lambda_max);
        let step = step.unwrap_or(safety * bound);
        let spread = delayed_lambda_max.max(delayed_lambda_min.abs());
        let gamma = 1.0 - step * fresh_lambda_min + step * spread;

        let m = fresh.nrows();
        let bmat = DMatrix::identity(m, m) - &fresh * step;
        let margin_matrix = &bmat * &bmat - &delayed * (2.0 * step);
        let margin_matrix = (&margin_matrix + margin_matrix.transpose()) * 0.5;
        let (margin, _) = extremes(&margin_matrix);

        Ok(Certificate {
            scheme: self.scheme,
            lambda_min,
            lambda_max,
            condition: if lambda_min > 0.0 { lambda_max / lambda_min } else { f64::INFINITY },
            fresh_lambda_min,
            fresh_lambda_max,
            delayed_lambda_min,
            delayed_lambda_max,
            bound,
            step,
            admissible: step > 0.0 && step < bound,
            gamma,
            margin,
            dominance: fresh_lambda_min > spread,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_jacobian() -> (BlockMatrix, NeighborGraph) {
        let graph = NeighborGraph::from_adjacency(vec![vec![1], vec![0, 2], vec![1]]);
        let mut j = BlockMatrix::new(3, 2);
        let vals = [
            (0, 0, [0.2, 0.1, -0.05, 0.3]),
            (0, 1, [0.1, 0.0, 0.02, -0.1]),
            (1, 0, [0.15, -0.05, 0.0, 0.1]),
            (1, 1, [0.25, 0.05, 0.05, 0.2]),
            (1, 2, [-0.1, 0.2, 0.1, 0.05]),
            (2, 1, [0.05, 0.1, -0.2, 0.1]),
            (2, 2, [0.3, 0.0, 0.1, 0.1]),
        ];
        for (i, k, v) in vals {
            j.insert(i, k, DMatrix::from_row_slice(2, 2, &v));
        }
        (j, graph)
    }

    #[test]
    fn zero_jacobian_gives_identity() {
        let graph = NeighborGraph::from_adjacency(vec![vec![]]);
        let r = DVector::from_vec(vec![0.5, -1.5]);
        let sys = GradientSystem::from_jacobian(&BlockMatrix::new(1, 2), &r, &graph).unwrap();
        assert_eq!(sys.matrix().to_dense(), DMatrix::identity(2, 2));
        assert_eq!(sys.b(), &(-&r));
        assert_eq!(sys.solve_exact().unwrap(), r);
    }

    #[test]
    fn path_graph_two_delayed_block() {
        let (j, graph) = path_jacobian();
        let r = DVector::from_vec(vec![1.0, 0.0, -1.0, 0.5, 0.2, 0.3]);
        let sys = GradientSystem::from_jacobian(&j, &r, &graph).unwrap();
        let split = sys.split(Scheme::TwoDelayed);
        let expected = j.block(1, 0).tr_mul(&j.block(1, 2));
        assert_eq!(split.delayed.block(0, 2), expected);
        assert!(split.fresh.get(0, 2).is_none());

        let eye = DMatrix::identity(6, 6);
        let m = &eye - j.to_dense();
        let dense = m.transpose() * &m;
        assert!((sys.matrix().to_dense() - dense).amax() < 1e-15);
    }

    #[test]
    fn identity_certificates() {
        let graph = NeighborGraph::from_adjacency(vec![vec![1], vec![0]]);
        let r = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let sys = GradientSystem::from_jacobian(&BlockMatrix::new(2, 2), &r, &graph).unwrap();

        let fresh = sys.split(Scheme::Fresh).certify(&sys, Some(0.3), DEFAULT_SAFETY).unwrap();
        assert!((fresh.bound - 0.5).abs() < 1e-15);
        assert!((fresh.gamma - 0.7).abs() < 1e-15);
        assert!(fresh.admissible);

        let delayed = sys.split(Scheme::AllDelayed);
        let cert = delayed.certify(&sys, None, DEFAULT_SAFETY).unwrap();
        assert!((cert.bound - 0.25).abs() < 1e-15);
        let step = 0.2;
        let eig = delayed.iteration_matrix(step).complex_eigenvalues();
        let hi = (1.0 + (1.0 - 4.0 * step).sqrt()) / 2.0;
        let lo = (1.0 - (1.0 - 4.0 * step).sqrt()) / 2.0;
        for z in eig.iter() {
            assert!(z.im.abs() < 1e-12);
            assert!((z.re - hi).abs() < 1e-12 || (z.re - lo).abs() < 1e-12, "{z}");
        }
    }

    #[test]
    fn step_bound_limits() {
        assert!((step_bound(2.0, 0.0) - 0.25).abs() < 1e-15);
        assert!((step_bound(0.0, 2.0) - 0.125).abs() < 1e-15);
        // The bound keeps the appendix margin nonnegative in the scalar case.
        for (f, g) in [(1.0, 0.3), (0.5, 0.5), (2.0, 0.01)] {
            let s = step_bound(f, g);
            assert!((1.0 - s * f).powi(2) - 2.0 * s * g > 0.0);
        }
    }

    #[test]
    fn outside_stencil_is_rejected() {
        let graph = NeighborGraph::from_adjacency(vec![vec![], vec![]]);
        let mut j = BlockMatrix::new(2, 2);
        j.insert(0, 1, DMatrix::identity(2, 2));
        let r = DVector::zeros(4);
        assert!(matches!(
            GradientSystem::from_jacobian(&j, &r, &graph),
            Err(Error::GraphMismatch(_))
        ));
    }

    #[test]
    fn ill_conditioned_solve_fails() {
        let graph = NeighborGraph::from_adjacency(vec![vec![]]);
        let mut j = BlockMatrix::new(1, 2);
        j.insert(0, 0, DMatrix::identity(2, 2));
        let sys = GradientSystem::from_jacobian(&j, &DVector::zeros(2), &graph).unwrap();
        assert!(matches!(sys.solve_exact(), Err(Error::IllConditioned { .. })));
    }
}
