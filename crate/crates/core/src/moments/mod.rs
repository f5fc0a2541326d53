//! Density moments over Voronoi cells and their sensitivities.
//!
//! Gaussian terms are integrated radially from their centers (see
//! [`QuadratureMethod`]); constant terms exactly. `∂c/∂p` and `∂c/∂t` are
//! central finite differences of those integrals.

mod quadrature;
mod radial;

use nalgebra::{DMatrix, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use quadrature::{Quadrature, QuadratureMethod, QuadratureSpec, DEFAULT_DEGREE, DEFAULT_REFINEMENT};

use crate::blocks::BlockMatrix;
use crate::density::{DensityField, Snapshot, DENSITY_FLOOR};
use crate::error::{Error, Result};
use crate::geometry::{compute_cell, ConvexPolytope, NeighborGraph, Shape, VoronoiCell};

/// Relative finite-difference step for `∂c/∂p`, scaled by `diam(Q)`.
pub const DEFAULT_JACOBIAN_STEP: f64 = 1e-5;
/// Finite-difference step for `∂c/∂t`, in seconds.
pub const DEFAULT_TIME_STEP: f64 = 1e-4;
const JACOBIAN_RETRIES: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMoments {
    pub mass: f64,
    pub centroid: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentOptions {
    pub quadrature: Quadrature,
    /// `h = jacobian_step · diam(Q)`.
    pub jacobian_step: f64,
    pub time_step: f64,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self {
            quadrature: Quadrature::default(),
            jacobian_step: DEFAULT_JACOBIAN_STEP,
            time_step: DEFAULT_TIME_STEP,
        }
    }
}

/// Mass, centroid and `∫ ‖q - about‖² φ dq` over one shape.
#[derive(Clone, Debug)]
pub(crate) struct Integrals {
    pub mass: f64,
    pub centroid: Vec<f64>,
    pub second: f64,
}

pub(crate) fn integrate(shape: &Shape, snapshot: &Snapshot, quad: &Quadrature, about: &[f64]) -> Integrals {
    match quad.method() {
        QuadratureMethod::Simplex => integrate_pointwise(shape, snapshot, quad, about),
        QuadratureMethod::Radial => integrate_radial(shape, snapshot, quad, about),
    }
}

/// Sums `f(x) · weight` over a fan rule, returning `(∫ f, ∫ (x - o) f, ∫ ‖x - about‖² f)`.
fn fan_sums(
    shape: &Shape,
    triangle: &[([f64; 3], f64)],
    tetrahedron: &[([f64; 4], f64)],
    about: &[f64],
    f: impl Fn(&[f64]) -> f64,
) -> (f64, Vec<f64>, f64) {
    let o = shape.vertex_mean();
    let d = o.len();
    let (mut mass, mut first, mut second) = (0.0, vec![0.0; d], 0.0);
    let mut add = |x: &[f64], weight: f64| {
        let wf = weight * f(x);
        mass += wf;
        let mut r2 = 0.0;
        for k in 0..d {
            first[k] += (x[k] - o[k]) * wf;
            r2 += (x[k] - about[k]) * (x[k] - about[k]);
        }
        second += wf * r2;
    };
    match shape {
        Shape::Polygon(p) => p.for_each_triangle(|[a, b, c]| {
            let (ab, ac) = (b - a, c - a);
            let area = 0.5 * (ab.x * ac.y - ab.y * ac.x).abs();
            for (l, w) in triangle {
                let x = a * l[0] + b * l[1] + c * l[2];
                add(x.as_slice(), w * area);
            }
        }),
        Shape::Polyhedron(p) => p.for_each_tetrahedron(|[a, b, c, e]| {
            let vol = (b - a).cross(&(c - a)).dot(&(e - a)).abs() / 6.0;
            for (l, w) in tetrahedron {
                let x = a * l[0] + b * l[1] + c * l[2] + e * l[3];
                add(x.as_slice(), w * vol);
            }
        }),
    }
    (mass, first, second)
}

fn finish(shape: &Shape, mass: f64, first: Vec<f64>, second: f64) -> Integrals {
    let o = shape.vertex_mean();
    let centroid = o.iter().zip(&first).map(|(o, f)| o + f / mass).collect();
    Integrals { mass, centroid, second }
}

fn integrate_pointwise(shape: &Shape, snapshot: &Snapshot, quad: &Quadrature, about: &[f64]) -> Integrals {
    let (mass, first, second) = fan_sums(shape, quad.triangle(), quad.tetrahedron(), about, |x| snapshot.eval(x));
    finish(shape, mass, first, second)
}

fn integrate_radial(shape: &Shape, snapshot: &Snapshot, quad: &Quadrature, about: &[f64]) -> Integrals {
    let (triangle, tetrahedron) = quadrature::low_order();
    let (volume, uniform_first, uniform_second) = fan_sums(shape, &triangle, &tetrahedron, about, |_| 1.0);
    let o = shape.vertex_mean();
    let d = o.len();

    let c = snapshot.constant();
    let mut mass = c * volume;
    let mut first: Vec<f64> = uniform_first.iter().map(|f| c * f).collect();
    let mut second = c * uniform_second;

    for term in snapshot.terms() {
        let (g, w) = (&term.center, term.width);
        let nearest = shape.nearest_point(g);
        let distance = g.iter().zip(&nearest).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / w;
        let unit = match shape {
            Shape::Polygon(p) => {
                let g = Vector2::new(g[0], g[1]);
                radial::polygon(&p.mapped(|v| (v - g) / w), quad, distance)
            }
            Shape::Polyhedron(p) => {
                let g = Vector3::new(g[0], g[1], g[2]);
                radial::polyhedron(&p.mapped(|v| (v - g) / w), quad, distance)
            }
        };
        let scale = term.amplitude * w.powi(d as i32);
        mass += scale * unit.mass;
        let mut cross = 0.0;
        let mut g_about2 = 0.0;
        for k in 0..d {
            first[k] += scale * ((g[k] - o[k]) * unit.mass + w * unit.first[k]);
            cross += (g[k] - about[k]) * unit.first[k];
            g_about2 += (g[k] - about[k]) * (g[k] - about[k]);
        }
        second += scale * (w * w * unit.second + 2.0 * w * cross + g_about2 * unit.mass);
    }

    if !(mass > DENSITY_FLOOR * volume) {
        mass = DENSITY_FLOOR * volume;
        first = uniform_first.iter().map(|f| DENSITY_FLOOR * f).collect();
        second = DENSITY_FLOOR * uniform_second;
    }
    finish(shape, mass, first, second)
}

fn checked(cell: &VoronoiCell, integrals: Integrals) -> Result<Integrals> {
    let volume = cell.volume();
    if !(volume > 0.0 && integrals.mass > 0.0 && integrals.mass.is_finite()) {
        return Err(Error::DegenerateCell {
            agent: cell.owner,
            volume,
        });
    }
    Ok(integrals)
}

/// `m_i = ∫ φ` and `c_i = (1/m_i) ∫ q φ` over one cell.
pub fn cell_moments(cell: &VoronoiCell, field: &DensityField, t: f64, quad: &Quadrature) -> Result<CellMoments> {
    let origin = cell.shape.vertex_mean();
    let i = checked(cell, integrate(&cell.shape, &field.at(t), quad, &origin))?;
    Ok(CellMoments {
        mass: i.mass,
        centroid: i.centroid,
    })
}

/// Moments of every cell plus each cell's coverage cost
/// `∫_{V_i} ‖q - p_i‖² φ dq`.
pub fn moments_and_costs(
    cells: &[VoronoiCell],
    positions: &[f64],
    field: &DensityField,
    t: f64,
    quad: &Quadrature,
) -> Result<(Vec<CellMoments>, Vec<f64>)> {
    let snapshot = field.at(t);
    let d = field.dim();
    let results = cells
        .par_iter()
        .map(|cell| {
            let p = &positions[cell.owner * d..(cell.owner + 1) * d];
            checked(cell, integrate(&cell.shape, &snapshot, quad, p))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(results
        .into_iter()
        .map(|i| {
            (
                CellMoments {
                    mass: i.mass,
                    centroid: i.centroid,
                },
                i.second,
            )
        })
        .unzip())
}

pub fn all_moments(cells: &[VoronoiCell], field: &DensityField, t: f64, quad: &Quadrature) -> Result<Vec<CellMoments>> {
    let snapshot = field.at(t);
    cells
        .par_iter()
        .map(|cell| {
            let origin = cell.shape.vertex_mean();
            let i = checked(cell, integrate(&cell.shape, &snapshot, quad, &origin))?;
            Ok(CellMoments {
                mass: i.mass,
                centroid: i.centroid,
            })
        })
        .collect()
}

/// Stacked centroids `(c_1, …, c_n)`.
pub fn stacked_centroids(moments: &[CellMoments]) -> Vec<f64> {
    moments.iter().flat_map(|m| m.centroid.iter().copied()).collect()
}

/// Facets that appear or vanish under a perturbation of size `h` are not
/// structural as long as their measure stays within `FACET_SLACK · h` (times
/// `diam^(d-2)`): a facet born at the base configuration grows linearly in
/// `h`, with a constant in the tens near cocircular agents, and the centroid
/// map stays differentiable through such events.
const FACET_SLACK: f64 = 1e3;

/// Whether a perturbed cell has the same neighbors as the baseline, ignoring
/// facets no larger than `slack`.
fn same_structure(base: &[(usize, f64)], cell: &VoronoiCell, threshold: f64, slack: f64) -> bool {
    let now = cell.bisector_measures();
    let measure = |list: &[(usize, f64)], j: usize| {
        list.binary_search_by_key(&j, |(k, _)| *k).map_or(0.0, |pos| list[pos].1)
    };
    base.iter().chain(&now).all(|&(j, _)| {
        let (a, b) = (measure(base, j), measure(&now, j));
        (a > threshold) == (b > threshold) || a.max(b) <= slack
    })
}

/// `J_ij = ∂c_i/∂p_j` by central differences, recomputing only the cells of
/// `{j} ∪ N_j` for each perturbation. Blocks outside `{i} ∪ N_i` are not
/// stored.
///
/// If a perturbation creates or removes a facet of an affected cell that is
/// larger than the perturbation can explain, the step is halved (up to four
/// times) before giving up with [`Error::GraphChanged`].
pub fn centroid_jacobian(
    positions: &[f64],
    domain: &ConvexPolytope,
    cells: &[VoronoiCell],
    graph: &NeighborGraph,
    field: &DensityField,
    t: f64,
    opts: &MomentOptions,
) -> Result<BlockMatrix> {
    let d = domain.dim();
    let n = cells.len();
    let threshold = crate::geometry::facet_threshold(domain);
    let baseline: Vec<Vec<(usize, f64)>> = cells.iter().map(VoronoiCell::bisector_measures).collect();
    let snapshot = field.at(t);
    let h0 = opts.jacobian_step * domain.diameter();

    let scale = domain.diameter().powi(d as i32 - 2);
    let centroid_of = |k: usize, p: &[f64], h: f64| -> Result<Option<Vec<f64>>> {
        let cell = compute_cell(k, p, domain)?;
        if !same_structure(&baseline[k], &cell, threshold, FACET_SLACK * h * scale) {
            return Ok(None);
        }
        let origin = cell.shape.vertex_mean();
        let i = checked(&cell, integrate(&cell.shape, &snapshot, &opts.quadrature, &origin))?;
        Ok(Some(i.centroid))
    };

    let columns: Vec<(usize, usize)> = (0..n).flat_map(|j| (0..d).map(move |a| (j, a))).collect();
    let results = columns
        .par_iter()
        .map(|&(j, a)| -> Result<Vec<(usize, Vec<f64>)>> {
            let mut affected = vec![j];
            affected.extend_from_slice(graph.one_hop(j));
            let mut h = h0;
            'attempt: for _ in 0..=JACOBIAN_RETRIES {
                let mut plus = positions.to_vec();
                let mut minus = positions.to_vec();
                plus[j * d + a] += h;
                minus[j * d + a] -= h;
                let mut column = Vec::with_capacity(affected.len());
                for &k in &affected {
                    let (Some(cp), Some(cm)) = (centroid_of(k, &plus, h)?, centroid_of(k, &minus, h)?) else {
                        h *= 0.5;
                        continue 'attempt;
                    };
                    let diff = cp.iter().zip(&cm).map(|(x, y)| (x - y) / (2.0 * h)).collect();
                    column.push((k, diff));
                }
                return Ok(column);
            }
            Err(Error::GraphChanged { agent: j, step: h })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut jac = BlockMatrix::new(n, d);
    let mut blocks: Vec<Vec<(usize, DMatrix<f64>)>> = vec![Vec::new(); n];
    for (&(j, a), column) in columns.iter().zip(results) {
        for (k, diff) in column {
            let row = &mut blocks[k];
            let pos = match row.iter().position(|(c, _)| *c == j) {
                Some(pos) => pos,
                None => {
                    row.push((j, DMatrix::zeros(d, d)));
                    row.len() - 1
                }
            };
            for (r, v) in diff.into_iter().enumerate() {
                row[pos].1[(r, a)] = v;
            }
        }
    }
    for (k, row) in blocks.into_iter().enumerate() {
        for (j, block) in row {
            jac.insert(k, j, block);
        }
    }
    Ok(jac)
}

/// `∂c/∂t` at frozen positions, stacked. Central difference with step
/// `h_t`; for `t < h_t` the second-order forward formula is used instead so
/// the density is never evaluated at negative times.
pub fn centroid_time_derivative(
    cells: &[VoronoiCell],
    field: &DensityField,
    t: f64,
    opts: &MomentOptions,
) -> Result<Vec<f64>> {
    let d = field.dim();
    if field.is_static() {
        return Ok(vec![0.0; cells.len() * d]);
    }
    let h = opts.time_step;
    let at = |s: f64| all_moments(cells, field, s, &opts.quadrature).map(|m| stacked_centroids(&m));
    if t >= h {
        let (plus, minus) = (at(t + h)?, at(t - h)?);
        Ok(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect())
    } else {
        let (c0, c1, c2) = (at(t)?, at(t + h)?, at(t + 2.0 * h)?);
        Ok((0..c0.len())
            .map(|k| (-3.0 * c0[k] + 4.0 * c1[k] - c2[k]) / (2.0 * h))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::compute_voronoi;

    fn square(half: f64) -> ConvexPolytope {
        ConvexPolytope::cuboid(&[-half, -half], &[half, half]).unwrap()
    }

    #[test]
    fn uniform_square_cell() {
        let q = ConvexPolytope::cuboid(&[0.0, 0.0], &[10.0, 10.0]).unwrap();
        let cells = compute_voronoi(&[3.0, 3.0], &q).unwrap();
        let m = cell_moments(&cells[0], &DensityField::Uniform { dim: 2, value: 1.0 }, 0.0, &Quadrature::default())
            .unwrap();
        assert!((m.mass - 100.0).abs() < 1e-10);
        assert!((m.centroid[0] - 5.0).abs() < 1e-12 && (m.centroid[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_gaussian_centroid_at_center() {
        let q = ConvexPolytope::cuboid(&[-2.0, -3.0], &[4.0, 1.0]).unwrap();
        let cells = compute_voronoi(&[0.0, 0.0], &q).unwrap();
        let field = DensityField::static_gaussian(&[1.0, -1.0], 1.0, 0.7);
        let m = cell_moments(&cells[0], &field, 0.0, &Quadrature::default()).unwrap();
        assert!((m.centroid[0] - 1.0).abs() < 1e-12);
        assert!((m.centroid[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_agent_jacobian_is_zero() {
        let q = square(10.0);
        let p = [1.0, 2.0];
        let cells = compute_voronoi(&p, &q).unwrap();
        let g = NeighborGraph::from_cells(&cells);
        let j = centroid_jacobian(&p, &q, &cells, &g, &DensityField::Phi1, 0.0, &MomentOptions::default()).unwrap();
        assert!(j.block(0, 0).amax() < 1e-9);
    }

    #[test]
    fn static_density_has_no_time_derivative() {
        let q = square(10.0);
        let p = [1.0, 2.0, -3.0, 0.5];
        let cells = compute_voronoi(&p, &q).unwrap();
        let field = DensityField::static_gaussian(&[0.0, 0.0], 1.0, 1.0);
        let dc = centroid_time_derivative(&cells, &field, 3.0, &MomentOptions::default()).unwrap();
        assert!(dc.iter().all(|&x| x == 0.0));
    }
}
