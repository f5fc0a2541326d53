//! Convex domains, clipped Voronoi tessellations and the Delaunay neighbor
//! structure they induce.
//!
//! Cells are built by clipping the domain with the bisector half-spaces of
//! every other agent. Two agents are neighbors only when their cells share a
//! facet of positive measure (length in 2D, area in 3D); point or edge
//! contacts are ignored.

mod graph;
mod polygon;
mod polyhedron;
mod voronoi;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

pub use graph::NeighborGraph;
pub use polygon::Polygon;
pub use polyhedron::{Face, Polyhedron};
pub use voronoi::{compute_cell, compute_voronoi, VoronoiCell};
pub(crate) use polygon::closest_on_segment;
pub(crate) use voronoi::{facet_threshold, validate_positions};

use crate::error::{Error, Result};

/// Identifies the supporting hyperplane of a cell facet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Facet {
    /// Half-space `k` of the domain.
    Boundary(usize),
    /// Bisector against agent `j`.
    Bisector(usize),
}

/// `inward_normal · x >= offset`, with a unit normal pointing into the set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let norm = normal.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite() && offset.is_finite()) {
            return Err(Error::InvalidDomain("half-space normal must be non-zero".into()));
        }
        Ok(Self {
            normal: normal.iter().map(|x| x / norm).collect(),
            offset: offset / norm,
        })
    }

    /// Signed distance to the boundary; positive inside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        self.normal.iter().zip(x).map(|(n, x)| n * x).sum::<f64>() - self.offset
    }
}

/// A convex cell in 2D or 3D.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Polygon(Polygon),
    Polyhedron(Polyhedron),
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Shape::Polygon(_) => 2,
            Shape::Polyhedron(_) => 3,
        }
    }

    /// Area in 2D, volume in 3D.
    pub fn volume(&self) -> f64 {
        match self {
            Shape::Polygon(p) => p.area(),
            Shape::Polyhedron(p) => p.volume(),
        }
    }

    pub fn vertices(&self) -> Vec<Vec<f64>> {
        match self {
            Shape::Polygon(p) => p.vertices().iter().map(|v| vec![v.x, v.y]).collect(),
            Shape::Polyhedron(p) => p.vertices().iter().map(|v| vec![v.x, v.y, v.z]).collect(),
        }
    }

    pub fn vertex_mean(&self) -> Vec<f64> {
        match self {
            Shape::Polygon(p) => {
                let m = p.vertex_mean();
                vec![m.x, m.y]
            }
            Shape::Polyhedron(p) => {
                let m = p.vertex_mean();
                vec![m.x, m.y, m.z]
            }
        }
    }

    /// Measure of every labelled facet.
    pub fn facet_measures(&self) -> Vec<(Facet, f64)> {
        match self {
            Shape::Polygon(p) => p.facet_measures().collect(),
            Shape::Polyhedron(p) => p.facet_measures().collect(),
        }
    }

    pub fn contains(&self, q: &[f64], tol: f64) -> bool {
        match self {
            Shape::Polygon(p) => p.contains(&Vector2::new(q[0], q[1]), tol),
            Shape::Polyhedron(p) => p.contains(&Vector3::new(q[0], q[1], q[2]), tol),
        }
    }

    pub fn nearest_point(&self, q: &[f64]) -> Vec<f64> {
        match self {
            Shape::Polygon(p) => {
                let x = p.nearest_point(&Vector2::new(q[0], q[1]));
                vec![x.x, x.y]
            }
            Shape::Polyhedron(p) => {
                let x = p.nearest_point(&Vector3::new(q[0], q[1], q[2]));
                vec![x.x, x.y, x.z]
            }
        }
    }

    /// Clips against `{x : normal·x <= offset}`.
    pub(crate) fn clip(&self, normal: &[f64], offset: f64, label: Facet, eps: f64) -> Option<Shape> {
        match self {
            Shape::Polygon(p) => p
                .clip(&Vector2::new(normal[0], normal[1]), offset, label, eps)
                .map(Shape::Polygon),
            Shape::Polyhedron(p) => p
                .clip(&Vector3::new(normal[0], normal[1], normal[2]), offset, label, eps)
                .map(Shape::Polyhedron),
        }
    }

    pub(crate) fn max_distance_from(&self, x: &[f64]) -> f64 {
        let d2 = |v: &[f64]| v.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let m = match self {
            Shape::Polygon(p) => p
                .vertices()
                .iter()
                .map(|v| d2(v.as_slice()))
                .fold(0.0, f64::max),
            Shape::Polyhedron(p) => p
                .vertices()
                .iter()
                .map(|v| d2(v.as_slice()))
                .fold(0.0, f64::max),
        };
        m.sqrt()
    }

    fn diameter(&self) -> f64 {
        let vs = self.vertices();
        let mut best: f64 = 0.0;
        for (k, a) in vs.iter().enumerate() {
            for b in &vs[k + 1..] {
                let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
                best = best.max(d);
            }
        }
        best.sqrt()
    }
}

/// The convex domain Q, held both as a clipped shape and as the half-spaces
/// that define it.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexPolytope {
    shape: Shape,
    halfspaces: Vec<Halfspace>,
    diameter: f64,
}

const ENCLOSING_BOX: f64 = 1e6;

impl ConvexPolytope {
    /// Intersection of half-spaces. Fails if the set is empty, unbounded, or
    /// not full-dimensional.
    pub fn from_halfspaces(dim: usize, halfspaces: Vec<Halfspace>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidDomain(format!("dimension {dim} is not supported")));
        }
        for h in &halfspaces {
            if h.normal.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: h.normal.len(),
                });
            }
        }
        let coarse = clip_box(&vec![-ENCLOSING_BOX; dim], &vec![ENCLOSING_BOX; dim], &halfspaces)?;
        let unbounded = coarse
            .facet_measures()
            .iter()
            .any(|(f, _)| matches!(f, Facet::Boundary(k) if *k >= halfspaces.len()));
        if unbounded {
            return Err(Error::InvalidDomain("half-spaces do not bound a region".into()));
        }
        // Clip again from a box just around the result: vertex rounding
        // scales with the size of the starting box.
        let (mut lower, mut upper) = (vec![f64::INFINITY; dim], vec![f64::NEG_INFINITY; dim]);
        for v in coarse.vertices() {
            for k in 0..dim {
                lower[k] = lower[k].min(v[k]);
                upper[k] = upper[k].max(v[k]);
            }
        }
        for k in 0..dim {
            let margin = 0.5 * (upper[k] - lower[k]) + 1e-9;
            lower[k] -= margin;
            upper[k] += margin;
        }
        let shape = clip_box(&lower, &upper, &halfspaces)?;
        if shape.volume() <= 0.0 {
            return Err(Error::InvalidDomain("domain has zero volume".into()));
        }
        Ok(Self::from_parts(shape, halfspaces))
    }

    /// Axis-aligned box `[lower, upper]` in 2D or 3D.
    pub fn cuboid(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidDomain("box bounds must satisfy lower < upper".into()));
        }
        let dim = lower.len();
        let mut hs = Vec::with_capacity(2 * dim);
        for axis in 0..dim {
            let mut e = vec![0.0; dim];
            e[axis] = 1.0;
            hs.push(Halfspace::new(e.clone(), lower[axis])?);
            e[axis] = -1.0;
            hs.push(Halfspace::new(e, -upper[axis])?);
        }
        // Built directly so the vertices are exact. Both constructors label
        // facets in the same (axis, lower/upper) order as `hs`.
        let shape = match dim {
            2 => Shape::Polygon(Polygon::rectangle([lower[0], lower[1]], [upper[0], upper[1]]).relabeled(
                |k| [2, 1, 3, 0][k],
            )),
            3 => Shape::Polyhedron(Polyhedron::cuboid(
                [lower[0], lower[1], lower[2]],
                [upper[0], upper[1], upper[2]],
            )),
            d => return Err(Error::InvalidDomain(format!("dimension {d} is not supported"))),
        };
        Ok(Self::from_parts(shape, hs))
    }

    fn from_parts(shape: Shape, halfspaces: Vec<Halfspace>) -> Self {
        let diameter = shape.diameter();
        Self {
            shape,
            halfspaces,
            diameter,
        }
    }

    /// Convex polygon from its vertices (any order).
    pub fn polygon(vertices: &[[f64; 2]]) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidDomain("a polygon needs at least 3 vertices".into()));
        }
        let n = vertices.len() as f64;
        let cx = vertices.iter().map(|v| v[0]).sum::<f64>() / n;
        let cy = vertices.iter().map(|v| v[1]).sum::<f64>() / n;
        let mut sorted = vertices.to_vec();
        sorted.sort_by(|a, b| {
            (a[1] - cy)
                .atan2(a[0] - cx)
                .total_cmp(&(b[1] - cy).atan2(b[0] - cx))
        });
        let m = sorted.len();
        let convex = (0..m).all(|k| {
            let (a, b, c) = (sorted[k], sorted[(k + 1) % m], sorted[(k + 2) % m]);
            (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]) > 0.0
        });
        if !convex {
            return Err(Error::InvalidDomain("polygon vertices are not in convex position".into()));
        }
        let mut hs = Vec::with_capacity(m);
        for k in 0..m {
            let a = sorted[k];
            let b = sorted[(k + 1) % sorted.len()];
            // Counter-clockwise order: interior is to the left.
            let normal = vec![-(b[1] - a[1]), b[0] - a[0]];
            let offset = normal[0] * a[0] + normal[1] * a[1];
            hs.push(Halfspace::new(normal, offset)?);
        }
        let shape = Polygon::new(
            sorted.iter().map(|v| Vector2::new(v[0], v[1])).collect(),
            (0..m).map(Facet::Boundary).collect(),
        );
        Ok(Self::from_parts(Shape::Polygon(shape), hs))
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn vertices(&self) -> Vec<Vec<f64>> {
        self.shape.vertices()
    }

    pub fn volume(&self) -> f64 {
        self.shape.volume()
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Componentwise bounding box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for v in self.vertices() {
            for k in 0..d {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Membership with an absolute tolerance.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && self.halfspaces.iter().all(|h| h.signed_distance(x) >= -tol)
    }
}

/// The box `[lower, upper]` cut by every half-space. Box facets are labelled
/// past the half-spaces so leftovers reveal an unbounded set.
fn clip_box(lower: &[f64], upper: &[f64], halfspaces: &[Halfspace]) -> Result<Shape> {
    let mut shape = match lower.len() {
        2 => Shape::Polygon(Polygon::rectangle([lower[0], lower[1]], [upper[0], upper[1]])),
        _ => Shape::Polyhedron(Polyhedron::cuboid(
            [lower[0], lower[1], lower[2]],
            [upper[0], upper[1], upper[2]],
        )),
    };
    shape = relabel_boundary(shape, halfspaces.len());
    for (k, h) in halfspaces.iter().enumerate() {
        let outward: Vec<f64> = h.normal.iter().map(|x| -x).collect();
        shape = shape
            .clip(&outward, -h.offset, Facet::Boundary(k), 1e-12)
            .ok_or_else(|| Error::InvalidDomain("half-spaces have empty interior".into()))?;
    }
    Ok(shape)
}

fn relabel_boundary(mut shape: Shape, shift: usize) -> Shape {
    let bump = |f: Facet| match f {
        Facet::Boundary(k) => Facet::Boundary(k + shift),
        other => other,
    };
    match &mut shape {
        Shape::Polygon(p) => p.relabel(bump),
        Shape::Polyhedron(p) => p.relabel(bump),
    }
    shape
}

/// Euclidean projection onto the domain; the identity for points inside.
pub fn project_to_domain(point: &[f64], domain: &ConvexPolytope) -> Vec<f64> {
    if domain.contains(point, 0.0) {
        return point.to_vec();
    }
    domain.shape.nearest_point(point)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_domain() {
        let q = ConvexPolytope::cuboid(&[-10.0, -10.0], &[10.0, 10.0]).unwrap();
        assert_eq!(q.dim(), 2);
        assert!((q.volume() - 400.0).abs() < 1e-9);
        assert!((q.diameter() - 800f64.sqrt()).abs() < 1e-9);
        assert_eq!(q.vertices().len(), 4);
        // Every vertex satisfies every half-space.
        for v in q.vertices() {
            assert!(q.contains(&v, 1e-9));
        }
    }

    #[test]
    fn cube_domain() {
        let q = ConvexPolytope::cuboid(&[-10.0; 3], &[10.0; 3]).unwrap();
        assert!((q.volume() - 8000.0).abs() < 1e-6);
        assert_eq!(q.vertices().len(), 8);
    }

    #[test]
    fn unbounded_and_empty_rejected() {
        let h = Halfspace::new(vec![1.0, 0.0], 0.0).unwrap();
        assert!(ConvexPolytope::from_halfspaces(2, vec![h.clone()]).is_err());
        let g = Halfspace::new(vec![-1.0, 0.0], 1.0).unwrap();
        assert!(ConvexPolytope::from_halfspaces(2, vec![h, g]).is_err());
        assert!(ConvexPolytope::cuboid(&[0.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn triangle_polygon() {
        let q = ConvexPolytope::polygon(&[[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]]).unwrap();
        assert!((q.volume() - 6.0).abs() < 1e-9);
        assert!(ConvexPolytope::polygon(&[[0.0, 0.0], [4.0, 0.0], [1.0, 1.0], [0.0, 4.0]]).is_err());
    }

    #[test]
    fn projection_examples() {
        let q = ConvexPolytope::cuboid(&[-10.0, -10.0], &[10.0, 10.0]).unwrap();
        assert_eq!(project_to_domain(&[0.0, 0.0], &q), vec![0.0, 0.0]);
        assert_eq!(project_to_domain(&[12.0, 0.0], &q), vec![10.0, 0.0]);
        assert_eq!(project_to_domain(&[12.0, 12.0], &q), vec![10.0, 10.0]);
    }
}
