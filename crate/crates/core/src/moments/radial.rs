//! Moments of `exp(-‖x‖²)` over a convex polytope.
//!
//! The polytope is decomposed into cones from the origin to each facet. Along
//! every ray the integrand is radial, so the radial part has a closed form and
//! only the facets need quadrature. When the origin is far from the polytope
//! the contributions of the near and far facets would cancel, so the
//! complementary (tail) form is used instead, which keeps relative accuracy
//! for tiny masses.

use nalgebra::{Vector2, Vector3};

use super::quadrature::Quadrature;
use crate::geometry::{closest_on_segment, Polygon, Polyhedron};

/// Facets are split into pieces no longer than this, in units of the width.
const PIECE: f64 = 1.0;
/// Use the tail form beyond this distance, in units of the width.
const TAIL_DISTANCE: f64 = 1.5;
const SQRT_PI: f64 = 1.772_453_850_905_516;

/// `∫ e^{-|x|²}`, `∫ x e^{-|x|²}` and `∫ |x|² e^{-|x|²}`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Unit {
    pub mass: f64,
    pub first: [f64; 3],
    pub second: f64,
}

/// `∫_0^1 s^k e^{-s²R²} ds`.
fn m(k: usize, r: f64) -> f64 {
    if r < 1.0 {
        let r2 = r * r;
        let (mut sum, mut term) = (0.0, 1.0);
        for j in 0..60 {
            let add = term / (k + 2 * j + 1) as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
            term *= -r2 / (j + 1) as f64;
        }
        return sum;
    }
    let e = (-r * r).exp();
    let mut lo = if k % 2 == 0 {
        0.5 * SQRT_PI * libm::erf(r)
    } else {
        -0.5 * (-r * r).exp_m1()
    };
    let mut j = k % 2;
    while j < k {
        j += 2;
        lo = 0.5 * (j - 1) as f64 * lo - 0.5 * r.powi(j as i32 - 1) * e;
    }
    lo / r.powi(k as i32 + 1)
}

/// `∫_R^∞ u^k e^{-u²} du`.
fn tail(k: usize, r: f64) -> f64 {
    let e = (-r * r).exp();
    let mut hi = if k % 2 == 0 {
        0.5 * SQRT_PI * libm::erfc(r)
    } else {
        0.5 * e
    };
    let mut j = k % 2;
    while j < k {
        j += 2;
        hi = 0.5 * (j - 1) as f64 * hi + 0.5 * r.powi(j as i32 - 1) * e;
    }
    hi
}

/// Radial kernels for mass, first and second moments at facet point with
/// `‖y‖ = r`, so that a facet contributes `h ∫_F (k0, y k1, k2) dA`.
fn kernels(d: usize, r: f64, use_tail: bool) -> (f64, f64, f64) {
    if use_tail {
        let rd = r.powi(d as i32);
        (-tail(d - 1, r) / rd, -tail(d, r) / (rd * r), -tail(d + 1, r) / rd)
    } else {
        (m(d - 1, r), m(d, r), r * r * m(d + 1, r))
    }
}

fn accumulate(out: &mut Unit, d: usize, y: &[f64], weight: f64, use_tail: bool) {
    let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (k0, k1, k2) = kernels(d, r, use_tail);
    out.mass += weight * k0;
    for (f, v) in out.first.iter_mut().zip(y) {
        *f += weight * k1 * v;
    }
    out.second += weight * k2;
}

/// Pieces whose nearest point is this much farther (squared, in units of the
/// width) than the cell's nearest point contribute below `e^{-45}` relative.
const NEGLIGIBLE: f64 = 45.0;
/// Beyond this radius `e^{-R²}` is below `1e-13`.
const ALGEBRAIC: f64 = 5.5;
const MAX_DEPTH: usize = 40;

/// How to subdivide the edges of a planar polygon lying at squared height
/// `h2` above the origin (zero for a 2D cell).
///
/// Wherever `e^{-R²}` matters the integrand changes at a rate proportional to
/// the distance along the edge from the foot of the origin, so pieces shrink
/// with that distance. Far out, non-decaying kernels are algebraic and pieces
/// grow instead.
struct Walk {
    h2: f64,
    /// The integrand decays like `e^{-R²}`.
    decaying: bool,
    /// Drop pieces with `R² > cutoff`.
    skip: bool,
    cutoff: f64,
}

impl Walk {
    fn split(&self, size: f64, r2: f64, k2: f64) -> bool {
        let scale = if self.decaying || r2 <= ALGEBRAIC * ALGEBRAIC {
            1.0 / (r2 - self.h2 - k2).max(1.0).sqrt()
        } else {
            r2.sqrt() / ALGEBRAIC
        };
        size > PIECE * scale
    }

    /// Calls `f(y, ρ = ‖y‖, weight)` at quadrature nodes of every edge, where
    /// `weight` includes the edge's outward distance from the origin so that
    /// summing `weight · g(y)` gives `∫_P (2D cone integral of g)`.
    fn run(&self, verts: &[Vector2<f64>], quad: &Quadrature, f: &mut impl FnMut(Vector2<f64>, f64, f64)) {
        let sign = orientation(verts);
        let n = verts.len();
        for i in 0..n {
            let (a, b) = (verts[i], verts[(i + 1) % n]);
            let edge = b - a;
            let len = edge.norm();
            if len == 0.0 {
                continue;
            }
            let k = Vector2::new(edge.y, -edge.x).dot(&a) * (sign / len);
            if k != 0.0 {
                self.segment(a, b, k, quad, 0, f);
            }
        }
    }

    fn segment(
        &self,
        a: Vector2<f64>,
        b: Vector2<f64>,
        k: f64,
        quad: &Quadrature,
        depth: usize,
        f: &mut impl FnMut(Vector2<f64>, f64, f64),
    ) {
        let r2 = self.h2 + closest_on_segment(&Vector2::zeros(), &a, &b).norm_squared();
        if self.skip && r2 > self.cutoff {
            return;
        }
        let len = (b - a).norm();
        if depth < MAX_DEPTH && self.split(len, r2, k * k) {
            let mid = (a + b) * 0.5;
            self.segment(a, mid, k, quad, depth + 1, f);
            self.segment(mid, b, k, quad, depth + 1, f);
            return;
        }
        let pieces = 1usize << quad.refinement();
        let step = 1.0 / pieces as f64;
        for s in 0..pieces {
            for &(x, w) in quad.line() {
                let y = a + (b - a) * ((s as f64 + x) * step);
                f(y, y.norm(), k * w * step * len);
            }
        }
    }
}

fn orientation(verts: &[Vector2<f64>]) -> f64 {
    let n = verts.len();
    let twice: f64 = (0..n)
        .map(|k| {
            let (a, b) = (verts[k], verts[(k + 1) % n]);
            a.x * b.y - a.y * b.x
        })
        .sum();
    twice.signum()
}

/// Distance from the origin to a convex polygon.
fn polygon_distance(verts: &[Vector2<f64>]) -> f64 {
    let sign = orientation(verts);
    let n = verts.len();
    let mut inside = true;
    let mut best = f64::INFINITY;
    for i in 0..n {
        let (a, b) = (verts[i], verts[(i + 1) % n]);
        let edge = b - a;
        if sign * (edge.y * a.x - edge.x * a.y) < 0.0 {
            inside = false;
        }
        best = best.min(closest_on_segment(&Vector2::zeros(), &a, &b).norm());
    }
    if inside {
        0.0
    } else {
        best
    }
}

/// `polygon` in coordinates where the Gaussian is centered at the origin with
/// unit width; `distance` is the distance from the origin to the polygon.
pub(crate) fn polygon(p: &Polygon, quad: &Quadrature, distance: f64) -> Unit {
    let tail = distance >= TAIL_DISTANCE;
    let walk = Walk {
        h2: 0.0,
        decaying: tail,
        skip: tail,
        cutoff: distance * distance + NEGLIGIBLE,
    };
    let mut out = Unit::default();
    walk.run(p.vertices(), quad, &mut |y, _, weight| {
        accumulate(&mut out, 2, y.as_slice(), weight, tail)
    });
    out
}

/// `∫ e^{-|y|²}` over a polygon in the plane, with `y` measured from the
/// origin of that plane.
fn planar_gauss(verts: &[Vector2<f64>], h2: f64, cutoff: f64, quad: &Quadrature) -> f64 {
    let tail = polygon_distance(verts) >= TAIL_DISTANCE;
    let walk = Walk {
        h2,
        decaying: tail,
        skip: tail,
        cutoff,
    };
    let mut sum = 0.0;
    walk.run(verts, quad, &mut |_, r, weight| {
        sum += weight * if tail { -0.5 * (-r * r).exp() / (r * r) } else { m(1, r) };
    });
    sum
}

/// `∫_R^∞ K(s) s ds` for the 3D mass kernel: `K = ∫_0^1 σ² e^{-σ²R²} dσ` in
/// direct form, `K = -R^{-3} ∫_R^∞ u² e^{-u²} du` in tail form.
fn cone_antiderivative(r: f64, tail: bool) -> f64 {
    if tail {
        -0.25 * SQRT_PI * libm::erfc(r) / r
    } else if r < 1e-8 {
        0.5
    } else {
        0.25 * SQRT_PI * libm::erf(r) / r
    }
}

pub(crate) fn polyhedron(p: &Polyhedron, quad: &Quadrature, distance: f64) -> Unit {
    let tail = distance >= TAIL_DISTANCE;
    let cutoff = distance * distance + NEGLIGIBLE;
    let verts = p.vertices();
    let center = p.vertex_mean();
    let (mut mass, mut first, mut flux) = (0.0, Vector3::zeros(), 0.0);
    for face in p.faces() {
        let area = p.face_area_vector(face);
        let norm = area.norm();
        if norm == 0.0 {
            continue;
        }
        let v0 = verts[face.vertices[0]];
        let mut normal = area / norm;
        if normal.dot(&(v0 - center)) < 0.0 {
            normal = -normal;
        }
        let h = normal.dot(&v0);
        let e1 = (verts[face.vertices[1]] - v0).normalize();
        let e2 = normal.cross(&e1);
        let plane: Vec<Vector2<f64>> = face
            .vertices
            .iter()
            .map(|&v| Vector2::new(verts[v].dot(&e1), verts[v].dot(&e2)))
            .collect();
        let rho_min = polygon_distance(&plane);
        if tail && h * h + rho_min * rho_min > cutoff {
            continue;
        }

        // ∫_F e^{-|y|²} for the first and second moments (divergence theorem).
        let gauss = (-h * h).exp() * planar_gauss(&plane, h * h, cutoff, quad);
        first -= normal * (0.5 * gauss);
        flux += h * gauss;

        // ∫_F K(R) dA for the mass, by cones from the foot of the origin.
        if h == 0.0 {
            continue;
        }
        let split = rho_min >= TAIL_DISTANCE;
        let walk = Walk {
            h2: h * h,
            decaying: tail,
            skip: tail && split,
            cutoff,
        };
        let base = cone_antiderivative(h.abs(), tail);
        let mut cone = 0.0;
        walk.run(&plane, quad, &mut |_, rho, weight| {
            let r = (h * h + rho * rho).sqrt();
            let g = cone_antiderivative(r, tail);
            cone += weight / (rho * rho) * if split { -g } else { base - g };
        });
        mass += h * cone;
    }
    Unit {
        mass,
        first: [first.x, first.y, first.z],
        second: 1.5 * mass - 0.5 * flux,
    }
}
