use nalgebra::Vector2;

use super::Facet;

/// A convex polygon with labelled edges.
///
/// Edge `k` runs from `vertices[k]` to `vertices[(k + 1) % len]` and lies on
/// the supporting line identified by `facets[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    vertices: Vec<Vector2<f64>>,
    facets: Vec<Facet>,
}

impl Polygon {
    pub(crate) fn new(vertices: Vec<Vector2<f64>>, facets: Vec<Facet>) -> Self {
        debug_assert_eq!(vertices.len(), facets.len());
        Self { vertices, facets }
    }

    /// Axis-aligned rectangle, edges labelled `Boundary(0..4)` as
    /// bottom, right, top, left.
    pub fn rectangle(lower: [f64; 2], upper: [f64; 2]) -> Self {
        let vertices = vec![
            Vector2::new(lower[0], lower[1]),
            Vector2::new(upper[0], lower[1]),
            Vector2::new(upper[0], upper[1]),
            Vector2::new(lower[0], upper[1]),
        ];
        let facets = (0..4).map(Facet::Boundary).collect();
        Self { vertices, facets }
    }

    pub(crate) fn relabel(&mut self, f: impl Fn(Facet) -> Facet) {
        for facet in &mut self.facets {
            *facet = f(*facet);
        }
    }

    /// Renumbers `Boundary(k)` edges through `map`.
    pub(crate) fn relabeled(mut self, map: impl Fn(usize) -> usize) -> Self {
        self.relabel(|f| match f {
            Facet::Boundary(k) => Facet::Boundary(map(k)),
            other => other,
        });
        self
    }

    /// The same polygon with every vertex moved by `f` (assumed affine).
    pub(crate) fn mapped(&self, f: impl Fn(&Vector2<f64>) -> Vector2<f64>) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            facets: self.facets.clone(),
        }
    }

    pub fn vertices(&self) -> &[Vector2<f64>] {
        &self.vertices
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    /// Intersects the polygon with `{x : normal·x <= offset}`. The new edge
    /// (if any) is labelled `label`. Returns `None` when the intersection has
    /// no interior.
    pub fn clip(&self, normal: &Vector2<f64>, offset: f64, label: Facet, eps: f64) -> Option<Self> {
        let n = self.vertices.len();
        let dist: Vec<f64> = self.vertices.iter().map(|v| normal.dot(v) - offset).collect();
        let side = |d: f64| {
            if d > eps {
                1
            } else if d < -eps {
                -1
            } else {
                0
            }
        };
        let sides: Vec<i8> = dist.iter().map(|&d| side(d)).collect();
        if !sides.contains(&1) {
            return Some(self.clone());
        }
        if !sides.contains(&-1) {
            return None;
        }

        let cut = |a: usize, b: usize| {
            let t = dist[a] / (dist[a] - dist[b]);
            self.vertices[a] + (self.vertices[b] - self.vertices[a]) * t
        };

        let mut vertices = Vec::with_capacity(n + 1);
        let mut facets = Vec::with_capacity(n + 1);
        for k in 0..n {
            let (a, b) = (k, (k + 1) % n);
            match sides[a] {
                -1 => {
                    vertices.push(self.vertices[a]);
                    facets.push(self.facets[k]);
                    if sides[b] == 1 {
                        vertices.push(cut(a, b));
                        facets.push(label);
                    }
                }
                0 => {
                    vertices.push(self.vertices[a]);
                    facets.push(if sides[b] == 1 { label } else { self.facets[k] });
                }
                _ => {
                    if sides[b] == -1 {
                        vertices.push(cut(a, b));
                        facets.push(self.facets[k]);
                    }
                }
            }
        }

        // Collapse zero-length edges; the surviving vertex keeps the label of
        // its outgoing edge.
        let tiny = eps * 1e-3;
        let mut k = 0;
        while vertices.len() >= 3 && k < vertices.len() {
            let next = (k + 1) % vertices.len();
            if (vertices[next] - vertices[k]).norm() <= tiny {
                vertices.remove(k);
                facets.remove(k);
            } else {
                k += 1;
            }
        }
        (vertices.len() >= 3).then(|| Self { vertices, facets })
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let twice: f64 = (0..n)
            .map(|k| {
                let (a, b) = (self.vertices[k], self.vertices[(k + 1) % n]);
                a.x * b.y - a.y * b.x
            })
            .sum();
        0.5 * twice.abs()
    }

    pub fn vertex_mean(&self) -> Vector2<f64> {
        self.vertices.iter().sum::<Vector2<f64>>() / self.vertices.len() as f64
    }

    /// Length of each labelled edge.
    pub fn facet_measures(&self) -> impl Iterator<Item = (Facet, f64)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |k| {
            let length = (self.vertices[(k + 1) % n] - self.vertices[k]).norm();
            (self.facets[k], length)
        })
    }

    /// Fan triangulation from the vertex mean.
    pub fn for_each_triangle(&self, mut f: impl FnMut([Vector2<f64>; 3])) {
        let center = self.vertex_mean();
        let n = self.vertices.len();
        for k in 0..n {
            f([center, self.vertices[k], self.vertices[(k + 1) % n]]);
        }
    }

    pub(crate) fn orientation(&self) -> f64 {
        let n = self.vertices.len();
        let twice: f64 = (0..n)
            .map(|k| {
                let (a, b) = (self.vertices[k], self.vertices[(k + 1) % n]);
                a.x * b.y - a.y * b.x
            })
            .sum();
        twice.signum()
    }

    pub fn contains(&self, q: &Vector2<f64>, tol: f64) -> bool {
        let sign = self.orientation();
        let n = self.vertices.len();
        (0..n).all(|k| {
            let (a, b) = (self.vertices[k], self.vertices[(k + 1) % n]);
            let edge = b - a;
            let len = edge.norm();
            if len == 0.0 {
                return true;
            }
            let cross = edge.x * (q.y - a.y) - edge.y * (q.x - a.x);
            sign * cross / len >= -tol
        })
    }

    /// Euclidean projection of `q` onto the polygon.
    pub fn nearest_point(&self, q: &Vector2<f64>) -> Vector2<f64> {
        if self.contains(q, 0.0) {
            return *q;
        }
        let n = self.vertices.len();
        (0..n)
            .map(|k| closest_on_segment(q, &self.vertices[k], &self.vertices[(k + 1) % n]))
            .min_by(|a, b| (a - q).norm_squared().total_cmp(&(b - q).norm_squared()))
            .unwrap_or(*q)
    }
}

pub(crate) fn closest_on_segment<const D: usize>(
    q: &nalgebra::SVector<f64, D>,
    a: &nalgebra::SVector<f64, D>,
    b: &nalgebra::SVector<f64, D>,
) -> nalgebra::SVector<f64, D> {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((q - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Polygon {
        Polygon::rectangle([-1.0, -1.0], [1.0, 1.0])
    }

    #[test]
    fn clip_halves_square() {
        let cut = square()
            .clip(&Vector2::new(1.0, 0.0), 0.0, Facet::Bisector(7), 1e-12)
            .unwrap();
        assert!((cut.area() - 2.0).abs() < 1e-14);
        let labels: Vec<_> = cut.facet_measures().collect();
        let bisector: f64 = labels
            .iter()
            .filter(|(f, _)| *f == Facet::Bisector(7))
            .map(|(_, m)| m)
            .sum();
        assert!((bisector - 2.0).abs() < 1e-14);
        // Left edge survives intact, top and bottom are halved.
        assert_eq!(cut.vertices().len(), 4);
    }

    #[test]
    fn clip_through_vertices_keeps_diagonal_label() {
        // x + y <= 0 passes exactly through two corners.
        let n = Vector2::new(1.0, 1.0).normalize();
        let cut = square().clip(&n, 0.0, Facet::Bisector(1), 1e-12).unwrap();
        assert!((cut.area() - 2.0).abs() < 1e-14);
        assert_eq!(cut.vertices().len(), 3);
        let diag: Vec<_> = cut
            .facet_measures()
            .filter(|(f, _)| *f == Facet::Bisector(1))
            .collect();
        assert_eq!(diag.len(), 1);
        assert!((diag[0].1 - 8f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn clip_outside_and_inside() {
        let sq = square();
        assert!(sq.clip(&Vector2::new(1.0, 0.0), -2.0, Facet::Bisector(0), 1e-12).is_none());
        assert_eq!(
            sq.clip(&Vector2::new(1.0, 0.0), 2.0, Facet::Bisector(0), 1e-12),
            Some(sq.clone())
        );
        // Touching a single edge is not a cut.
        assert_eq!(
            sq.clip(&Vector2::new(1.0, 0.0), 1.0, Facet::Bisector(0), 1e-12),
            Some(sq)
        );
    }

    #[test]
    fn nearest_point_on_faces_and_corners() {
        let sq = square();
        assert_eq!(sq.nearest_point(&Vector2::new(0.2, 0.3)), Vector2::new(0.2, 0.3));
        assert_eq!(sq.nearest_point(&Vector2::new(3.0, 0.5)), Vector2::new(1.0, 0.5));
        assert_eq!(sq.nearest_point(&Vector2::new(3.0, -4.0)), Vector2::new(1.0, -1.0));
    }
}
