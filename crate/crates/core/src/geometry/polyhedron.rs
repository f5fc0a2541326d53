use std::collections::HashMap;

use nalgebra::Vector3;

use super::polygon::closest_on_segment;
use super::Facet;

/// One planar face of a [`Polyhedron`], stored as a loop of vertex indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    pub vertices: Vec<usize>,
    pub facet: Facet,
}

/// A convex polyhedron in vertex + face-loop form.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyhedron {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<Face>,
}

impl Polyhedron {
    /// Axis-aligned box. Faces are labelled `Boundary(0..6)` as
    /// x-min, x-max, y-min, y-max, z-min, z-max.
    pub fn cuboid(lower: [f64; 3], upper: [f64; 3]) -> Self {
        let corner = |bits: usize| {
            Vector3::new(
                if bits & 1 == 0 { lower[0] } else { upper[0] },
                if bits & 2 == 0 { lower[1] } else { upper[1] },
                if bits & 4 == 0 { lower[2] } else { upper[2] },
            )
        };
        let vertices = (0..8).map(corner).collect();
        let loops: [[usize; 4]; 6] = [
            [0, 4, 6, 2],
            [1, 3, 7, 5],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 2, 3, 1],
            [4, 5, 7, 6],
        ];
        let faces = loops
            .iter()
            .enumerate()
            .map(|(k, l)| Face {
                vertices: l.to_vec(),
                facet: Facet::Boundary(k),
            })
            .collect();
        Self { vertices, faces }
    }

    pub(crate) fn relabel(&mut self, f: impl Fn(Facet) -> Facet) {
        for face in &mut self.faces {
            face.facet = f(face.facet);
        }
    }

    /// The same polyhedron with every vertex moved by `f` (assumed affine).
    pub(crate) fn mapped(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// Intersects with `{x : normal·x <= offset}`, capping the cut with a
    /// face labelled `label`. Returns `None` if nothing with interior is left.
    pub fn clip(&self, normal: &Vector3<f64>, offset: f64, label: Facet, eps: f64) -> Option<Self> {
        let dist: Vec<f64> = self.vertices.iter().map(|v| normal.dot(v) - offset).collect();
        let sides: Vec<i8> = dist
            .iter()
            .map(|&d| {
                if d > eps {
                    1
                } else if d < -eps {
                    -1
                } else {
                    0
                }
            })
            .collect();
        if !sides.contains(&1) {
            return Some(self.clone());
        }
        if !sides.contains(&-1) {
            return None;
        }

        let mut vertices = Vec::with_capacity(self.vertices.len() + 4);
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut on_plane = Vec::new();
        for (k, v) in self.vertices.iter().enumerate() {
            if sides[k] <= 0 {
                remap[k] = vertices.len();
                if sides[k] == 0 {
                    on_plane.push(vertices.len());
                }
                vertices.push(*v);
            }
        }

        let mut cuts: HashMap<(usize, usize), usize> = HashMap::new();
        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        for face in &self.faces {
            let m = face.vertices.len();
            let mut out = Vec::with_capacity(m + 1);
            for k in 0..m {
                let (a, b) = (face.vertices[k], face.vertices[(k + 1) % m]);
                if sides[a] <= 0 {
                    out.push(remap[a]);
                }
                if sides[a] * sides[b] == -1 {
                    let key = (a.min(b), a.max(b));
                    let idx = *cuts.entry(key).or_insert_with(|| {
                        let t = dist[a] / (dist[a] - dist[b]);
                        let p = self.vertices[a] + (self.vertices[b] - self.vertices[a]) * t;
                        vertices.push(p);
                        on_plane.push(vertices.len() - 1);
                        vertices.len() - 1
                    });
                    out.push(idx);
                }
            }
            if out.len() >= 3 {
                faces.push(Face {
                    vertices: out,
                    facet: face.facet,
                });
            }
        }

        let cap = order_on_plane(&vertices, on_plane, normal, eps * 1e-3);
        if cap.len() >= 3 {
            faces.push(Face {
                vertices: cap,
                facet: label,
            });
        }

        let mut poly = Self { vertices, faces };
        poly.cleanup(eps * 1e-3);
        (poly.faces.len() >= 4).then_some(poly)
    }

    /// Drops repeated indices in face loops, degenerate faces and unused
    /// vertices.
    fn cleanup(&mut self, tiny: f64) {
        for face in &mut self.faces {
            let mut k = 0;
            while face.vertices.len() >= 3 && k < face.vertices.len() {
                let next = (k + 1) % face.vertices.len();
                let (a, b) = (face.vertices[k], face.vertices[next]);
                if a == b || (self.vertices[a] - self.vertices[b]).norm() <= tiny {
                    face.vertices.remove(next);
                } else {
                    k += 1;
                }
            }
        }
        self.faces.retain(|f| f.vertices.len() >= 3);

        let mut used = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::with_capacity(self.vertices.len());
        for face in &mut self.faces {
            for idx in &mut face.vertices {
                if used[*idx] == usize::MAX {
                    used[*idx] = vertices.len();
                    vertices.push(self.vertices[*idx]);
                }
                *idx = used[*idx];
            }
        }
        self.vertices = vertices;
    }

    pub fn vertex_mean(&self) -> Vector3<f64> {
        self.vertices.iter().sum::<Vector3<f64>>() / self.vertices.len() as f64
    }

    pub(crate) fn face_area_vector(&self, face: &Face) -> Vector3<f64> {
        let v0 = self.vertices[face.vertices[0]];
        let mut acc = Vector3::zeros();
        for w in face.vertices[1..].windows(2) {
            acc += (self.vertices[w[0]] - v0).cross(&(self.vertices[w[1]] - v0));
        }
        acc * 0.5
    }

    pub fn facet_measures(&self) -> impl Iterator<Item = (Facet, f64)> + '_ {
        self.faces
            .iter()
            .map(move |f| (f.facet, self.face_area_vector(f).norm()))
    }

    /// Tetrahedra of the fan decomposition: the vertex mean joined to a fan
    /// triangulation of every face.
    pub fn for_each_tetrahedron(&self, mut f: impl FnMut([Vector3<f64>; 4])) {
        let center = self.vertex_mean();
        for face in &self.faces {
            let v0 = self.vertices[face.vertices[0]];
            for w in face.vertices[1..].windows(2) {
                f([center, v0, self.vertices[w[0]], self.vertices[w[1]]]);
            }
        }
    }

    pub fn volume(&self) -> f64 {
        let mut vol = 0.0;
        self.for_each_tetrahedron(|[a, b, c, d]| {
            vol += (b - a).cross(&(c - a)).dot(&(d - a)).abs() / 6.0;
        });
        vol
    }

    /// Outward unit normal and a point for every face.
    fn planes(&self) -> Vec<(Vector3<f64>, Vector3<f64>)> {
        let center = self.vertex_mean();
        self.faces
            .iter()
            .filter_map(|face| {
                let area = self.face_area_vector(face);
                let norm = area.norm();
                if norm == 0.0 {
                    return None;
                }
                let point = self.vertices[face.vertices[0]];
                let mut n = area / norm;
                if n.dot(&(point - center)) < 0.0 {
                    n = -n;
                }
                Some((n, point))
            })
            .collect()
    }

    pub fn contains(&self, q: &Vector3<f64>, tol: f64) -> bool {
        self.planes().iter().all(|(n, p)| n.dot(&(q - p)) <= tol)
    }

    /// Euclidean projection of `q` onto the polyhedron.
    pub fn nearest_point(&self, q: &Vector3<f64>) -> Vector3<f64> {
        if self.contains(q, 0.0) {
            return *q;
        }
        let center = self.vertex_mean();
        let mut best = *q;
        let mut best_d = f64::INFINITY;
        let mut consider = |c: Vector3<f64>| {
            let d = (c - q).norm_squared();
            if d < best_d {
                best_d = d;
                best = c;
            }
        };
        for face in &self.faces {
            let area = self.face_area_vector(face);
            if area.norm() == 0.0 {
                continue;
            }
            let mut n = area.normalize();
            let p0 = self.vertices[face.vertices[0]];
            if n.dot(&(p0 - center)) < 0.0 {
                n = -n;
            }
            let foot = q - n * n.dot(&(q - p0));
            if self.inside_face(face, &n, &foot) {
                consider(foot);
            } else {
                let m = face.vertices.len();
                for k in 0..m {
                    let a = self.vertices[face.vertices[k]];
                    let b = self.vertices[face.vertices[(k + 1) % m]];
                    consider(closest_on_segment(q, &a, &b));
                }
            }
        }
        best
    }

    fn inside_face(&self, face: &Face, n: &Vector3<f64>, x: &Vector3<f64>) -> bool {
        let m = face.vertices.len();
        let mut sign = 0.0;
        for k in 0..m {
            let a = self.vertices[face.vertices[k]];
            let b = self.vertices[face.vertices[(k + 1) % m]];
            let s = (b - a).cross(&(x - a)).dot(n);
            if s.abs() < 1e-15 {
                continue;
            }
            if sign == 0.0 {
                sign = s.signum();
            } else if s.signum() != sign {
                return false;
            }
        }
        true
    }
}

/// Sorts points lying on a plane by angle around their mean, merging
/// duplicates.
fn order_on_plane(
    vertices: &[Vector3<f64>],
    mut ids: Vec<usize>,
    normal: &Vector3<f64>,
    tiny: f64,
) -> Vec<usize> {
    if ids.len() < 3 {
        return ids;
    }
    let mean = ids.iter().map(|&i| vertices[i]).sum::<Vector3<f64>>() / ids.len() as f64;
    let helper = if normal.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = normal.cross(&helper).normalize();
    let e2 = normal.cross(&e1);
    let angle = |i: usize| {
        let r = vertices[i] - mean;
        r.dot(&e2).atan2(r.dot(&e1))
    };
    ids.sort_by(|&a, &b| angle(a).total_cmp(&angle(b)));
    ids.dedup_by(|a, b| (vertices[*a] - vertices[*b]).norm() <= tiny);
    if ids.len() >= 2 && (vertices[ids[0]] - vertices[*ids.last().unwrap()]).norm() <= tiny {
        ids.pop();
    }
    ids
}
