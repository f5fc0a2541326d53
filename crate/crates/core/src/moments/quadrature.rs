use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DEGREE: usize = 13;
pub const DEFAULT_REFINEMENT: usize = 1;
pub const MAX_DEGREE: usize = 40;
pub const MAX_REFINEMENT: usize = 5;

/// How Gaussian terms are integrated over a cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureMethod {
    /// Closed-form radial integration with quadrature on the cell facets.
    #[default]
    Radial,
    /// Fan of simplices from the vertex mean, each integrated pointwise.
    Simplex,
}

/// Integration rules for cell moments.
///
/// With [`QuadratureMethod::Simplex`], `degree` is the exactness of the
/// symmetric rule applied on every simplex of the fan. Degree 5 uses the
/// classical 7-point triangle and 14-point tetrahedron rules; every other
/// degree uses a collapsed Gauss-Legendre product rule. Each refinement level
/// splits the reference simplex into 4 (triangle) or 8 (tetrahedron) children.
///
/// With [`QuadratureMethod::Radial`], `degree` is the exactness of the
/// Gauss-Legendre rule on edge pieces and each refinement level halves those
/// pieces once more.
///
/// Barycentric weights are normalized to sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuadratureSpec", into = "QuadratureSpec")]
pub struct Quadrature {
    method: QuadratureMethod,
    degree: usize,
    refinement: usize,
    triangle: Vec<([f64; 3], f64)>,
    tetrahedron: Vec<([f64; 4], f64)>,
    line: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    #[serde(default)]
    pub method: QuadratureMethod,
    pub degree: usize,
    pub refinement: usize,
}

impl TryFrom<QuadratureSpec> for Quadrature {
    type Error = Error;

    fn try_from(spec: QuadratureSpec) -> Result<Self> {
        Quadrature::new(spec.method, spec.degree, spec.refinement)
    }
}

impl From<Quadrature> for QuadratureSpec {
    fn from(q: Quadrature) -> Self {
        q.spec()
    }
}

impl Default for Quadrature {
    fn default() -> Self {
        Self::new(QuadratureMethod::Radial, DEFAULT_DEGREE, DEFAULT_REFINEMENT).expect("default quadrature is valid")
    }
}

impl Quadrature {
    pub fn new(method: QuadratureMethod, degree: usize, refinement: usize) -> Result<Self> {
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::config(
                "sim.quadrature.degree",
                format!("must be between 1 and {MAX_DEGREE}"),
            ));
        }
        if refinement > MAX_REFINEMENT {
            return Err(Error::config(
                "sim.quadrature.refinement",
                format!("must be at most {MAX_REFINEMENT}"),
            ));
        }
        let (mut triangle, mut tetrahedron) = if degree == 5 {
            (dunavant5(), keast5())
        } else {
            (collapsed_triangle(degree), collapsed_tetrahedron(degree))
        };
        if method == QuadratureMethod::Simplex {
            for _ in 0..refinement {
                triangle = refine_triangle(&triangle);
                tetrahedron = refine_tetrahedron(&tetrahedron);
            }
        }
        Ok(Self {
            method,
            degree,
            refinement,
            triangle,
            tetrahedron,
            line: gauss_legendre((degree + 1).div_ceil(2)),
        })
    }

    /// The pointwise fan rule.
    pub fn simplex(degree: usize, refinement: usize) -> Result<Self> {
        Self::new(QuadratureMethod::Simplex, degree, refinement)
    }

    pub fn spec(&self) -> QuadratureSpec {
        QuadratureSpec {
            method: self.method,
            degree: self.degree,
            refinement: self.refinement,
        }
    }

    pub fn method(&self) -> QuadratureMethod {
        self.method
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn refinement(&self) -> usize {
        self.refinement
    }

    pub fn triangle(&self) -> &[([f64; 3], f64)] {
        &self.triangle
    }

    pub fn tetrahedron(&self) -> &[([f64; 4], f64)] {
        &self.tetrahedron
    }

    pub(crate) fn line(&self) -> &[(f64, f64)] {
        &self.line
    }
}

fn dunavant5() -> Vec<([f64; 3], f64)> {
    let mut rule = vec![([1.0 / 3.0; 3], 0.225)];
    for (a, w) in [
        (0.059_715_871_789_770, 0.132_394_152_788_506),
        (0.797_426_985_353_087, 0.125_939_180_544_827),
    ] {
        let b = 0.5 * (1.0 - a);
        rule.push(([a, b, b], w));
        rule.push(([b, a, b], w));
        rule.push(([b, b, a], w));
    }
    rule
}

fn keast5() -> Vec<([f64; 4], f64)> {
    let mut rule = Vec::with_capacity(14);
    for (a, w) in [
        (0.092_735_250_310_891_2, 0.073_493_043_116_361_9),
        (0.310_885_919_263_300_6, 0.112_687_925_718_015_9),
    ] {
        let b = 1.0 - 3.0 * a;
        for k in 0..4 {
            let mut p = [a; 4];
            p[k] = b;
            rule.push((p, w));
        }
    }
    let (c, w) = (0.045_503_704_125_649_6, 0.042_546_020_777_081_5);
    let e = 0.5 - c;
    for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
        let mut p = [e; 4];
        p[i] = c;
        p[j] = c;
        rule.push((p, w));
    }
    rule
}

/// Exact for quadratics, used for constant densities.
pub(crate) fn low_order() -> (Vec<([f64; 3], f64)>, Vec<([f64; 4], f64)>) {
    (dunavant5(), keast5())
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), p0 = P_{n-1}(x).
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.reverse();
    out
}

fn collapsed_triangle(degree: usize) -> Vec<([f64; 3], f64)> {
    let gu = gauss_legendre((degree + 2).div_ceil(2));
    let gv = gauss_legendre((degree + 1).div_ceil(2));
    let mut rule = Vec::with_capacity(gu.len() * gv.len());
    for &(u, wu) in &gu {
        for &(v, wv) in &gv {
            let (x, y) = (u, v * (1.0 - u));
            rule.push(([1.0 - x - y, x, y], 2.0 * wu * wv * (1.0 - u)));
        }
    }
    rule
}

fn collapsed_tetrahedron(degree: usize) -> Vec<([f64; 4], f64)> {
    let gu = gauss_legendre((degree + 3).div_ceil(2));
    let gv = gauss_legendre((degree + 2).div_ceil(2));
    let gw = gauss_legendre((degree + 1).div_ceil(2));
    let mut rule = Vec::with_capacity(gu.len() * gv.len() * gw.len());
    for &(u, wu) in &gu {
        for &(v, wv) in &gv {
            for &(w, ww) in &gw {
                let x = u;
                let y = v * (1.0 - u);
                let z = w * (1.0 - u) * (1.0 - v);
                let jac = (1.0 - u) * (1.0 - u) * (1.0 - v);
                rule.push(([1.0 - x - y - z, x, y, z], 6.0 * wu * wv * ww * jac));
            }
        }
    }
    rule
}

fn mix<const N: usize>(corners: &[[f64; N]], lambda: &[f64]) -> [f64; N] {
    let mut out = [0.0; N];
    for (c, &l) in corners.iter().zip(lambda) {
        for k in 0..N {
            out[k] += l * c[k];
        }
    }
    out
}

fn mid<const N: usize>(a: [f64; N], b: [f64; N]) -> [f64; N] {
    let mut out = [0.0; N];
    for k in 0..N {
        out[k] = 0.5 * (a[k] + b[k]);
    }
    out
}

fn unit<const N: usize>(k: usize) -> [f64; N] {
    let mut e = [0.0; N];
    e[k] = 1.0;
    e
}

fn refine_triangle(rule: &[([f64; 3], f64)]) -> Vec<([f64; 3], f64)> {
    let [a, b, c] = [unit(0), unit(1), unit(2)];
    let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
    let children = [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]];
    children
        .iter()
        .flat_map(|child| rule.iter().map(move |(p, w)| (mix(child, p), w / 4.0)))
        .collect()
}

fn refine_tetrahedron(rule: &[([f64; 4], f64)]) -> Vec<([f64; 4], f64)> {
    let x: [[f64; 4]; 4] = [unit(0), unit(1), unit(2), unit(3)];
    let m = |i: usize, j: usize| mid(x[i], x[j]);
    let children = [
        [x[0], m(0, 1), m(0, 2), m(0, 3)],
        [m(0, 1), x[1], m(1, 2), m(1, 3)],
        [m(0, 2), m(1, 2), x[2], m(2, 3)],
        [m(0, 3), m(1, 3), m(2, 3), x[3]],
        [m(0, 1), m(0, 2), m(0, 3), m(1, 3)],
        [m(0, 1), m(0, 2), m(1, 2), m(1, 3)],
        [m(0, 2), m(0, 3), m(1, 3), m(2, 3)],
        [m(0, 2), m(1, 2), m(1, 3), m(2, 3)],
    ];
    children
        .iter()
        .flat_map(|child| rule.iter().map(move |(p, w)| (mix(child, p), w / 8.0)))
        .collect()
}
