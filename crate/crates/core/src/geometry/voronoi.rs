use rayon::prelude::*;

use super::{ConvexPolytope, Facet, Shape};
use crate::error::{Error, Result};

/// Relative tolerances, scaled by the domain diameter.
pub(crate) const COINCIDENT_TOL: f64 = 1e-9;
pub(crate) const FACET_TOL: f64 = 1e-9;
pub(crate) const CLIP_TOL: f64 = 1e-12;

/// The clipped Voronoi cell of one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct VoronoiCell {
    pub owner: usize,
    pub shape: Shape,
    /// Agents sharing a positive-measure facet, sorted.
    pub neighbors: Vec<usize>,
}

impl VoronoiCell {
    pub fn volume(&self) -> f64 {
        self.shape.volume()
    }

    /// Measure of the facet shared with each bisector-generating agent,
    /// including facets below the neighbor threshold.
    pub fn bisector_measures(&self) -> Vec<(usize, f64)> {
        bisector_measures(&self.shape)
    }
}

fn bisector_measures(shape: &Shape) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (facet, m) in shape.facet_measures() {
        if let Facet::Bisector(j) = facet {
            match out.iter_mut().find(|(k, _)| *k == j) {
                Some(entry) => entry.1 += m,
                None => out.push((j, m)),
            }
        }
    }
    out.sort_by_key(|(j, _)| *j);
    out
}

pub(crate) fn facet_threshold(domain: &ConvexPolytope) -> f64 {
    FACET_TOL * domain.diameter().powi(domain.dim() as i32 - 1)
}

fn agent(positions: &[f64], d: usize, i: usize) -> &[f64] {
    &positions[i * d..(i + 1) * d]
}

pub(crate) fn validate_positions(positions: &[f64], domain: &ConvexPolytope) -> Result<usize> {
    let d = domain.dim();
    if positions.is_empty() || positions.len() % d != 0 {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: positions.len(),
        });
    }
    let n = positions.len() / d;
    let tol = COINCIDENT_TOL * domain.diameter();
    for i in 0..n {
        if !domain.contains(agent(positions, d, i), tol) {
            return Err(Error::OutsideDomain { agent: i });
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let dist = distance(agent(positions, d, i), agent(positions, d, j));
            if dist <= tol {
                return Err(Error::CoincidentAgents {
                    first: i,
                    second: j,
                    distance: dist,
                });
            }
        }
    }
    Ok(n)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Clips the domain down to the Voronoi cell of agent `i`. Neighbors are
/// decided from this cell alone (no symmetrization).
///
/// Bisectors are applied nearest-first and the loop stops once the next
/// bisector is beyond the cell's farthest vertex.
pub fn compute_cell(i: usize, positions: &[f64], domain: &ConvexPolytope) -> Result<VoronoiCell> {
    let d = domain.dim();
    let n = positions.len() / d;
    let eps = CLIP_TOL * domain.diameter();
    let pi = agent(positions, d, i);

    let mut others: Vec<(f64, usize)> = (0..n)
        .filter(|&j| j != i)
        .map(|j| (distance(pi, agent(positions, d, j)), j))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut shape = domain.shape().clone();
    let mut radius = shape.max_distance_from(pi);
    let mut normal = vec![0.0; d];
    for (dist, j) in others {
        if 0.5 * dist > radius + eps {
            break;
        }
        let pj = agent(positions, d, j);
        let mut offset = 0.0;
        for k in 0..d {
            normal[k] = (pj[k] - pi[k]) / dist;
            offset += normal[k] * 0.5 * (pi[k] + pj[k]);
        }
        shape = shape
            .clip(&normal, offset, Facet::Bisector(j), eps)
            .ok_or(Error::DegenerateCell { agent: i, volume: 0.0 })?;
        radius = shape.max_distance_from(pi);
    }

    let volume = shape.volume();
    if !(volume > 0.0) {
        return Err(Error::DegenerateCell { agent: i, volume });
    }
    let threshold = facet_threshold(domain);
    let neighbors = bisector_measures(&shape)
        .into_iter()
        .filter(|&(_, m)| m > threshold)
        .map(|(j, _)| j)
        .collect();
    Ok(VoronoiCell {
        owner: i,
        shape,
        neighbors,
    })
}

/// Voronoi partition of `domain` generated by `positions` (flattened, `n·d`
/// entries).
///
/// Agents `i` and `j` are neighbors when the average of the shared facet
/// measure seen from both cells exceeds `1e-9 · diam(Q)^(d-1)`, which keeps
/// the relation symmetric.
pub fn compute_voronoi(positions: &[f64], domain: &ConvexPolytope) -> Result<Vec<VoronoiCell>> {
    let n = validate_positions(positions, domain)?;
    let mut cells = (0..n)
        .into_par_iter()
        .map(|i| compute_cell(i, positions, domain))
        .collect::<Result<Vec<_>>>()?;

    let measures: Vec<Vec<(usize, f64)>> = cells.iter().map(|c| c.bisector_measures()).collect();
    let lookup = |i: usize, j: usize| {
        measures[i]
            .binary_search_by_key(&j, |(k, _)| *k)
            .map(|idx| measures[i][idx].1)
            .unwrap_or(0.0)
    };
    let threshold = facet_threshold(domain);
    for (i, cell) in cells.iter_mut().enumerate() {
        let mut candidates: Vec<usize> = measures[i].iter().map(|(j, _)| *j).collect();
        candidates.extend(
            (0..n).filter(|&j| j != i && measures[j].binary_search_by_key(&i, |(k, _)| *k).is_ok()),
        );
        candidates.sort_unstable();
        candidates.dedup();
        cell.neighbors = candidates
            .into_iter()
            .filter(|&j| 0.5 * (lookup(i, j) + lookup(j, i)) > threshold)
            .collect();
    }
    Ok(cells)
}
