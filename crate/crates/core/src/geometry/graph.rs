use std::collections::BTreeSet;

use super::VoronoiCell;

/// Delaunay 1-hop and 2-hop neighborhoods.
///
/// All neighbor lists are sorted and never contain the agent itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborGraph {
    one_hop: Vec<Vec<usize>>,
    two_hop: Vec<Vec<usize>>,
}

impl NeighborGraph {
    /// Builds the graph from symmetric adjacency lists.
    ///
    /// # Panics
    ///
    /// If an index is out of range, an agent lists itself, or the adjacency
    /// is not symmetric.
    pub fn from_adjacency(adjacency: Vec<Vec<usize>>) -> Self {
        let n = adjacency.len();
        let one_hop: Vec<Vec<usize>> = adjacency
            .into_iter()
            .enumerate()
            .map(|(i, list)| {
                let set: BTreeSet<usize> = list.into_iter().collect();
                assert!(!set.contains(&i), "agent {i} lists itself as a neighbor");
                assert!(set.iter().all(|&j| j < n), "neighbor index out of range");
                set.into_iter().collect()
            })
            .collect();
        for (i, list) in one_hop.iter().enumerate() {
            for &j in list {
                assert!(
                    one_hop[j].binary_search(&i).is_ok(),
                    "adjacency is not symmetric ({i} -> {j})"
                );
            }
        }
        let two_hop = one_hop
            .iter()
            .enumerate()
            .map(|(i, list)| {
                let mut set = BTreeSet::new();
                for &j in list {
                    set.extend(one_hop[j].iter().copied());
                }
                set.remove(&i);
                set.into_iter().collect()
            })
            .collect();
        Self { one_hop, two_hop }
    }

    pub fn from_cells(cells: &[VoronoiCell]) -> Self {
        Self::from_adjacency(cells.iter().map(|c| c.neighbors.clone()).collect())
    }

    pub fn len(&self) -> usize {
        self.one_hop.len()
    }

    pub fn is_empty(&self) -> bool {
        self.one_hop.is_empty()
    }

    /// `N_i`.
    pub fn one_hop(&self, i: usize) -> &[usize] {
        &self.one_hop[i]
    }

    /// `N_i²`: agents reachable in exactly two Delaunay hops, excluding `i`.
    pub fn two_hop(&self, i: usize) -> &[usize] {
        &self.two_hop[i]
    }

    pub fn is_neighbor(&self, i: usize, j: usize) -> bool {
        self.one_hop[i].binary_search(&j).is_ok()
    }

    pub fn is_two_hop(&self, i: usize, j: usize) -> bool {
        self.two_hop[i].binary_search(&j).is_ok()
    }

    /// `N_i \ N_i²`.
    pub fn one_hop_only(&self, i: usize) -> Vec<usize> {
        self.one_hop[i]
            .iter()
            .copied()
            .filter(|&j| !self.is_two_hop(i, j))
            .collect()
    }

    /// `N_i ∩ N_i²`.
    pub fn one_and_two_hop(&self, i: usize) -> Vec<usize> {
        self.one_hop[i]
            .iter()
            .copied()
            .filter(|&j| self.is_two_hop(i, j))
            .collect()
    }

    /// `N_i² \ N_i`.
    pub fn two_hop_only(&self, i: usize) -> Vec<usize> {
        self.two_hop[i]
            .iter()
            .copied()
            .filter(|&j| !self.is_neighbor(i, j))
            .collect()
    }

    /// `N_i ∩ N_j`.
    pub fn common(&self, i: usize, j: usize) -> Vec<usize> {
        self.one_hop[i]
            .iter()
            .copied()
            .filter(|&k| self.is_neighbor(j, k))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path() {
        let g = NeighborGraph::from_adjacency(vec![vec![1], vec![0, 2], vec![1]]);
        assert_eq!(g.two_hop(0), &[2]);
        assert_eq!(g.two_hop_only(0), vec![2]);
        assert_eq!(g.one_hop_only(0), vec![1]);
        assert!(g.two_hop(1).is_empty());
    }

    #[test]
    fn triangle() {
        let g = NeighborGraph::from_adjacency(vec![vec![1, 2], vec![0, 2], vec![0, 1]]);
        for i in 0..3 {
            assert!(g.two_hop_only(i).is_empty());
            assert_eq!(g.one_and_two_hop(i).len(), 2);
        }
    }

    #[test]
    fn star() {
        // Center 0 with leaves 1..=4.
        let mut adj = vec![vec![1, 2, 3, 4]];
        adj.extend((1..=4).map(|_| vec![0]));
        let g = NeighborGraph::from_adjacency(adj);
        assert!(g.two_hop_only(0).is_empty());
        assert_eq!(g.two_hop_only(2), vec![1, 3, 4]);
        assert_eq!(g.common(1, 3), vec![0]);
    }

    #[test]
    #[should_panic(expected = "not symmetric")]
    fn asymmetric_rejected() {
        NeighborGraph::from_adjacency(vec![vec![1], vec![]]);
    }
}
