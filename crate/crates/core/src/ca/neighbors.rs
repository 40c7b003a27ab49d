use geo::Polygon;
use rayon::prelude::*;
use rstar::primitives::{GeomWithData, Rectangle};
use rstar::{RTree, AABB};

use crate::error::{Error, Result};
use crate::geom::{boundaries_within, polygon_envelope};

/// Static neighborhood relation between cells, by cell index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NeighborGraph {
    adjacency: Vec<Vec<u32>>,
}

impl NeighborGraph {
    /// Links every pair of polygons whose boundaries come within `radius_m`.
    /// The relation is symmetric and never contains self-loops.
    pub fn build(polygons: &[Polygon<f64>], radius_m: f64) -> Result<Self> {
        if !(radius_m > 0.0 && radius_m.is_finite()) {
            return Err(Error::Config(format!(
                "neighborhood radius must be positive, got {radius_m}"
            )));
        }
        let envelopes: Vec<AABB<[f64; 2]>> = polygons.iter().map(polygon_envelope).collect();
        let tree = RTree::bulk_load(
            envelopes
                .iter()
                .enumerate()
                .map(|(i, e)| GeomWithData::new(Rectangle::from_aabb(*e), i))
                .collect(),
        );
        let upper: Vec<Vec<u32>> = (0..polygons.len())
            .into_par_iter()
            .map(|i| {
                let e = envelopes[i];
                let query = AABB::from_corners(
                    [e.lower()[0] - radius_m, e.lower()[1] - radius_m],
                    [e.upper()[0] + radius_m, e.upper()[1] + radius_m],
                );
                let mut found: Vec<u32> = tree
                    .locate_in_envelope_intersecting(&query)
                    .map(|g| g.data)
                    .filter(|&j| j > i)
                    .filter(|&j| boundaries_within(&polygons[i], &polygons[j], radius_m))
                    .map(|j| j as u32)
                    .collect();
                found.sort_unstable();
                found
            })
            .collect();

        let mut adjacency = vec![Vec::new(); polygons.len()];
        for (i, js) in upper.iter().enumerate() {
            for &j in js {
                adjacency[i].push(j);
                adjacency[j as usize].push(i as u32);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(NeighborGraph { adjacency })
    }

    /// Graph from explicit neighbor lists. Lists are sorted and deduplicated;
    /// self-loops, out-of-range indices and asymmetric pairs are rejected.
    pub fn from_adjacency(lists: Vec<Vec<usize>>) -> Result<Self> {
        let n = lists.len();
        let mut adjacency = Vec::with_capacity(n);
        for (i, mut list) in lists.into_iter().enumerate() {
            list.sort_unstable();
            list.dedup();
            if list.iter().any(|&j| j == i || j >= n) {
                return Err(Error::InvalidInput(format!(
                    "neighbor list of cell {i} has a self-loop or an unknown cell"
                )));
            }
            adjacency.push(list.into_iter().map(|j| j as u32).collect::<Vec<u32>>());
        }
        for (i, list) in adjacency.iter().enumerate() {
            if let Some(j) = list
                .iter()
                .find(|&&j| adjacency[j as usize].binary_search(&(i as u32)).is_err())
            {
                return Err(Error::InvalidInput(format!(
                    "cell {j} is a neighbor of cell {i} but not the other way round"
                )));
            }
        }
        Ok(NeighborGraph { adjacency })
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[cell].iter().map(|&j| j as usize)
    }

    pub fn degree(&self, cell: usize) -> usize {
        self.adjacency[cell].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Attribute probability scaled by the urban share of the neighborhood; an
/// empty neighborhood contributes 0.
pub fn transition_probability(attribute: f64, urban_neighbors: usize, neighbors: usize) -> f64 {
    if neighbors == 0 {
        return 0.0;
    }
    attribute * (urban_neighbors as f64 / neighbors as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rectangle;

    #[test]
    fn figure_products() {
        let close = |a: f64, b: f64| (a - b).abs() <= f64::EPSILON * b;
        assert!(close(transition_probability(0.8, 6, 8), 0.6));
        assert!(close(transition_probability(0.6, 4, 8), 0.3));
        assert!(close(transition_probability(0.9, 2, 8), 0.225));
        assert_eq!(transition_probability(0.9, 0, 0), 0.0);
    }

    #[test]
    fn radius_is_boundary_to_boundary() {
        let polys = vec![
            rectangle(0.0, 0.0, 1000.0, 1000.0),
            // Separated by a 10 m road.
            rectangle(1010.0, 0.0, 2000.0, 1000.0),
            // 600 m beyond the second.
            rectangle(2600.0, 0.0, 2700.0, 100.0),
            // Centroid is 1450 m from the first, edge 500 m.
            rectangle(0.0, 1500.0, 1000.0, 2900.0),
        ];
        let g = NeighborGraph::build(&polys, 500.0).unwrap();
        assert_eq!(g.neighbors(0).collect::<Vec<_>>(), vec![1, 3]);
        // Corner to corner is just over 500 m.
        assert_eq!(g.neighbors(1).collect::<Vec<_>>(), vec![0]);
        assert_eq!(g.degree(2), 0);
        assert_eq!(g.edge_count(), 2);
        assert!(NeighborGraph::build(&polys, 0.0).is_err());
    }

    #[test]
    fn explicit_adjacency_is_checked() {
        assert!(NeighborGraph::from_adjacency(vec![vec![1], vec![1]]).is_err());
        assert!(NeighborGraph::from_adjacency(vec![vec![2], vec![]]).is_err());
        assert!(NeighborGraph::from_adjacency(vec![vec![1], vec![]]).is_err());
        let g = NeighborGraph::from_adjacency(vec![vec![1, 1], vec![0]]).unwrap();
        assert_eq!(g.degree(0), 1);
    }
}
