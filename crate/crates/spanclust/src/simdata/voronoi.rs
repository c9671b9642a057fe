//! Synthetic spatial lattices: random points in the unit square with
//! Delaunay-dual (Voronoi-neighbor) adjacency.

use std::sync::Arc;

use delaunator::{triangulate, Point};
use rand::Rng;

use crate::error::GraphError;
use crate::graph::SpatialGraph;

/// Adjacency pairs of the Delaunay triangulation of the given points.
pub fn delaunay_adjacency(points: &[(f64, f64)]) -> Vec<(u32, u32)> {
    let pts: Vec<Point> = points.iter().map(|&(x, y)| Point { x, y }).collect();
    let tri = triangulate(&pts);
    let mut edges = Vec::new();
    for t in tri.triangles.chunks(3) {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let (lo, hi) = (a.min(b) as u32, a.max(b) as u32);
            edges.push((lo, hi));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// `n` uniform points in the unit square with their Delaunay-neighbor
/// graph. Degenerate draws (collinear points, disconnected adjacency) are
/// retried with fresh points from the same stream.
pub fn voronoi_lattice<R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
) -> Result<(Arc<SpatialGraph>, Vec<(f64, f64)>), GraphError> {
    let mut last_err = GraphError::NoEdges;
    for _attempt in 0..32 {
        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let edges = delaunay_adjacency(&points);
        if edges.is_empty() {
            continue;
        }
        match SpatialGraph::new(n, &edges, None) {
            Ok(graph) => return Ok((Arc::new(graph), points)),
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn unit_square_corners_triangulate_with_one_diagonal() {
        let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let edges = delaunay_adjacency(&corners);
        // Two triangles: the four sides plus exactly one diagonal.
        assert_eq!(edges.len(), 5);
        let sides = [(0u32, 1u32), (1, 2), (2, 3), (0, 3)];
        for s in sides {
            assert!(edges.contains(&s), "missing side {s:?}");
        }
        let diagonals: Vec<_> = edges
            .iter()
            .filter(|e| !sides.contains(e))
            .collect();
        assert_eq!(diagonals.len(), 1);
        assert!(matches!(diagonals[0], (0, 2) | (1, 3)));
    }

    #[test]
    fn lattice_is_valid_and_deterministic() {
        let mut rng = ChaCha20Rng::seed_from_u64(100);
        let (g1, p1) = voronoi_lattice(100, &mut rng).unwrap();
        assert_eq!(g1.n_regions(), 100);
        let mut rng = ChaCha20Rng::seed_from_u64(100);
        let (g2, p2) = voronoi_lattice(100, &mut rng).unwrap();
        assert_eq!(g1.edges(), g2.edges());
        assert_eq!(p1, p2);
    }

    #[test]
    fn small_lattices_work() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for n in [4usize, 8, 15] {
            let (g, pts) = voronoi_lattice(n, &mut rng).unwrap();
            assert_eq!(g.n_regions(), n);
            assert_eq!(pts.len(), n);
        }
    }
}
