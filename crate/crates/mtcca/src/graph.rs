//! Dependency graphs from pairwise first-order coefficients.
//!
//! Nodes are labeled entities; an undirected edge is present exactly when
//! the pairwise coefficient exceeds a threshold `lambda`. Graphs from
//! different methods are compared by the symmetric difference of their edge
//! sets, and a reference graph can be matched by scanning `lambda`.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Undirected edge as an ordered node-index pair `(i, j)`, `i < j`.
pub type Edge = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct DependencyGraph {
    pub labels: Vec<String>,
    /// Edges with `i < j`; no self-loops.
    pub edges: BTreeSet<Edge>,
    /// Threshold the graph was built at.
    pub lambda: f64,
    /// Symmetric pairwise coefficient matrix the edges were derived from.
    pub coefficients: DMatrix<f64>,
}

impl DependencyGraph {
    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
}

/// Thresholds a symmetric coefficient matrix into a graph: edge `(i, j)` is
/// present iff `coefficients[(i, j)] > lambda`, strictly.
pub fn build_graph(
    coefficients: &DMatrix<f64>,
    labels: &[String],
    lambda: f64,
) -> DependencyGraph {
    let n = labels.len();
    assert_eq!(coefficients.nrows(), n, "coefficient matrix shape");
    assert_eq!(coefficients.ncols(), n, "coefficient matrix shape");
    debug_assert!(
        (coefficients - coefficients.transpose()).amax() <= 1e-9,
        "coefficient matrix must be symmetric"
    );
    let mut edges = BTreeSet::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if coefficients[(i, j)] > lambda {
                edges.insert((i, j));
            }
        }
    }
    DependencyGraph {
        labels: labels.to_vec(),
        edges,
        lambda,
        coefficients: coefficients.clone(),
    }
}

/// Edges only in `g1` and edges only in `g2`. The edit distance between the
/// graphs is the total size of the two sets.
pub fn symmetric_difference(
    g1: &DependencyGraph,
    g2: &DependencyGraph,
) -> Result<(Vec<Edge>, Vec<Edge>)> {
    if g1.labels != g2.labels {
        return Err(Error::NodeSetMismatch);
    }
    let only_1 = g1.edges.difference(&g2.edges).copied().collect();
    let only_2 = g2.edges.difference(&g1.edges).copied().collect();
    Ok((only_1, only_2))
}

/// Edge-set edit distance: `|E1 \ E2| + |E2 \ E1|`.
pub fn edit_distance(g1: &DependencyGraph, g2: &DependencyGraph) -> Result<usize> {
    let (a, b) = symmetric_difference(g1, g2)?;
    Ok(a.len() + b.len())
}

/// Uniform grid of `points` thresholds on `[0, 1]`.
pub fn lambda_grid(points: usize) -> Vec<f64> {
    assert!(points >= 2);
    (0..points)
        .map(|i| i as f64 / (points - 1) as f64)
        .collect()
}

/// Scans the grid and returns the graph built from `coefficients` that is
/// closest to `reference` in edit distance, together with that distance.
/// Ties resolve to the smallest `lambda`.
pub fn closest_graph_by_edit_distance(
    reference: &DependencyGraph,
    coefficients: &DMatrix<f64>,
    labels: &[String],
    grid: &[f64],
) -> Result<(DependencyGraph, usize)> {
    assert!(!grid.is_empty());
    let mut best: Option<(DependencyGraph, usize)> = None;
    for &lambda in grid {
        let candidate = build_graph(coefficients, labels, lambda);
        let distance = edit_distance(reference, &candidate)?;
        match &best {
            Some((_, best_d)) if *best_d <= distance => {}
            _ => best = Some((candidate, distance)),
        }
    }
    Ok(best.expect("non-empty grid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::collections::HashSet;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i}")).collect()
    }

    fn symmetric_coeffs(rng: &mut StdRng, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = rng.gen_range(0.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    #[test]
    fn zero_coefficients_give_empty_graph() {
        let g = build_graph(&DMatrix::zeros(4, 4), &labels(4), 0.3);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn threshold_is_strict() {
        let c = dmatrix![0.0, 0.6, 0.4; 0.6, 0.0, 0.5; 0.4, 0.5, 0.0];
        let g = build_graph(&c, &labels(3), 0.5);
        assert_eq!(g.edges.iter().copied().collect::<Vec<_>>(), vec![(0, 1)]);
        // An exact hit on lambda is excluded.
        let g2 = build_graph(&c, &labels(3), 0.4);
        assert!(g2.edges.contains(&(0, 1)));
        assert!(g2.edges.contains(&(1, 2)));
        assert!(!g2.edges.contains(&(0, 2)));
    }

    #[test]
    fn edge_count_is_non_increasing_in_lambda() {
        // Exhaustive sweep oracle.
        let mut rng = StdRng::seed_from_u64(1);
        let c = symmetric_coeffs(&mut rng, 5);
        let mut last = usize::MAX;
        for lambda in lambda_grid(101) {
            let count = build_graph(&c, &labels(5), lambda).n_edges();
            assert!(count <= last);
            last = count;
        }
    }

    #[test]
    fn identical_graphs_have_empty_difference() {
        let mut rng = StdRng::seed_from_u64(2);
        let c = symmetric_coeffs(&mut rng, 4);
        let g = build_graph(&c, &labels(4), 0.5);
        let (a, b) = symmetric_difference(&g, &g).unwrap();
        assert!(a.is_empty() && b.is_empty());
        assert_eq!(edit_distance(&g, &g).unwrap(), 0);
    }

    #[test]
    fn disjoint_edge_sets_return_both_sides() {
        let c1 = dmatrix![0.0, 0.9, 0.0; 0.9, 0.0, 0.0; 0.0, 0.0, 0.0];
        let c2 = dmatrix![0.0, 0.0, 0.9; 0.0, 0.0, 0.0; 0.9, 0.0, 0.0];
        let g1 = build_graph(&c1, &labels(3), 0.5);
        let g2 = build_graph(&c2, &labels(3), 0.5);
        let (a, b) = symmetric_difference(&g1, &g2).unwrap();
        assert_eq!(a, vec![(0, 1)]);
        assert_eq!(b, vec![(0, 2)]);
    }

    #[test]
    fn random_difference_matches_set_algebra_oracle() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let c1 = symmetric_coeffs(&mut rng, 6);
            let c2 = symmetric_coeffs(&mut rng, 6);
            let g1 = build_graph(&c1, &labels(6), 0.5);
            let g2 = build_graph(&c2, &labels(6), 0.5);
            let (a, b) = symmetric_difference(&g1, &g2).unwrap();
            let s1: HashSet<Edge> = g1.edges.iter().copied().collect();
            let s2: HashSet<Edge> = g2.edges.iter().copied().collect();
            let oa: HashSet<Edge> = s1.difference(&s2).copied().collect();
            let ob: HashSet<Edge> = s2.difference(&s1).copied().collect();
            assert_eq!(a.iter().copied().collect::<HashSet<_>>(), oa);
            assert_eq!(b.iter().copied().collect::<HashSet<_>>(), ob);
            assert_eq!(edit_distance(&g1, &g2).unwrap(), oa.len() + ob.len());
        }
    }

    #[test]
    fn mismatched_node_sets_are_rejected() {
        let g1 = build_graph(&DMatrix::zeros(3, 3), &labels(3), 0.5);
        let g2 = build_graph(&DMatrix::zeros(4, 4), &labels(4), 0.5);
        assert!(matches!(
            symmetric_difference(&g1, &g2),
            Err(Error::NodeSetMismatch)
        ));
    }

    #[test]
    fn reproducible_reference_has_zero_distance() {
        let mut rng = StdRng::seed_from_u64(4);
        let c = symmetric_coeffs(&mut rng, 5);
        let grid = lambda_grid(101);
        // A reference built at a grid value is always exactly recoverable.
        let reference = build_graph(&c, &labels(5), grid[47]);
        let (closest, distance) =
            closest_graph_by_edit_distance(&reference, &c, &labels(5), &grid).unwrap();
        assert_eq!(distance, 0);
        assert_eq!(closest.edges, reference.edges);
    }

    #[test]
    fn complete_reference_vs_zero_coefficients() {
        let n = 5;
        let mut full = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    full[(i, j)] = 1.0;
                }
            }
        }
        let reference = build_graph(&full, &labels(n), 0.5);
        assert_eq!(reference.n_edges(), n * (n - 1) / 2);
        let zeros = DMatrix::zeros(n, n);
        let (_, distance) =
            closest_graph_by_edit_distance(&reference, &zeros, &labels(n), &lambda_grid(11))
                .unwrap();
        assert_eq!(distance, n * (n - 1) / 2);
    }

    #[test]
    fn closest_graph_agrees_with_brute_force() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..10 {
            let c_ref = symmetric_coeffs(&mut rng, 5);
            let c = symmetric_coeffs(&mut rng, 5);
            let reference = build_graph(&c_ref, &labels(5), 0.6);
            let grid = lambda_grid(101);
            let (found, found_d) =
                closest_graph_by_edit_distance(&reference, &c, &labels(5), &grid).unwrap();
            // Brute-force oracle over the same grid, first minimum wins.
            let mut best_d = usize::MAX;
            let mut best_lambda = f64::NAN;
            for &lambda in &grid {
                let g = build_graph(&c, &labels(5), lambda);
                let d = edit_distance(&reference, &g).unwrap();
                if d < best_d {
                    best_d = d;
                    best_lambda = lambda;
                }
            }
            assert_eq!(found_d, best_d);
            assert_eq!(found.lambda, best_lambda);
        }
    }
}
