//! Communication graphs and mixing weights.
//!
//! Agents gossip over a fixed undirected connected graph. The decentralized
//! samplers combine neighbor iterates with a symmetric doubly stochastic
//! mixing matrix `W = I - w L`, where `L` is the graph Laplacian and the
//! scalar weight `w` is picked from the Laplacian spectrum.

use ndarray::Array2;

use crate::error::{Error, Result};

/// The graph shapes covered by the experiment sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    Full,
    Ring,
    Star,
}

impl TopologyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TopologyKind::Full => "full",
            TopologyKind::Ring => "ring",
            TopologyKind::Star => "star",
        }
    }
}

impl std::str::FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(TopologyKind::Full),
            "ring" => Ok(TopologyKind::Ring),
            "star" => Ok(TopologyKind::Star),
            other => Err(Error::InvalidConfig(format!(
                "unknown topology kind '{other}' (expected full, ring or star)"
            ))),
        }
    }
}

/// An undirected connected graph over `n` agents, no self loops.
///
/// `neighbors(k)` is the open neighborhood (excludes `k` itself) in sorted
/// order; every per-neighbor sum in the crate iterates it in that order so
/// results do not depend on edge insertion order.
#[derive(Debug, Clone)]
pub struct Topology {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a graph from an explicit edge list. Edges are treated as a set:
    /// order and duplicates do not matter.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("graph needs at least one agent".into()));
        }
        let mut normalized: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(Error::DegenerateTopology(format!("self loop at agent {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidConfig(format!(
                    "edge ({a},{b}) references an agent outside 0..{n}"
                )));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        normalized.dedup();

        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &normalized {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }

        let t = Topology {
            n,
            edges: normalized,
            neighbors,
        };
        if !t.is_connected() {
            return Err(Error::DegenerateTopology("graph is not connected".into()));
        }
        Ok(t)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(k) = stack.pop() {
            for &j in &self.neighbors[k] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    /// Sorted neighbors of `k`, excluding `k` itself.
    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighbors[k]
    }

    pub fn degree(&self, k: usize) -> usize {
        self.neighbors[k].len()
    }

    /// Normalized `(min, max)` edge pairs in sorted order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Graph Laplacian `L = D - A`.
    pub fn laplacian(&self) -> Array2<f64> {
        let mut l = Array2::zeros((self.n, self.n));
        for k in 0..self.n {
            l[[k, k]] = self.degree(k) as f64;
            for &j in &self.neighbors[k] {
                l[[k, j]] = -1.0;
            }
        }
        l
    }
}

/// Builds one of the named graph shapes. The star uses agent 0 as hub.
pub fn build_topology(kind: TopologyKind, n_agents: usize) -> Result<Topology> {
    if n_agents < 2 {
        return Err(Error::InvalidConfig(format!(
            "{} topology needs at least 2 agents, got {n_agents}",
            kind.as_str()
        )));
    }
    let edges: Vec<(usize, usize)> = match kind {
        TopologyKind::Full => (0..n_agents)
            .flat_map(|a| (a + 1..n_agents).map(move |b| (a, b)))
            .collect(),
        TopologyKind::Ring => (0..n_agents).map(|a| (a, (a + 1) % n_agents)).collect(),
        TopologyKind::Star => (1..n_agents).map(|b| (0, b)).collect(),
    };
    Topology::new(n_agents, &edges)
}

/// Eigenvalues of a symmetric matrix, sorted descending.
///
/// Cyclic Jacobi rotations; the matrices here are at most 16x16 Laplacians,
/// so a dense O(n^3)-per-sweep method is plenty.
pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut m = a.clone();
    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| m[[p, q]] * m[[p, q]])
            .sum();
        if off.sqrt() <= 1e-14 * frob {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let tau = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (tau - (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[[k, p]];
                    let akq = m[[k, q]];
                    m[[k, p]] = c * akp - s * akq;
                    m[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[[p, k]];
                    let aqk = m[[q, k]];
                    m[[p, k]] = c * apk - s * aqk;
                    m[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    ev.sort_by(|x, y| y.partial_cmp(x).expect("eigenvalues are finite"));
    ev
}

/// Mixing weight `w = 2 / (lambda_1 + lambda_{N-1})` from the Laplacian
/// spectrum, with `lambda_{N-1}` the algebraic connectivity.
pub fn spectral_mixing_weight(laplacian: &Array2<f64>) -> Result<f64> {
    let n = laplacian.nrows();
    if n < 2 {
        return Err(Error::DegenerateTopology(
            "mixing weight needs at least 2 agents".into(),
        ));
    }
    let ev = symmetric_eigenvalues(laplacian);
    let lambda_max = ev[0];
    let fiedler = ev[n - 2];
    if fiedler <= 1e-9 {
        return Err(Error::DegenerateTopology(
            "algebraic connectivity is zero; graph is disconnected".into(),
        ));
    }
    Ok(2.0 / (lambda_max + fiedler))
}

/// Symmetric doubly stochastic gossip weights `W = I - w L`.
///
/// `weights[[k, k]]` may go negative for hubs with large `w`; rows and
/// columns still sum to one, which is what the consensus step needs.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    pub weights: Array2<f64>,
    pub scalar_weight: f64,
}

pub fn build_mixing_matrix(t: &Topology, w: f64) -> Result<MixingMatrix> {
    if !(w.is_finite() && w >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "mixing weight must be finite and nonnegative, got {w}"
        )));
    }
    let n = t.n_agents();
    let mut weights = Array2::eye(n);
    weights.scaled_add(-w, &t.laplacian());
    Ok(MixingMatrix {
        weights,
        scalar_weight: w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn named_shapes_have_expected_degrees() {
        let full = build_topology(TopologyKind::Full, 5).unwrap();
        assert_eq!(full.edges().len(), 10);
        assert!((0..5).all(|k| full.degree(k) == 4));

        let ring = build_topology(TopologyKind::Ring, 5).unwrap();
        assert_eq!(ring.edges().len(), 5);
        assert!((0..5).all(|k| ring.degree(k) == 2));

        let star = build_topology(TopologyKind::Star, 5).unwrap();
        assert_eq!(star.edges().len(), 4);
        assert_eq!(star.degree(0), 4);
        assert!((1..5).all(|k| star.degree(k) == 1));
    }

    #[test]
    fn too_few_agents_is_rejected() {
        assert!(build_topology(TopologyKind::Full, 1).is_err());
        assert!(build_topology(TopologyKind::Ring, 0).is_err());
    }

    #[test]
    fn self_loops_and_disconnection_are_rejected() {
        assert!(Topology::new(3, &[(0, 0), (1, 2)]).is_err());
        assert!(Topology::new(4, &[(0, 1), (2, 3)]).is_err());
        assert!(Topology::new(3, &[(0, 3)]).is_err());
    }

    #[test]
    fn single_agent_graph_is_allowed() {
        let t = Topology::new(1, &[]).unwrap();
        assert_eq!(t.n_agents(), 1);
        assert!(t.neighbors(0).is_empty());
    }

    #[test]
    fn duplicate_and_reversed_edges_collapse() {
        let t = Topology::new(3, &[(1, 0), (0, 1), (1, 2)]).unwrap();
        assert_eq!(t.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn laplacian_matches_hand_built_matrices() {
        let ring = build_topology(TopologyKind::Ring, 5).unwrap();
        let l = ring.laplacian();
        for k in 0..5 {
            assert_eq!(l[[k, k]], 2.0);
            assert_eq!(l[[k, (k + 1) % 5]], -1.0);
            assert_eq!(l[[k, (k + 4) % 5]], -1.0);
            assert_eq!(l[[k, (k + 2) % 5]], 0.0);
        }

        let full = build_topology(TopologyKind::Full, 5).unwrap();
        let l = full.laplacian();
        for k in 0..5 {
            for j in 0..5 {
                assert_eq!(l[[k, j]], if k == j { 4.0 } else { -1.0 });
            }
        }

        let star = build_topology(TopologyKind::Star, 5).unwrap();
        let l = star.laplacian();
        assert_eq!(l[[0, 0]], 4.0);
        for k in 1..5 {
            assert_eq!(l[[k, k]], 1.0);
            assert_eq!(l[[0, k]], -1.0);
        }
    }

    #[test]
    fn spectral_weights_for_the_evaluated_graphs() {
        // Complete graph: spectrum {5,5,5,5,0}; cycle: 2 - 2cos(2*pi*k/5)
        // pairs summing to 5; star: {5,1,1,1,0}.
        let w_full =
            spectral_mixing_weight(&build_topology(TopologyKind::Full, 5).unwrap().laplacian())
                .unwrap();
        assert_close(w_full, 0.2, 1e-12);

        let w_ring =
            spectral_mixing_weight(&build_topology(TopologyKind::Ring, 5).unwrap().laplacian())
                .unwrap();
        assert_close(w_ring, 0.4, 1e-12);

        let w_star =
            spectral_mixing_weight(&build_topology(TopologyKind::Star, 5).unwrap().laplacian())
                .unwrap();
        assert_close(w_star, 1.0 / 3.0, 1e-12);
    }

    #[test]
    fn mixing_matrix_frozen_entries() {
        let ring = build_topology(TopologyKind::Ring, 5).unwrap();
        let w = build_mixing_matrix(&ring, 0.4).unwrap();
        for k in 0..5 {
            assert_close(w.weights[[k, k]], 0.2, 1e-12);
            assert_close(w.weights[[k, (k + 1) % 5]], 0.4, 1e-12);
        }

        let full = build_topology(TopologyKind::Full, 5).unwrap();
        let w = build_mixing_matrix(&full, 0.2).unwrap();
        for k in 0..5 {
            for j in 0..5 {
                assert_close(w.weights[[k, j]], 0.2, 1e-12);
            }
        }

        let w0 = build_mixing_matrix(&ring, 0.0).unwrap();
        assert_eq!(w0.weights, Array2::<f64>::eye(5));
    }

    #[test]
    fn star_hub_diagonal_goes_negative_without_clamping() {
        let star = build_topology(TopologyKind::Star, 5).unwrap();
        let w = spectral_mixing_weight(&star.laplacian()).unwrap();
        let mix = build_mixing_matrix(&star, w).unwrap();
        assert_close(mix.weights[[0, 0]], 1.0 - 4.0 / 3.0, 1e-12);
    }

    #[test]
    fn mixing_matrices_are_symmetric_doubly_stochastic() {
        for kind in [TopologyKind::Full, TopologyKind::Ring, TopologyKind::Star] {
            for n in 2..=16 {
                let t = build_topology(kind, n).unwrap();
                let w = spectral_mixing_weight(&t.laplacian()).unwrap();
                let mix = build_mixing_matrix(&t, w).unwrap();
                for k in 0..n {
                    let row: f64 = (0..n).map(|j| mix.weights[[k, j]]).sum();
                    let col: f64 = (0..n).map(|j| mix.weights[[j, k]]).sum();
                    assert_close(row, 1.0, 1e-12);
                    assert_close(col, 1.0, 1e-12);
                    for j in 0..n {
                        assert_close(mix.weights[[k, j]], mix.weights[[j, k]], 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn spectral_weight_contracts_disagreement() {
        // All eigenvalues of W = I - wL except the single 1 (consensus
        // direction) must sit strictly inside the unit circle.
        for kind in [TopologyKind::Full, TopologyKind::Ring, TopologyKind::Star] {
            for n in 2..=16 {
                let t = build_topology(kind, n).unwrap();
                let w = spectral_mixing_weight(&t.laplacian()).unwrap();
                let mix = build_mixing_matrix(&t, w).unwrap();
                let ev = symmetric_eigenvalues(&mix.weights);
                assert_close(ev[0], 1.0, 1e-10);
                let rest = ev[1..]
                    .iter()
                    .fold(0.0f64, |acc, &lambda| acc.max(lambda.abs()));
                assert!(rest < 1.0 - 1e-9, "{kind:?} n={n}: contraction {rest}");
            }
        }
    }

    #[test]
    fn jacobi_reproduces_known_spectra() {
        let l = build_topology(TopologyKind::Star, 5).unwrap().laplacian();
        let ev = symmetric_eigenvalues(&l);
        let expected = [5.0, 1.0, 1.0, 1.0, 0.0];
        for (got, want) in ev.iter().zip(expected) {
            assert_close(*got, want, 1e-12);
        }

        let l = build_topology(TopologyKind::Ring, 5).unwrap().laplacian();
        let ev = symmetric_eigenvalues(&l);
        let mut expected: Vec<f64> = (0..5)
            .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / 5.0).cos())
            .collect();
        expected.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (got, want) in ev.iter().zip(expected) {
            assert_close(*got, want, 1e-12);
        }
    }

    /// Random connected graph: spanning path through a permutation plus
    /// arbitrary extra edges.
    fn connected_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..=8)
            .prop_flat_map(|n| {
                (
                    Just(n),
                    proptest::sample::subsequence(
                        (0..n)
                            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                            .collect::<Vec<_>>(),
                        0..=n * (n - 1) / 2,
                    ),
                    Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
                )
            })
            .prop_map(|(n, mut extra, path)| {
                for pair in path.windows(2) {
                    extra.push((pair[0], pair[1]));
                }
                (n, extra)
            })
    }

    proptest! {
        #[test]
        fn laplacian_matches_bruteforce((n, edges) in connected_graph()) {
            let t = Topology::new(n, &edges).unwrap();
            let l = t.laplacian();
            let mut adj = vec![vec![false; n]; n];
            for &(a, b) in t.edges() {
                adj[a][b] = true;
                adj[b][a] = true;
            }
            for k in 0..n {
                let deg = adj[k].iter().filter(|&&x| x).count() as f64;
                prop_assert_eq!(l[[k, k]], deg);
                for j in 0..n {
                    if j != k {
                        prop_assert_eq!(l[[k, j]], if adj[k][j] { -1.0 } else { 0.0 });
                    }
                }
                let row: f64 = (0..n).map(|j| l[[k, j]]).sum();
                prop_assert!(row.abs() < 1e-12);
            }
        }
    }
}
