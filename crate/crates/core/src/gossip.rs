//! Gossip matrices and the gossip averaging step.
//!
//! Weights are Metropolis-Hastings weights on the subgraph induced by the
//! accessible nodes: for accessible neighbours `i != j`,
//! `g_ij = 1 / (1 + max(deg_i, deg_j))` with degrees counted inside that
//! subgraph, and the diagonal takes the remaining mass. Inaccessible nodes
//! get identity rows and columns. The result is symmetric and doubly
//! stochastic for every undirected graph, one component at a time.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::format::g12;
use crate::mobility::Adjacency;
use crate::vector::{axpy, Params};

#[derive(Debug, Clone, PartialEq)]
pub struct GossipMatrix {
    n: usize,
    g: Vec<f64>,
}

impl GossipMatrix {
    pub fn identity(n: usize) -> Self {
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            g[i * n + i] = 1.0;
        }
        Self { n, g }
    }

    /// Dense matrix from rows; no validation beyond squareness.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut g = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            g.extend_from_slice(row);
        }
        Ok(Self { n, g })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.g[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.g[i * self.n..(i + 1) * self.n]
    }

    /// Scales every off-diagonal weight of `node` by `factor` in both its row
    /// and column, moving the removed mass onto the diagonals of both
    /// endpoints. Symmetry and double stochasticity are preserved.
    pub fn deemphasize(&mut self, node: usize, factor: f64) {
        let factor = factor.clamp(0.0, 1.0);
        for j in 0..self.n {
            if j == node {
                continue;
            }
            let w = self.get(node, j);
            if w == 0.0 {
                continue;
            }
            let kept = factor * w;
            let moved = w - kept;
            self.set(node, j, kept);
            self.set(j, node, kept);
            self.set(j, j, self.get(j, j) + moved);
            self.set(node, node, self.get(node, node) + moved);
        }
    }

    /// Dense CSV dump, row-major, twelve significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for i in 0..self.n {
            let line: Vec<String> = self.row(i).iter().map(|&v| g12(v)).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

pub fn build_gossip_matrix(adj: &Adjacency, accessible: &[bool]) -> Result<GossipMatrix> {
    adj.check_symmetric()?;
    let n = adj.n();
    if accessible.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: accessible.len(),
        });
    }
    let degree: Vec<usize> = (0..n)
        .map(|i| {
            if accessible[i] {
                adj.neighbors(i).filter(|&j| accessible[j]).count()
            } else {
                0
            }
        })
        .collect();

    let mut g = GossipMatrix {
        n,
        g: vec![0.0; n * n],
    };
    for i in 0..n {
        if !accessible[i] {
            g.set(i, i, 1.0);
            continue;
        }
        let mut off = 0.0;
        for j in adj.neighbors(i).filter(|&j| accessible[j]) {
            let w = 1.0 / (1 + degree[i].max(degree[j])) as f64;
            g.set(i, j, w);
            off += w;
        }
        g.set(i, i, 1.0 - off);
    }
    Ok(g)
}

/// Symmetric, entries in `[0, 1]`, unit row and column sums, all within `tol`.
pub fn verify_doubly_stochastic(g: &GossipMatrix, tol: f64) -> bool {
    let n = g.n();
    if g.g.len() != n * n {
        return false;
    }
    for i in 0..n {
        let mut row = 0.0;
        let mut col = 0.0;
        for j in 0..n {
            let v = g.get(i, j);
            if !(-tol..=1.0 + tol).contains(&v) || (v - g.get(j, i)).abs() > tol {
                return false;
            }
            row += v;
            col += g.get(j, i);
        }
        if (row - 1.0).abs() > tol || (col - 1.0).abs() > tol {
            return false;
        }
    }
    true
}

/// Positive off-diagonal weights only between connected, accessible nodes,
/// and exact identity rows for inaccessible nodes.
pub fn respects_topology(g: &GossipMatrix, adj: &Adjacency, accessible: &[bool]) -> bool {
    let n = g.n();
    for i in 0..n {
        if !accessible[i] && g.get(i, i) != 1.0 {
            return false;
        }
        for j in 0..n {
            if i != j
                && g.get(i, j) != 0.0
                && !(adj.connected(i, j) && accessible[i] && accessible[j])
            {
                return false;
            }
        }
    }
    true
}

/// `out_i = sum_j g_ij * models_j`.
pub fn gossip_average(models: &[Params], g: &GossipMatrix) -> Result<Vec<Params>> {
    if models.len() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            got: models.len(),
        });
    }
    let d = models.first().map_or(0, Vec::len);
    if let Some(bad) = models.iter().find(|m| m.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    Ok((0..g.n())
        .map(|i| {
            let row = g.row(i);
            let mut acc = vec![0.0; d];
            for (j, &w) in row.iter().enumerate() {
                if w != 0.0 {
                    axpy(w, &models[j], &mut acc);
                }
            }
            acc
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::{dist_sq, mean_of};
    use proptest::prelude::*;

    fn random_graph(n: usize, edges: &[bool], access: &[bool]) -> (Adjacency, Vec<bool>) {
        let mut adj = Adjacency::empty(n);
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                adj.set_edge(i, j, edges[k % edges.len()]);
                k += 1;
            }
        }
        (adj, access[..n].to_vec())
    }

    #[test]
    fn pair_averages_evenly() {
        let g = build_gossip_matrix(&Adjacency::complete(2), &[true, true]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(g.get(i, j), 0.5);
            }
        }
    }

    #[test]
    fn triangle_is_uniform_thirds() {
        let g = build_gossip_matrix(&Adjacency::complete(3), &[true; 3]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((g.get(i, j) - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn path_graph_weights() {
        // 0 - 1 - 2: deg = (1, 2, 1)
        let mut adj = Adjacency::empty(3);
        adj.set_edge(0, 1, true);
        adj.set_edge(1, 2, true);
        let g = build_gossip_matrix(&adj, &[true; 3]).unwrap();
        assert!((g.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((g.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((g.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.get(0, 2), 0.0);
    }

    #[test]
    fn inaccessible_row_is_basis_vector() {
        let g = build_gossip_matrix(&Adjacency::complete(4), &[true, false, true, true]).unwrap();
        assert_eq!(g.row(1), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(g.get(0, 1), 0.0);
        assert!((g.get(0, 2) - 1.0 / 3.0).abs() < 1e-15);
        assert!(verify_doubly_stochastic(&g, 1e-12));
    }

    #[test]
    fn rejects_asymmetric_adjacency() {
        let adj = Adjacency::from_rows(&[vec![true, true], vec![false, true]]).unwrap();
        assert!(matches!(
            build_gossip_matrix(&adj, &[true, true]),
            Err(Error::AsymmetricAdjacency(0, 1))
        ));
    }

    #[test]
    fn verify_examples() {
        assert!(verify_doubly_stochastic(&GossipMatrix::identity(5), 1e-12));
        let bad = GossipMatrix::from_rows(&[vec![0.6, 0.5], vec![0.5, 0.6]]).unwrap();
        assert!(!verify_doubly_stochastic(&bad, 1e-9));
        let asym = GossipMatrix::from_rows(&[vec![0.5, 0.5], vec![0.4, 0.6]]).unwrap();
        assert!(!verify_doubly_stochastic(&asym, 1e-9));
    }

    #[test]
    fn identity_leaves_models_unchanged() {
        let models = vec![vec![1.0, 2.0], vec![-3.0, 4.0]];
        let out = gossip_average(&models, &GossipMatrix::identity(2)).unwrap();
        assert_eq!(out, models);
    }

    #[test]
    fn exact_two_node_average() {
        let g = build_gossip_matrix(&Adjacency::complete(2), &[true, true]).unwrap();
        let out = gossip_average(&[vec![0.0; 3], vec![2.0; 3]], &g).unwrap();
        assert_eq!(out, vec![vec![1.0; 3], vec![1.0; 3]]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let g = GossipMatrix::identity(2);
        assert!(gossip_average(&[vec![0.0; 3], vec![1.0; 2]], &g).is_err());
        assert!(gossip_average(&[vec![0.0; 3]], &g).is_err());
    }

    #[test]
    fn deemphasis_keeps_double_stochasticity() {
        let mut g = build_gossip_matrix(&Adjacency::complete(4), &[true; 4]).unwrap();
        g.deemphasize(2, 0.3);
        assert!(verify_doubly_stochastic(&g, 1e-12));
        assert!((g.get(2, 0) - 0.3 * 0.25).abs() < 1e-15);
        assert!((g.get(0, 0) - (0.25 + 0.7 * 0.25)).abs() < 1e-15);
        let mut h = build_gossip_matrix(&Adjacency::complete(4), &[true; 4]).unwrap();
        let before = h.clone();
        h.deemphasize(1, 1.0);
        assert_eq!(h, before);
    }

    #[test]
    fn csv_dump() {
        let g = build_gossip_matrix(&Adjacency::complete(3), &[true; 3]).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("0.333333333333,0.333333333333,0.333333333333\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn built_matrices_are_valid(
            n in 1usize..=14,
            edges in prop::collection::vec(any::<bool>(), 91),
            access in prop::collection::vec(any::<bool>(), 14),
        ) {
            let (adj, acc) = random_graph(n, &edges, &access);
            let g = build_gossip_matrix(&adj, &acc).unwrap();
            prop_assert!(verify_doubly_stochastic(&g, 1e-9));
            prop_assert!(respects_topology(&g, &adj, &acc));
        }

        #[test]
        fn averaging_preserves_mean_and_contracts(
            n in 1usize..=14,
            edges in prop::collection::vec(any::<bool>(), 91),
            access in prop::collection::vec(any::<bool>(), 14),
            values in prop::collection::vec(-10.0f64..10.0, 14 * 3),
        ) {
            let (adj, acc) = random_graph(n, &edges, &access);
            let g = build_gossip_matrix(&adj, &acc).unwrap();
            let models: Vec<Params> = values.chunks(3).take(n).map(|c| c.to_vec()).collect();
            let out = gossip_average(&models, &g).unwrap();
            let before = mean_of(&models, 3).unwrap();
            let after = mean_of(&out, 3).unwrap();
            for k in 0..3 {
                prop_assert!((before[k] - after[k]).abs() < 1e-9);
            }
            let spread = |ms: &[Params]| ms.iter().map(|m| dist_sq(m, &before)).sum::<f64>();
            prop_assert!(spread(&out) <= spread(&models) + 1e-9);
        }
    }
}
