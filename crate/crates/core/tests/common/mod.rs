#![allow(dead_code)]

use digrate::graph::{GraphKind, GraphSnapshot};
use digrate::objective::{quadratic_suite, ObjectiveSuite};
use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, UnGraph};
use petgraph::visit::Dfs;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_block(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

/// Quadratic suite with curvatures in `[1, kappa]` and Gaussian targets.
pub fn random_quadratic(rng: &mut ChaCha8Rng, n: usize, p: usize, kappa: f64) -> ObjectiveSuite {
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..=kappa)).collect();
    let b: Vec<DVector<f64>> = (0..n).map(|_| gaussian_vec(rng, p)).collect();
    quadratic_suite(&a, &b).unwrap()
}

/// Random connected undirected graph: a random spanning tree plus extra edges
/// kept with probability `extra`.
pub fn random_connected(rng: &mut ChaCha8Rng, n: usize, extra: f64) -> GraphSnapshot {
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.random_range(0..i), i));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < extra {
                edges.push((i, j));
            }
        }
    }
    GraphSnapshot::undirected(n, edges).unwrap()
}

/// Connectivity oracle: single strongly connected component (directed) or a
/// DFS that reaches every vertex (undirected).
pub fn oracle_connected(g: &GraphSnapshot) -> bool {
    let n = g.n();
    if n <= 1 {
        return true;
    }
    match g.kind() {
        GraphKind::Directed => {
            let mut d = DiGraph::<(), ()>::new();
            let nodes: Vec<_> = (0..n).map(|_| d.add_node(())).collect();
            for (j, i) in g.links() {
                d.add_edge(nodes[j], nodes[i], ());
            }
            tarjan_scc(&d).len() == 1
        }
        GraphKind::Undirected => {
            let mut u = UnGraph::<(), ()>::new_undirected();
            let nodes: Vec<_> = (0..n).map(|_| u.add_node(())).collect();
            for (a, b) in g.links() {
                u.add_edge(nodes[a], nodes[b], ());
            }
            let mut dfs = Dfs::new(&u, nodes[0]);
            let mut seen = 0;
            while dfs.next(&u).is_some() {
                seen += 1;
            }
            seen == n
        }
    }
}

/// `σ_max(M - 11ᵀ/n)` from a full SVD.
pub fn svd_deviation(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let j = DMatrix::from_element(n, n, 1.0 / n as f64);
    (m - j).svd(false, false).singular_values.max()
}

/// `‖(I - 11ᵀ/n) b‖_F`.
pub fn lnorm(b: &DMatrix<f64>) -> f64 {
    let n = b.nrows() as f64;
    let mut c = b.clone();
    for j in 0..b.ncols() {
        let mean = b.column(j).sum() / n;
        c.column_mut(j).add_scalar_mut(-mean);
    }
    c.norm()
}
