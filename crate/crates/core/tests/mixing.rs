mod common;

use common::{gaussian_block, lnorm, random_connected, rng, svd_deviation};
use digrate::graph::{
    analysis_window, random_strongly_connected_digraph, GraphSequence, GraphSnapshot,
};
use digrate::mixing::{
    estimate_delta, lazy_metropolis, matrix_from_csv, metropolis, out_degree_column, sinkhorn_balanced,
    spectral_deviation, validate_stochasticity, window_product, MixingRule, StochasticMode, Weights,
};
use nalgebra::DMatrix;
use num_rational::Ratio;
use proptest::prelude::*;

type Q = Ratio<i64>;

/// Metropolis weights recomputed in exact rational arithmetic.
fn rational_metropolis(g: &GraphSnapshot) -> Vec<Vec<Q>> {
    let n = g.n();
    let d = g.degrees();
    let mut w = vec![vec![Q::from_integer(0); n]; n];
    for (a, b) in g.links() {
        let v = Q::new(1, 1 + d[a].max(d[b]) as i64);
        w[a][b] = v;
        w[b][a] = v;
    }
    for i in 0..n {
        let off: Q = (0..n).filter(|&j| j != i).map(|j| w[i][j]).sum();
        w[i][i] = Q::from_integer(1) - off;
    }
    w
}

#[test]
fn spectral_deviation_examples() {
    let avg = DMatrix::from_element(4, 4, 0.25);
    assert!(spectral_deviation(&avg).unwrap() < 1e-12);
    let id = DMatrix::<f64>::identity(2, 2);
    assert!((spectral_deviation(&id).unwrap() - 1.0).abs() < 1e-12);
    let w = metropolis(&GraphSnapshot::path(3)).unwrap();
    assert!((spectral_deviation(w.matrix()).unwrap() - 2.0 / 3.0).abs() < 1e-10);
}

#[test]
fn delta_examples() {
    let clique = GraphSequence::constant(GraphSnapshot::complete(2));
    let m = Weights::Rule(MixingRule::Metropolis);
    assert!(estimate_delta(&clique, &m, 1, 10).unwrap().delta_empirical < 1e-12);
    let path = GraphSequence::constant(GraphSnapshot::path(3));
    let d = estimate_delta(&path, &m, 1, 10).unwrap().delta_empirical;
    assert!((d - 2.0 / 3.0).abs() < 1e-10);
    let alt = GraphSequence::periodic(vec![
        GraphSnapshot::undirected(3, [(0, 1)]).unwrap(),
        GraphSnapshot::undirected(3, [(1, 2)]).unwrap(),
    ])
    .unwrap();
    let d = estimate_delta(&alt, &m, 1, 10).unwrap().delta_empirical;
    assert!((d - 1.0).abs() < 1e-10);
    // two steps jointly cover the path and do contract
    assert!(estimate_delta(&alt, &m, 2, 10).unwrap().delta_empirical < 1.0);
}

#[test]
fn stochasticity_reports() {
    let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
    let r = validate_stochasticity(&bad, StochasticMode::Doubly);
    assert!(!r.passed());
    assert!(r.violations.iter().any(|&(_, idx, dev)| idx == 0 && (dev - 1.0).abs() < 1e-15));
    assert!(validate_stochasticity(&bad, StochasticMode::Row).passed());
    let id = DMatrix::<f64>::identity(3, 3);
    let r = validate_stochasticity(&id, StochasticMode::Doubly);
    assert!(r.passed() && r.max_deviation == 0.0);
}

#[test]
fn matrix_csv_round_trip() {
    let w = metropolis(&GraphSnapshot::ring(5)).unwrap();
    assert_eq!(&matrix_from_csv(&w.to_csv()).unwrap(), w.matrix());
}

#[test]
fn rules_reject_wrong_kind() {
    assert!(metropolis(&GraphSnapshot::directed_cycle(3)).is_err());
    assert!(out_degree_column(&GraphSnapshot::ring(3)).is_err());
}

proptest! {
    #[test]
    fn metropolis_is_exact_and_bounded_below(seed in any::<u64>(), n in 1usize..9, extra in 0.0f64..0.7) {
        let g = random_connected(&mut rng(seed), n, extra);
        let w = metropolis(&g).unwrap();
        let exact = rational_metropolis(&g);
        let floor = Q::new(1, n as i64);
        for i in 0..n {
            for j in 0..n {
                let q = exact[i][j];
                if q != Q::from_integer(0) {
                    prop_assert!(q >= floor, "entry ({i},{j}) = {q} below 1/{n}");
                }
                let f = *q.numer() as f64 / *q.denom() as f64;
                prop_assert!((w.matrix()[(i, j)] - f).abs() <= 1e-15);
            }
        }
        prop_assert!(w.is_doubly_stochastic());
    }

    #[test]
    fn doubly_stochastic_rules_are_nonexpansive(seed in any::<u64>(), n in 2usize..10, p in 1usize..4) {
        let mut r = rng(seed);
        let g = random_connected(&mut r, n, 0.3);
        let digraph = random_strongly_connected_digraph(n, (n + n / 2).min(n * (n - 1)), seed).unwrap();
        let mats = [
            metropolis(&g).unwrap(),
            lazy_metropolis(&g).unwrap(),
            sinkhorn_balanced(&digraph).unwrap(),
        ];
        for m in &mats {
            prop_assert!(m.is_doubly_stochastic());
            for _ in 0..10 {
                let b = gaussian_block(&mut r, n, p);
                prop_assert!(lnorm(&(m.matrix() * &b)) <= lnorm(&b) * (1.0 + 1e-12) + 1e-15);
            }
        }
    }

    #[test]
    fn out_degree_column_sums(seed in any::<u64>(), n in 2usize..12) {
        let g = random_strongly_connected_digraph(n, (2 * n).min(n * (n - 1)), seed).unwrap();
        let c = out_degree_column(&g).unwrap();
        for j in 0..n {
            prop_assert!((c.matrix().column(j).sum() - 1.0).abs() <= 1e-12);
        }
        prop_assert!(c.is_column_stochastic());
    }

    #[test]
    fn power_iteration_matches_svd(seed in any::<u64>(), n in 2usize..12) {
        let mut r = rng(seed);
        let g = random_connected(&mut r, n, 0.2);
        let w = metropolis(&g).unwrap();
        let w2 = w.matrix() * w.matrix();
        for m in [w.matrix().clone(), w2] {
            let a = spectral_deviation(&m).unwrap();
            prop_assert!((a - svd_deviation(&m)).abs() <= 1e-6);
        }
        let raw = gaussian_block(&mut r, n, n);
        prop_assert!((spectral_deviation(&raw).unwrap() - svd_deviation(&raw)).abs() <= 1e-6 * svd_deviation(&raw).max(1.0));
    }

    #[test]
    fn window_products_contract_by_delta(seed in any::<u64>(), n in 2usize..9, bt in 1usize..4) {
        let mut r = rng(seed);
        let base = random_connected(&mut r, n, 0.2);
        let seq = GraphSequence::window_partition(base, bt, seed).unwrap();
        let b = analysis_window(bt);
        let weights = Weights::Rule(MixingRule::Metropolis);
        let horizon = 6 * b;
        let est = estimate_delta(&seq, &weights, b, horizon).unwrap();
        prop_assert!(est.delta_empirical < 1.0);
        for k in (b - 1)..=horizon {
            let prod = window_product(&weights, &seq, k, b).unwrap();
            for _ in 0..5 {
                let x = gaussian_block(&mut r, n, 2);
                prop_assert!(lnorm(&(&prod * &x)) <= est.delta_empirical * lnorm(&x) * (1.0 + 1e-9) + 1e-14);
            }
        }
    }
}
