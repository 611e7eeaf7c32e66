//! One test per acceptance criterion. Each prints a `criterion N: PASS|FAIL`
//! line straight to stderr so the verdicts show up even when output is captured.

mod common;

use std::io::Write;

use common::{gaussian_block, gaussian_vec, lnorm, random_connected, random_quadratic, rng};
use digrate::algorithms::{
    diging_atc_step, diging_step, equivalent_recursion_check, igd_step, push_diging_step, run, Algorithm,
    DigingState, IgdState, Perturbation, PushDigingState, RunSpec, StepSchedule,
};
use digrate::graph::{
    analysis_window, random_strongly_connected_digraph, subsample_sequence, GraphSequence,
};
use digrate::harness::section6::{
    case_setup, hitting_time, huber_problem, reproduce_section6, Case, StepSizes, AGENTS, DIM, SEGMENT, TARGET,
};
use digrate::harness::trace::RunTrace;
use digrate::linalg::column_sums;
use digrate::mixing::{estimate_delta, metropolis, out_degree_column, window_product, MixingMatrix, MixingRule, Weights};
use digrate::objective::{zero_suite, ObjectiveSuite};
use digrate::theory::bounds::{corollary_metropolis, diging_rate, diging_step_size_window, j1, pushsum_constants};
use digrate::theory::gains::{audit_arrows, igd_bound_rhs, igd_conditions, weighted_ergodic_norm, AuditSetup};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn verdict(id: usize, ok: bool, detail: &str) {
    let line = format!("criterion {id}: {} ({detail})\n", if ok { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(ok, "criterion {id} failed: {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Conservation error of `y` against the gradients it tracks, scaled as in the criterion.
fn conservation(y: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
    (column_sums(y) - column_sums(g)).norm() / (1.0 + g.norm())
}

#[test]
fn c01_conservation() {
    let mut worst = 0.0_f64;
    for inst in 0..20u64 {
        let mut r = rng(100 + inst);
        let n = r.random_range(2..=12);
        let p = r.random_range(1..=3);
        let s = random_quadratic(&mut r, n, p, 5.0);
        let x0 = gaussian_block(&mut r, n, p);
        let seq = subsample_sequence(random_connected(&mut r, n, 0.3), 0.6, inst).unwrap();
        let arcs = (2 * n).min(n * (n - 1));
        let dseq = subsample_sequence(random_strongly_connected_digraph(n, arcs, inst).unwrap(), 0.8, inst).unwrap();
        let alpha = 0.02;
        let mut d = DigingState::init(&s, x0.clone()).unwrap();
        let mut a = d.clone();
        let mut q = PushDigingState::init(&s, x0).unwrap();
        for k in 0..2000 {
            let w = metropolis(&seq.snapshot(k)).unwrap();
            let c = out_degree_column(&dseq.snapshot(k)).unwrap();
            d = diging_step(&d, &w, &s, alpha).unwrap();
            a = diging_atc_step(&a, &w, &s, alpha).unwrap();
            q = push_diging_step(&q, &c, &s, alpha).unwrap();
            worst = worst
                .max(conservation(&d.y, &d.g_prev))
                .max(conservation(&a.y, &a.g_prev))
                .max(conservation(&q.y, &q.g_prev));
        }
    }
    verdict(1, worst <= 1e-10, &format!("max scaled conservation error {worst:.3e}"));
}

#[test]
fn c02_consensus_contraction() {
    let weights = Weights::Rule(MixingRule::Metropolis);
    let mut ok = true;
    let mut worst_ratio = 0.0_f64;
    let mut worst_gap = f64::INFINITY;
    for inst in 0..12u64 {
        let mut r = rng(200 + inst);
        let n = r.random_range(2..=10);
        let bt = r.random_range(1..=3);
        let seq = GraphSequence::window_partition(random_connected(&mut r, n, 0.2), bt, inst).unwrap();
        let b = analysis_window(bt);
        let horizon = 8 * b;
        let delta = estimate_delta(&seq, &weights, b, horizon).unwrap().delta_empirical;
        let bound = 1.0 - 1.0 / (2.0 * (n as f64).powi(3));
        ok &= delta < 1.0 && delta <= bound + 1e-12;
        worst_gap = worst_gap.min(bound - delta);
        for k in (b - 1)..=horizon {
            let prod = window_product(&weights, &seq, k, b).unwrap();
            for _ in 0..100 {
                let x = gaussian_block(&mut r, n, 1);
                let ratio = lnorm(&(&prod * &x)) / lnorm(&x);
                worst_ratio = worst_ratio.max(ratio / delta.max(f64::MIN_POSITIVE));
                ok &= lnorm(&(&prod * &x)) <= delta * lnorm(&x) * (1.0 + 1e-12) + 1e-15;
            }
        }
    }
    verdict(
        2,
        ok,
        &format!("max ‖Wb‖/(δ‖b‖) {worst_ratio:.6}, min slack to 1-τ/(2n²) {worst_gap:.3e}"),
    );
}

struct RateInstance {
    trace: RunTrace,
    lambda: f64,
    /// Resolution of `‖x - x*‖_F` in double precision; residuals below it are round-off.
    floor: f64,
}

impl RateInstance {
    /// Rows strictly before the residual first reaches the round-off floor.
    fn resolved(&self) -> usize {
        self.trace.series.iter().position(|r| r.q <= self.floor).unwrap_or(self.trace.series.len())
    }
}

/// The ten quadratic instances shared by criteria 3 and 7.
fn rate_instances() -> Vec<RateInstance> {
    (0..10u64)
        .map(|inst| {
            let mut r = rng(300 + inst);
            let n = r.random_range(2..=5);
            let p = r.random_range(1..=3);
            let s = random_quadratic(&mut r, n, p, 3.0);
            let seq = GraphSequence::constant(random_connected(&mut r, n, 0.4));
            let weights = Weights::Rule(MixingRule::Metropolis);
            let delta = estimate_delta(&seq, &weights, 1, 5).unwrap().delta_empirical;
            let k = s.constants();
            let w = diging_step_size_window(k.kappa_bar, 1, n, delta, k.mu_bar).unwrap();
            let alpha = 0.9 * w.alpha_breakpoint;
            let lambda = diging_rate(alpha, k.kappa_bar, 1, n, delta, k.mu_bar).unwrap().lambda;
            let x_star = s.minimizer().unwrap().clone();
            let floor = 64.0 * f64::EPSILON * (1.0 + (n as f64).sqrt() * x_star.norm());
            let trace = run(&RunSpec {
                algorithm: Algorithm::Diging,
                seq: &seq,
                weights: &weights,
                suite: &s,
                step: StepSchedule::Constant { alpha },
                iterations: 3000,
                x0: gaussian_block(&mut r, n, p) * 3.0,
                x_star,
                graph_seed: None,
                problem_seed: None,
                delta: Some(delta),
            })
            .unwrap();
            RateInstance { trace, lambda, floor }
        })
        .collect()
}

#[test]
fn c03_rate_soundness() {
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    let mut at_floor = Vec::new();
    for inst in rate_instances() {
        let q0 = inst.trace.series[0].q;
        let end = inst.resolved();
        if end < inst.trace.series.len() {
            at_floor.push(end);
        }
        for row in &inst.trace.series {
            let envelope = 10.0 * q0 * inst.lambda.powi(row.k as i32);
            if row.k < end {
                tightest = tightest.min(envelope / row.q);
            }
            if row.q > envelope.max(inst.floor) {
                violations += 1;
            }
        }
    }
    verdict(
        3,
        violations == 0,
        &format!(
            "{violations} violations, min envelope/residual {tightest:.3}, round-off floor reached at k={at_floor:?}"
        ),
    );
}

/// Zero-objective push runs on ten random static digraphs: (n, history, matrix).
fn push_consensus_runs() -> Vec<(usize, Vec<PushDigingState>, MixingMatrix)> {
    (0..10u64)
        .map(|inst| {
            let mut r = rng(400 + inst);
            let n = r.random_range(2..=10);
            let arcs = r.random_range(n..=n * (n - 1));
            let c = out_degree_column(&random_strongly_connected_digraph(n, arcs, inst).unwrap()).unwrap();
            let s = zero_suite(n, 2).unwrap();
            let mut hist = vec![PushDigingState::init(&s, gaussian_block(&mut r, n, 2)).unwrap()];
            for _ in 0..500 {
                let next = push_diging_step(hist.last().unwrap(), &c, &s, 0.1).unwrap();
                hist.push(next);
            }
            (n, hist, c)
        })
        .collect()
}

#[test]
fn c04_push_sum_consensus() {
    let mut ok = true;
    let mut worst_err = 0.0_f64;
    let mut worst_hit = 0;
    for (n, hist, _) in push_consensus_runs() {
        let mean: DVector<f64> = hist[0].x.row_sum().transpose() / n as f64;
        let floor = (n as f64).powi(-(n as i32));
        ok &= hist.iter().all(|st| st.v.min() >= floor);
        let err = |st: &PushDigingState| (0..n).map(|i| (st.x.row(i).transpose() - &mean).norm()).fold(0.0, f64::max);
        match hist.iter().position(|st| err(st) <= 1e-9) {
            Some(k) => worst_hit = worst_hit.max(k),
            None => ok = false,
        }
        worst_err = worst_err.max(err(hist.last().unwrap()));
    }
    verdict(
        4,
        ok,
        &format!("slowest run within 1e-9 at k={worst_hit}, final max deviation {worst_err:.3e}"),
    );
}

#[test]
fn c05_extra_identity() {
    let mut worst = 0.0_f64;
    for inst in 0..5u64 {
        let mut r = rng(500 + inst);
        let n = r.random_range(2..=10);
        let p = r.random_range(1..=3);
        let s = random_quadratic(&mut r, n, p, 5.0);
        let w = metropolis(&random_connected(&mut r, n, 0.3)).unwrap();
        let m = w.matrix();
        let m2 = m * m;
        let alpha = 0.05;
        let mut hist = vec![DigingState::init(&s, gaussian_block(&mut r, n, p)).unwrap()];
        for _ in 0..500 {
            let next = diging_step(hist.last().unwrap(), &w, &s, alpha).unwrap();
            hist.push(next);
        }
        for t in hist.windows(3) {
            let rhs = m * &t[1].x * 2.0 - &m2 * &t[0].x - (&t[1].g_prev - &t[0].g_prev) * alpha;
            worst = worst.max((&t[2].x - rhs).amax());
        }
    }
    verdict(5, worst <= 1e-11, &format!("max deviation {worst:.3e}"));
}

#[test]
fn c06_huber_reproduction() {
    let mut ok = true;
    let mut parts = Vec::new();
    for case in Case::ALL {
        let report = reproduce_section6(case, 1, &StepSizes::tuned(case)).unwrap();
        for (row, (alg, trace)) in report.summary.iter().zip(&report.runs) {
            if *alg == Algorithm::SubgradientPush {
                let pass = row.final_residual >= 1e-3;
                ok &= pass;
                parts.push(format!("{case}/{alg} final {:.2e}{}", row.final_residual, if pass { "" } else { " < 1e-3" }));
            } else {
                let hit = hitting_time(trace, TARGET);
                let r2 = row.fit.map_or(0.0, |f| f.r_squared);
                let pass = hit.is_some() && r2 >= 0.99;
                ok &= pass;
                parts.push(format!(
                    "{case}/{alg} hits 1e-9 at {} R² {r2:.4} on [{:.0e},{:.0e}]",
                    hit.map_or("never".to_string(), |k| k.to_string()),
                    SEGMENT.0,
                    SEGMENT.1
                ));
            }
        }
    }
    verdict(6, ok, &parts.join("; "));
}

#[test]
fn c07_arrow_audit() {
    let mut ok = true;
    let mut min_margin = f64::INFINITY;
    let mut max_gain = 0.0_f64;
    let mut horizons = Vec::new();
    for inst in rate_instances() {
        let setup = AuditSetup::from_trace(&inst.trace, None, Some(1)).unwrap();
        // weighted norms past the round-off floor measure rounding, not the iteration
        let mut trace = inst.trace.clone();
        let end = inst.resolved();
        trace.rows.truncate(end);
        trace.series.truncate(end);
        horizons.push(end - 1);
        let ledger = audit_arrows(&trace, &setup, inst.lambda).unwrap();
        for a in &ledger.arrows {
            min_margin = min_margin.min(a.margin);
        }
        max_gain = max_gain.max(ledger.gain_product.value());
        ok &= ledger.all_hold() && ledger.gain_product.ln < 0.0;
    }
    verdict(
        7,
        ok,
        &format!("min margin {min_margin:.3e}, max gain product {max_gain:.3e}, horizons K={horizons:?}"),
    );
}

#[test]
fn c08_formula_exactness() {
    let e1 = rel(j1(1.0, 1, 12), 3.0 * (1.0 + 4.0 * 12f64.sqrt()));
    // 12^4.5 = 20736·√12
    let lam = 1.0 - 1.0 / (161_312.0 * 20_736.0 * 12f64.sqrt());
    let e2 = rel(corollary_metropolis(12, 1.0), lam);
    let e3 = rel(pushsum_constants(2, 1).unwrap().q1.value(), 263_168.0 / 255.0);
    let worst = e1.max(e2).max(e3);
    verdict(8, worst <= 1e-12, &format!("relative errors {e1:.1e}, {e2:.1e}, {e3:.1e}"));
}

#[test]
fn c09_igd_bound() {
    let mut ok = true;
    let mut worst = 0.0_f64;
    for inst in 0..6u64 {
        let mut r = rng(900 + inst);
        let n = r.random_range(2..=8);
        let p = r.random_range(1..=3);
        let s: ObjectiveSuite = random_quadratic(&mut r, n, p, 4.0);
        let c = s.constants();
        let (beta, eta) = (1.0 + inst as f64 * 0.5, 0.5 + inst as f64 * 0.3);
        let theta = 1.0 / ((1.0 + eta) * c.l_bar);
        let lambda = (1.0 - theta * c.mu_bar * beta / (beta + 1.0)).sqrt();
        igd_conditions(theta, lambda, c.mu_bar, c.l_bar, beta, eta).unwrap();
        let rho = 0.01 * (1 + inst) as f64;
        let offsets: Vec<DVector<f64>> = (0..n).map(|_| gaussian_vec(&mut r, p).normalize() * rho).collect();
        let pert = if inst % 2 == 0 {
            Perturbation::Fixed(offsets)
        } else {
            Perturbation::Decaying { offsets, rate: 0.5 * (1.0 + lambda) }
        };
        let x_star = s.minimizer().unwrap().clone();
        let mut st = IgdState::init(&s, gaussian_vec(&mut r, p) * 5.0, &pert).unwrap();
        let mut radius = vec![(&st.p - &x_star).norm()];
        let mut dev: Vec<Vec<f64>> = st.s.iter().map(|si| vec![(&st.p - si).norm()]).collect();
        for _ in 0..200 {
            st = igd_step(&st, &s, theta, &pert).unwrap();
            radius.push((&st.p - &x_star).norm());
            for (d, si) in dev.iter_mut().zip(&st.s) {
                d.push((&st.p - si).norm());
            }
        }
        for k in 0..radius.len() {
            let lhs = weighted_ergodic_norm(&radius[..=k], lambda).unwrap();
            let norms: Vec<f64> = dev.iter().map(|d| weighted_ergodic_norm(&d[..=k], lambda).unwrap()).collect();
            let rhs = igd_bound_rhs(radius[0], &norms, lambda, n, c.l, c.mu_bar, c.mu_hat, beta, eta);
            worst = worst.max(lhs / rhs);
            ok &= lhs <= rhs;
        }
    }
    verdict(9, ok, &format!("max lhs/rhs {worst:.4}"));
}

#[test]
fn c10_equivalent_recursion() {
    let mut worst_dev = 0.0_f64;
    let mut worst_rows = 0.0_f64;
    for (_, hist, c) in push_consensus_runs() {
        let rep = equivalent_recursion_check(&hist, &vec![c; hist.len() - 1], 0.1).unwrap();
        worst_dev = worst_dev.max(rep.max_deviation);
        worst_rows = worst_rows.max(rep.row_sum_deviation);
    }
    // time-varying digraphs with a nonzero objective
    for inst in 0..10u64 {
        let mut r = rng(1000 + inst);
        let n = r.random_range(2..=10);
        let p = r.random_range(1..=3);
        let s = random_quadratic(&mut r, n, p, 4.0);
        let base = random_strongly_connected_digraph(n, (2 * n).min(n * (n - 1)), inst).unwrap();
        let seq = subsample_sequence(base, 0.8, inst).unwrap();
        let alpha = 0.02;
        let mut hist = vec![PushDigingState::init(&s, gaussian_block(&mut r, n, p)).unwrap()];
        let mut mats = Vec::new();
        for k in 0..500 {
            let c = out_degree_column(&seq.snapshot(k)).unwrap();
            hist.push(push_diging_step(hist.last().unwrap(), &c, &s, alpha).unwrap());
            mats.push(c);
        }
        let rep = equivalent_recursion_check(&hist, &mats, alpha).unwrap();
        worst_dev = worst_dev.max(rep.max_deviation);
        worst_rows = worst_rows.max(rep.row_sum_deviation);
    }
    // the directed runs of the Huber experiment
    for case in [Case::TiDirected, Case::TvDirected] {
        let steps = StepSizes::tuned(case);
        let problem = huber_problem(1).unwrap();
        let (seq, weights) = case_setup(case, Algorithm::PushDiging, 1).unwrap();
        let alpha = steps.push_diging;
        let mut hist = vec![PushDigingState::init(&problem.suite, DMatrix::zeros(AGENTS, DIM)).unwrap()];
        let mut mats = Vec::new();
        for k in 0..steps.iterations {
            let c = weights.at(&seq, k).unwrap();
            hist.push(push_diging_step(hist.last().unwrap(), &c, &problem.suite, alpha).unwrap());
            mats.push(c);
        }
        let rep = equivalent_recursion_check(&hist, &mats, alpha).unwrap();
        worst_dev = worst_dev.max(rep.max_deviation);
        worst_rows = worst_rows.max(rep.row_sum_deviation);
    }
    verdict(
        10,
        worst_dev <= 1e-10 && worst_rows <= 1e-12,
        &format!("max deviation {worst_dev:.3e}, max row-sum gap {worst_rows:.3e}"),
    );
}

