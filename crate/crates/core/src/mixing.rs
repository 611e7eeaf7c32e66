//! Mixing matrices built from graph snapshots, stochasticity checks and
//! consensus contraction measurements.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphKind, GraphSequence, GraphSnapshot};
use crate::linalg::averaging_matrix;

/// Absolute tolerance on row and column sums.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingRule {
    Metropolis,
    LazyMetropolis,
    OutDegreeColumn,
    /// Sinkhorn balancing of `I + A` for a digraph adjacency `A`: a doubly
    /// stochastic matrix supported on the arcs plus self-loops.
    Sinkhorn,
    Custom,
}

impl fmt::Display for MixingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MixingRule::Metropolis => "metropolis",
            MixingRule::LazyMetropolis => "lazy-metropolis",
            MixingRule::OutDegreeColumn => "out-degree-column",
            MixingRule::Sinkhorn => "sinkhorn",
            MixingRule::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl MixingRule {
    pub fn apply(self, g: &GraphSnapshot) -> Result<MixingMatrix> {
        match self {
            MixingRule::Metropolis => metropolis(g),
            MixingRule::LazyMetropolis => lazy_metropolis(g),
            MixingRule::OutDegreeColumn => out_degree_column(g),
            MixingRule::Sinkhorn => sinkhorn_balanced(g),
            MixingRule::Custom => Err(Error::InvalidArgument(
                "the custom rule needs an explicit matrix".into(),
            )),
        }
    }

    /// Graph kind the rule is defined on; `None` when any kind is accepted.
    pub fn required_kind(self) -> Option<GraphKind> {
        match self {
            MixingRule::Metropolis | MixingRule::LazyMetropolis => Some(GraphKind::Undirected),
            MixingRule::OutDegreeColumn => Some(GraphKind::Directed),
            MixingRule::Sinkhorn | MixingRule::Custom => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StochasticMode {
    Doubly,
    Column,
    Row,
}

impl fmt::Display for StochasticMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StochasticMode::Doubly => f.write_str("doubly"),
            StochasticMode::Column => f.write_str("column"),
            StochasticMode::Row => f.write_str("row"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Row,
    Column,
}

/// Outcome of [`validate_stochasticity`].
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticityReport {
    pub mode: StochasticMode,
    pub max_deviation: f64,
    /// Every sum off by more than the tolerance, in row-then-column order.
    pub violations: Vec<(Axis, usize, f64)>,
    pub negative_entries: Vec<(usize, usize)>,
}

impl StochasticityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.negative_entries.is_empty()
    }

    pub fn first_violation(&self) -> Option<(Axis, usize, f64)> {
        self.violations.first().copied()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            return Ok(self);
        }
        let detail = match (self.first_violation(), self.negative_entries.first()) {
            (Some((axis, idx, dev)), _) => format!(
                "{} {idx} sums to 1{dev:+e} (max deviation {:e})",
                match axis {
                    Axis::Row => "row",
                    Axis::Column => "column",
                },
                self.max_deviation
            ),
            (None, Some((i, j))) => format!("negative entry at ({i},{j})"),
            (None, None) => unreachable!(),
        };
        Err(Error::NotStochastic {
            mode: self.mode.to_string(),
            detail,
        })
    }
}

/// Checks the sums required by `mode` to within [`STOCHASTIC_TOL`] and
/// entrywise nonnegativity.
pub fn validate_stochasticity(m: &DMatrix<f64>, mode: StochasticMode) -> StochasticityReport {
    let mut violations = Vec::new();
    let mut max_deviation = 0.0_f64;
    let (rows, cols) = match mode {
        StochasticMode::Doubly => (true, true),
        StochasticMode::Column => (false, true),
        StochasticMode::Row => (true, false),
    };
    if rows {
        for (i, r) in m.row_iter().enumerate() {
            let dev = r.sum() - 1.0;
            max_deviation = max_deviation.max(dev.abs());
            if dev.abs() > STOCHASTIC_TOL {
                violations.push((Axis::Row, i, dev));
            }
        }
    }
    if cols {
        for (j, c) in m.column_iter().enumerate() {
            let dev = c.sum() - 1.0;
            max_deviation = max_deviation.max(dev.abs());
            if dev.abs() > STOCHASTIC_TOL {
                violations.push((Axis::Column, j, dev));
            }
        }
    }
    let negative_entries = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .filter(|&(i, j)| m[(i, j)] < 0.0)
        .collect();
    StochasticityReport {
        mode,
        max_deviation,
        violations,
        negative_entries,
    }
}

/// A nonnegative weight matrix together with the rule and snapshot it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    entries: DMatrix<f64>,
    rule: MixingRule,
    source: Option<GraphSnapshot>,
    doubly: bool,
    column: bool,
}

impl MixingMatrix {
    fn certified(entries: DMatrix<f64>, rule: MixingRule, source: Option<GraphSnapshot>) -> Self {
        let doubly = validate_stochasticity(&entries, StochasticMode::Doubly).passed();
        let column = doubly || validate_stochasticity(&entries, StochasticMode::Column).passed();
        Self {
            entries,
            rule,
            source,
            doubly,
            column,
        }
    }

    /// Wraps an externally supplied matrix. When a snapshot is given the
    /// sparsity pattern must respect it.
    pub fn custom(entries: DMatrix<f64>, source: Option<GraphSnapshot>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::Dimension(format!(
                "mixing matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if let Some(g) = &source {
            if g.n() != entries.nrows() {
                return Err(Error::Dimension(format!(
                    "matrix is {0}x{0} but the snapshot has {1} vertices",
                    entries.nrows(),
                    g.n()
                )));
            }
        }
        let m = Self::certified(entries, MixingRule::Custom, source);
        if let Some((i, j)) = m.pattern_violation() {
            return Err(Error::Validation(format!(
                "entry ({i},{j}) is nonzero but {j} does not send to {i}"
            )));
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn rule(&self) -> MixingRule {
        self.rule
    }

    pub fn source(&self) -> Option<&GraphSnapshot> {
        self.source.as_ref()
    }

    pub fn is_doubly_stochastic(&self) -> bool {
        self.doubly
    }

    pub fn is_column_stochastic(&self) -> bool {
        self.column
    }

    pub fn require(&self, mode: StochasticMode) -> Result<()> {
        let ok = match mode {
            StochasticMode::Doubly => self.doubly,
            StochasticMode::Column => self.column,
            StochasticMode::Row => {
                return validate_stochasticity(&self.entries, mode).into_result().map(|_| ())
            }
        };
        if ok {
            Ok(())
        } else {
            validate_stochasticity(&self.entries, mode).into_result().map(|_| ())
        }
    }

    /// First off-diagonal nonzero `(i, j)` whose link `j -> i` is absent from the source.
    pub fn pattern_violation(&self) -> Option<(usize, usize)> {
        let g = self.source.as_ref()?;
        let n = self.n();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .find(|&(i, j)| i != j && self.entries[(i, j)] != 0.0 && !g.has_link(j, i))
    }

    /// Row-major dense CSV with 17 significant digits.
    pub fn to_csv(&self) -> String {
        matrix_to_csv(&self.entries)
    }
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in m.row_iter() {
        let line: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: `{t}`: {e}", no + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} fields, found {}",
                    no + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_row_iterator(nr, nc, rows.into_iter().flatten()))
}

fn require_kind(g: &GraphSnapshot, kind: GraphKind) -> Result<()> {
    if g.kind() != kind {
        return Err(Error::KindMismatch {
            expected: kind.to_string(),
            got: g.kind().to_string(),
        });
    }
    Ok(())
}

fn symmetric_from_edges(g: &GraphSnapshot, weight: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    let n = g.n();
    let mut w = DMatrix::zeros(n, n);
    for (a, b) in g.links() {
        let v = weight(a, b);
        w[(a, b)] = v;
        w[(b, a)] = v;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    w
}

/// `W_ij = 1/(1 + max(d_i, d_j))` on edges, diagonal completing rows to one.
pub fn metropolis(g: &GraphSnapshot) -> Result<MixingMatrix> {
    require_kind(g, GraphKind::Undirected)?;
    let d = g.degrees();
    let w = symmetric_from_edges(g, |a, b| 1.0 / (1 + d[a].max(d[b])) as f64);
    Ok(MixingMatrix::certified(w, MixingRule::Metropolis, Some(g.clone())))
}

/// `W_ij = 1/(2 max(d_i, d_j))` on edges; diagonal at least one half.
pub fn lazy_metropolis(g: &GraphSnapshot) -> Result<MixingMatrix> {
    require_kind(g, GraphKind::Undirected)?;
    let d = g.degrees();
    let w = symmetric_from_edges(g, |a, b| 1.0 / (2 * d[a].max(d[b])) as f64);
    Ok(MixingMatrix::certified(w, MixingRule::LazyMetropolis, Some(g.clone())))
}

/// `C_ij = 1/(d_j^out + 1)` for arcs `j -> i` and for the implicit self-arc `i = j`.
pub fn out_degree_column(g: &GraphSnapshot) -> Result<MixingMatrix> {
    require_kind(g, GraphKind::Directed)?;
    let n = g.n();
    let d = g.out_degrees();
    let mut c = DMatrix::zeros(n, n);
    for j in 0..n {
        c[(j, j)] = 1.0 / (d[j] + 1) as f64;
    }
    for (j, i) in g.links() {
        c[(i, j)] = 1.0 / (d[j] + 1) as f64;
    }
    Ok(MixingMatrix::certified(c, MixingRule::OutDegreeColumn, Some(g.clone())))
}

/// Doubly stochastic weights on `I + A` by alternating row and column
/// normalization. Converges when the snapshot is strongly connected.
pub fn sinkhorn_balanced(g: &GraphSnapshot) -> Result<MixingMatrix> {
    const MAX_SWEEPS: usize = 100_000;
    let n = g.n();
    let mut m = DMatrix::<f64>::identity(n, n);
    for (j, i) in g.links() {
        m[(i, j)] = 1.0;
        if g.kind() == GraphKind::Undirected {
            m[(j, i)] = 1.0;
        }
    }
    for _ in 0..MAX_SWEEPS {
        for mut r in m.row_iter_mut() {
            let s = r.sum();
            r /= s;
        }
        for mut c in m.column_iter_mut() {
            let s = c.sum();
            c /= s;
        }
        let row_dev = m.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max);
        if row_dev <= 1e-15 {
            let out = MixingMatrix::certified(m, MixingRule::Sinkhorn, Some(g.clone()));
            return match out.is_doubly_stochastic() {
                true => Ok(out),
                false => validate_stochasticity(out.matrix(), StochasticMode::Doubly)
                    .into_result()
                    .map(|_| out),
            };
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_SWEEPS,
        last: m.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max),
    })
}

/// Either a rule applied to each snapshot or one fixed matrix used at every step.
#[derive(Debug, Clone)]
pub enum Weights {
    Rule(MixingRule),
    Fixed(MixingMatrix),
}

impl From<MixingRule> for Weights {
    fn from(r: MixingRule) -> Self {
        Weights::Rule(r)
    }
}

impl Weights {
    pub fn matrix_for(&self, g: &GraphSnapshot) -> Result<MixingMatrix> {
        match self {
            Weights::Rule(r) => r.apply(g),
            Weights::Fixed(m) => Ok(m.clone()),
        }
    }

    pub fn at(&self, seq: &GraphSequence, k: usize) -> Result<MixingMatrix> {
        match self {
            Weights::Rule(r) => r.apply(&seq.snapshot(k)),
            Weights::Fixed(m) => Ok(m.clone()),
        }
    }
}

/// Power iteration cap for [`spectral_norm`].
pub const POWER_ITERATION_CAP: usize = 100_000;

/// Extra deterministic start vectors tried by [`spectral_norm`].
const EXTRA_STARTS: u64 = 3;

/// Largest singular value by power iteration on `AᵀA`.
///
/// The first start vector is the normalized all-ones vector perturbed by a
/// fixed index-dependent sequence; iteration stops once the Rayleigh quotient
/// changes by at most `1e-12` relative. A single start can be (nearly)
/// orthogonal to the top singular vector, in which case the iteration settles
/// on a smaller singular value, so a few fixed-seed Gaussian starts are run as
/// well and the largest result is kept.
pub fn spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    let n = a.ncols();
    if n == 0 {
        return Ok(0.0);
    }
    let phi = 0.5 * (1.0 + 5f64.sqrt());
    let base = 1.0 / (n as f64).sqrt();
    let ata = a.transpose() * a;
    let mut best = power_iteration(&ata, DVector::from_fn(n, |i, _| base + 0.1 * ((i + 1) as f64 * phi).fract()))?;
    for s in 0..EXTRA_STARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0000 + s);
        let start = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        best = best.max(power_iteration(&ata, start)?);
    }
    Ok(best)
}

fn power_iteration(ata: &DMatrix<f64>, mut x: DVector<f64>) -> Result<f64> {
    x.normalize_mut();
    let mut rho = (ata * &x).dot(&x);
    for _ in 0..POWER_ITERATION_CAP {
        let mut next = ata * &x;
        let norm = next.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        next /= norm;
        let rho_next = (ata * &next).dot(&next);
        x = next;
        if (rho_next - rho).abs() <= 1e-12 * rho_next {
            return Ok(rho_next.max(0.0).sqrt());
        }
        rho = rho_next;
    }
    Err(Error::NoConvergence {
        iterations: POWER_ITERATION_CAP,
        last: rho.max(0.0).sqrt(),
    })
}

/// `σ_max(M - 11ᵀ/n)`.
pub fn spectral_deviation(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    spectral_norm(&(m - averaging_matrix(m.nrows())))
}

/// Finite-horizon contraction measurement for `B`-step products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionEstimate {
    pub b: usize,
    pub horizon: usize,
    pub delta_empirical: f64,
    /// `(k, δ(k))` for each measured window ending at `k`.
    pub per_window: Vec<(usize, f64)>,
}

/// `W_B(k) = W(k) W(k-1) ... W(k-B+1)`.
pub fn window_product(weights: &Weights, seq: &GraphSequence, k: usize, b: usize) -> Result<DMatrix<f64>> {
    if b == 0 || k + 1 < b {
        return Err(Error::InvalidArgument(format!(
            "window product needs 1 <= B <= k+1, got B={b}, k={k}"
        )));
    }
    let n = seq.n();
    let mut prod = DMatrix::identity(n, n);
    for s in (k + 1 - b)..=k {
        prod = weights.at(seq, s)?.matrix() * prod;
    }
    Ok(prod)
}

/// Supremum of `δ(k)` over `k` in `[B-1, horizon]`.
pub fn estimate_delta(
    seq: &GraphSequence,
    weights: &Weights,
    b: usize,
    horizon: usize,
) -> Result<ContractionEstimate> {
    if b == 0 || horizon < b {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= B <= horizon, got B={b}, horizon={horizon}"
        )));
    }
    let n = seq.n();
    let mats = (0..=horizon)
        .map(|k| weights.at(seq, k).map(|m| m.entries))
        .collect::<Result<Vec<_>>>()?;
    let mut per_window = Vec::with_capacity(horizon + 2 - b);
    let mut delta = 0.0_f64;
    for k in (b - 1)..=horizon {
        let mut prod = DMatrix::identity(n, n);
        for m in &mats[k + 1 - b..=k] {
            prod = m * prod;
        }
        let d = spectral_deviation(&prod)?;
        delta = delta.max(d);
        per_window.push((k, d));
    }
    Ok(ContractionEstimate {
        b,
        horizon,
        delta_empirical: delta,
        per_window,
    })
}
