//! JSON experiment descriptions for `digrate run` and `digrate validate`.
//!
//! Relative paths inside a config resolve against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::section6;
use super::trace::{sidecar, RunTrace};
use crate::algorithms::{run, Algorithm, RunSpec, StepSchedule};
use crate::error::{Error, Result};
use crate::graph::{
    is_jointly_connected, random_strongly_connected_digraph, subsample_sequence, GraphKind, GraphSequence,
    GraphSnapshot,
};
use crate::mixing::{estimate_delta, matrix_from_csv, MixingMatrix, MixingRule, StochasticMode, Weights};
use crate::objective::{finite_difference_discrepancy, load_suite, quadratic_suite, solve_reference, zero_suite, ObjectiveSuite};
use crate::theory::{
    audit_arrows, diging_rate, j2_and_push_rate, pushsum_constants, pushsum_delta, AuditSetup, DeltaSource, GainLedger,
};

/// Environment variable that replaces the config's `seed`.
pub const SEED_ENV: &str = "DIGRATE_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphSpec {
    Path { n: usize },
    Ring { n: usize },
    Complete { n: usize },
    DirectedCycle { n: usize },
    /// Strongly connected digraph with `arcs` arcs, drawn from the run seed.
    RandomDigraph { n: usize, arcs: usize },
    /// Edge-list file (`n=<n> kind=<kind>` header, 1-based `j i` or `j>i` lines).
    EdgeList { path: PathBuf },
    /// Each link of `base` kept independently with probability `fraction` at every step.
    Subsample { base: Box<GraphSpec>, fraction: f64 },
    /// Links of `base` spread over aligned windows of `window` steps.
    WindowPartition { base: Box<GraphSpec>, window: usize },
    /// Periodic sequence of edge-list files.
    Periodic { paths: Vec<PathBuf> },
    /// Directed view of an undirected sequence (each edge becomes two arcs).
    Directed { base: Box<GraphSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MixingSpec {
    Metropolis,
    LazyMetropolis,
    OutDegreeColumn,
    Sinkhorn,
    /// Fixed matrix from a CSV file, used at every step.
    Custom { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// `f_i(x) = (a_i/2)‖x - b_i‖²` with `a_i` uniform in `[1, kappa]` and `b_i ~ N(0, scale² I)`.
    Quadratic {
        n: usize,
        p: usize,
        #[serde(default = "default_kappa")]
        kappa: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// Suite bundle directory written by `save_suite`.
    Bundle { path: PathBuf },
    /// The 12-agent Huber regression problem.
    Huber12,
    Zero { n: usize, p: usize },
}

fn default_kappa() -> f64 {
    4.0
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StartSpec {
    #[default]
    Zero,
    /// Independent `N(0, scale²)` entries.
    Gaussian { scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSpec {
    /// Rate to audit; defaults to the theorem rate for the run's constants.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub b: Option<usize>,
    #[serde(default)]
    pub delta_source: DeltaSource,
    /// Required when `delta_source` is `given`.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Horizon for the empirical δ estimate.
    #[serde(default = "default_delta_horizon")]
    pub horizon: usize,
}

fn default_delta_horizon() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub graph: GraphSpec,
    pub mixing: MixingSpec,
    pub objective: ObjectiveSpec,
    pub step: StepSchedule,
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub start: StartSpec,
    /// Trace file name; defaults to `<algorithm>.csv`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Joint-connectivity window checked by `validate`; defaults to the
    /// sequence's declared window, or 1.
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default)]
    pub audit: Option<AuditSpec>,
}

/// A config together with the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

/// Reads a config file and applies the `DIGRATE_SEED` override.
pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = fs::read_to_string(path)?;
    let mut config = parse_config(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if let Some(seed) = seed_override()? {
        config.seed = seed;
    }
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, base_dir })
}

pub fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Parse(format!("{SEED_ENV}={s} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Seeds for the graph and problem generators, derived from the run seed.
pub fn derived_seeds(seed: u64) -> (u64, u64) {
    (seed, seed ^ 0x9E37_79B9_7F4A_7C15)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_snapshot(path: &Path) -> Result<GraphSnapshot> {
    let text = fs::read_to_string(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    GraphSnapshot::parse_edge_list(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

impl GraphSpec {
    pub fn build(&self, base: &Path, seed: u64) -> Result<GraphSequence> {
        Ok(match self {
            GraphSpec::Path { n } => GraphSequence::constant(GraphSnapshot::path(*n)),
            GraphSpec::Ring { n } => GraphSequence::constant(GraphSnapshot::ring(*n)),
            GraphSpec::Complete { n } => GraphSequence::constant(GraphSnapshot::complete(*n)),
            GraphSpec::DirectedCycle { n } => GraphSequence::constant(GraphSnapshot::directed_cycle(*n)),
            GraphSpec::RandomDigraph { n, arcs } => {
                GraphSequence::constant(random_strongly_connected_digraph(*n, *arcs, seed)?)
            }
            GraphSpec::EdgeList { path } => GraphSequence::constant(read_snapshot(&resolve(base, path))?),
            GraphSpec::Subsample { base: inner, fraction } => {
                subsample_sequence(static_base(inner, base, seed)?, *fraction, seed)?
            }
            GraphSpec::WindowPartition { base: inner, window } => {
                GraphSequence::window_partition(static_base(inner, base, seed)?, *window, seed)?
            }
            GraphSpec::Periodic { paths } => GraphSequence::periodic(
                paths
                    .iter()
                    .map(|p| read_snapshot(&resolve(base, p)))
                    .collect::<Result<Vec<_>>>()?,
            )?,
            GraphSpec::Directed { base: inner } => {
                let seq = inner.build(base, seed)?;
                if seq.kind() != GraphKind::Undirected {
                    return Err(Error::KindMismatch {
                        expected: GraphKind::Undirected.to_string(),
                        got: seq.kind().to_string(),
                    });
                }
                let declared = seq.declared_b();
                let directed = GraphSequence::custom(seq.n(), GraphKind::Directed, move |k| seq.snapshot(k).to_directed());
                match declared {
                    Some(b) => directed.with_declared_b(b),
                    None => directed,
                }
            }
        })
    }

    fn files(&self, base: &Path) -> Vec<PathBuf> {
        match self {
            GraphSpec::EdgeList { path } => vec![resolve(base, path)],
            GraphSpec::Periodic { paths } => paths.iter().map(|p| resolve(base, p)).collect(),
            GraphSpec::Subsample { base: inner, .. }
            | GraphSpec::WindowPartition { base: inner, .. }
            | GraphSpec::Directed { base: inner } => inner.files(base),
            _ => Vec::new(),
        }
    }
}

fn static_base(spec: &GraphSpec, base: &Path, seed: u64) -> Result<GraphSnapshot> {
    match spec {
        GraphSpec::Path { .. }
        | GraphSpec::Ring { .. }
        | GraphSpec::Complete { .. }
        | GraphSpec::DirectedCycle { .. }
        | GraphSpec::RandomDigraph { .. }
        | GraphSpec::EdgeList { .. } => Ok(spec.build(base, seed)?.snapshot(0)),
        _ => Err(Error::Validation(
            "a subsample or window-partition base must be a single graph".into(),
        )),
    }
}

impl MixingSpec {
    pub fn build(&self, base: &Path) -> Result<Weights> {
        Ok(match self {
            MixingSpec::Metropolis => MixingRule::Metropolis.into(),
            MixingSpec::LazyMetropolis => MixingRule::LazyMetropolis.into(),
            MixingSpec::OutDegreeColumn => MixingRule::OutDegreeColumn.into(),
            MixingSpec::Sinkhorn => MixingRule::Sinkhorn.into(),
            MixingSpec::Custom { path } => {
                let path = resolve(base, path);
                let text = fs::read_to_string(&path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
                Weights::Fixed(MixingMatrix::custom(matrix_from_csv(&text)?, None)?)
            }
        })
    }
}

fn random_quadratic(n: usize, p: usize, kappa: f64, scale: f64, seed: u64) -> Result<ObjectiveSuite> {
    if !(kappa >= 1.0) {
        return Err(Error::Validation(format!("kappa = {kappa} must be at least 1")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..=kappa)).collect();
    let b: Vec<DVector<f64>> = (0..n)
        .map(|_| DVector::from_fn(p, |_, _| scale * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    quadratic_suite(&a, &b)
}

impl ObjectiveSpec {
    pub fn build(&self, base: &Path, seed: u64) -> Result<ObjectiveSuite> {
        match self {
            ObjectiveSpec::Quadratic { n, p, kappa, scale } => random_quadratic(*n, *p, *kappa, *scale, seed),
            ObjectiveSpec::Bundle { path } => load_suite(&resolve(base, path)),
            ObjectiveSpec::Huber12 => Ok(section6::huber_problem(seed)?.suite),
            ObjectiveSpec::Zero { n, p } => zero_suite(*n, *p),
        }
    }

    fn files(&self, base: &Path) -> Vec<PathBuf> {
        match self {
            ObjectiveSpec::Bundle { path } => vec![resolve(base, path)],
            _ => Vec::new(),
        }
    }
}

/// Everything needed to call [`run`], materialized from a config.
pub struct Prepared {
    pub seq: GraphSequence,
    pub weights: Weights,
    pub suite: ObjectiveSuite,
    pub x0: DMatrix<f64>,
    pub x_star: DVector<f64>,
    pub graph_seed: u64,
    pub problem_seed: u64,
}

impl LoadedConfig {
    pub fn prepare(&self) -> Result<Prepared> {
        let c = &self.config;
        self.check_static()?;
        let (graph_seed, problem_seed) = derived_seeds(c.seed);
        let seq = c.graph.build(&self.base_dir, graph_seed)?;
        let weights = c.mixing.build(&self.base_dir)?;
        let suite = c.objective.build(&self.base_dir, problem_seed)?;
        if seq.n() != suite.n() {
            return Err(Error::Validation(format!(
                "graph has {} vertices but the objective has {} agents",
                seq.n(),
                suite.n()
            )));
        }
        if let Weights::Rule(rule) = &weights {
            if let Some(kind) = rule.required_kind() {
                if kind != seq.kind() {
                    return Err(Error::Validation(format!(
                        "mixing rule {rule} needs a {kind} graph, got {}",
                        seq.kind()
                    )));
                }
            }
        }
        let x_star = match suite.minimizer() {
            Some(x) => x.clone(),
            None => solve_reference(&suite, 1e-12)?.0,
        };
        let x0 = match c.start {
            StartSpec::Zero => DMatrix::zeros(suite.n(), suite.p()),
            StartSpec::Gaussian { scale } => {
                let mut rng = ChaCha8Rng::seed_from_u64(problem_seed.wrapping_add(1));
                DMatrix::from_fn(suite.n(), suite.p(), |_, _| scale * rng.sample::<f64, _>(StandardNormal))
            }
        };
        Ok(Prepared {
            seq,
            weights,
            suite,
            x0,
            x_star,
            graph_seed,
            problem_seed,
        })
    }

    /// Checks that need no construction: referenced files and step schedule.
    fn check_static(&self) -> Result<()> {
        let c = &self.config;
        for f in c.graph.files(&self.base_dir).into_iter().chain(c.objective.files(&self.base_dir)) {
            if !f.exists() {
                return Err(Error::Validation(format!("referenced file {} does not exist", f.display())));
            }
        }
        if let MixingSpec::Custom { path } = &c.mixing {
            let p = resolve(&self.base_dir, path);
            if !p.exists() {
                return Err(Error::Validation(format!("referenced file {} does not exist", p.display())));
            }
        }
        if c.algorithm.is_tracking() && !matches!(c.step, StepSchedule::Constant { .. }) {
            return Err(Error::Validation(format!("{} needs a constant step", c.algorithm)));
        }
        if c.iterations == 0 {
            return Err(Error::Validation("iterations must be positive".into()));
        }
        Ok(())
    }

    pub fn output_path(&self, out_dir: Option<&Path>) -> PathBuf {
        let name = self
            .config
            .output
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}.csv", self.config.algorithm)));
        match out_dir {
            Some(dir) => dir.join(name.file_name().map_or(name.clone(), PathBuf::from)),
            None => name,
        }
    }

    fn delta_for(&self, prep: &Prepared, b: usize) -> Result<Option<f64>> {
        let Some(audit) = self.config.audit else {
            return Ok(None);
        };
        Ok(Some(match audit.delta_source {
            DeltaSource::Given => audit
                .delta
                .ok_or_else(|| Error::Validation("audit.delta_source = given needs audit.delta".into()))?,
            DeltaSource::Empirical => {
                estimate_delta(&prep.seq, &prep.weights, b, audit.horizon.max(b))?.delta_empirical
            }
            DeltaSource::Bound => {
                if self.config.algorithm.is_push() {
                    pushsum_delta(prep.suite.n(), prep.seq.declared_b().unwrap_or(1), b as f64)?.value()
                } else {
                    let n = prep.suite.n() as f64;
                    1.0 - 1.0 / (2.0 * n * n * n)
                }
            }
        }))
    }

    fn window(&self, seq: &GraphSequence) -> usize {
        self.config
            .audit
            .and_then(|a| a.b)
            .or(self.config.window)
            .or(seq.declared_b())
            .unwrap_or(1)
    }

    /// Runs the experiment. The returned ledger is present when the config has an audit block.
    pub fn execute(&self) -> Result<(RunTrace, Option<GainLedger>)> {
        let prep = self.prepare()?;
        let b = self.window(&prep.seq);
        let delta = self.delta_for(&prep, b)?;
        let mut trace = run(&RunSpec {
            algorithm: self.config.algorithm,
            seq: &prep.seq,
            weights: &prep.weights,
            suite: &prep.suite,
            step: self.config.step,
            iterations: self.config.iterations,
            x0: prep.x0.clone(),
            x_star: prep.x_star.clone(),
            graph_seed: Some(prep.graph_seed),
            problem_seed: Some(prep.problem_seed),
            delta,
        })?;
        if self.config.audit.is_some() {
            trace.meta.b = Some(b);
        }
        let ledger = match self.config.audit {
            None => None,
            Some(a) => Some(audit_trace(&trace, a.lambda, None, None)?),
        };
        Ok((trace, ledger))
    }

    /// Dry-run checks. Returns human-readable lines describing what passed.
    pub fn validate(&self) -> Result<Vec<String>> {
        let c = &self.config;
        let prep = self.prepare()?;
        let mut report = vec![format!(
            "graph {} on {} vertices ({})",
            prep.seq.describe(),
            prep.seq.n(),
            prep.seq.kind()
        )];
        let b = c.window.or(prep.seq.declared_b()).unwrap_or(1);
        let horizon = c.iterations.min(2000).max(b);
        let jc = is_jointly_connected(&prep.seq, b, horizon)?;
        if let Some(t) = jc.first_failure {
            return Err(Error::Validation(format!(
                "graph sequence is not jointly connected over windows of length {b}: window {t} (steps {}..{}) fails",
                t * b,
                (t + 1) * b - 1
            )));
        }
        report.push(format!("jointly connected over windows of length {b} up to step {horizon}"));
        let mode = if c.algorithm.is_push() {
            StochasticMode::Column
        } else {
            StochasticMode::Doubly
        };
        let checked = c.iterations.min(200);
        for k in 0..checked {
            let m = prep.weights.at(&prep.seq, k).map_err(|e| Error::Validation(format!("step {k}: {e}")))?;
            m.require(mode).map_err(|e| Error::Validation(format!("step {k}: {e}")))?;
        }
        report.push(format!("mixing matrices {mode} stochastic on the first {checked} steps"));
        let p = prep.suite.p();
        let mut rng = ChaCha8Rng::seed_from_u64(prep.problem_seed);
        let points: Vec<DVector<f64>> = (0..3)
            .map(|_| DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .chain(std::iter::once(prep.x_star.clone()))
            .collect();
        let dirs: Vec<DVector<f64>> = (0..p).map(|i| DVector::from_fn(p, |j, _| f64::from(u8::from(i == j)))).collect();
        let fd = finite_difference_discrepancy(&prep.suite, &points, &dirs, 1e-6);
        if !(fd <= 1e-5) {
            return Err(Error::Validation(format!("gradient finite-difference discrepancy {fd:e} exceeds 1e-5")));
        }
        report.push(format!("gradient finite-difference discrepancy {fd:.2e}"));
        Ok(report)
    }
}

/// Arrow audit of a finished trace. Without `lambda`, the theorem rate is
/// computed from the recorded constants, `δ` and `B`.
pub fn audit_trace(trace: &RunTrace, lambda: Option<f64>, delta: Option<f64>, b: Option<usize>) -> Result<GainLedger> {
    let setup = AuditSetup::from_trace(trace, delta, b)?;
    let lambda = match lambda {
        Some(l) => l,
        None => {
            let c = trace.meta.constants;
            match setup.algorithm {
                Algorithm::PushDiging => {
                    let pc = pushsum_constants(setup.n, setup.b)?;
                    j2_and_push_rate(pc.q1, pc.vinv_bound, c.kappa_bar, setup.b, setup.n, setup.delta, c.mu_bar, setup.alpha)?
                        .rate
                        .lambda
                }
                _ => diging_rate(setup.alpha, c.kappa_bar, setup.b, setup.n, setup.delta, c.mu_bar)?.lambda,
            }
        }
    };
    audit_arrows(trace, &setup, lambda)
}

/// Writes the trace and, when present, the ledger as `<path>.audit.json`.
pub fn write_outputs(path: &Path, trace: &RunTrace, ledger: Option<&GainLedger>) -> Result<()> {
    trace.write(path)?;
    if let Some(l) = ledger {
        fs::write(sidecar(path, ".audit.json"), serde_json::to_string_pretty(l)? + "\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> &'static str {
        r#"{
            "algorithm": "diging",
            "graph": {"generator": "ring", "n": 5},
            "mixing": {"rule": "metropolis"},
            "objective": {"family": "quadratic", "n": 5, "p": 2},
            "step": {"kind": "constant", "alpha": 0.05},
            "iterations": 50,
            "seed": 4
        }"#
    }

    #[test]
    fn parses_and_runs() {
        let cfg = LoadedConfig {
            config: parse_config(sample()).unwrap(),
            base_dir: PathBuf::new(),
        };
        let lines = cfg.validate().unwrap();
        assert_eq!(lines.len(), 4);
        let (t, ledger) = cfg.execute().unwrap();
        assert_eq!(t.rows.len(), 51);
        assert!(ledger.is_none());
        assert_eq!(t.rows[0].residual, 1.0);
    }

    #[test]
    fn unknown_field_names_the_field() {
        let bad = sample().replace("\"seed\"", "\"sead\"");
        let e = parse_config(&bad).unwrap_err().to_string();
        assert!(e.contains("sead") && e.contains("line"), "{e}");
    }

    #[test]
    fn kind_mismatch_is_a_validation_error() {
        let bad = sample().replace("metropolis", "out-degree-column");
        let cfg = LoadedConfig {
            config: parse_config(&bad).unwrap(),
            base_dir: PathBuf::new(),
        };
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_file_is_reported() {
        let bad = sample().replace(
            r#"{"generator": "ring", "n": 5}"#,
            r#"{"generator": "edge-list", "path": "nowhere.txt"}"#,
        );
        let cfg = LoadedConfig {
            config: parse_config(&bad).unwrap(),
            base_dir: PathBuf::new(),
        };
        let e = cfg.validate().unwrap_err().to_string();
        assert!(e.contains("nowhere.txt"), "{e}");
    }

    #[test]
    fn disconnected_window_is_named() {
        let bad = sample().replace(
            r#"{"generator": "ring", "n": 5}"#,
            r#"{"generator": "subsample", "base": {"generator": "ring", "n": 5}, "fraction": 0.3}"#,
        );
        let cfg = LoadedConfig {
            config: parse_config(&bad).unwrap(),
            base_dir: PathBuf::new(),
        };
        let e = cfg.validate().unwrap_err().to_string();
        assert!(e.contains("fails") && e.contains("window "), "{e}");
    }
}
