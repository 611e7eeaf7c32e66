//! Component objectives `f_i`, their gradient oracles and the smoothness and
//! strong convexity constants derived from them.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::IterateBlock;

/// Huber penalty `a²/2` for `|a| ≤ xi`, `xi(|a| - xi/2)` beyond.
pub fn huber(a: f64, xi: f64) -> f64 {
    if a.abs() <= xi {
        0.5 * a * a
    } else {
        xi * (a.abs() - 0.5 * xi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ComponentFunction {
    /// `(a/2)‖x - b‖²`.
    Quadratic { a: f64, b: DVector<f64> },
    /// `Σ_j H_xi(m_j·x - y_j)` over the rows `m_j` of `rows`.
    Huber {
        rows: DMatrix<f64>,
        targets: DVector<f64>,
        xi: f64,
        lipschitz: f64,
    },
    Zero { p: usize },
}

impl ComponentFunction {
    pub fn quadratic(a: f64, b: DVector<f64>) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::InvalidArgument(format!("curvature {a} must be positive")));
        }
        Ok(ComponentFunction::Quadratic { a, b })
    }

    pub fn huber(rows: DMatrix<f64>, targets: DVector<f64>, xi: f64) -> Result<Self> {
        if !(xi > 0.0) {
            return Err(Error::InvalidArgument(format!("Huber threshold {xi} must be positive")));
        }
        if rows.nrows() != targets.len() {
            return Err(Error::Dimension(format!(
                "{} rows but {} targets",
                rows.nrows(),
                targets.len()
            )));
        }
        let gram = rows.transpose() * &rows;
        let lipschitz = SymmetricEigen::new(gram)
            .eigenvalues
            .iter()
            .fold(0.0_f64, |m, &v| m.max(v));
        Ok(ComponentFunction::Huber {
            rows,
            targets,
            xi,
            lipschitz,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            ComponentFunction::Quadratic { b, .. } => b.len(),
            ComponentFunction::Huber { rows, .. } => rows.ncols(),
            ComponentFunction::Zero { p } => *p,
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        match self {
            ComponentFunction::Quadratic { a, b } => 0.5 * a * (x - b).norm_squared(),
            ComponentFunction::Huber { rows, targets, xi, .. } => {
                (rows * x - targets).iter().map(|&r| huber(r, *xi)).sum()
            }
            ComponentFunction::Zero { .. } => 0.0,
        }
    }

    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            ComponentFunction::Quadratic { a, b } => (x - b) * *a,
            ComponentFunction::Huber { rows, targets, xi, .. } => {
                let r = (rows * x - targets).map(|v| v.clamp(-xi, *xi));
                rows.transpose() * r
            }
            ComponentFunction::Zero { p } => DVector::zeros(*p),
        }
    }

    /// Lipschitz constant `L_i` of the gradient.
    pub fn lipschitz(&self) -> f64 {
        match self {
            ComponentFunction::Quadratic { a, .. } => *a,
            ComponentFunction::Huber { lipschitz, .. } => *lipschitz,
            ComponentFunction::Zero { .. } => 0.0,
        }
    }

    /// Strong convexity modulus `μ_i`.
    pub fn strong_convexity(&self) -> f64 {
        match self {
            ComponentFunction::Quadratic { a, .. } => *a,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Quadratic,
    Huber,
    Zero,
}

/// `L = max L_i`, `L̄ = mean L_i`, `μ̄ = mean μ_i`, `μ̂ = max μ_i`, `κ̄ = L/μ̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConstants {
    pub l: f64,
    pub l_bar: f64,
    pub mu_bar: f64,
    pub mu_hat: f64,
    pub kappa_bar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSuite {
    family: Family,
    components: Vec<ComponentFunction>,
    p: usize,
    minimizer: Option<DVector<f64>>,
    mu_bar_override: Option<f64>,
}

impl ObjectiveSuite {
    fn new(family: Family, components: Vec<ComponentFunction>) -> Result<Self> {
        let p = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("a suite needs at least one component".into()))?
            .dim();
        if let Some(c) = components.iter().find(|c| c.dim() != p) {
            return Err(Error::Dimension(format!(
                "component of dimension {} in a suite of dimension {p}",
                c.dim()
            )));
        }
        Ok(Self {
            family,
            components,
            p,
            minimizer: None,
            mu_bar_override: None,
        })
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn components(&self) -> &[ComponentFunction] {
        &self.components
    }

    pub fn minimizer(&self) -> Option<&DVector<f64>> {
        self.minimizer.as_ref()
    }

    pub fn with_minimizer(mut self, x: DVector<f64>) -> Result<Self> {
        if x.len() != self.p {
            return Err(Error::Dimension(format!("minimizer has length {}, expected {}", x.len(), self.p)));
        }
        self.minimizer = Some(x);
        Ok(self)
    }

    /// Replaces `μ̄` by an effective value for bound evaluation, e.g. the
    /// curvature of the quadratic zone of a Huber problem.
    pub fn with_mu_bar_override(mut self, mu_bar: f64) -> Result<Self> {
        if !(mu_bar > 0.0) {
            return Err(Error::InvalidArgument(format!("effective μ̄ {mu_bar} must be positive")));
        }
        self.mu_bar_override = Some(mu_bar);
        Ok(self)
    }

    pub fn mu_bar_override(&self) -> Option<f64> {
        self.mu_bar_override
    }

    /// The override also lifts `μ̂` to at least the effective `μ̄`.
    pub fn constants(&self) -> SuiteConstants {
        let n = self.n() as f64;
        let l = self.components.iter().map(|c| c.lipschitz()).fold(0.0, f64::max);
        let l_bar = self.components.iter().map(|c| c.lipschitz()).sum::<f64>() / n;
        let raw_mu_bar = self.components.iter().map(|c| c.strong_convexity()).sum::<f64>() / n;
        let raw_mu_hat = self.components.iter().map(|c| c.strong_convexity()).fold(0.0, f64::max);
        let mu_bar = self.mu_bar_override.unwrap_or(raw_mu_bar);
        let mu_hat = raw_mu_hat.max(mu_bar);
        SuiteConstants {
            l,
            l_bar,
            mu_bar,
            mu_hat,
            kappa_bar: l / mu_bar,
        }
    }

    /// `f(x) = (1/n) Σ f_i(x)`.
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.components.iter().map(|c| c.eval(x)).sum::<f64>() / self.n() as f64
    }

    /// `∇f(x) = (1/n) Σ ∇f_i(x)`.
    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.p);
        for c in &self.components {
            g += c.grad(x);
        }
        g / self.n() as f64
    }

    fn check_block(&self, x: &IterateBlock) -> Result<()> {
        if x.nrows() != self.n() || x.ncols() != self.p {
            return Err(Error::Dimension(format!(
                "block is {}x{}, suite expects {}x{}",
                x.nrows(),
                x.ncols(),
                self.n(),
                self.p
            )));
        }
        Ok(())
    }

    /// Row `i` of the result is `∇f_i(x_i)ᵀ`.
    pub fn block_gradient(&self, x: &IterateBlock) -> Result<IterateBlock> {
        self.check_block(x)?;
        let mut g = IterateBlock::zeros(self.n(), self.p);
        for (i, c) in self.components.iter().enumerate() {
            let xi = x.row(i).transpose();
            g.set_row(i, &c.grad(&xi).transpose());
        }
        Ok(g)
    }

    /// `Σ_i f_i(x_i)`.
    pub fn block_value(&self, x: &IterateBlock) -> Result<f64> {
        self.check_block(x)?;
        Ok(self
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| c.eval(&x.row(i).transpose()))
            .sum())
    }
}

pub fn quadratic_suite(curvatures: &[f64], targets: &[DVector<f64>]) -> Result<ObjectiveSuite> {
    if curvatures.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} curvatures but {} targets",
            curvatures.len(),
            targets.len()
        )));
    }
    let components = curvatures
        .iter()
        .zip(targets)
        .map(|(&a, b)| ComponentFunction::quadratic(a, b.clone()))
        .collect::<Result<Vec<_>>>()?;
    let suite = ObjectiveSuite::new(Family::Quadratic, components)?;
    let total: f64 = curvatures.iter().sum();
    let mut xs = DVector::zeros(suite.p());
    for (&a, b) in curvatures.iter().zip(targets) {
        xs += b * a;
    }
    suite.with_minimizer(xs / total)
}

/// One Huber component per agent; `rows[i]` is `m_i x p`, `targets[i]` has length `m_i`.
pub fn huber_regression_suite(rows: &[DMatrix<f64>], targets: &[DVector<f64>], xi: f64) -> Result<ObjectiveSuite> {
    if rows.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} row blocks but {} target vectors",
            rows.len(),
            targets.len()
        )));
    }
    let components = rows
        .iter()
        .zip(targets)
        .map(|(m, y)| ComponentFunction::huber(m.clone(), y.clone(), xi))
        .collect::<Result<Vec<_>>>()?;
    ObjectiveSuite::new(Family::Huber, components)
}

pub fn zero_suite(n: usize, p: usize) -> Result<ObjectiveSuite> {
    ObjectiveSuite::new(Family::Zero, vec![ComponentFunction::Zero { p }; n])
}

/// Iteration cap for [`solve_reference`].
pub const REFERENCE_ITERATION_CAP: usize = 2_000_000;

/// Centralized gradient descent from the origin with step `1/L̄` until
/// `‖∇f‖ ≤ tolerance`. Returns the point and the achieved gradient norm.
pub fn solve_reference(suite: &ObjectiveSuite, tolerance: f64) -> Result<(DVector<f64>, f64)> {
    let step = 1.0 / suite.constants().l_bar;
    if !step.is_finite() {
        return Err(Error::InvalidArgument("L̄ = 0: every point is a minimizer".into()));
    }
    let mut x = DVector::zeros(suite.p());
    for _ in 0..REFERENCE_ITERATION_CAP {
        let g = suite.grad(&x);
        let gn = g.norm();
        if gn <= tolerance {
            return Ok((x, gn));
        }
        x -= g * step;
    }
    Err(Error::IterationCap(REFERENCE_ITERATION_CAP))
}

/// Largest central-difference discrepancy
/// `|(f(x+εd) - f(x-εd))/(2ε) - ⟨∇f(x), d⟩| / (|f(x)| + 1)` over all
/// components and the given probe directions.
pub fn finite_difference_discrepancy(
    suite: &ObjectiveSuite,
    points: &[DVector<f64>],
    directions: &[DVector<f64>],
    eps: f64,
) -> f64 {
    let mut worst = 0.0_f64;
    for c in suite.components() {
        for x in points {
            let g = c.grad(x);
            let scale = c.eval(x).abs() + 1.0;
            for d in directions {
                let fd = (c.eval(&(x + d * eps)) - c.eval(&(x - d * eps))) / (2.0 * eps);
                worst = worst.max((fd - g.dot(d)).abs() / scale);
            }
        }
    }
    worst
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    family: Family,
    n: usize,
    p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    xi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    minimizer: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu_bar_override: Option<f64>,
}

const MANIFEST: &str = "manifest.json";

/// Writes `manifest.json` plus `curvatures.csv`/`targets.csv` (quadratic) or
/// `rows.csv`/`targets.csv` (Huber, first column is the agent index).
pub fn save_suite(suite: &ObjectiveSuite, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = Manifest {
        family: suite.family,
        n: suite.n(),
        p: suite.p,
        xi: None,
        minimizer: suite.minimizer.as_ref().map(|m| m.iter().copied().collect()),
        mu_bar_override: suite.mu_bar_override,
    };
    match suite.family {
        Family::Quadratic => {
            let mut curv = csv::Writer::from_path(dir.join("curvatures.csv"))?;
            let mut targ = csv::Writer::from_path(dir.join("targets.csv"))?;
            curv.write_record(["agent", "a"])?;
            let mut header = vec!["agent".to_string()];
            header.extend((0..suite.p).map(|j| format!("b{j}")));
            targ.write_record(&header)?;
            for (i, c) in suite.components.iter().enumerate() {
                if let ComponentFunction::Quadratic { a, b } = c {
                    curv.write_record([i.to_string(), a.to_string()])?;
                    let mut rec = vec![i.to_string()];
                    rec.extend(b.iter().map(f64::to_string));
                    targ.write_record(&rec)?;
                }
            }
            curv.flush()?;
            targ.flush()?;
        }
        Family::Huber => {
            let mut rows_w = csv::Writer::from_path(dir.join("rows.csv"))?;
            let mut targ = csv::Writer::from_path(dir.join("targets.csv"))?;
            let mut header = vec!["agent".to_string()];
            header.extend((0..suite.p).map(|j| format!("m{j}")));
            rows_w.write_record(&header)?;
            targ.write_record(["agent", "y"])?;
            for (i, c) in suite.components.iter().enumerate() {
                if let ComponentFunction::Huber { rows, targets, xi, .. } = c {
                    manifest.xi = Some(*xi);
                    for (r, y) in rows.row_iter().zip(targets.iter()) {
                        let mut rec = vec![i.to_string()];
                        rec.extend(r.iter().map(f64::to_string));
                        rows_w.write_record(&rec)?;
                        targ.write_record([i.to_string(), y.to_string()])?;
                    }
                }
            }
            rows_w.flush()?;
            targ.flush()?;
        }
        Family::Zero => {}
    }
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn read_indexed(path: &Path, width: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (no, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = no + 2;
        if rec.len() != width + 1 {
            return Err(Error::Parse(format!(
                "{}: line {line}: expected {} fields, found {}",
                path.display(),
                width + 1,
                rec.len()
            )));
        }
        let agent = rec[0]
            .parse::<usize>()
            .map_err(|e| Error::Parse(format!("{}: line {line}: agent: {e}", path.display())))?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{}: line {line}: `{t}`: {e}", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push((agent, vals));
    }
    Ok(out)
}

pub fn load_suite(dir: &Path) -> Result<ObjectiveSuite> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
    let (n, p) = (manifest.n, manifest.p);
    let mut suite = match manifest.family {
        Family::Zero => zero_suite(n, p)?,
        Family::Quadratic => {
            let curv = read_indexed(&dir.join("curvatures.csv"), 1)?;
            let targ = read_indexed(&dir.join("targets.csv"), p)?;
            if curv.len() != n || targ.len() != n {
                return Err(Error::Parse(format!("quadratic bundle must list {n} agents")));
            }
            let a: Vec<f64> = curv.iter().map(|(_, v)| v[0]).collect();
            let b: Vec<DVector<f64>> = targ.into_iter().map(|(_, v)| DVector::from_vec(v)).collect();
            quadratic_suite(&a, &b)?
        }
        Family::Huber => {
            let xi = manifest
                .xi
                .ok_or_else(|| Error::Parse("Huber manifest lacks xi".into()))?;
            let rows = read_indexed(&dir.join("rows.csv"), p)?;
            let targ = read_indexed(&dir.join("targets.csv"), 1)?;
            if rows.len() != targ.len() {
                return Err(Error::Parse("rows.csv and targets.csv differ in length".into()));
            }
            let mut per_agent: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); n];
            for ((agent, r), (agent2, y)) in rows.into_iter().zip(targ) {
                if agent != agent2 || agent >= n {
                    return Err(Error::Parse(format!("agent index mismatch ({agent} vs {agent2})")));
                }
                per_agent[agent].0.extend(r);
                per_agent[agent].1.push(y[0]);
            }
            let m: Vec<DMatrix<f64>> = per_agent
                .iter()
                .map(|(r, y)| DMatrix::from_row_slice(y.len(), p, r))
                .collect();
            let y: Vec<DVector<f64>> = per_agent.into_iter().map(|(_, y)| DVector::from_vec(y)).collect();
            huber_regression_suite(&m, &y, xi)?
        }
    };
    if let Some(x) = manifest.minimizer {
        suite = suite.with_minimizer(DVector::from_vec(x))?;
    }
    if let Some(mu) = manifest.mu_bar_override {
        suite = suite.with_mu_bar_override(mu)?;
    }
    Ok(suite)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn quadratic_minimizers() {
        let s = quadratic_suite(&[1.0, 1.0], &[v(&[0.0]), v(&[2.0])]).unwrap();
        assert_eq!(s.minimizer().unwrap()[0], 1.0);
        let s = quadratic_suite(&[1.0, 2.0, 1.0], &[v(&[0.0]), v(&[3.0]), v(&[6.0])]).unwrap();
        assert_eq!(s.minimizer().unwrap()[0], 3.0);
        for (c, b) in s.components().iter().zip([0.0, 3.0, 6.0]) {
            assert_eq!(c.grad(&v(&[b]))[0], 0.0);
        }
        assert!(quadratic_suite(&[0.0], &[v(&[1.0])]).is_err());
    }

    #[test]
    fn huber_values() {
        assert_eq!(huber(1.0, 2.0), 0.5);
        assert_eq!(huber(2.0, 2.0), 2.0);
        assert_eq!(huber(3.0, 2.0), 4.0);
        assert_eq!(huber(-3.0, 2.0), 4.0);
    }

    #[test]
    fn huber_gradient_is_clipped() {
        let c = ComponentFunction::huber(DMatrix::from_element(1, 1, 1.0), v(&[0.0]), 2.0).unwrap();
        assert_eq!(c.eval(&v(&[0.0])), 0.0);
        assert_eq!(c.grad(&v(&[0.0]))[0], 0.0);
        assert_eq!(c.grad(&v(&[5.0]))[0], 2.0);
        assert!(ComponentFunction::huber(DMatrix::zeros(2, 1), v(&[0.0]), 2.0).is_err());
        assert!(ComponentFunction::huber(DMatrix::zeros(1, 1), v(&[0.0]), 0.0).is_err());
    }

    #[test]
    fn huber_lipschitz_is_top_eigenvalue() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let c = ComponentFunction::huber(m, v(&[0.0, 0.0]), 1.0).unwrap();
        assert_relative_eq!(c.lipschitz(), 9.0, epsilon = 1e-12);
    }

    #[test]
    fn block_gradient_examples() {
        let s = quadratic_suite(&[1.0, 1.0], &[v(&[0.0]), v(&[2.0])]).unwrap();
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 2.0]);
        assert_eq!(s.block_gradient(&x).unwrap(), DMatrix::zeros(2, 1));
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert_eq!(s.block_gradient(&x).unwrap(), DMatrix::from_column_slice(2, 1, &[1.0, -1.0]));
        assert!(s.block_gradient(&DMatrix::zeros(3, 1)).is_err());

        let one = quadratic_suite(&[2.0], &[v(&[1.0, -1.0])]).unwrap();
        let g = one.block_gradient(&DMatrix::from_row_slice(1, 2, &[0.0, 0.0])).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(1, 2, &[-2.0, 2.0]));
    }

    #[test]
    fn constants() {
        let s = quadratic_suite(&[1.0, 3.0], &[v(&[0.0]), v(&[0.0])]).unwrap();
        let c = s.constants();
        assert_eq!((c.l, c.l_bar, c.mu_bar, c.mu_hat, c.kappa_bar), (3.0, 2.0, 2.0, 3.0, 1.5));
    }

    #[test]
    fn reference_solver_on_quadratic() {
        let s = quadratic_suite(&[1.0, 1.0], &[v(&[0.0]), v(&[2.0])]).unwrap();
        let (x, g) = solve_reference(&s, 1e-12).unwrap();
        assert!((x[0] - 1.0).abs() <= 1e-12);
        assert!(g <= 1e-12);
    }

    #[test]
    fn reference_solver_matches_scalar_bisection() {
        // One Huber function in one variable: the derivative is monotone, so
        // bisection on it locates the minimizer independently.
        let m = DMatrix::from_column_slice(3, 1, &[1.0, 0.5, -0.8]);
        let y = v(&[4.0, -1.0, 0.3]);
        let s = huber_regression_suite(&[m], &[y], 1.0).unwrap();
        let (x, _) = solve_reference(&s, 1e-12).unwrap();
        let d = |t: f64| s.grad(&v(&[t]))[0];
        let (mut lo, mut hi) = (-100.0, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if d(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((x[0] - 0.5 * (lo + hi)).abs() < 1e-9);
    }

    #[test]
    fn bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.25, 2.0]), DMatrix::from_row_slice(1, 2, &[0.1, 0.7])];
        let y = vec![v(&[1.0, -3.0]), v(&[0.125])];
        let s = huber_regression_suite(&m, &y, 2.0)
            .unwrap()
            .with_mu_bar_override(0.5)
            .unwrap();
        save_suite(&s, dir.path()).unwrap();
        assert_eq!(load_suite(dir.path()).unwrap(), s);

        let q = quadratic_suite(&[1.0, 2.5], &[v(&[0.0, 1.0]), v(&[-1.0, 3.0])]).unwrap();
        let qdir = dir.path().join("q");
        save_suite(&q, &qdir).unwrap();
        assert_eq!(load_suite(&qdir).unwrap(), q);
    }
}
