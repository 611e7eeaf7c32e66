//! Time-varying graph sequences over a fixed vertex set.
//!
//! Vertices are `0..n` in the API. The edge-list text format uses the
//! conventional `1..n` labels.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Undirected,
    Directed,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphKind::Undirected => f.write_str("undirected"),
            GraphKind::Directed => f.write_str("directed"),
        }
    }
}

impl FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "undirected" => Ok(GraphKind::Undirected),
            "directed" => Ok(GraphKind::Directed),
            other => Err(Error::Parse(format!("unknown graph kind `{other}`"))),
        }
    }
}

/// One graph instance. Undirected links are stored as `(min, max)`;
/// directed links `(j, i)` mean the arc `j -> i`. Self-loops are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GraphSnapshot {
    n: usize,
    kind: GraphKind,
    links: BTreeSet<(usize, usize)>,
}

impl GraphSnapshot {
    pub fn empty(n: usize, kind: GraphKind) -> Self {
        Self {
            n,
            kind,
            links: BTreeSet::new(),
        }
    }

    /// Builds a snapshot, canonicalizing undirected pairs and dropping self-loops.
    pub fn new<I>(n: usize, kind: GraphKind, links: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::empty(n, kind);
        for (j, i) in links {
            g.insert(j, i)?;
        }
        Ok(g)
    }

    pub fn undirected<I: IntoIterator<Item = (usize, usize)>>(n: usize, edges: I) -> Result<Self> {
        Self::new(n, GraphKind::Undirected, edges)
    }

    pub fn directed<I: IntoIterator<Item = (usize, usize)>>(n: usize, arcs: I) -> Result<Self> {
        Self::new(n, GraphKind::Directed, arcs)
    }

    pub fn path(n: usize) -> Self {
        Self::undirected(n, (1..n).map(|i| (i - 1, i))).expect("valid path")
    }

    pub fn ring(n: usize) -> Self {
        let mut g = Self::path(n);
        if n > 2 {
            g.links.insert((0, n - 1));
        }
        g
    }

    pub fn complete(n: usize) -> Self {
        Self::undirected(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)))).expect("valid")
    }

    pub fn directed_cycle(n: usize) -> Self {
        Self::directed(n, (0..n).map(|i| (i, (i + 1) % n))).expect("valid cycle")
    }

    fn insert(&mut self, j: usize, i: usize) -> Result<()> {
        if j >= self.n || i >= self.n {
            return Err(Error::InvalidArgument(format!(
                "link ({j},{i}) has an endpoint outside 0..{}",
                self.n
            )));
        }
        if j == i {
            return Ok(());
        }
        let key = match self.kind {
            GraphKind::Undirected => (j.min(i), j.max(i)),
            GraphKind::Directed => (j, i),
        };
        self.links.insert(key);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.links.iter().copied()
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    /// Whether `j` may send to `i` (either orientation for undirected graphs).
    pub fn has_link(&self, j: usize, i: usize) -> bool {
        match self.kind {
            GraphKind::Undirected => self.links.contains(&(j.min(i), j.max(i))),
            GraphKind::Directed => self.links.contains(&(j, i)),
        }
    }

    /// Undirected degree `|N_i|`.
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(a, b) in &self.links {
            d[a] += 1;
            if self.kind == GraphKind::Undirected {
                d[b] += 1;
            }
        }
        d
    }

    /// Out-degrees; for undirected snapshots this equals the degree.
    pub fn out_degrees(&self) -> Vec<usize> {
        self.degrees()
    }

    /// Both orientations of every undirected edge; directed snapshots are returned unchanged.
    pub fn to_directed(&self) -> Self {
        match self.kind {
            GraphKind::Directed => self.clone(),
            GraphKind::Undirected => Self {
                n: self.n,
                kind: GraphKind::Directed,
                links: self.links.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect(),
            },
        }
    }

    /// Forgets arc orientation.
    pub fn to_undirected(&self) -> Self {
        Self {
            n: self.n,
            kind: GraphKind::Undirected,
            links: self.links.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect(),
        }
    }

    fn adjacency(&self, reverse: bool) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(j, i) in &self.links {
            match self.kind {
                GraphKind::Undirected => {
                    adj[j].push(i);
                    adj[i].push(j);
                }
                GraphKind::Directed if reverse => adj[i].push(j),
                GraphKind::Directed => adj[j].push(i),
            }
        }
        adj
    }

    fn reaches_all_from_zero(&self, reverse: bool) -> bool {
        if self.n <= 1 {
            return true;
        }
        let adj = self.adjacency(reverse);
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n
    }

    /// Connectivity for undirected snapshots, strong connectivity for directed ones.
    ///
    /// The directed test is Kosaraju with a single root: every vertex must be
    /// reachable from vertex 0 in the graph and in its reverse.
    pub fn is_connected(&self) -> bool {
        match self.kind {
            GraphKind::Undirected => self.reaches_all_from_zero(false),
            GraphKind::Directed => self.reaches_all_from_zero(false) && self.reaches_all_from_zero(true),
        }
    }

    /// Edge-list text: a header `n=<n> kind=<kind>` then one link per line,
    /// `j i` for undirected and `j>i` for directed, with 1-based labels.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n={} kind={}\n", self.n, self.kind);
        for &(j, i) in &self.links {
            match self.kind {
                GraphKind::Undirected => out.push_str(&format!("{} {}\n", j + 1, i + 1)),
                GraphKind::Directed => out.push_str(&format!("{}>{}\n", j + 1, i + 1)),
            }
        }
        out
    }

    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(no, l)| (no + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hno, header) = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge list".into()))?;
        let mut n = None;
        let mut kind = None;
        for tok in header.split_whitespace() {
            match tok.split_once('=') {
                Some(("n", v)) => {
                    n = Some(v.parse::<usize>().map_err(|e| {
                        Error::Parse(format!("line {hno}: bad vertex count `{v}`: {e}"))
                    })?)
                }
                Some(("kind", v)) => kind = Some(v.parse::<GraphKind>()?),
                _ => return Err(Error::Parse(format!("line {hno}: unexpected header token `{tok}`"))),
            }
        }
        let n = n.ok_or_else(|| Error::Parse(format!("line {hno}: header lacks n=")))?;
        let kind = kind.ok_or_else(|| Error::Parse(format!("line {hno}: header lacks kind=")))?;
        let mut g = Self::empty(n, kind);
        for (no, line) in lines {
            let (a, b) = match kind {
                GraphKind::Directed => line.split_once('>'),
                GraphKind::Undirected => line.split_once(char::is_whitespace),
            }
            .ok_or_else(|| Error::Parse(format!("line {no}: malformed link `{line}`")))?;
            let label = |s: &str| -> Result<usize> {
                let v: usize = s
                    .trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("line {no}: bad label `{s}`: {e}")))?;
                if v == 0 || v > n {
                    return Err(Error::Parse(format!("line {no}: label {v} outside 1..{n}")));
                }
                Ok(v - 1)
            };
            let (j, i) = (label(a)?, label(b)?);
            if !g.links.insert(match kind {
                GraphKind::Undirected => (j.min(i), j.max(i)),
                GraphKind::Directed => (j, i),
            }) {
                return Err(Error::Parse(format!("line {no}: duplicate link `{line}`")));
            }
        }
        Ok(g)
    }
}

type GeneratorFn = dyn Fn(usize) -> GraphSnapshot + Send + Sync;

#[derive(Clone)]
enum Source {
    Static(GraphSnapshot),
    Periodic(Vec<GraphSnapshot>),
    /// Each base link kept independently with probability `fraction` at every step.
    Subsampled {
        base: GraphSnapshot,
        fraction: f64,
        seed: u64,
    },
    /// Within each window of `window` steps, every base link appears in exactly
    /// one uniformly drawn step, so every aligned window union equals the base.
    WindowPartition {
        base: GraphSnapshot,
        window: usize,
        seed: u64,
    },
    Custom(Arc<GeneratorFn>),
}

/// A deterministic map from iteration index to snapshot.
#[derive(Clone)]
pub struct GraphSequence {
    n: usize,
    kind: GraphKind,
    source: Source,
    declared_b: Option<usize>,
}

impl fmt::Debug for GraphSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GraphSequence")
            .field("n", &self.n)
            .field("kind", &self.kind)
            .field("source", &self.describe())
            .field("declared_b", &self.declared_b)
            .finish()
    }
}

/// Stream of uniforms in `[0,1)` keyed by `(seed, stream)`; the i-th draw is
/// the value for link index i, so any snapshot can be regenerated in isolation.
fn keyed_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl GraphSequence {
    pub fn constant(snapshot: GraphSnapshot) -> Self {
        Self {
            n: snapshot.n,
            kind: snapshot.kind,
            declared_b: Some(1),
            source: Source::Static(snapshot),
        }
    }

    pub fn periodic(snapshots: Vec<GraphSnapshot>) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::InvalidArgument("periodic sequence needs at least one snapshot".into()))?;
        let (n, kind) = (first.n, first.kind);
        if snapshots.iter().any(|s| s.n != n || s.kind != kind) {
            return Err(Error::InvalidArgument(
                "periodic snapshots must share vertex count and kind".into(),
            ));
        }
        Ok(Self {
            n,
            kind,
            declared_b: None,
            source: Source::Periodic(snapshots),
        })
    }

    /// Each window of `window` consecutive steps (aligned at multiples of
    /// `window`) distributes the base links over its steps at random.
    pub fn window_partition(base: GraphSnapshot, window: usize, seed: u64) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidArgument("window must be positive".into()));
        }
        let declared_b = base.is_connected().then_some(window);
        Ok(Self {
            n: base.n,
            kind: base.kind,
            declared_b,
            source: Source::WindowPartition { base, window, seed },
        })
    }

    pub fn custom<F>(n: usize, kind: GraphKind, generator: F) -> Self
    where
        F: Fn(usize) -> GraphSnapshot + Send + Sync + 'static,
    {
        Self {
            n,
            kind,
            declared_b: None,
            source: Source::Custom(Arc::new(generator)),
        }
    }

    pub fn with_declared_b(mut self, b: usize) -> Self {
        self.declared_b = Some(b);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    /// Claimed joint-connectivity window, if any.
    pub fn declared_b(&self) -> Option<usize> {
        self.declared_b
    }

    pub fn describe(&self) -> String {
        match &self.source {
            Source::Static(g) => format!("static({} links)", g.num_links()),
            Source::Periodic(v) => format!("periodic(period {})", v.len()),
            Source::Subsampled { base, fraction, seed } => {
                format!("subsample({} links, p={fraction}, seed={seed})", base.num_links())
            }
            Source::WindowPartition { base, window, seed } => {
                format!("window-partition({} links, window={window}, seed={seed})", base.num_links())
            }
            Source::Custom(_) => "custom".into(),
        }
    }

    pub fn snapshot(&self, k: usize) -> GraphSnapshot {
        match &self.source {
            Source::Static(g) => g.clone(),
            Source::Periodic(v) => v[k % v.len()].clone(),
            Source::Subsampled { base, fraction, seed } => {
                let mut rng = keyed_rng(*seed, k as u64);
                let links = base
                    .links
                    .iter()
                    .copied()
                    .filter(|_| rng.random::<f64>() < *fraction)
                    .collect();
                GraphSnapshot {
                    n: base.n,
                    kind: base.kind,
                    links,
                }
            }
            Source::WindowPartition { base, window, seed } => {
                let (t, slot) = (k / window, k % window);
                let mut rng = keyed_rng(*seed, t as u64);
                let links = base
                    .links
                    .iter()
                    .copied()
                    .filter(|_| rng.random_range(0..*window) == slot)
                    .collect();
                GraphSnapshot {
                    n: base.n,
                    kind: base.kind,
                    links,
                }
            }
            Source::Custom(f) => f(k),
        }
    }
}

/// Independent per-step link retention with probability `fraction`
/// (random link activation).
pub fn subsample_sequence(base: GraphSnapshot, fraction: f64, seed: u64) -> Result<GraphSequence> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "retention fraction {fraction} not in (0, 1]"
        )));
    }
    let declared_b = (fraction == 1.0 && base.is_connected()).then_some(1);
    Ok(GraphSequence {
        n: base.n,
        kind: base.kind,
        declared_b,
        source: Source::Subsampled { base, fraction, seed },
    })
}

/// Union of the links of snapshots `k..k+b`.
pub fn union_graph(seq: &GraphSequence, k: usize, b: usize) -> Result<GraphSnapshot> {
    if b == 0 {
        return Err(Error::InvalidArgument("window b must be at least 1".into()));
    }
    let mut g = GraphSnapshot::empty(seq.n, seq.kind);
    for s in k..k + b {
        g.links.extend(seq.snapshot(s).links);
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointConnectivity {
    pub connected: bool,
    /// Index `t` of the first window `[tB, tB+B-1]` whose union is not connected.
    pub first_failure: Option<usize>,
}

/// Checks the aligned windows `[tB, tB+B-1]` contained in `0..horizon`.
pub fn is_jointly_connected(seq: &GraphSequence, b: usize, horizon: usize) -> Result<JointConnectivity> {
    if b == 0 || horizon < b {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= B <= horizon, got B={b}, horizon={horizon}"
        )));
    }
    for t in 0..horizon / b {
        if !union_graph(seq, t * b, b)?.is_connected() {
            return Ok(JointConnectivity {
                connected: false,
                first_failure: Some(t),
            });
        }
    }
    Ok(JointConnectivity {
        connected: true,
        first_failure: None,
    })
}

/// Like [`is_jointly_connected`] but for every sliding window `[k, k+B-1]`;
/// `first_failure` then reports the starting step `k`.
pub fn is_uniformly_connected(seq: &GraphSequence, b: usize, horizon: usize) -> Result<JointConnectivity> {
    if b == 0 || horizon < b {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= B <= horizon, got B={b}, horizon={horizon}"
        )));
    }
    for k in 0..=horizon - b {
        if !union_graph(seq, k, b)?.is_connected() {
            return Ok(JointConnectivity {
                connected: false,
                first_failure: Some(k),
            });
        }
    }
    Ok(JointConnectivity {
        connected: true,
        first_failure: None,
    })
}

/// Sliding window length guaranteed connected by aligned `b_tilde`-connectivity.
pub fn analysis_window(b_tilde: usize) -> usize {
    2 * b_tilde - 1
}

/// Random strongly connected digraph with exactly `m` arcs: a random
/// Hamiltonian cycle plus `m - n` distinct uniformly chosen extra arcs.
pub fn random_strongly_connected_digraph(n: usize, m: usize, seed: u64) -> Result<GraphSnapshot> {
    if n < 2 {
        return Err(Error::InfeasibleSize(format!("need n >= 2 vertices, got {n}")));
    }
    let max_arcs = n * (n - 1);
    if m > max_arcs {
        return Err(Error::InfeasibleSize(format!(
            "{m} arcs requested but only {max_arcs} exist on {n} vertices"
        )));
    }
    if m < n {
        return Err(Error::InfeasibleSize(format!(
            "{m} arcs cannot strongly connect {n} vertices"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut g = GraphSnapshot::empty(n, GraphKind::Directed);
    for w in 0..n {
        g.links.insert((order[w], order[(w + 1) % n]));
    }
    let candidates: Vec<(usize, usize)> = (0..n)
        .flat_map(|j| (0..n).map(move |i| (j, i)))
        .filter(|&(j, i)| j != i && !g.links.contains(&(j, i)))
        .collect();
    for idx in rand::seq::index::sample(&mut rng, candidates.len(), m - n) {
        g.links.insert(candidates[idx]);
    }
    Ok(g)
}
