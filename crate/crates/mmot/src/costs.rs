//! Cost families on product grids: evaluation, analytic partials, and
//! structural checkers.
//!
//! Every cost is a [`CostModel`] with a fixed arity, exact `eval`, and
//! analytic `partial` that must agree with central finite differences.
//! Structured families (cycle, chain) expose their block decomposition so the
//! structured solver can marginalize without materializing the full tensor.
//!
//! Checkers are sample-based: they report witnesses or "no collision found",
//! never a proof over a continuum.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// An undirected simple graph on vertices `0..m` with a designated relay set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleGraph {
    pub m: usize,
    /// Edges stored with the smaller endpoint first.
    pub edges: BTreeSet<(usize, usize)>,
    /// Relay vertices allowed as path interiors in `check_path_condition`.
    pub relays: BTreeSet<usize>,
}

impl SimpleGraph {
    pub fn new(m: usize, edges: &[(usize, usize)], relays: &[usize]) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidCost(format!("graph needs >= 2 vertices, got {m}")));
        }
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            if i == j {
                return Err(Error::InvalidCost(format!("self-loop at vertex {i}")));
            }
            if i >= m || j >= m {
                return Err(Error::InvalidCost(format!(
                    "edge ({i}, {j}) outside vertex range 0..{m}"
                )));
            }
            set.insert((i.min(j), i.max(j)));
        }
        let relays: BTreeSet<usize> = relays.iter().copied().collect();
        if let Some(&v) = relays.iter().find(|&&v| v >= m) {
            return Err(Error::InvalidCost(format!(
                "relay vertex {v} outside vertex range 0..{m}"
            )));
        }
        Ok(SimpleGraph { m, edges: set, relays })
    }

    pub fn complete(m: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                edges.push((i, j));
            }
        }
        SimpleGraph::new(m, &edges, &[])
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        i != j && self.edges.contains(&(i.min(j), i.max(j)))
    }
}

/// Partition of the axes into three groups driving a sum of pairwise
/// bilinear interactions; `f(a, b) = coeff * a * b`.
///
/// The cost is the literal three-sum form
/// `sum_{s in I1, t in I2 u I3} f + sum_{s in I3, t in I2} f +
/// sum_{s < t in I3} f`, which regroups as
/// `f(sum_{I1} x, sum_{I2 u I3} x) + f(sum_{I3} x, sum_{I2} x) + (I3 internal)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub i1: BTreeSet<usize>,
    pub i2: BTreeSet<usize>,
    pub i3: BTreeSet<usize>,
    /// Distinguished axis for twist probing; must lie in `i2 u i3`.
    pub p: usize,
    pub coeff: f64,
}

impl PartitionSpec {
    pub fn new(
        i1: &[usize],
        i2: &[usize],
        i3: &[usize],
        p: usize,
        coeff: f64,
    ) -> Result<Self> {
        let i1: BTreeSet<usize> = i1.iter().copied().collect();
        let i2: BTreeSet<usize> = i2.iter().copied().collect();
        let i3: BTreeSet<usize> = i3.iter().copied().collect();
        let m = i1.len() + i2.len() + i3.len();
        let mut seen = BTreeSet::new();
        for &v in i1.iter().chain(&i2).chain(&i3) {
            if v >= m {
                return Err(Error::InvalidCost(format!(
                    "partition index {v} outside 0..{m}"
                )));
            }
            if !seen.insert(v) {
                return Err(Error::InvalidCost(format!(
                    "axis {v} appears in two partition groups"
                )));
            }
        }
        if seen.len() != m {
            return Err(Error::InvalidCost("partition does not cover all axes".into()));
        }
        if !i1.contains(&0) {
            return Err(Error::InvalidCost("axis 0 must belong to the first group".into()));
        }
        if !(i2.contains(&p) || i3.contains(&p)) {
            return Err(Error::InvalidCost(format!(
                "distinguished axis {p} must lie in the second or third group"
            )));
        }
        Ok(PartitionSpec { i1, i2, i3, p, coeff })
    }

    pub fn arity(&self) -> usize {
        self.i1.len() + self.i2.len() + self.i3.len()
    }
}

/// Block layout for chain-structured costs.
#[derive(Debug, Clone, PartialEq)]
pub enum ChainSpec {
    /// Blocks over consecutive axis ranges; adjacent blocks share exactly the
    /// cut axis. `cuts = [0, c1, ..., m-1]`; block `j` covers axes
    /// `cuts[j]..=cuts[j+1]`.
    Consecutive { cuts: Vec<usize>, blocks: Vec<CostModel> },
    /// A head block on axes `0..s`, then one tail block per remaining axis.
    /// Tail block `k` (1-based) couples the axes in `y_sets[k-1]` with the
    /// new axis `s + k - 1`; `t_seq[k-1]` is its designated twist axis and
    /// must lie in `y_sets[k-1]`.
    Twisted {
        s: usize,
        t_seq: Vec<usize>,
        y_sets: Vec<Vec<usize>>,
        blocks: Vec<CostModel>,
    },
}

/// A cost function on an `m`-fold product of real lines.
#[derive(Debug, Clone, PartialEq)]
pub enum CostModel {
    /// `sum_{i<j} a_ij x_i x_j` with all `a_ij <= 0`.
    QuadraticGraph {
        m: usize,
        coeffs: BTreeMap<(usize, usize), f64>,
    },
    /// Three-group bilinear interaction sum; see [`PartitionSpec`].
    BilinearPartition { spec: PartitionSpec },
    /// `b0(x0,x1) + b1(x1,x2) + b2(x2,x3) + b3(x3,x0)`.
    Cycle { blocks: Box<[CostModel; 4]> },
    /// Sum of block costs per [`ChainSpec`].
    Chain { spec: Box<ChainSpec> },
    /// `(x0 + x1 + x2)^2`: a smooth cost whose optimal couplings are
    /// massively non-unique, used for negative tests.
    Counterexample,
    /// Identically zero; test double.
    Zero { m: usize },
}

/// One block of a structured cost: the global axes it touches, in the
/// positional order its `cost` expects.
#[derive(Debug, Clone)]
pub struct BlockView<'a> {
    pub axes: Vec<usize>,
    pub cost: &'a CostModel,
}

fn pair_key(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

impl CostModel {
    pub fn arity(&self) -> usize {
        match self {
            CostModel::QuadraticGraph { m, .. } => *m,
            CostModel::BilinearPartition { spec } => spec.arity(),
            CostModel::Cycle { .. } => 4,
            CostModel::Chain { spec } => match spec.as_ref() {
                ChainSpec::Consecutive { cuts, .. } => cuts.last().copied().unwrap_or(0) + 1,
                ChainSpec::Twisted { s, blocks, .. } => s + blocks.len() - 1,
            },
            CostModel::Counterexample => 3,
            CostModel::Zero { m } => *m,
        }
    }

    fn ensure_arity(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arity() {
            return Err(Error::ArityMismatch {
                expected: self.arity(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.ensure_arity(x)?;
        match self {
            CostModel::QuadraticGraph { coeffs, .. } => {
                Ok(coeffs.iter().map(|(&(i, j), &a)| a * x[i] * x[j]).sum())
            }
            CostModel::BilinearPartition { spec } => {
                let f = |a: f64, b: f64| spec.coeff * a * b;
                let mut total = 0.0;
                for &s in &spec.i1 {
                    for &t in spec.i2.iter().chain(&spec.i3) {
                        total += f(x[s], x[t]);
                    }
                }
                for &s in &spec.i3 {
                    for &t in &spec.i2 {
                        total += f(x[s], x[t]);
                    }
                }
                for &s in &spec.i3 {
                    for &t in &spec.i3 {
                        if s < t {
                            total += f(x[s], x[t]);
                        }
                    }
                }
                Ok(total)
            }
            CostModel::Counterexample => {
                let s = x[0] + x[1] + x[2];
                Ok(s * s)
            }
            CostModel::Zero { .. } => Ok(0.0),
            _ => {
                let mut total = 0.0;
                for block in self.blocks().expect("structured families expose blocks") {
                    let sub: Vec<f64> = block.axes.iter().map(|&a| x[a]).collect();
                    total += block.cost.eval(&sub)?;
                }
                Ok(total)
            }
        }
    }

    /// Analytic partial derivative along `axis`.
    pub fn partial(&self, axis: usize, x: &[f64]) -> Result<f64> {
        self.ensure_arity(x)?;
        if axis >= self.arity() {
            return Err(Error::InvalidCost(format!(
                "axis {axis} out of range for arity {}",
                self.arity()
            )));
        }
        match self {
            CostModel::QuadraticGraph { coeffs, .. } => Ok(coeffs
                .iter()
                .map(|(&(i, j), &a)| {
                    if i == axis {
                        a * x[j]
                    } else if j == axis {
                        a * x[i]
                    } else {
                        0.0
                    }
                })
                .sum()),
            CostModel::BilinearPartition { spec } => {
                // d f(a,b)/da = coeff * b and d f(a,b)/db = coeff * a.
                let mut total = 0.0;
                if spec.i1.contains(&axis) {
                    for &t in spec.i2.iter().chain(&spec.i3) {
                        total += spec.coeff * x[t];
                    }
                }
                if spec.i2.contains(&axis) || spec.i3.contains(&axis) {
                    for &s in &spec.i1 {
                        total += spec.coeff * x[s];
                    }
                }
                if spec.i3.contains(&axis) {
                    for &t in &spec.i2 {
                        total += spec.coeff * x[t];
                    }
                }
                if spec.i2.contains(&axis) {
                    for &s in &spec.i3 {
                        total += spec.coeff * x[s];
                    }
                }
                if spec.i3.contains(&axis) {
                    for &t in &spec.i3 {
                        if t != axis {
                            total += spec.coeff * x[t];
                        }
                    }
                }
                Ok(total)
            }
            CostModel::Counterexample => Ok(2.0 * (x[0] + x[1] + x[2])),
            CostModel::Zero { .. } => Ok(0.0),
            _ => {
                let mut total = 0.0;
                for block in self.blocks().expect("structured families expose blocks") {
                    if let Some(pos) = block.axes.iter().position(|&a| a == axis) {
                        let sub: Vec<f64> = block.axes.iter().map(|&a| x[a]).collect();
                        total += block.cost.partial(pos, &sub)?;
                    }
                }
                Ok(total)
            }
        }
    }

    /// Block decomposition for structured families; `None` when the cost has
    /// no declared block form.
    pub fn blocks(&self) -> Option<Vec<BlockView<'_>>> {
        match self {
            CostModel::Cycle { blocks } => Some(
                [[0usize, 1], [1, 2], [2, 3], [3, 0]]
                    .iter()
                    .zip(blocks.iter())
                    .map(|(axes, cost)| BlockView {
                        axes: axes.to_vec(),
                        cost,
                    })
                    .collect(),
            ),
            CostModel::Chain { spec } => match spec.as_ref() {
                ChainSpec::Consecutive { cuts, blocks } => Some(
                    blocks
                        .iter()
                        .enumerate()
                        .map(|(j, cost)| BlockView {
                            axes: (cuts[j]..=cuts[j + 1]).collect(),
                            cost,
                        })
                        .collect(),
                ),
                ChainSpec::Twisted { s, y_sets, blocks, .. } => {
                    let mut out = vec![BlockView {
                        axes: (0..*s).collect(),
                        cost: &blocks[0],
                    }];
                    for (k, cost) in blocks.iter().enumerate().skip(1) {
                        let mut axes = y_sets[k - 1].clone();
                        axes.push(s + k - 1);
                        out.push(BlockView { axes, cost });
                    }
                    Some(out)
                }
            },
            _ => None,
        }
    }
}

/// Quadratic interaction cost `sum_{i<j} a_ij x_i x_j` validated against a
/// graph: coefficients must be nonpositive everywhere and strictly negative
/// on declared edges.
pub fn make_submodular_graph_cost(
    coeffs: &BTreeMap<(usize, usize), f64>,
    graph: &SimpleGraph,
) -> Result<CostModel> {
    let mut normalized = BTreeMap::new();
    for (&(i, j), &a) in coeffs {
        if i == j || i >= graph.m || j >= graph.m {
            return Err(Error::InvalidCost(format!(
                "coefficient pair ({i}, {j}) invalid for {} axes",
                graph.m
            )));
        }
        if a > 0.0 {
            return Err(Error::InvalidCost(format!(
                "coefficient for pair ({i}, {j}) must be <= 0, got {a}"
            )));
        }
        if normalized.insert(pair_key(i, j), a).is_some() {
            return Err(Error::InvalidCost(format!(
                "duplicate coefficient for pair ({i}, {j})"
            )));
        }
    }
    for &(i, j) in &graph.edges {
        let a = normalized.get(&(i, j)).copied().unwrap_or(0.0);
        if !(a < 0.0) {
            return Err(Error::InvalidCost(format!(
                "edge ({i}, {j}) requires a strictly negative coefficient, got {a}"
            )));
        }
    }
    Ok(CostModel::QuadraticGraph {
        m: graph.m,
        coeffs: normalized.into_iter().filter(|&(_, a)| a != 0.0).collect(),
    })
}

pub fn make_bilinear_partition_cost(spec: PartitionSpec) -> Result<CostModel> {
    Ok(CostModel::BilinearPartition { spec })
}

pub fn make_cycle_cost(blocks: [CostModel; 4]) -> Result<CostModel> {
    for (k, b) in blocks.iter().enumerate() {
        if b.arity() != 2 {
            return Err(Error::InvalidCost(format!(
                "cycle block {k} must have arity 2, got {}",
                b.arity()
            )));
        }
    }
    Ok(CostModel::Cycle {
        blocks: Box::new(blocks),
    })
}

pub fn make_chain_cost(spec: ChainSpec) -> Result<CostModel> {
    match &spec {
        ChainSpec::Consecutive { cuts, blocks } => {
            if cuts.len() < 2 {
                return Err(Error::InvalidCost("chain needs at least two cut indices".into()));
            }
            if cuts[0] != 0 {
                return Err(Error::InvalidCost("first cut index must be axis 0".into()));
            }
            for w in cuts.windows(2) {
                if w[1] <= w[0] {
                    return Err(Error::InvalidCost(format!(
                        "cut indices must be strictly increasing: {} then {}",
                        w[0], w[1]
                    )));
                }
            }
            if blocks.len() != cuts.len() - 1 {
                return Err(Error::InvalidCost(format!(
                    "{} cut intervals but {} blocks",
                    cuts.len() - 1,
                    blocks.len()
                )));
            }
            for (j, b) in blocks.iter().enumerate() {
                let want = cuts[j + 1] - cuts[j] + 1;
                if b.arity() != want {
                    return Err(Error::InvalidCost(format!(
                        "chain block {j} spans axes {}..={} so needs arity {want}, got {}",
                        cuts[j],
                        cuts[j + 1],
                        b.arity()
                    )));
                }
            }
        }
        ChainSpec::Twisted { s, t_seq, y_sets, blocks } => {
            let s = *s;
            if s < 2 {
                return Err(Error::InvalidCost("head block must cover at least two axes".into()));
            }
            if blocks.is_empty() || blocks.len() - 1 != y_sets.len() {
                return Err(Error::InvalidCost(format!(
                    "{} tail blocks but {} coupling sets",
                    blocks.len().saturating_sub(1),
                    y_sets.len()
                )));
            }
            if t_seq.len() != y_sets.len() {
                return Err(Error::InvalidCost(format!(
                    "{} tail blocks but {} twist indices",
                    y_sets.len(),
                    t_seq.len()
                )));
            }
            if blocks[0].arity() != s {
                return Err(Error::InvalidCost(format!(
                    "head block needs arity {s}, got {}",
                    blocks[0].arity()
                )));
            }
            let m = s + y_sets.len();
            let mut spent: BTreeSet<usize> = BTreeSet::new();
            for k in 1..blocks.len() {
                let ys = &y_sets[k - 1];
                if ys.is_empty() {
                    return Err(Error::InvalidCost(format!(
                        "tail block {k} has an empty coupling set"
                    )));
                }
                let hi = s + k - 2;
                for &y in ys {
                    if y < 1 || y > hi {
                        return Err(Error::InvalidCost(format!(
                            "tail block {k}: coupling axis {y} outside the allowed range 1..={hi}"
                        )));
                    }
                    if spent.contains(&y) {
                        return Err(Error::InvalidCost(format!(
                            "tail block {k}: coupling axis {y} reuses a spent twist axis"
                        )));
                    }
                }
                let t = t_seq[k - 1];
                if !ys.contains(&t) {
                    return Err(Error::InvalidCost(format!(
                        "tail block {k}: twist axis {t} is not in its coupling set"
                    )));
                }
                if blocks[k].arity() != ys.len() + 1 {
                    return Err(Error::InvalidCost(format!(
                        "tail block {k} needs arity {}, got {}",
                        ys.len() + 1,
                        blocks[k].arity()
                    )));
                }
                spent.insert(t);
            }
            let _ = m;
        }
    }
    Ok(CostModel::Chain { spec: Box::new(spec) })
}

pub fn make_counterexample_cost() -> CostModel {
    CostModel::Counterexample
}

/// Central finite difference of `eval` along `axis`.
pub fn fd_partial(c: &CostModel, axis: usize, x: &[f64], h: f64) -> Result<f64> {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[axis] += h;
    minus[axis] -= h;
    Ok((c.eval(&plus)? - c.eval(&minus)?) / (2.0 * h))
}

/// Central finite-difference cross-partial along two distinct axes.
pub fn fd_cross_partial(c: &CostModel, i: usize, j: usize, x: &[f64], h: f64) -> Result<f64> {
    let mut p = x.to_vec();
    let mut q = x.to_vec();
    let mut r = x.to_vec();
    let mut s = x.to_vec();
    p[i] += h;
    p[j] += h;
    q[i] += h;
    q[j] -= h;
    r[i] -= h;
    r[j] += h;
    s[i] -= h;
    s[j] -= h;
    Ok((c.eval(&p)? - c.eval(&q)? - c.eval(&r)? + c.eval(&s)?) / (4.0 * h * h))
}

/// Outcome of a sign check with an optional witness.
#[derive(Debug, Clone)]
pub struct SubmodularityReport {
    pub pass: bool,
    /// First failing `(point, pair, cross_partial)`, if any.
    pub witness: Option<(Vec<f64>, (usize, usize), f64)>,
    pub samples: usize,
}

/// Finite-difference submodularity check: cross-partials must be `<= delta`
/// off edges and `< -delta` on edges, with `delta = 1e-8`.
pub fn check_submodularity(
    c: &CostModel,
    graph: &SimpleGraph,
    samples: usize,
    h: f64,
    bounds: (f64, f64),
    seed: u64,
) -> Result<SubmodularityReport> {
    let m = c.arity();
    if graph.m != m {
        return Err(Error::ArityMismatch { expected: m, got: graph.m });
    }
    let delta = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for sample in 0..samples.max(1) {
        let x: Vec<f64> = if sample == 0 {
            vec![(bounds.0 + bounds.1) / 2.0; m]
        } else {
            (0..m).map(|_| rng.gen_range(bounds.0..bounds.1)).collect()
        };
        for i in 0..m {
            for j in (i + 1)..m {
                let cross = fd_cross_partial(c, i, j, &x, h)?;
                let on_edge = graph.adjacent(i, j);
                let ok = if on_edge { cross < -delta } else { cross <= delta };
                if !ok {
                    return Ok(SubmodularityReport {
                        pass: false,
                        witness: Some((x, (i, j), cross)),
                        samples: samples.max(1),
                    });
                }
            }
        }
    }
    Ok(SubmodularityReport {
        pass: true,
        witness: None,
        samples: samples.max(1),
    })
}

/// Relay-path connectivity: every vertex not adjacent to vertex 0 must be
/// reachable from 0 through interior vertices drawn from the relay set.
///
/// Returns the verdict plus one witness path per reachable vertex.
pub fn check_path_condition(graph: &SimpleGraph) -> (bool, BTreeMap<usize, Vec<usize>>) {
    let mut witnesses = BTreeMap::new();
    let mut ok = true;
    for target in 1..graph.m {
        if graph.adjacent(0, target) {
            witnesses.insert(target, vec![0, target]);
            continue;
        }
        // BFS from 0 where interior vertices must be relays.
        let mut prev: BTreeMap<usize, usize> = BTreeMap::new();
        let mut queue = VecDeque::from([0usize]);
        let mut found = false;
        while let Some(v) = queue.pop_front() {
            for u in 0..graph.m {
                if !graph.adjacent(v, u) || prev.contains_key(&u) || u == 0 {
                    continue;
                }
                if u == target {
                    prev.insert(u, v);
                    found = true;
                    queue.clear();
                    break;
                }
                if graph.relays.contains(&u) {
                    prev.insert(u, v);
                    queue.push_back(u);
                }
            }
        }
        if found {
            let mut path = vec![target];
            let mut v = target;
            while v != 0 {
                v = prev[&v];
                path.push(v);
            }
            path.reverse();
            witnesses.insert(target, path);
        } else {
            ok = false;
        }
    }
    (ok, witnesses)
}

/// Verdict for one axis triple in the compatibility check.
#[derive(Debug, Clone, PartialEq)]
pub enum TripleVerdict {
    Pass,
    Fail { point: Vec<f64>, ratio: f64 },
    /// Some cross-partial vanished at every sample, so the ratio is undefined.
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct CompatibilityReport {
    /// Per unordered axis triple `(i, j, k)`.
    pub triples: BTreeMap<(usize, usize, usize), TripleVerdict>,
    pub pass: bool,
    pub inconclusive: bool,
}

/// Sign check of `c_ij * c_ki / c_kj < 0` over all axis triples at the given
/// sample points, with cross-partials from central finite differences.
pub fn check_compatibility(
    c: &CostModel,
    points: &[Vec<f64>],
    h: f64,
) -> Result<CompatibilityReport> {
    let m = c.arity();
    if m < 3 {
        return Err(Error::InvalidCost(format!(
            "compatibility check needs arity >= 3, got {m}"
        )));
    }
    let delta = 1e-8;
    let mut triples = BTreeMap::new();
    for i in 0..m {
        for j in (i + 1)..m {
            for k in (j + 1)..m {
                let mut verdict = TripleVerdict::Inconclusive;
                for x in points {
                    let cij = fd_cross_partial(c, i, j, x, h)?;
                    let ckj = fd_cross_partial(c, k, j, x, h)?;
                    let cki = fd_cross_partial(c, k, i, x, h)?;
                    if cij.abs() <= delta || ckj.abs() <= delta || cki.abs() <= delta {
                        continue;
                    }
                    let ratio = cij * cki / ckj;
                    if ratio < 0.0 {
                        if verdict == TripleVerdict::Inconclusive {
                            verdict = TripleVerdict::Pass;
                        }
                    } else {
                        verdict = TripleVerdict::Fail {
                            point: x.clone(),
                            ratio,
                        };
                        break;
                    }
                }
                triples.insert((i, j, k), verdict);
            }
        }
    }
    let pass = triples.values().all(|v| *v == TripleVerdict::Pass);
    let inconclusive = triples
        .values()
        .any(|v| *v == TripleVerdict::Inconclusive);
    Ok(CompatibilityReport {
        triples,
        pass: pass && !inconclusive,
        inconclusive,
    })
}

/// A gradient collision found by [`check_bitwist`].
#[derive(Debug, Clone)]
pub struct Collision {
    /// 0: collision in `y -> d f(x0, y)/dx`; 1: collision in `x -> d f(x, y0)/dy`.
    pub map: usize,
    pub probe: f64,
    pub args: (f64, f64),
    pub grads: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct BitwistReport {
    pub collisions: Vec<Collision>,
    pub pass: bool,
}

/// Sample-based injectivity check for a two-argument cost: for each probe
/// `x0` the map `y -> d f(x0, y)/dx` must separate the sample `ys`, and
/// symmetrically for `y0` and `xs`. Gradients within 1e-9 count as collisions.
pub fn check_bitwist<F: Fn(f64, f64) -> f64>(f: F, xs: &[f64], ys: &[f64]) -> BitwistReport {
    let h = 1e-5;
    let tol = 1e-9;
    let mut collisions = Vec::new();
    for &x0 in xs {
        let grads: Vec<f64> = ys
            .iter()
            .map(|&y| (f(x0 + h, y) - f(x0 - h, y)) / (2.0 * h))
            .collect();
        for a in 0..ys.len() {
            for b in (a + 1)..ys.len() {
                if (grads[a] - grads[b]).abs() <= tol {
                    collisions.push(Collision {
                        map: 0,
                        probe: x0,
                        args: (ys[a], ys[b]),
                        grads: (grads[a], grads[b]),
                    });
                }
            }
        }
    }
    for &y0 in ys {
        let grads: Vec<f64> = xs
            .iter()
            .map(|&x| (f(x, y0 + h) - f(x, y0 - h)) / (2.0 * h))
            .collect();
        for a in 0..xs.len() {
            for b in (a + 1)..xs.len() {
                if (grads[a] - grads[b]).abs() <= tol {
                    collisions.push(Collision {
                        map: 1,
                        probe: y0,
                        args: (xs[a], xs[b]),
                        grads: (grads[a], grads[b]),
                    });
                }
            }
        }
    }
    BitwistReport {
        pass: collisions.is_empty(),
        collisions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn all_pairs_cost(m: usize, a: f64) -> CostModel {
        let graph = SimpleGraph::complete(m).unwrap();
        let mut coeffs = BTreeMap::new();
        for i in 0..m {
            for j in (i + 1)..m {
                coeffs.insert((i, j), a);
            }
        }
        make_submodular_graph_cost(&coeffs, &graph).unwrap()
    }

    fn pair_bilinear(coeff: f64) -> CostModel {
        let spec = PartitionSpec::new(&[0], &[1], &[], 1, coeff).unwrap();
        make_bilinear_partition_cost(spec).unwrap()
    }

    #[test]
    fn complete_graph_unit_coefficients() {
        let c = all_pairs_cost(3, -1.0);
        assert_abs_diff_eq!(c.eval(&[1.0, 1.0, 1.0]).unwrap(), -3.0);
    }

    #[test]
    fn single_edge_partial_is_linear() {
        let graph = SimpleGraph::new(3, &[(0, 1)], &[]).unwrap();
        let mut coeffs = BTreeMap::new();
        coeffs.insert((0, 1), -1.0);
        let c = make_submodular_graph_cost(&coeffs, &graph).unwrap();
        assert_abs_diff_eq!(c.partial(0, &[2.0, 3.0, 5.0]).unwrap(), -3.0);
        assert_abs_diff_eq!(c.partial(2, &[2.0, 3.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn positive_coefficient_rejected() {
        let graph = SimpleGraph::new(2, &[(0, 1)], &[]).unwrap();
        let mut coeffs = BTreeMap::new();
        coeffs.insert((0, 1), 1.0);
        let err = make_submodular_graph_cost(&coeffs, &graph).unwrap_err();
        assert!(err.to_string().contains("(0, 1)"));
    }

    #[test]
    fn edge_needs_strictly_negative_coefficient() {
        let graph = SimpleGraph::new(3, &[(0, 2)], &[]).unwrap();
        let mut coeffs = BTreeMap::new();
        coeffs.insert((0, 1), -1.0);
        let err = make_submodular_graph_cost(&coeffs, &graph).unwrap_err();
        assert!(err.to_string().contains("(0, 2)"));
    }

    #[test]
    fn submodularity_check_passes_on_chain_quadratic() {
        let graph = SimpleGraph::new(3, &[(0, 1), (1, 2)], &[]).unwrap();
        let mut coeffs = BTreeMap::new();
        coeffs.insert((0, 1), -1.0);
        coeffs.insert((1, 2), -1.0);
        let c = make_submodular_graph_cost(&coeffs, &graph).unwrap();
        let report = check_submodularity(&c, &graph, 20, 1e-4, (0.0, 1.0), 7).unwrap();
        assert!(report.pass);
    }

    #[test]
    fn submodularity_check_fails_on_positive_interaction() {
        let graph = SimpleGraph::new(2, &[], &[]).unwrap();
        let c = CostModel::QuadraticGraph {
            m: 2,
            coeffs: BTreeMap::from([((0, 1), 1.0)]),
        };
        let report = check_submodularity(&c, &graph, 5, 1e-4, (0.0, 1.0), 7).unwrap();
        assert!(!report.pass);
        assert_eq!(report.witness.as_ref().unwrap().1, (0, 1));
    }

    #[test]
    fn submodularity_check_fails_on_slack_edge() {
        let graph = SimpleGraph::new(3, &[(0, 2)], &[]).unwrap();
        let c = CostModel::QuadraticGraph {
            m: 3,
            coeffs: BTreeMap::from([((0, 1), -1.0)]),
        };
        let report = check_submodularity(&c, &graph, 5, 1e-4, (0.0, 1.0), 7).unwrap();
        assert!(!report.pass);
        assert_eq!(report.witness.as_ref().unwrap().1, (0, 2));
    }

    #[test]
    fn path_condition_examples() {
        let complete = SimpleGraph::complete(3).unwrap();
        assert!(check_path_condition(&complete).0);

        let path_with_relay = SimpleGraph::new(3, &[(0, 1), (1, 2)], &[1]).unwrap();
        let (ok, witness) = check_path_condition(&path_with_relay);
        assert!(ok);
        assert_eq!(witness[&2], vec![0, 1, 2]);

        let path_no_relay = SimpleGraph::new(3, &[(0, 1), (1, 2)], &[]).unwrap();
        let (ok, witness) = check_path_condition(&path_no_relay);
        assert!(!ok);
        assert!(!witness.contains_key(&2));
    }

    #[test]
    fn compatibility_examples() {
        let points = vec![vec![0.3, 0.4, 0.5], vec![0.1, 0.9, 0.2]];
        let neg = all_pairs_cost(3, -1.0);
        assert!(check_compatibility(&neg, &points, 1e-4).unwrap().pass);

        let pos = CostModel::QuadraticGraph {
            m: 3,
            coeffs: BTreeMap::from([((0, 1), 1.0), ((0, 2), 1.0), ((1, 2), 1.0)]),
        };
        let report = check_compatibility(&pos, &points, 1e-4).unwrap();
        assert!(!report.pass);
        assert!(matches!(
            report.triples[&(0, 1, 2)],
            TripleVerdict::Fail { .. }
        ));

        let single = CostModel::QuadraticGraph {
            m: 3,
            coeffs: BTreeMap::from([((0, 1), -1.0)]),
        };
        let report = check_compatibility(&single, &points, 1e-4).unwrap();
        assert!(report.inconclusive);
        assert_eq!(report.triples[&(0, 1, 2)], TripleVerdict::Inconclusive);
    }

    #[test]
    fn pair_partition_is_single_product() {
        let c = pair_bilinear(-1.0);
        assert_abs_diff_eq!(c.eval(&[2.0, 3.0]).unwrap(), -6.0);
    }

    #[test]
    fn four_axis_partition_frozen_value() {
        let spec = PartitionSpec::new(&[0], &[1, 3], &[2], 3, -1.0).unwrap();
        let c = make_bilinear_partition_cost(spec).unwrap();
        assert_abs_diff_eq!(c.eval(&[1.0, 1.0, 1.0, 1.0]).unwrap(), -5.0);
    }

    #[test]
    fn partition_must_contain_axis_zero_in_first_group() {
        assert!(PartitionSpec::new(&[1], &[0], &[], 0, -1.0).is_err());
    }

    #[test]
    fn partition_regrouped_identity() {
        let spec = PartitionSpec::new(&[0, 2], &[1, 4], &[3, 5], 3, -0.7).unwrap();
        let c = make_bilinear_partition_cost(spec.clone()).unwrap();
        let f = |a: f64, b: f64| spec.coeff * a * b;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let s1: f64 = spec.i1.iter().map(|&i| x[i]).sum();
            let s2: f64 = spec.i2.iter().map(|&i| x[i]).sum();
            let s3: f64 = spec.i3.iter().map(|&i| x[i]).sum();
            let mut regrouped = f(s1, s2 + s3) + f(s3, s2);
            for &s in &spec.i3 {
                for &t in &spec.i3 {
                    if s < t {
                        regrouped += f(x[s], x[t]);
                    }
                }
            }
            assert!((c.eval(&x).unwrap() - regrouped).abs() <= 1e-10);
        }
    }

    #[test]
    fn bitwist_examples() {
        let grid: Vec<f64> = (0..5).map(|j| -1.0 + 0.5 * j as f64).collect();
        assert!(check_bitwist(|x, y| -x * y, &grid, &grid).pass);

        let report = check_bitwist(|x, y| -x * y * y, &grid, &grid);
        assert!(!report.pass);
        assert!(report
            .collisions
            .iter()
            .any(|c| c.map == 0 && c.args.0 == -c.args.1));

        assert!(!check_bitwist(|_, _| 0.0, &grid, &grid).pass);
    }

    #[test]
    fn cycle_frozen_value_and_product_form() {
        let blocks = [
            pair_bilinear(-1.0),
            pair_bilinear(-1.0),
            pair_bilinear(-1.0),
            pair_bilinear(-1.0),
        ];
        let c = make_cycle_cost(blocks).unwrap();
        assert_abs_diff_eq!(c.eval(&[1.0, 1.0, 1.0, 1.0]).unwrap(), -4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let product = -(x[0] + x[2]) * (x[1] + x[3]);
            assert!((c.eval(&x).unwrap() - product).abs() <= 1e-12);
        }
    }

    #[test]
    fn cycle_with_zero_blocks_reduces_to_first() {
        let c1 = pair_bilinear(-1.0);
        let c = make_cycle_cost([
            c1.clone(),
            CostModel::Zero { m: 2 },
            CostModel::Zero { m: 2 },
            CostModel::Zero { m: 2 },
        ])
        .unwrap();
        let x = [0.3, -0.7, 1.1, 0.5];
        assert_abs_diff_eq!(c.eval(&x).unwrap(), c1.eval(&x[..2]).unwrap());
    }

    #[test]
    fn cycle_rejects_wrong_arity_block() {
        let err = make_cycle_cost([
            pair_bilinear(-1.0),
            pair_bilinear(-1.0),
            pair_bilinear(-1.0),
            make_counterexample_cost(),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("arity 2"));
    }

    #[test]
    fn consecutive_chain_three_axes() {
        let spec = ChainSpec::Consecutive {
            cuts: vec![0, 1, 2],
            blocks: vec![pair_bilinear(-1.0), pair_bilinear(-1.0)],
        };
        let c = make_chain_cost(spec).unwrap();
        let x = [1.5, -0.5, 2.0];
        assert_abs_diff_eq!(
            c.eval(&x).unwrap(),
            -x[0] * x[1] - x[1] * x[2],
            epsilon = 1e-15
        );
    }

    #[test]
    fn consecutive_chain_additivity() {
        let head = all_pairs_cost(3, -1.0);
        let tail = pair_bilinear(-1.0);
        let spec = ChainSpec::Consecutive {
            cuts: vec![0, 2, 3],
            blocks: vec![head.clone(), tail.clone()],
        };
        let c = make_chain_cost(spec).unwrap();
        let x = [0.4, -1.2, 0.9, 2.2];
        assert_abs_diff_eq!(
            c.eval(&x).unwrap(),
            head.eval(&x[..3]).unwrap() + tail.eval(&x[2..]).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn twisted_chain_requires_twist_axis_in_coupling_set() {
        let spec = ChainSpec::Twisted {
            s: 3,
            t_seq: vec![1],
            y_sets: vec![vec![2]],
            blocks: vec![all_pairs_cost(3, -1.0), pair_bilinear(-1.0)],
        };
        let err = make_chain_cost(spec).unwrap_err();
        assert!(err.to_string().contains("not in its coupling set"));
    }

    #[test]
    fn twisted_chain_evaluates_blockwise() {
        let spec = ChainSpec::Twisted {
            s: 3,
            t_seq: vec![1],
            y_sets: vec![vec![1]],
            blocks: vec![all_pairs_cost(3, -1.0), pair_bilinear(-1.0)],
        };
        let c = make_chain_cost(spec).unwrap();
        assert_eq!(c.arity(), 4);
        let x = [0.2, 0.7, -0.4, 1.3];
        let head = -x[0] * x[1] - x[0] * x[2] - x[1] * x[2];
        let tail = -x[1] * x[3];
        assert_abs_diff_eq!(c.eval(&x).unwrap(), head + tail, epsilon = 1e-15);
    }

    #[test]
    fn counterexample_frozen_values() {
        let c = make_counterexample_cost();
        assert_abs_diff_eq!(c.eval(&[-1.0, 0.0, 1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(c.eval(&[1.0, 1.0, 1.0]).unwrap(), 9.0);
        assert_abs_diff_eq!(c.partial(0, &[1.0, 0.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn arity_mismatch_is_reported() {
        let c = make_counterexample_cost();
        assert!(matches!(
            c.eval(&[1.0, 2.0]),
            Err(Error::ArityMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn analytic_partials_match_finite_differences() {
        let catalog: Vec<CostModel> = vec![
            all_pairs_cost(3, -1.0),
            make_bilinear_partition_cost(
                PartitionSpec::new(&[0], &[1, 3], &[2], 3, -1.0).unwrap(),
            )
            .unwrap(),
            make_cycle_cost([
                pair_bilinear(-1.0),
                pair_bilinear(-0.5),
                pair_bilinear(-2.0),
                pair_bilinear(-1.0),
            ])
            .unwrap(),
            make_chain_cost(ChainSpec::Consecutive {
                cuts: vec![0, 2, 3],
                blocks: vec![all_pairs_cost(3, -1.0), pair_bilinear(-1.0)],
            })
            .unwrap(),
            make_chain_cost(ChainSpec::Twisted {
                s: 3,
                t_seq: vec![1],
                y_sets: vec![vec![1]],
                blocks: vec![all_pairs_cost(3, -1.0), pair_bilinear(-1.0)],
            })
            .unwrap(),
            make_counterexample_cost(),
        ];
        let h = 1e-4;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for c in &catalog {
            let m = c.arity();
            for _ in 0..100 {
                let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.9..0.9)).collect();
                for axis in 0..m {
                    let analytic = c.partial(axis, &x).unwrap();
                    let fd = fd_partial(c, axis, &x, h).unwrap();
                    assert!(
                        (analytic - fd).abs() <= 1e-6,
                        "axis {axis}: analytic {analytic} vs fd {fd}"
                    );
                }
            }
        }
    }
}
