//! Finite filtered probability spaces represented as rooted scenario trees.
//!
//! A [`ScenarioTree`] stores one-step conditional transition probabilities.
//! Nodes are kept in an arena ordered by `(time, id)`, so every time slice is
//! a contiguous index range and per-slice values line up with plain vectors.
//! [`RandomVariable`] holds one value per node of a single slice and
//! [`AdaptedProcess`] holds one value per node of every slice in `[start, T]`.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of children transition probabilities.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// One node of a tree description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub time: usize,
    pub parent: Option<String>,
    #[serde(default = "one")]
    pub prob: f64,
}

fn one() -> f64 {
    1.0
}

/// JSON tree format: horizon, node list and named leaf random variables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub horizon: usize,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub rvs: BTreeMap<String, BTreeMap<String, f64>>,
}

impl TreeFile {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn build(&self) -> Result<ScenarioTree> {
        ScenarioTree::build(self.horizon, &self.nodes)
    }

    /// Builds the tree and resolves the named random variable on its leaves.
    pub fn tree_and_rv(&self, name: &str) -> Result<(ScenarioTree, RandomVariable)> {
        let tree = self.build()?;
        let values = self
            .rvs
            .get(name)
            .ok_or_else(|| Error::MissingRv(name.to_string()))?;
        let rv = tree.leaf_rv(name, values)?;
        Ok((tree, rv))
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    id: String,
    time: usize,
    parent: Option<usize>,
    prob: f64,
    path_prob: f64,
    children: Vec<usize>,
}

impl Node {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn parent(&self) -> Option<usize> {
        self.parent
    }

    /// Conditional probability of reaching this node from its parent.
    pub fn prob(&self) -> f64 {
        self.prob
    }

    /// Unconditional probability of the path from the root to this node.
    pub fn path_prob(&self) -> f64 {
        self.path_prob
    }

    pub fn children(&self) -> &[usize] {
        &self.children
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Immutable, validated scenario tree.
#[derive(Debug, Clone)]
pub struct ScenarioTree {
    horizon: usize,
    nodes: Vec<Node>,
    /// `slices[t]..slices[t + 1]` is the arena range of time-`t` nodes.
    slices: Vec<usize>,
    index: HashMap<String, usize>,
}

impl ScenarioTree {
    /// Validates a node list and builds the tree.
    pub fn build(horizon: usize, specs: &[NodeSpec]) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidTree("horizon must be at least 1".into()));
        }
        let mut by_id: HashMap<&str, &NodeSpec> = HashMap::with_capacity(specs.len());
        for spec in specs {
            if by_id.insert(spec.id.as_str(), spec).is_some() {
                return Err(Error::InvalidTree(format!("duplicate node id {:?}", spec.id)));
            }
        }
        let roots: Vec<&NodeSpec> = specs.iter().filter(|s| s.parent.is_none()).collect();
        match roots.as_slice() {
            [root] if root.time == 0 => {}
            [root] => {
                return Err(Error::TimeGap {
                    node: root.id.clone(),
                    time: root.time,
                    parent_time: 0,
                })
            }
            [] => return Err(Error::InvalidTree("no root node".into())),
            _ => {
                let ids: Vec<&str> = roots.iter().map(|r| r.id.as_str()).collect();
                return Err(Error::InvalidTree(format!("multiple roots {ids:?}")));
            }
        }
        for spec in specs {
            if spec.time > horizon {
                return Err(Error::InvalidTree(format!(
                    "node {} has time {} beyond horizon {horizon}",
                    spec.id, spec.time
                )));
            }
            let Some(parent_id) = &spec.parent else { continue };
            let parent = by_id.get(parent_id.as_str()).ok_or_else(|| Error::DanglingParent {
                node: spec.id.clone(),
                parent: parent_id.clone(),
            })?;
            if spec.time != parent.time + 1 {
                return Err(Error::TimeGap {
                    node: spec.id.clone(),
                    time: spec.time,
                    parent_time: parent.time,
                });
            }
            if !(spec.prob > 0.0 && spec.prob <= 1.0) {
                return Err(Error::NonPositiveProbability {
                    node: spec.id.clone(),
                    prob: spec.prob,
                });
            }
        }

        let mut order: Vec<&NodeSpec> = specs.iter().collect();
        order.sort_by(|a, b| (a.time, &a.id).cmp(&(b.time, &b.id)));
        let index: HashMap<String, usize> = order
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i))
            .collect();
        let mut nodes: Vec<Node> = order
            .iter()
            .map(|s| Node {
                id: s.id.clone(),
                time: s.time,
                parent: s.parent.as_ref().map(|p| index[p]),
                prob: if s.parent.is_none() { 1.0 } else { s.prob },
                path_prob: 1.0,
                children: Vec::new(),
            })
            .collect();
        for i in 1..nodes.len() {
            let p = nodes[i].parent.expect("non-root node has a parent");
            nodes[p].children.push(i);
            nodes[i].path_prob = nodes[p].path_prob * nodes[i].prob;
        }

        let mut slices = vec![0; horizon + 2];
        for node in &nodes {
            slices[node.time + 1] += 1;
        }
        for t in 0..=horizon {
            slices[t + 1] += slices[t];
        }

        for node in &nodes {
            if node.is_leaf() {
                if node.time != horizon {
                    return Err(Error::InvalidTree(format!(
                        "leaf {} at time {} before horizon {horizon}",
                        node.id, node.time
                    )));
                }
                continue;
            }
            let sum: f64 = node.children.iter().map(|&c| nodes[c].prob).sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::ProbabilitySum {
                    node: node.id.clone(),
                    sum,
                });
            }
        }

        Ok(ScenarioTree {
            horizon,
            nodes,
            slices,
            index,
        })
    }

    /// Recombination-free binomial tree; node ids spell the path in `u`/`d`.
    pub fn binomial(horizon: usize, p_up: f64) -> Result<Self> {
        Self::from_branching(horizon, &[("u", p_up), ("d", 1.0 - p_up)])
    }

    /// Uniform branching: every non-terminal node gets one child per
    /// `(label, prob)` pair. The root id is `"r"`; children append labels.
    pub fn from_branching(horizon: usize, branches: &[(&str, f64)]) -> Result<Self> {
        let mut specs = vec![NodeSpec {
            id: "r".into(),
            time: 0,
            parent: None,
            prob: 1.0,
        }];
        let mut frontier = vec!["r".to_string()];
        for t in 1..=horizon {
            let mut next = Vec::with_capacity(frontier.len() * branches.len());
            for parent in &frontier {
                for (label, prob) in branches {
                    let id = format!("{parent}{label}");
                    specs.push(NodeSpec {
                        id: id.clone(),
                        time: t,
                        parent: Some(parent.clone()),
                        prob: *prob,
                    });
                    next.push(id);
                }
            }
            frontier = next;
        }
        Self::build(horizon, &specs)
    }

    pub fn to_specs(&self) -> Vec<NodeSpec> {
        self.nodes
            .iter()
            .map(|n| NodeSpec {
                id: n.id.clone(),
                time: n.time,
                parent: n.parent.map(|p| self.nodes[p].id.clone()),
                prob: n.prob,
            })
            .collect()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn find(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Arena index range of the time-`t` slice.
    pub fn slice(&self, t: usize) -> Range<usize> {
        self.slices[t]..self.slices[t + 1]
    }

    pub fn slice_len(&self, t: usize) -> usize {
        self.slices[t + 1] - self.slices[t]
    }

    pub fn leaves(&self) -> Range<usize> {
        self.slice(self.horizon)
    }

    /// Position of a node inside its time slice.
    pub fn slot(&self, i: usize) -> usize {
        i - self.slices[self.nodes[i].time]
    }

    /// Ancestor of `i` at time `t` (the node itself when `t` equals its time).
    pub fn ancestor_at(&self, mut i: usize, t: usize) -> usize {
        while self.nodes[i].time > t {
            i = self.nodes[i].parent.expect("time > 0 implies a parent");
        }
        i
    }

    /// Conditional probability of reaching `i` from its ancestor `from`.
    pub fn conditional_prob(&self, from: usize, i: usize) -> f64 {
        self.nodes[i].path_prob / self.nodes[from].path_prob
    }

    /// Leaves descending from `i`.
    pub fn leaves_under(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![i];
        while let Some(v) = stack.pop() {
            let node = &self.nodes[v];
            if node.is_leaf() {
                out.push(v);
            } else {
                stack.extend(node.children.iter().rev());
            }
        }
        out
    }

    /// Resolves a `leaf id → value` map into a terminal random variable.
    pub fn leaf_rv(&self, name: &str, values: &BTreeMap<String, f64>) -> Result<RandomVariable> {
        let mut out = Vec::with_capacity(self.slice_len(self.horizon));
        for i in self.leaves() {
            let id = &self.nodes[i].id;
            let v = values.get(id).copied().ok_or_else(|| Error::MissingValue {
                rv: name.to_string(),
                node: id.clone(),
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "random variable {name:?} is not finite at node {id}"
                )));
            }
            out.push(v);
        }
        Ok(RandomVariable::new(self.horizon, out))
    }

    /// Random variable at time `t` built from a per-node closure.
    pub fn rv_from_fn(&self, t: usize, mut f: impl FnMut(usize) -> f64) -> RandomVariable {
        RandomVariable::new(t, self.slice(t).map(&mut f).collect())
    }

    pub fn constant(&self, t: usize, c: f64) -> RandomVariable {
        RandomVariable::new(t, vec![c; self.slice_len(t)])
    }

    /// `E[X | F_t]` for `X` measurable at time `r ≥ t`.
    pub fn condexp(&self, x: &RandomVariable, t: usize) -> Result<RandomVariable> {
        let r = x.time();
        if t > r {
            return Err(Error::TimeOrder { t, r });
        }
        let mut current = x.values().to_vec();
        for s in (t..r).rev() {
            let base = self.slices[s + 1];
            current = self
                .slice(s)
                .map(|i| {
                    self.nodes[i]
                        .children
                        .iter()
                        .map(|&c| self.nodes[c].prob * current[c - base])
                        .sum()
                })
                .collect();
        }
        Ok(RandomVariable::new(t, current))
    }

    /// Unconditional expectation.
    pub fn expectation(&self, x: &RandomVariable) -> f64 {
        self.slice(x.time())
            .zip(x.values())
            .map(|(i, v)| self.nodes[i].path_prob * v)
            .sum()
    }

    /// Views an `F_t`-measurable variable as `F_r`-measurable, `r ≥ t`.
    pub fn lift(&self, x: &RandomVariable, r: usize) -> Result<RandomVariable> {
        let t = x.time();
        if t > r {
            return Err(Error::TimeOrder { t: r, r: t });
        }
        let base = self.slices[t];
        Ok(self.rv_from_fn(r, |i| x.values()[self.ancestor_at(i, t) - base]))
    }

    /// Doob martingale `s ↦ E[Z | F_s]` on `[start, T]`.
    pub fn conditional_process(&self, z: &RandomVariable, start: usize) -> Result<AdaptedProcess> {
        let mut slices = Vec::with_capacity(self.horizon + 1 - start);
        let mut current = z.clone();
        slices.push(current.clone());
        for s in (start..z.time()).rev() {
            current = self.condexp(&current, s)?;
            slices.push(current.clone());
        }
        slices.reverse();
        if z.time() != self.horizon {
            let top = slices.last().cloned().expect("nonempty");
            for r in z.time() + 1..=self.horizon {
                slices.push(self.lift(&top, r)?);
            }
        }
        AdaptedProcess::from_slices(self, start, slices)
    }

    /// Martingale test: largest `|M_s − E[M_{s+1} | F_s]|` over non-terminal nodes.
    pub fn is_martingale(&self, m: &AdaptedProcess, tol: f64) -> MartingaleCheck {
        let mut max_residual = 0.0_f64;
        for s in m.start()..self.horizon {
            for i in self.slice(s) {
                let next: f64 = self.nodes[i]
                    .children
                    .iter()
                    .map(|&c| self.nodes[c].prob * m.at(c))
                    .sum();
                let r = (m.at(i) - next).abs();
                if r.is_nan() {
                    max_residual = f64::NAN;
                } else if !max_residual.is_nan() {
                    max_residual = max_residual.max(r);
                }
            }
        }
        MartingaleCheck {
            is_martingale: max_residual <= tol,
            max_residual,
        }
    }

    /// `ΔZ_t = E[Z | F_t] − E[Z | F_{t−1}]` for `t = 1..T`.
    pub fn martingale_differences(&self, z: &RandomVariable) -> Result<AdaptedProcess> {
        let doob = self.conditional_process(z, 0)?;
        let slices = (1..=self.horizon)
            .map(|t| {
                self.rv_from_fn(t, |i| {
                    let p = self.nodes[i].parent.expect("t ≥ 1");
                    doob.at(i) - doob.at(p)
                })
            })
            .collect();
        AdaptedProcess::from_slices(self, 1, slices)
    }
}

/// Outcome of a martingale test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleCheck {
    pub is_martingale: bool,
    pub max_residual: f64,
}

/// An element of `L∞_t`: one value per time-`t` node, in slice order.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomVariable {
    time: usize,
    values: Vec<f64>,
}

impl RandomVariable {
    pub fn new(time: usize, values: Vec<f64>) -> Self {
        RandomVariable { time, values }
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        RandomVariable::new(self.time, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination; both variables must live on the same slice.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.time, other.time, "random variables on different slices");
        RandomVariable::new(
            self.time,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A process `(X_s)_{s=start..T}` with one value per node of each slice.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess {
    start: usize,
    /// Arena index of the first node of slice `start`.
    offset: usize,
    /// Slice boundaries relative to `offset`, `T − start + 2` entries.
    bounds: Vec<usize>,
    values: Vec<f64>,
}

impl AdaptedProcess {
    pub fn from_slices(tree: &ScenarioTree, start: usize, slices: Vec<RandomVariable>) -> Result<Self> {
        if start > tree.horizon || slices.len() != tree.horizon + 1 - start {
            return Err(Error::InvalidParameter(format!(
                "process starting at {start} needs {} slices, got {}",
                tree.horizon.saturating_sub(start) + 1,
                slices.len()
            )));
        }
        let offset = tree.slices[start];
        let bounds: Vec<usize> = tree.slices[start..].iter().map(|b| b - offset).collect();
        let mut values = Vec::with_capacity(*bounds.last().expect("nonempty"));
        for (k, rv) in slices.into_iter().enumerate() {
            let s = start + k;
            if rv.time != s || rv.values.len() != tree.slice_len(s) {
                return Err(Error::InvalidParameter(format!(
                    "slice {k} of process does not match time {s}"
                )));
            }
            values.extend(rv.values);
        }
        Ok(AdaptedProcess {
            start,
            offset,
            bounds,
            values,
        })
    }

    /// Process from a per-node closure over nodes with time ≥ `start`.
    pub fn from_fn(tree: &ScenarioTree, start: usize, mut f: impl FnMut(usize) -> f64) -> Self {
        let offset = tree.slices[start];
        AdaptedProcess {
            start,
            offset,
            bounds: tree.slices[start..].iter().map(|b| b - offset).collect(),
            values: (offset..tree.len()).map(&mut f).collect(),
        }
    }

    pub fn constant(tree: &ScenarioTree, start: usize, c: f64) -> Self {
        Self::from_fn(tree, start, |_| c)
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn horizon(&self) -> usize {
        self.start + self.bounds.len() - 2
    }

    /// Value at arena node `i`; `i` must lie at a time ≥ `start`.
    pub fn at(&self, i: usize) -> f64 {
        self.values[i - self.offset]
    }

    pub fn slice(&self, s: usize) -> &[f64] {
        let k = s - self.start;
        &self.values[self.bounds[k]..self.bounds[k + 1]]
    }

    pub fn rv(&self, s: usize) -> RandomVariable {
        RandomVariable::new(s, self.slice(s).to_vec())
    }

    /// Iterates `(arena index, value)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(k, &v)| (k + self.offset, v))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        AdaptedProcess {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Pathwise sums `Σ_{s=start}^T X_s` at every leaf, in leaf order.
    pub fn path_sums(&self, tree: &ScenarioTree) -> RandomVariable {
        tree.rv_from_fn(tree.horizon(), |leaf| {
            let mut total = 0.0;
            let mut v = leaf;
            loop {
                total += self.at(v);
                if tree.node(v).time() == self.start {
                    break;
                }
                v = tree.node(v).parent().expect("time > start");
            }
            total
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_leaf() -> ScenarioTree {
        ScenarioTree::binomial(1, 0.5).unwrap()
    }

    fn spec(id: &str, time: usize, parent: Option<&str>, prob: f64) -> NodeSpec {
        NodeSpec {
            id: id.into(),
            time,
            parent: parent.map(Into::into),
            prob,
        }
    }

    #[test]
    fn two_point_space() {
        let tree = two_leaf();
        assert_eq!(tree.len(), 3);
        for leaf in tree.leaves() {
            assert_eq!(tree.node(leaf).path_prob(), 0.5);
        }
    }

    #[test]
    fn rejects_bad_probability_sum() {
        let nodes = [
            spec("r", 0, None, 1.0),
            spec("a", 1, Some("r"), 0.6),
            spec("b", 1, Some("r"), 0.5),
        ];
        let err = ScenarioTree::build(1, &nodes).unwrap_err();
        assert_eq!(err.to_string(), "node r: probability sum 1.1 ≠ 1");
    }

    #[test]
    fn rejects_dangling_parent_time_gap_and_zero_prob() {
        let dangling = [spec("r", 0, None, 1.0), spec("a", 1, Some("x"), 1.0)];
        assert!(matches!(
            ScenarioTree::build(1, &dangling),
            Err(Error::DanglingParent { node, .. }) if node == "a"
        ));
        let gap = [spec("r", 0, None, 1.0), spec("a", 2, Some("r"), 1.0)];
        assert!(matches!(
            ScenarioTree::build(2, &gap),
            Err(Error::TimeGap { node, .. }) if node == "a"
        ));
        let zero = [
            spec("r", 0, None, 1.0),
            spec("a", 1, Some("r"), 1.0),
            spec("b", 1, Some("r"), 0.0),
        ];
        assert!(matches!(
            ScenarioTree::build(1, &zero),
            Err(Error::NonPositiveProbability { node, .. }) if node == "b"
        ));
        let short_leaf = [
            spec("r", 0, None, 1.0),
            spec("a", 1, Some("r"), 0.5),
            spec("b", 1, Some("r"), 0.5),
            spec("aa", 2, Some("a"), 1.0),
        ];
        assert!(matches!(ScenarioTree::build(2, &short_leaf), Err(Error::InvalidTree(_))));
    }

    #[test]
    fn three_period_binomial_has_fifteen_nodes() {
        let tree = ScenarioTree::binomial(3, 0.3).unwrap();
        assert_eq!(tree.len(), 15);
        for t in 0..=3 {
            assert_eq!(tree.slice_len(t), 1 << t);
        }
    }

    #[test]
    fn slices_are_sorted_by_id() {
        let tree = ScenarioTree::binomial(2, 0.5).unwrap();
        let ids: Vec<&str> = tree.slice(2).map(|i| tree.node(i).id()).collect();
        assert_eq!(ids, ["rdd", "rdu", "rud", "ruu"]);
    }

    #[test]
    fn condexp_examples() {
        let tree = two_leaf();
        let x = tree.rv_from_fn(1, |i| if tree.node(i).id() == "ru" { 1.0 } else { 0.0 });
        assert_eq!(tree.condexp(&x, 0).unwrap().values(), &[0.5]);
        let c = tree.constant(1, 3.25);
        assert_eq!(tree.condexp(&c, 0).unwrap().values(), &[3.25]);
        assert!(matches!(
            tree.condexp(&tree.condexp(&x, 0).unwrap(), 1),
            Err(Error::TimeOrder { t: 1, r: 0 })
        ));

        let tree = ScenarioTree::binomial(2, 0.5).unwrap();
        let ups = tree.rv_from_fn(2, |i| tree.node(i).id().matches('u').count() as f64);
        let e1 = tree.condexp(&ups, 1).unwrap();
        // slice order: rd, ru
        assert_eq!(e1.values(), &[0.5, 1.5]);
    }

    #[test]
    fn martingale_examples() {
        let tree = two_leaf();
        let c = AdaptedProcess::constant(&tree, 0, 2.0);
        let check = tree.is_martingale(&c, 0.0);
        assert!(check.is_martingale);
        assert_eq!(check.max_residual, 0.0);

        // slice order at t=1: rd, ru
        let m = AdaptedProcess::from_slices(
            &tree,
            0,
            vec![RandomVariable::new(0, vec![0.9]), RandomVariable::new(1, vec![0.0, 2.0])],
        )
        .unwrap();
        let check = tree.is_martingale(&m, 1e-12);
        assert!(!check.is_martingale);
        assert!((check.max_residual - 0.1).abs() < 1e-15);
    }

    #[test]
    fn martingale_difference_examples() {
        let tree = two_leaf();
        let z = tree.rv_from_fn(1, |i| if tree.node(i).id() == "ru" { 1.0 } else { 0.0 });
        let dz = tree.martingale_differences(&z).unwrap();
        assert_eq!(dz.slice(1), &[-0.5, 0.5]);

        let det = tree.constant(1, 7.0);
        let dz = tree.martingale_differences(&det).unwrap();
        assert!(dz.slice(1).iter().all(|&v| v == 0.0));

        let tree = ScenarioTree::binomial(2, 0.5).unwrap();
        let sum = tree.rv_from_fn(2, |i| {
            tree.node(i)
                .id()
                .chars()
                .skip(1)
                .map(|c| if c == 'u' { 1.0 } else { -1.0 })
                .sum()
        });
        let dz = tree.martingale_differences(&sum).unwrap();
        for t in 1..=2 {
            for i in tree.slice(t) {
                let last = tree.node(i).id().chars().last().unwrap();
                let expect = if last == 'u' { 1.0 } else { -1.0 };
                assert!((dz.at(i) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lift_and_path_sums() {
        let tree = ScenarioTree::binomial(2, 0.4).unwrap();
        let x1 = tree.rv_from_fn(1, |i| tree.slot(i) as f64 + 1.0);
        let lifted = tree.lift(&x1, 2).unwrap();
        assert_eq!(lifted.values(), &[1.0, 1.0, 2.0, 2.0]);
        let ones = AdaptedProcess::constant(&tree, 0, 1.0);
        assert!(ones.path_sums(&tree).values().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn tree_file_reports_missing_rv_and_values() {
        let json = r#"{"horizon": 1, "nodes": [
            {"id": "r", "time": 0, "parent": null, "prob": 1.0},
            {"id": "a", "time": 1, "parent": "r", "prob": 0.5},
            {"id": "b", "time": 1, "parent": "r", "prob": 0.5}],
            "rvs": {"Z": {"a": 1.0}}}"#;
        let file = TreeFile::from_json_str(json).unwrap();
        assert!(matches!(file.tree_and_rv("W"), Err(Error::MissingRv(name)) if name == "W"));
        assert!(matches!(
            file.tree_and_rv("Z"),
            Err(Error::MissingValue { node, .. }) if node == "b"
        ));
    }
}
