//! Seeded random instances: small trees, bounded payoffs, positive martingale
//! densities and feasible allocations.

use rand::Rng;

use crate::error::Result;
use crate::preferences::RiskAversionSchedule;
use crate::tree::{AdaptedProcess, NodeSpec, RandomVariable, ScenarioTree};

/// Shape limits for [`random_tree`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeShape {
    pub max_horizon: usize,
    pub max_leaves: usize,
    pub max_branching: usize,
}

impl Default for TreeShape {
    fn default() -> Self {
        TreeShape {
            max_horizon: 4,
            max_leaves: 16,
            max_branching: 3,
        }
    }
}

/// Random tree with horizon in `1..=max_horizon`, at most `max_leaves`
/// leaves and transition probabilities bounded away from zero.
pub fn random_tree<R: Rng>(rng: &mut R, shape: TreeShape) -> Result<ScenarioTree> {
    let horizon = rng.gen_range(1..=shape.max_horizon.max(1));
    let mut specs = vec![NodeSpec {
        id: "n".into(),
        time: 0,
        parent: None,
        prob: 1.0,
    }];
    let mut frontier = vec!["n".to_string()];
    for t in 1..=horizon {
        let mut next = Vec::new();
        for (k, parent) in frontier.iter().enumerate() {
            // keep room for one child per remaining frontier node
            let remaining = frontier.len() - k - 1;
            let room = shape.max_leaves.saturating_sub(next.len() + remaining).max(1);
            let children = rng.gen_range(1..=shape.max_branching.min(room).max(1));
            let weights: Vec<f64> = (0..children).map(|_| rng.gen_range(0.2..1.0)).collect();
            let total: f64 = weights.iter().sum();
            for (c, w) in weights.iter().enumerate() {
                let id = format!("{parent}{c}");
                specs.push(NodeSpec {
                    id: id.clone(),
                    time: t,
                    parent: Some(parent.clone()),
                    prob: w / total,
                });
                next.push(id);
            }
        }
        frontier = next;
    }
    ScenarioTree::build(horizon, &specs)
}

/// Terminal payoff with values uniform in `[-bound, bound]`.
pub fn random_payoff<R: Rng>(rng: &mut R, tree: &ScenarioTree, bound: f64) -> RandomVariable {
    tree.rv_from_fn(tree.horizon(), |_| rng.gen_range(-bound..=bound))
}

/// Random payoff measurable at time `r`.
pub fn random_measurable<R: Rng>(rng: &mut R, tree: &ScenarioTree, r: usize, bound: f64) -> RandomVariable {
    tree.rv_from_fn(r, |_| rng.gen_range(-bound..=bound))
}

/// Positive martingale on `[t, T]` with `M_t = 1`: each one-step ratio is a
/// random positive density of the children's transition probabilities.
pub fn random_martingale<R: Rng>(rng: &mut R, tree: &ScenarioTree, t: usize, spread: f64) -> AdaptedProcess {
    let mut ratio = vec![1.0; tree.len()];
    for i in tree.slice(t).start..tree.len() {
        let children = tree.node(i).children();
        if children.is_empty() {
            continue;
        }
        let w: Vec<f64> = children.iter().map(|_| (rng.gen_range(-spread..=spread)).exp()).collect();
        let mean: f64 = children.iter().zip(&w).map(|(&c, w)| tree.node(c).prob() * w).sum();
        for (&c, w) in children.iter().zip(&w) {
            ratio[c] = w / mean;
        }
    }
    let mut values = vec![1.0; tree.len()];
    let first = if t < tree.horizon() { tree.slice(t + 1).start } else { tree.len() };
    for i in first..tree.len() {
        values[i] = values[tree.node(i).parent().expect("s > t")] * ratio[i];
    }
    AdaptedProcess::from_fn(tree, t, |i| values[i])
}

/// Feasible allocation of `z` on `[t, T]`: random values before `T`, the
/// terminal slot absorbs the remainder so every path sums to `z`.
pub fn random_allocation<R: Rng>(
    rng: &mut R,
    tree: &ScenarioTree,
    z: &RandomVariable,
    t: usize,
    bound: f64,
) -> AdaptedProcess {
    let horizon = tree.horizon();
    let offset = tree.slice(t).start;
    let mut values = vec![0.0; tree.len() - offset];
    let mut prefix = vec![0.0; tree.len() - offset];
    let leaf_base = tree.leaves().start;
    for i in offset..tree.len() {
        let node = tree.node(i);
        let before = if node.time() == t {
            0.0
        } else {
            prefix[node.parent().expect("s > t") - offset]
        };
        let x = if node.time() == horizon {
            z.values()[i - leaf_base] - before
        } else {
            rng.gen_range(-bound..=bound)
        };
        values[i - offset] = x;
        prefix[i - offset] = before + x;
    }
    AdaptedProcess::from_fn(tree, t, |i| values[i - offset])
}

/// Random schedule with entries in `[lo, hi]`.
pub fn random_schedule<R: Rng>(
    rng: &mut R,
    agents: usize,
    horizon: usize,
    lo: f64,
    hi: f64,
) -> Result<RiskAversionSchedule> {
    RiskAversionSchedule::from_matrix(
        (0..agents)
            .map(|_| (0..=horizon).map(|_| rng.gen_range(lo..=hi)).collect())
            .collect(),
    )
}
