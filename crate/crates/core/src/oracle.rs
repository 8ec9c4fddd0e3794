//! Brute-force verifiers for tiny instances.
//!
//! Nothing here is used by the production valuation paths. Grid searches
//! are exhaustive over their grids and report a tolerance derived from the
//! step and a sampled bound on the marginal utilities near the grid optimum,
//! so analytic-versus-oracle comparisons can fail.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preferences::{Utility, UtilityFamily};
use crate::tree::{AdaptedProcess, RandomVariable, ScenarioTree};
use crate::valuation::{dual_objective_with, primal_objective};

/// One-dimensional search grid shared by every decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    /// Maximum number of elementary evaluations.
    pub budget: u64,
}

pub const DEFAULT_BUDGET: u64 = 4_000_000_000;

impl GridSpec {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        let grid = GridSpec {
            lo,
            hi,
            step,
            budget: DEFAULT_BUDGET,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn with_budget(self, budget: u64) -> Self {
        GridSpec { budget, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid step {} must be positive", self.step)));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(Error::InvalidParameter(format!(
                "grid range [{}, {}] is empty",
                self.lo, self.hi
            )));
        }
        if (self.hi - self.lo) / self.step > self.budget as f64 {
            return Err(Error::Budget(format!(
                "grid has more than {} points",
                self.budget
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn value(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.step
    }

    fn charge(&self, evaluations: u64) -> Result<()> {
        if evaluations > self.budget {
            return Err(Error::Budget(format!(
                "{evaluations} evaluations exceed the budget of {}",
                self.budget
            )));
        }
        Ok(())
    }
}

/// Largest `u'` sampled on `[a, b]`.
fn sampled_slope(u: &dyn Utility, a: f64, b: f64) -> f64 {
    (0..=32)
        .map(|k| u.marginal(a + (b - a) * k as f64 / 32.0))
        .fold(0.0, f64::max)
}

/// Index of the first maximum; deterministic under ties.
fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (k, v);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConvolution {
    pub value: f64,
    pub split: Vec<f64>,
    pub evaluations: u64,
    /// Bound on `analytic − value` implied by the grid resolution.
    pub tolerance: f64,
}

/// Exhaustive maximisation of `Σ u_i(x_i)` over `Σ x_i = x`, the first
/// `n − 1` shares on the grid and the last absorbing the remainder.
pub fn grid_sup_convolution(
    members: &[Arc<dyn Utility>],
    x: f64,
    grid: &GridSpec,
) -> Result<GridConvolution> {
    grid.validate()?;
    let n = members.len();
    if !(1..=3).contains(&n) {
        return Err(Error::InvalidParameter(format!(
            "grid convolution supports 1 to 3 utilities, got {n}"
        )));
    }
    if n == 1 {
        return Ok(GridConvolution {
            value: members[0].value(x),
            split: vec![x],
            evaluations: 1,
            tolerance: 0.0,
        });
    }
    let g = grid.points();
    let evaluations = (g as u64).pow(n as u32 - 1);
    grid.charge(evaluations)?;
    let first: Vec<f64> = (0..g).map(|j| members[0].value(grid.value(j))).collect();
    let (split, value) = if n == 2 {
        let values: Vec<f64> = (0..g)
            .into_par_iter()
            .map(|j| first[j] + members[1].value(x - grid.value(j)))
            .collect();
        let (j, v) = argmax(&values);
        (vec![grid.value(j), x - grid.value(j)], v)
    } else {
        let second: Vec<f64> = (0..g).map(|k| members[1].value(grid.value(k))).collect();
        let rows: Vec<(usize, f64)> = (0..g)
            .into_par_iter()
            .map(|j| {
                let row: Vec<f64> = (0..g)
                    .map(|k| first[j] + second[k] + members[2].value(x - grid.value(j) - grid.value(k)))
                    .collect();
                argmax(&row)
            })
            .collect();
        let best_j = argmax(&rows.iter().map(|r| r.1).collect::<Vec<_>>()).0;
        let (k, v) = rows[best_j];
        let (a, b) = (grid.value(best_j), grid.value(k));
        (vec![a, b, x - a - b], v)
    };
    let reach = grid.step * (n - 1) as f64;
    let slope = members
        .iter()
        .zip(&split)
        .map(|(u, &xi)| sampled_slope(u.as_ref(), xi - reach, xi + reach))
        .fold(0.0, f64::max);
    Ok(GridConvolution {
        value,
        split,
        evaluations,
        tolerance: slope * reach,
    })
}

#[derive(Debug, Clone)]
pub struct GridAllocation {
    /// `Σ_s Σ_i E[u_{i,s}(X_{i,s})]` at the grid optimum.
    pub objective: f64,
    pub aggregate: AdaptedProcess,
    pub agents: Vec<AdaptedProcess>,
    pub evaluations: u64,
    pub tolerance: f64,
    /// Martingale residual of `u'_s(X_s)` at the grid optimum.
    pub marginal_residual: f64,
}

/// Best split of a time-`s` total across agents, tabulated on the sum grid.
struct SlotTable {
    value: Vec<f64>,
    /// Grid index of agent 0's share.
    first: Vec<usize>,
}

fn slot_table(family: &UtilityFamily, s: usize, grid: &GridSpec) -> SlotTable {
    let g = grid.points();
    let u0: Vec<f64> = (0..g).map(|j| family.member(0, s).value(grid.value(j))).collect();
    if family.agents() == 1 {
        return SlotTable {
            value: u0,
            first: (0..g).collect(),
        };
    }
    let u1: Vec<f64> = (0..g).map(|j| family.member(1, s).value(grid.value(j))).collect();
    let (value, first) = (0..2 * g - 1)
        .into_par_iter()
        .map(|k| {
            let lo = k.saturating_sub(g - 1);
            let hi = k.min(g - 1);
            let mut best = (lo, f64::NEG_INFINITY);
            for j in lo..=hi {
                let v = u0[j] + u1[k - j];
                if v > best.1 {
                    best = (j, v);
                }
            }
            (best.1, best.0)
        })
        .unzip();
    SlotTable { value, first }
}

/// Leaf table over prefix indices: best utility of the terminal slot when
/// earlier slots sum to `prefix_lo + p · step`.
fn leaf_table(
    family: &UtilityFamily,
    horizon: usize,
    payoff: f64,
    prefix_lo: f64,
    prefixes: usize,
    grid: &GridSpec,
) -> SlotTable {
    let g = grid.points();
    let (value, first) = (0..prefixes)
        .into_par_iter()
        .map(|p| {
            let total = payoff - (prefix_lo + p as f64 * grid.step);
            if family.agents() == 1 {
                return (family.member(0, horizon).value(total), 0);
            }
            let mut best = (0, f64::NEG_INFINITY);
            for j in 0..g {
                let a = grid.value(j);
                let v = family.member(0, horizon).value(a) + family.member(1, horizon).value(total - a);
                if v > best.1 {
                    best = (j, v);
                }
            }
            (best.1, best.0)
        })
        .unzip();
    SlotTable { value, first }
}

/// Exhaustive grid search over allocations from time 0 on trees with at
/// most two periods, two branches per node and two agents.
///
/// Every slot before `T` takes grid values per agent; at the leaves the
/// last agent absorbs the budget. The search is organised as a dynamic
/// programme over the sum grid, which enumerates exactly the same set of
/// allocations as the naive product loop.
pub fn grid_allocation_search(
    tree: &ScenarioTree,
    z: &RandomVariable,
    family: &UtilityFamily,
    grid: &GridSpec,
) -> Result<GridAllocation> {
    grid.validate()?;
    let horizon = tree.horizon();
    let n = family.agents();
    if horizon > 2 || n > 2 || tree.nodes().iter().any(|v| v.children().len() > 2) {
        return Err(Error::InvalidParameter(
            "grid allocation search needs at most 2 periods, 2 branches and 2 agents".into(),
        ));
    }
    if family.horizon() != horizon {
        return Err(Error::HorizonMismatch {
            tree: horizon,
            what: "utility family",
            other: family.horizon(),
        });
    }
    if z.time() != horizon || z.values().len() != tree.slice_len(horizon) {
        return Err(Error::InvalidParameter("payoff must be terminal".into()));
    }

    let g = grid.points() as u64;
    let sums = n as u64 * (g - 1) + 1;
    let prefixes = horizon as u64 * (sums - 1) + 1;
    let leaves = tree.slice_len(horizon) as u64;
    let mid = if horizon == 2 { tree.slice_len(1) as u64 } else { 0 };
    let slot_cost = if n == 2 { horizon as u64 * sums * g } else { horizon as u64 * g };
    let leaf_cost = leaves * prefixes * if n == 2 { g } else { 1 };
    let search_cost = sums * (leaves + mid * sums * 2);
    let evaluations = slot_cost + leaf_cost + search_cost;
    grid.charge(evaluations)?;

    let prefix_lo = horizon as f64 * n as f64 * grid.lo;
    let sum_value = |k: usize| n as f64 * grid.lo + k as f64 * grid.step;
    let slots: Vec<SlotTable> = (0..horizon).map(|s| slot_table(family, s, grid)).collect();
    let leaf_base = tree.leaves().start;
    let leaf_tables: Vec<SlotTable> = tree
        .leaves()
        .map(|l| leaf_table(family, horizon, z.values()[l - leaf_base], prefix_lo, prefixes as usize, grid))
        .collect();
    let sums = sums as usize;

    // expected terminal utility below node v given the prefix index p
    let below = |v: usize, p: usize| -> f64 {
        tree.node(v)
            .children()
            .iter()
            .map(|&l| tree.node(l).prob() * leaf_tables[l - leaf_base].value[p])
            .sum::<f64>()
    };
    let root = tree.root();
    let middle: Vec<usize> = if horizon == 2 { tree.slice(1).collect() } else { Vec::new() };
    let best_mid = |v: usize, k0: usize| -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for k1 in 0..sums {
            let val = slots[1].value[k1] + below(v, k0 + k1);
            if val > best.1 {
                best = (k1, val);
            }
        }
        best
    };
    let scores: Vec<f64> = (0..sums)
        .into_par_iter()
        .map(|k0| {
            let rest = if horizon == 1 {
                below(root, k0)
            } else {
                middle
                    .iter()
                    .map(|&v| tree.node(v).prob() * best_mid(v, k0).1)
                    .sum()
            };
            slots[0].value[k0] + rest
        })
        .collect();
    let (k0, objective) = argmax(&scores);

    // reconstruct per-node sum indices and splits
    let mut sum_index = vec![0usize; tree.len()];
    sum_index[root] = k0;
    for &v in &middle {
        sum_index[v] = best_mid(v, k0).0;
    }
    let mut agents = vec![vec![0.0; tree.len()]; n];
    let mut aggregate = vec![0.0; tree.len()];
    let mut prefix_index = vec![0usize; tree.len()];
    for i in 0..tree.len() {
        let s = tree.node(i).time();
        let p_before = tree.node(i).parent().map(|p| prefix_index[p]).unwrap_or(0);
        if s < horizon {
            let k = sum_index[i];
            prefix_index[i] = p_before + k;
            aggregate[i] = sum_value(k);
            let j = slots[s].first[k];
            agents[0][i] = grid.value(j);
            if n == 2 {
                agents[1][i] = aggregate[i] - agents[0][i];
            }
        } else {
            let total = z.values()[i - leaf_base] - (prefix_lo + p_before as f64 * grid.step);
            aggregate[i] = total;
            if n == 2 {
                agents[0][i] = grid.value(leaf_tables[i - leaf_base].first[p_before]);
                agents[1][i] = total - agents[0][i];
            } else {
                agents[0][i] = total;
            }
        }
    }

    let free_per_path = (n * horizon + n - 1) as f64;
    let reach = grid.step * free_per_path;
    let mut slope: f64 = 0.0;
    for i in 0..tree.len() {
        let s = tree.node(i).time();
        for (k, row) in agents.iter().enumerate() {
            slope = slope.max(sampled_slope(family.member(k, s).as_ref(), row[i] - reach, row[i] + reach));
        }
    }
    let marginal = AdaptedProcess::from_fn(tree, 0, |i| {
        family.member(0, tree.node(i).time()).marginal(agents[0][i])
    });
    Ok(GridAllocation {
        objective,
        aggregate: AdaptedProcess::from_fn(tree, 0, |i| aggregate[i]),
        agents: agents
            .iter()
            .map(|row| AdaptedProcess::from_fn(tree, 0, |i| row[i]))
            .collect(),
        evaluations,
        tolerance: slope * reach,
        marginal_residual: tree.is_martingale(&marginal, 0.0).max_residual,
    })
}

/// Outcome of a local Pareto scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoScan {
    pub perturbations: usize,
    /// Perturbations that weakly raise every agent's expected utility and
    /// strictly raise at least one.
    pub improving: usize,
    /// Largest gain of the worst-off agent over all perturbations.
    pub best_worst_case: f64,
}

fn expected_utilities(tree: &ScenarioTree, family: &UtilityFamily, agents: &[AdaptedProcess]) -> Vec<f64> {
    agents
        .iter()
        .enumerate()
        .map(|(k, x)| {
            x.iter()
                .map(|(i, v)| tree.node(i).path_prob() * family.member(k, tree.node(i).time()).value(v))
                .sum()
        })
        .collect()
}

/// Moves `delta` of agent `i`'s wealth at one node to agent `j` at every
/// leaf below it (and the reverse), for every node and pair of agents, and
/// counts Pareto improvements of the time-0 expected utilities.
pub fn pareto_scan(
    tree: &ScenarioTree,
    family: &UtilityFamily,
    agents: &[AdaptedProcess],
    delta: f64,
) -> Result<ParetoScan> {
    if agents.len() != family.agents() || agents.iter().any(|x| x.start() != 0) {
        return Err(Error::InvalidParameter(
            "one allocation from time 0 per agent required".into(),
        ));
    }
    let base = expected_utilities(tree, family, agents);
    let scale = base.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let eps = 1e-13 * scale;
    let mut scan = ParetoScan {
        perturbations: 0,
        improving: 0,
        best_worst_case: f64::NEG_INFINITY,
    };
    let horizon = tree.horizon();
    let n = agents.len();
    for v in 0..tree.len() {
        let leaves = tree.leaves_under(v);
        let s = tree.node(v).time();
        for i in 0..n {
            for j in 0..n {
                if s == horizon && i == j {
                    continue;
                }
                for sign in [1.0, -1.0] {
                    let d = sign * delta;
                    let mut change = vec![0.0; n];
                    let ui = family.member(i, s);
                    let xi = agents[i].at(v);
                    change[i] += tree.node(v).path_prob() * (ui.value(xi + d) - ui.value(xi));
                    let uj = family.member(j, horizon);
                    for &l in &leaves {
                        let xj = agents[j].at(l) + if l == v && i == j { d } else { 0.0 };
                        change[j] += tree.node(l).path_prob() * (uj.value(xj - d) - uj.value(xj));
                    }
                    scan.perturbations += 1;
                    let worst = change.iter().copied().fold(f64::INFINITY, f64::min);
                    let best = change.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    scan.best_worst_case = scan.best_worst_case.max(worst);
                    if worst >= -eps && best > eps {
                        scan.improving += 1;
                    }
                }
            }
        }
    }
    Ok(scan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityGap {
    /// `Σ_s E[u_s(X_s) | F_t]` per time-`t` node.
    pub primal: Vec<f64>,
    /// `Σ_s E[u*_s(M_s) | F_t] + E[M_T Z | F_t]` per time-`t` node.
    pub dual: Vec<f64>,
    /// Smallest nodewise `dual − primal`.
    pub gap: f64,
    /// Largest pathwise `|Σ_s X_s − Z|`.
    pub budget_residual: f64,
}

/// Weak-duality gap for a feasible allocation and a positive martingale,
/// both starting at the same time.
pub fn duality_gap<U: Utility>(
    tree: &ScenarioTree,
    z: &RandomVariable,
    utilities: &[U],
    x: &AdaptedProcess,
    m: &AdaptedProcess,
) -> Result<DualityGap> {
    let t = x.start();
    if m.start() != t {
        return Err(Error::InvalidParameter(format!(
            "allocation starts at {t} but martingale at {}",
            m.start()
        )));
    }
    let budget_residual = x.path_sums(tree).max_abs_diff(z);
    let scale = z.values().iter().map(|v| v.abs()).fold(1.0, f64::max);
    if !(budget_residual <= 1e-9 * scale) {
        return Err(Error::InvalidParameter(format!(
            "allocation misses the payoff by {budget_residual:e}"
        )));
    }
    let primal = primal_objective(tree, x, utilities, t)?;
    let dual = dual_objective_with(tree, m, z, utilities, t)?;
    let gap = dual
        .values()
        .iter()
        .zip(primal.values())
        .map(|(d, p)| d - p)
        .fold(f64::INFINITY, f64::min);
    Ok(DualityGap {
        primal: primal.into_values(),
        dual: dual.into_values(),
        gap,
        budget_residual,
    })
}

/// One line of an oracle-check report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Observed discrepancy (or count) that the check compares.
    pub value: f64,
    pub tolerance: f64,
}

impl CheckResult {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        CheckResult {
            name: name.into(),
            passed: value <= tolerance,
            value,
            tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub seed: u64,
    pub step: f64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

/// Runs the fixed battery of tiny-instance verifications plus `trials`
/// seeded random duality checks.
pub fn run_oracle_checks(seed: u64, step: f64, trials: usize) -> Result<OracleReport> {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::instances::{random_allocation, random_martingale, random_payoff, random_schedule, random_tree, TreeShape};
    use crate::preferences::{sup_convolution, ExponentialUtility, MixedExponentialUtility};
    use crate::valuation::{
        aggregate_exponentials, general_utility, optimal_allocation, utility_process, SolverOptions,
    };

    let mut checks = Vec::new();
    let exp = |a: f64| -> Result<Arc<dyn Utility>> { Ok(Arc::new(ExponentialUtility::new(a)?)) };

    // sup-convolution against the grid
    for (name, members, x) in [
        ("convolution_exp_2_2", vec![exp(2.0)?, exp(2.0)?], 1.0),
        ("convolution_exp_1_3", vec![exp(1.0)?, exp(3.0)?], 2.0),
    ] {
        let grid = GridSpec::new(-2.0, 4.0, step.min(1e-3))?;
        let g = grid_sup_convolution(&members, x, &grid)?;
        let analytic = sup_convolution(&members, x)?.value;
        let excess = (g.value - analytic).max(0.0);
        checks.push(CheckResult::at_most(&format!("{name}_grid_not_above"), excess, 1e-12));
        checks.push(CheckResult::at_most(&format!("{name}_gap"), analytic - g.value, g.tolerance));
    }

    // closed-form U_0 against exhaustive allocation search
    let coin = ScenarioTree::binomial(1, 0.5)?;
    let coin_z = coin.rv_from_fn(1, |i| if coin.node(i).id() == "ru" { 1.0 } else { 0.0 });
    let schedule = crate::preferences::RiskAversionSchedule::homogeneous(1, 1, 1.0)?;
    let family = UtilityFamily::exponential(&schedule);
    let found = grid_allocation_search(&coin, &coin_z, &family, &GridSpec::new(-1.0, 2.0, step)?)?;
    let analytic = utility_process(&coin, &coin_z, &schedule, 0)?.values()[0];
    checks.push(CheckResult::at_most("allocation_coin_exp_grid_not_above", (found.objective - analytic).max(0.0), 1e-12));
    checks.push(CheckResult::at_most("allocation_coin_exp_gap", analytic - found.objective, found.tolerance));

    // general solver on a mixed two-agent family against the grid
    let tree = ScenarioTree::binomial(2, 0.5)?;
    let z = tree.rv_from_fn(2, |i| 0.5 * tree.node(i).id().bytes().filter(|&b| b == b'u').count() as f64);
    let mixed = |w: f64, a: f64, b: f64| -> Result<Arc<dyn Utility>> { Ok(Arc::new(MixedExponentialUtility::new(w, a, b)?)) };
    let family = UtilityFamily::new(vec![
        vec![mixed(0.5, 1.0, 3.0)?, exp(2.0)?, mixed(0.3, 0.5, 2.0)?],
        vec![exp(1.5)?, mixed(0.6, 1.0, 4.0)?, exp(1.0)?],
    ])?;
    let aggregates = family.aggregates();
    let analytic = general_utility(&tree, &z, &aggregates, 0, SolverOptions::default())?.values()[0];
    let found = grid_allocation_search(&tree, &z, &family, &GridSpec::new(-0.5, 1.0, step)?)?;
    checks.push(CheckResult::at_most("allocation_mixed_two_agents_grid_not_above", (found.objective - analytic).max(0.0), 1e-10));
    checks.push(CheckResult::at_most("allocation_mixed_two_agents_gap", analytic - found.objective, found.tolerance));

    // duality on random instances
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strong: f64 = 0.0;
    let mut weak: f64 = f64::INFINITY;
    let mut improving = 0usize;
    for _ in 0..trials {
        let tree = random_tree(&mut rng, TreeShape::default())?;
        let z = random_payoff(&mut rng, &tree, 2.0);
        let agents = 1 + (tree.len() % 2);
        let schedule = random_schedule(&mut rng, agents, tree.horizon(), 0.5, 2.0)?;
        let us = aggregate_exponentials(&schedule);
        let opt = optimal_allocation(&tree, &z, &schedule, 0)?;
        strong = strong.max(duality_gap(&tree, &z, &us, &opt.aggregate, &opt.dual)?.gap.abs());
        for _ in 0..10 {
            let x = random_allocation(&mut rng, &tree, &z, 0, 2.0);
            let m = random_martingale(&mut rng, &tree, 0, 1.0);
            weak = weak.min(duality_gap(&tree, &z, &us, &x, &m)?.gap);
        }
        let family = UtilityFamily::exponential(&schedule);
        improving += pareto_scan(&tree, &family, &opt.agents, 1e-4)?.improving;
    }
    if trials > 0 {
        checks.push(CheckResult::at_most("strong_duality_at_optimum", strong, 1e-8));
        checks.push(CheckResult::at_most("weak_duality_violation", (-weak).max(0.0), 1e-10));
        checks.push(CheckResult::at_most("pareto_improvements_at_optimum", improving as f64, 0.0));
    }

    Ok(OracleReport {
        seed,
        step,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preferences::{sup_convolution, ExponentialUtility, RiskAversionSchedule};
    use crate::valuation::{aggregate_exponentials, optimal_allocation, utility_process};

    fn exp(a: f64) -> Arc<dyn Utility> {
        Arc::new(ExponentialUtility::new(a).unwrap())
    }

    #[test]
    fn symmetric_split() {
        let grid = GridSpec::new(-2.0, 3.0, 1e-3).unwrap();
        let r = grid_sup_convolution(&[exp(2.0), exp(2.0)], 1.0, &grid).unwrap();
        assert!((r.split[0] - 0.5).abs() < 1e-9);
        let analytic = sup_convolution(&[exp(2.0), exp(2.0)], 1.0).unwrap().value;
        assert!(r.value <= analytic + 1e-15);
        assert!(analytic - r.value <= r.tolerance);
    }

    #[test]
    fn single_member_is_identity() {
        let grid = GridSpec::new(-1.0, 1.0, 0.1).unwrap();
        let r = grid_sup_convolution(&[exp(1.5)], 0.7, &grid).unwrap();
        assert_eq!(r.value, exp(1.5).value(0.7));
    }

    #[test]
    fn coarse_grid_is_suboptimal() {
        let grid = GridSpec::new(-2.0, 2.0, 0.5).unwrap();
        let members = [exp(1.0), exp(3.0)];
        // optimal first share 0.75 falls between grid points
        let r = grid_sup_convolution(&members, 1.0, &grid).unwrap();
        let analytic = sup_convolution(&members, 1.0).unwrap().value;
        assert!(analytic > r.value);
        assert!(analytic - r.value <= r.tolerance);
    }

    #[test]
    fn three_members() {
        let grid = GridSpec::new(-1.0, 2.0, 2e-3).unwrap();
        let members = [exp(1.0), exp(2.0), exp(3.0)];
        let r = grid_sup_convolution(&members, 1.0, &grid).unwrap();
        let analytic = sup_convolution(&members, 1.0).unwrap().value;
        assert!(r.value <= analytic + 1e-15);
        assert!(analytic - r.value <= r.tolerance);
    }

    #[test]
    fn budget_is_enforced() {
        let grid = GridSpec::new(-1.0, 1.0, 1e-3).unwrap().with_budget(100);
        assert!(matches!(
            grid_sup_convolution(&[exp(1.0), exp(1.0)], 0.0, &grid),
            Err(Error::Budget(_))
        ));
    }

    #[test]
    fn coin_allocation_matches_closed_form() {
        let tree = ScenarioTree::binomial(1, 0.5).unwrap();
        let z = tree.rv_from_fn(1, |i| if tree.node(i).id() == "ru" { 1.0 } else { 0.0 });
        let schedule = RiskAversionSchedule::homogeneous(1, 1, 1.0).unwrap();
        let family = UtilityFamily::exponential(&schedule);
        let grid = GridSpec::new(-1.0, 2.0, 1e-3).unwrap();
        let r = grid_allocation_search(&tree, &z, &family, &grid).unwrap();
        let analytic = utility_process(&tree, &z, &schedule, 0).unwrap().values()[0];
        assert!(r.objective <= analytic + 1e-12);
        assert!(analytic - r.objective < 1e-3);
        assert!(analytic - r.objective <= r.tolerance);
        assert!(r.marginal_residual < 1e-2);
    }

    #[test]
    fn zero_payoff_allocates_nothing() {
        let tree = ScenarioTree::binomial(2, 0.5).unwrap();
        let schedule = RiskAversionSchedule::homogeneous(2, 2, 1.0).unwrap();
        let family = UtilityFamily::exponential(&schedule);
        let grid = GridSpec::new(-0.5, 0.5, 0.01).unwrap();
        let r = grid_allocation_search(&tree, &tree.constant(2, 0.0), &family, &grid).unwrap();
        assert!(r.objective.abs() < 1e-12);
        for x in &r.agents {
            assert!(x.iter().all(|(_, v)| v.abs() < 1e-9));
        }
    }

    #[test]
    fn optimum_admits_no_pareto_improvement() {
        let tree = ScenarioTree::binomial(2, 0.4).unwrap();
        let z = tree.rv_from_fn(2, |i| tree.slot(i) as f64 * 0.6);
        let schedule = RiskAversionSchedule::from_matrix(vec![vec![1.0, 1.5, 2.0], vec![0.5, 3.0, 1.0]]).unwrap();
        let family = UtilityFamily::exponential(&schedule);
        let opt = optimal_allocation(&tree, &z, &schedule, 0).unwrap();
        let scan = pareto_scan(&tree, &family, &opt.agents, 1e-3).unwrap();
        assert_eq!(scan.improving, 0);
        assert!(scan.best_worst_case < 0.0);

        // everything at the end is not optimal
        let naive: Vec<AdaptedProcess> = opt
            .agents
            .iter()
            .enumerate()
            .map(|(k, _)| {
                AdaptedProcess::from_fn(&tree, 0, |i| {
                    if tree.node(i).is_leaf() && k == 0 {
                        z.values()[tree.slot(i)]
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        assert!(pareto_scan(&tree, &family, &naive, 1e-3).unwrap().improving > 0);
    }

    #[test]
    fn duality_gap_examples() {
        let tree = ScenarioTree::binomial(2, 0.3).unwrap();
        let schedule = RiskAversionSchedule::homogeneous(1, 2, 1.0).unwrap();
        let us = aggregate_exponentials(&schedule);
        let zero = tree.constant(2, 0.0);
        let x0 = AdaptedProcess::constant(&tree, 0, 0.0);
        let m1 = AdaptedProcess::constant(&tree, 0, 1.0);
        assert_eq!(duality_gap(&tree, &zero, &us, &x0, &m1).unwrap().gap, 0.0);

        let z = tree.rv_from_fn(2, |i| tree.slot(i) as f64);
        let opt = optimal_allocation(&tree, &z, &schedule, 0).unwrap();
        let at_opt = duality_gap(&tree, &z, &us, &opt.aggregate, &opt.dual).unwrap();
        assert!(at_opt.gap.abs() < 1e-8);
        let loose = duality_gap(&tree, &z, &us, &opt.aggregate, &m1).unwrap();
        assert!(loose.gap > 1e-3);
        assert!(duality_gap(&tree, &z, &us, &x0, &m1).is_err());
    }

    #[test]
    fn battery_passes_on_a_coarse_grid() {
        let report = run_oracle_checks(5, 1e-2, 5).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{c:?}");
        }
    }
}
