//! Closed forms for exponential utilities: the entropic backward recursions
//! for `V_t` and `H_t`, the dynamic utility `U_t`, and the optimal and
//! residual allocations.

use crate::error::{Error, Result};
use crate::preferences::RiskAversionSchedule;
use crate::tree::{AdaptedProcess, RandomVariable, ScenarioTree};

pub(crate) fn check_terminal(tree: &ScenarioTree, z: &RandomVariable) -> Result<()> {
    let t = tree.horizon();
    if z.time() != t || z.values().len() != tree.slice_len(t) {
        return Err(Error::InvalidParameter(format!(
            "payoff must be a terminal random variable on {} leaves",
            tree.slice_len(t)
        )));
    }
    if z.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("payoff has non-finite values".into()));
    }
    Ok(())
}

pub(crate) fn check_schedule(tree: &ScenarioTree, schedule: &RiskAversionSchedule) -> Result<()> {
    if schedule.horizon() != tree.horizon() {
        return Err(Error::HorizonMismatch {
            tree: tree.horizon(),
            what: "schedule",
            other: schedule.horizon(),
        });
    }
    Ok(())
}

fn check_start(tree: &ScenarioTree, t: usize) -> Result<()> {
    if t > tree.horizon() {
        return Err(Error::InvalidParameter(format!(
            "time {t} beyond horizon {}",
            tree.horizon()
        )));
    }
    Ok(())
}

/// `(1/b) log Σ p_k e^{b x_k}`, shifted by the value with the largest
/// exponent. Normalising by `Σ p_k` makes constants map to themselves exactly.
fn entropic_mean(b: f64, terms: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let shift = terms
        .clone()
        .map(|(_, x)| x)
        .reduce(|a, x| if b * x > b * a { x } else { a })
        .expect("interior node has children");
    let (mass, sum) = terms.fold((0.0, 0.0), |(m, s), (p, x)| (m + p, s + p * (b * (x - shift)).exp()));
    shift + (sum / mass).ln() / b
}

/// Backward recursion `Y_T = Z`, `Y_t = (1/b_{t+1}) log E[e^{b_{t+1} Y_{t+1}} | F_t]`.
fn entropic_recursion(
    tree: &ScenarioTree,
    z: &RandomVariable,
    coefficients: impl Fn(usize) -> f64,
) -> Result<AdaptedProcess> {
    check_terminal(tree, z)?;
    let horizon = tree.horizon();
    let mut slices = vec![z.clone()];
    for t in (0..horizon).rev() {
        let b = coefficients(t + 1);
        let next = slices.last().expect("nonempty");
        let base = tree.slice(t + 1).start;
        let current = tree.rv_from_fn(t, |i| {
            let terms = tree
                .node(i)
                .children()
                .iter()
                .map(|&c| (tree.node(c).prob(), next.values()[c - base]));
            entropic_mean(b, terms)
        });
        slices.push(current);
    }
    slices.reverse();
    AdaptedProcess::from_slices(tree, 0, slices)
}

/// Value process `V_T = Z`, `V_t = −(1/β_{t+1}) log E[e^{−β_{t+1} V_{t+1}} | F_t]`.
pub fn value_process(
    tree: &ScenarioTree,
    z: &RandomVariable,
    schedule: &RiskAversionSchedule,
) -> Result<AdaptedProcess> {
    check_schedule(tree, schedule)?;
    entropic_recursion(tree, z, |t| -schedule.beta(t))
}

/// Indifference premium `H_T = Z`, `H_t = (1/β_{t+1}) log E[e^{β_{t+1} H_{t+1}} | F_t]`.
pub fn premium_process(
    tree: &ScenarioTree,
    z: &RandomVariable,
    schedule: &RiskAversionSchedule,
) -> Result<AdaptedProcess> {
    check_schedule(tree, schedule)?;
    premium_process_with_betas(tree, z, schedule.betas())
}

/// Premium recursion driven by an explicit `β_0..β_T` sequence.
pub fn premium_process_with_betas(
    tree: &ScenarioTree,
    z: &RandomVariable,
    betas: &[f64],
) -> Result<AdaptedProcess> {
    if betas.len() != tree.horizon() + 1 {
        return Err(Error::HorizonMismatch {
            tree: tree.horizon(),
            what: "beta sequence",
            other: betas.len().saturating_sub(1),
        });
    }
    if betas.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
        return Err(Error::InvalidParameter("beta entries must be positive".into()));
    }
    entropic_recursion(tree, z, |t| betas[t])
}

/// Dynamic utility `U_t(Z) = (1 − e^{−β_t V_t(Z)}) / β_t`.
pub fn utility_process(
    tree: &ScenarioTree,
    z: &RandomVariable,
    schedule: &RiskAversionSchedule,
    t: usize,
) -> Result<RandomVariable> {
    check_start(tree, t)?;
    let v = value_process(tree, z, schedule)?;
    let b = schedule.beta(t);
    Ok(v.rv(t).map(|x| -(-b * x).exp_m1() / b))
}

/// Optimal diversification of `Z` from time `t` for exponential utilities.
#[derive(Debug, Clone)]
pub struct ExponentialAllocation {
    pub start: usize,
    /// Aggregate allocation `X̂_s` over `[t, T]`; sums to `Z` along paths.
    pub aggregate: AdaptedProcess,
    /// Per-agent allocations `X̂_{i,s} = I_{i,s}(M̂_s)`.
    pub agents: Vec<AdaptedProcess>,
    /// Dual martingale `M̂_s = u'_s(X̂_s) = e^{−α_s X̂_s}`.
    pub dual: AdaptedProcess,
}

/// Cumulative log-multiplier `A_t = b_t Y_t`, `A_s = A_{s−1} + b_s (Y_s − Y_{s−1})`.
fn cumulative_exponent(
    tree: &ScenarioTree,
    y: &AdaptedProcess,
    betas: &[f64],
    t: usize,
    initial: impl Fn(f64) -> f64,
) -> AdaptedProcess {
    let offset = tree.slice(t).start;
    let mut values: Vec<f64> = Vec::with_capacity(tree.len() - offset);
    for i in offset..tree.len() {
        let node = tree.node(i);
        let s = node.time();
        let a = if s == t {
            initial(y.at(i))
        } else {
            let p = node.parent().expect("s > t");
            values[p - offset] + betas[s] * (y.at(i) - y.at(p))
        };
        values.push(a);
    }
    AdaptedProcess::from_fn(tree, t, |i| values[i - offset])
}

pub fn optimal_allocation(
    tree: &ScenarioTree,
    z: &RandomVariable,
    schedule: &RiskAversionSchedule,
    t: usize,
) -> Result<ExponentialAllocation> {
    check_start(tree, t)?;
    let v = value_process(tree, z, schedule)?;
    let betas = schedule.betas();
    let exponent = cumulative_exponent(tree, &v, betas, t, |vt| betas[t] * vt);
    let aggregate =
        AdaptedProcess::from_fn(tree, t, |i| exponent.at(i) / schedule.aggregate(tree.node(i).time()));
    let dual = exponent.map(|a| (-a).exp());
    let agents = (0..schedule.agents())
        .map(|k| {
            AdaptedProcess::from_fn(tree, t, |i| {
                exponent.at(i) / schedule.alpha(k, tree.node(i).time())
            })
        })
        .collect();
    Ok(ExponentialAllocation {
        start: t,
        aggregate,
        agents,
        dual,
    })
}

/// Pareto-optimal allocation of `H_t(Z) − Z`:
/// `X̂_t = 0`, `X̂_s = −(1/α_s) Σ_{r=t+1}^s β_r (H_r − H_{r−1})`.
pub fn residual_allocation(
    tree: &ScenarioTree,
    z: &RandomVariable,
    schedule: &RiskAversionSchedule,
    t: usize,
) -> Result<AdaptedProcess> {
    check_start(tree, t)?;
    let h = premium_process(tree, z, schedule)?;
    let exponent = cumulative_exponent(tree, &h, schedule.betas(), t, |_| 0.0);
    Ok(AdaptedProcess::from_fn(tree, t, |i| {
        -exponent.at(i) / schedule.aggregate(tree.node(i).time())
    }))
}

/// `max |H_t(Z) − H_t(H_{t+τ}(Z))|` over time-`t` nodes.
pub fn check_time_consistency(
    tree: &ScenarioTree,
    z: &RandomVariable,
    schedule: &RiskAversionSchedule,
    t: usize,
    tau: usize,
) -> Result<f64> {
    check_schedule(tree, schedule)?;
    time_consistency_residual(tree, z, schedule.betas(), schedule.betas(), t, tau)
}

/// Time-consistency residual where the intermediate premium `H_{t+τ}` is
/// computed with `inner` betas and the outer valuation with `outer` betas.
pub fn time_consistency_residual(
    tree: &ScenarioTree,
    z: &RandomVariable,
    outer: &[f64],
    inner: &[f64],
    t: usize,
    tau: usize,
) -> Result<f64> {
    if t + tau > tree.horizon() {
        return Err(Error::InvalidParameter(format!(
            "t + τ = {} exceeds horizon {}",
            t + tau,
            tree.horizon()
        )));
    }
    let direct = premium_process_with_betas(tree, z, outer)?;
    let intermediate = premium_process_with_betas(tree, z, inner)?.rv(t + tau);
    let lifted = tree.lift(&intermediate, tree.horizon())?;
    let composed = premium_process_with_betas(tree, &lifted, outer)?;
    Ok(direct.rv(t).max_abs_diff(&composed.rv(t)))
}
