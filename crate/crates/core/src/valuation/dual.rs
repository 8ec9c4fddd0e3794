//! Primal and dual objectives over scenario trees.
//!
//! For an allocation `X` of `Z` and a positive martingale `M`,
//! `Σ_s E[u_s(X_s) | F_t] ≤ Σ_s E[u*_s(M_s) | F_t] + E[M_T Z | F_t]`,
//! with equality exactly when `X_s = I_s(M_s)`.

use crate::error::{Error, Result};
use crate::preferences::{ExponentialUtility, RiskAversionSchedule, Utility};
use crate::tree::{AdaptedProcess, RandomVariable, ScenarioTree};

use super::exponential::{check_schedule, check_terminal};

/// Default tolerance for accepting a candidate dual martingale.
pub const DUAL_MARTINGALE_TOL: f64 = 1e-9;

/// `Σ_{s=t}^T E[f_s(node) | F_t]` for a per-node term `f`.
fn conditional_sum(
    tree: &ScenarioTree,
    t: usize,
    term: impl Fn(usize) -> f64,
) -> RandomVariable {
    let horizon = tree.horizon();
    let mut acc = tree.rv_from_fn(horizon, &term);
    for s in (t..horizon).rev() {
        let base = tree.slice(s + 1).start;
        acc = tree.rv_from_fn(s, |i| {
            term(i)
                + tree
                    .node(i)
                    .children()
                    .iter()
                    .map(|&c| tree.node(c).prob() * acc.values()[c - base])
                    .sum::<f64>()
        });
    }
    acc
}

fn check_utilities<U>(tree: &ScenarioTree, utilities: &[U]) -> Result<()> {
    if utilities.len() != tree.horizon() + 1 {
        return Err(Error::HorizonMismatch {
            tree: tree.horizon(),
            what: "utility list",
            other: utilities.len().saturating_sub(1),
        });
    }
    Ok(())
}

/// Primal objective `Σ_{s=t}^T E[u_s(X_s) | F_t]`.
pub fn primal_objective<U: Utility>(
    tree: &ScenarioTree,
    x: &AdaptedProcess,
    utilities: &[U],
    t: usize,
) -> Result<RandomVariable> {
    check_utilities(tree, utilities)?;
    if x.start() > t {
        return Err(Error::TimeOrder { t: x.start(), r: t });
    }
    Ok(conditional_sum(tree, t, |i| {
        utilities[tree.node(i).time()].value(x.at(i))
    }))
}

/// Rejects dual candidates that are not strictly positive martingales.
pub fn check_dual_martingale(tree: &ScenarioTree, m: &AdaptedProcess, tol: f64) -> Result<()> {
    let min = m.min();
    let scale = m.iter().map(|(_, v)| v.abs()).fold(1.0, f64::max);
    let check = tree.is_martingale(m, tol * scale);
    if !(min > 0.0) || !check.is_martingale {
        return Err(Error::NotMartingale {
            residual: check.max_residual,
            min,
        });
    }
    Ok(())
}

/// Dual objective `Σ_{s=t}^T E[u*_s(M_s) | F_t] + E[M_T Z | F_t]` for
/// arbitrary per-time utilities.
pub fn dual_objective_with<U: Utility>(
    tree: &ScenarioTree,
    m: &AdaptedProcess,
    z: &RandomVariable,
    utilities: &[U],
    t: usize,
) -> Result<RandomVariable> {
    check_terminal(tree, z)?;
    check_utilities(tree, utilities)?;
    if m.start() > t {
        return Err(Error::TimeOrder { t: m.start(), r: t });
    }
    check_dual_martingale(tree, m, DUAL_MARTINGALE_TOL)?;
    let horizon = tree.horizon();
    let leaf_base = tree.leaves().start;
    Ok(conditional_sum(tree, t, |i| {
        let s = tree.node(i).time();
        let mut term = utilities[s].conjugate(m.at(i));
        if s == horizon {
            term += m.at(i) * z.values()[i - leaf_base];
        }
        term
    }))
}

/// Aggregate exponential utilities `u_s` with risk aversion `α_s`.
pub fn aggregate_exponentials(schedule: &RiskAversionSchedule) -> Vec<ExponentialUtility> {
    schedule
        .aggregates()
        .iter()
        .map(|&a| ExponentialUtility::new(a).expect("validated schedule"))
        .collect()
}

/// Dual objective for the exponential family of `schedule`.
pub fn dual_objective(
    tree: &ScenarioTree,
    m: &AdaptedProcess,
    z: &RandomVariable,
    schedule: &RiskAversionSchedule,
    t: usize,
) -> Result<RandomVariable> {
    check_schedule(tree, schedule)?;
    dual_objective_with(tree, m, z, &aggregate_exponentials(schedule), t)
}

/// Entropic representation of the premium for a martingale density with
/// `M_t = 1`: `E[M_T Z | F_t] − Σ_{s=t}^T (1/α_s) E[M_s log M_s | F_t]`.
/// Every such value is bounded above by `H_t(Z)`.
pub fn entropic_representation(
    tree: &ScenarioTree,
    m: &AdaptedProcess,
    z: &RandomVariable,
    schedule: &RiskAversionSchedule,
    t: usize,
) -> Result<RandomVariable> {
    check_terminal(tree, z)?;
    check_schedule(tree, schedule)?;
    check_dual_martingale(tree, m, DUAL_MARTINGALE_TOL)?;
    if m.start() > t {
        return Err(Error::TimeOrder { t: m.start(), r: t });
    }
    let m_t = m.slice(t);
    if m_t.iter().any(|v| (v - 1.0).abs() > DUAL_MARTINGALE_TOL) {
        return Err(Error::InvalidParameter("density must equal 1 at time t".into()));
    }
    let horizon = tree.horizon();
    let leaf_base = tree.leaves().start;
    Ok(conditional_sum(tree, t, |i| {
        let s = tree.node(i).time();
        let v = m.at(i);
        let mut term = -v * v.ln() / schedule.aggregate(s);
        if s == horizon {
            term += v * z.values()[i - leaf_base];
        }
        term
    }))
}
