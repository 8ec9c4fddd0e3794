//! Dynamic utility, value process, indifference premium, optimal
//! allocations and dual martingale certificates.

mod dual;
mod exponential;
mod general;

pub use dual::{
    aggregate_exponentials, check_dual_martingale, dual_objective, dual_objective_with,
    entropic_representation, primal_objective, DUAL_MARTINGALE_TOL,
};
pub use exponential::{
    check_time_consistency, optimal_allocation, premium_process, premium_process_with_betas,
    residual_allocation, time_consistency_residual, utility_process, value_process,
    ExponentialAllocation,
};
pub use general::{
    agent_split, general_allocation_solve, general_premium, general_utility, GeneralSolution,
    SolveDiagnostics, SolverOptions,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::preferences::RiskAversionSchedule;
use crate::report::{round_sig, NodeTable};
use crate::tree::{AdaptedProcess, RandomVariable, ScenarioTree};

/// Residual thresholds used to flag diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub recursion: f64,
    pub martingale: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            recursion: 1e-12,
            martingale: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `max |M̂_s − E[M̂_{s+1} | F_s]|`.
    pub martingale_residual: f64,
    /// `max |Σ_s X̂_s − Z|` over leaves.
    pub allocation_sum_residual: f64,
    /// `max |dual objective at M̂ − U_t(Z)|` over time-`t` nodes.
    pub duality_gap: f64,
    /// `max |H_t(Z) + V_t(−Z)|` over all nodes.
    pub premium_value_residual: f64,
}

impl Diagnostics {
    /// Names of the diagnostics that exceed their tolerance.
    pub fn breaches(&self, tol: &Tolerances) -> Vec<String> {
        let checks = [
            ("martingale_residual", self.martingale_residual, tol.martingale),
            ("allocation_sum_residual", self.allocation_sum_residual, tol.martingale),
            ("duality_gap", self.duality_gap, tol.martingale),
            ("premium_value_residual", self.premium_value_residual, tol.recursion),
        ];
        checks
            .iter()
            .filter(|(_, value, limit)| !(value <= limit))
            .map(|(name, value, limit)| format!("{name} = {value:e} exceeds {limit:e}"))
            .collect()
    }
}

/// Full exponential-utility valuation of a terminal risk from time `t`.
#[derive(Debug, Clone)]
pub struct ValuationResult {
    pub start: usize,
    /// `H_0(Z)` at the root.
    pub premium: f64,
    pub premium_process: AdaptedProcess,
    pub value_process: AdaptedProcess,
    /// `U_t(Z)` on the time-`t` slice.
    pub utility: RandomVariable,
    pub allocation: ExponentialAllocation,
    pub diagnostics: Diagnostics,
}

pub fn valuate(
    tree: &ScenarioTree,
    z: &RandomVariable,
    schedule: &RiskAversionSchedule,
    t: usize,
) -> Result<ValuationResult> {
    let h = premium_process(tree, z, schedule)?;
    let v = value_process(tree, z, schedule)?;
    let utility = utility_process(tree, z, schedule, t)?;
    let allocation = optimal_allocation(tree, z, schedule, t)?;
    let martingale_residual = tree.is_martingale(&allocation.dual, 0.0).max_residual;
    let allocation_sum_residual = allocation.aggregate.path_sums(tree).max_abs_diff(z);
    let duality_gap = match dual_objective(tree, &allocation.dual, z, schedule, t) {
        Ok(d) => d.max_abs_diff(&utility),
        Err(_) => f64::INFINITY,
    };
    let v_neg = value_process(tree, &z.map(|x| -x), schedule)?;
    let premium_value_residual = h
        .iter()
        .map(|(i, x)| (x + v_neg.at(i)).abs())
        .fold(0.0, f64::max);
    Ok(ValuationResult {
        start: t,
        premium: h.at(tree.root()),
        premium_process: h,
        value_process: v,
        utility,
        allocation,
        diagnostics: Diagnostics {
            martingale_residual,
            allocation_sum_residual,
            duality_gap,
            premium_value_residual,
        },
    })
}

/// Serialisable form of a [`ValuationResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationReport {
    pub premium: f64,
    pub t: usize,
    pub utility: Vec<f64>,
    pub nodes: NodeTable,
    pub diagnostics: Diagnostics,
}

impl ValuationResult {
    pub fn report(&self, tree: &ScenarioTree) -> ValuationReport {
        let mut columns: Vec<(String, &AdaptedProcess)> = vec![
            ("H".into(), &self.premium_process),
            ("V".into(), &self.value_process),
            ("X".into(), &self.allocation.aggregate),
            ("M".into(), &self.allocation.dual),
        ];
        if self.allocation.agents.len() > 1 {
            for (k, p) in self.allocation.agents.iter().enumerate() {
                columns.push((format!("X_{}", k + 1), p));
            }
        }
        let named: Vec<(&str, &AdaptedProcess)> =
            columns.iter().map(|(n, p)| (n.as_str(), *p)).collect();
        ValuationReport {
            premium: round_sig(self.premium),
            t: self.start,
            utility: self.utility.values().iter().map(|&u| round_sig(u)).collect(),
            nodes: NodeTable::new(tree, &named),
            diagnostics: self.diagnostics,
        }
    }
}
