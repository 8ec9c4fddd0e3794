//! Optimal diversification for general utilities.
//!
//! The optimum is characterised by a positive martingale `M` with
//! `Σ_{s=t}^T I_s(M_s) = Z` along every path, where `I_s` is the inverse
//! marginal of the (agent-convolved) utility at time `s`. The unknowns are
//! the terminal values `log M_T`; interior values follow as conditional
//! expectations. Newton steps exploit the tree structure: the linearised
//! system has the same path-sum-of-martingale form as the original one and
//! is solved exactly by one upward and one downward sweep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preferences::{Utility, UtilityFamily};
use crate::roots::{bisect_increasing, solve_decreasing, RootOptions};
use crate::tree::{AdaptedProcess, RandomVariable, ScenarioTree};

use super::dual::primal_objective;
use super::exponential::check_terminal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Convergence threshold on `max |Σ I_s(M_s) − Z|`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub fallback_sweeps: usize,
    /// Largest pathwise `|Σ_s X_s − Z|`.
    pub max_residual: f64,
    pub martingale_residual: f64,
}

#[derive(Debug, Clone)]
pub struct GeneralSolution {
    pub start: usize,
    /// `X_s = I_s(M_s)`.
    pub allocation: AdaptedProcess,
    pub dual: AdaptedProcess,
    pub diagnostics: SolveDiagnostics,
}

struct Workspace<'a, U> {
    tree: &'a ScenarioTree,
    utilities: &'a [U],
    z: &'a RandomVariable,
    start: usize,
    offset: usize,
    leaf_base: usize,
}

impl<U: Utility> Workspace<'_, U> {
    fn local(&self, i: usize) -> usize {
        i - self.offset
    }

    fn inverse(&self, i: usize, m: f64) -> f64 {
        self.utilities[self.tree.node(i).time()].inverse_marginal(m)
    }

    /// Interior values by conditional expectation of the leaf values.
    fn fill_martingale(&self, log_leaf: &[f64], m: &mut [f64]) {
        let tree = self.tree;
        for (k, leaf) in tree.leaves().enumerate() {
            m[self.local(leaf)] = log_leaf[k].exp();
        }
        for s in (self.start..tree.horizon()).rev() {
            for i in tree.slice(s) {
                let v = tree
                    .node(i)
                    .children()
                    .iter()
                    .map(|&c| tree.node(c).prob() * m[self.local(c)])
                    .sum();
                m[self.local(i)] = v;
            }
        }
    }

    /// Pathwise residual `Σ I_s(M_s) − Z` at every leaf; returns its max norm.
    fn residuals(&self, m: &[f64], prefix: &mut [f64], out: &mut [f64]) -> f64 {
        let tree = self.tree;
        for i in self.offset..tree.len() {
            let node = tree.node(i);
            let own = self.inverse(i, m[self.local(i)]);
            prefix[self.local(i)] = if node.time() == self.start {
                own
            } else {
                prefix[self.local(node.parent().expect("s > start"))] + own
            };
        }
        let mut worst = 0.0_f64;
        for (k, leaf) in tree.leaves().enumerate() {
            let r = prefix[self.local(leaf)] - self.z.values()[leaf - self.leaf_base];
            out[k] = r;
            worst = if r.is_nan() { f64::NAN } else { worst.max(r.abs()) };
        }
        worst
    }

    /// Solves `Σ_{v ∈ path(ℓ)} a_v dM_v = R_ℓ` over martingale increments `dM`.
    fn newton_direction(&self, m: &[f64], residual: &[f64]) -> Vec<f64> {
        let tree = self.tree;
        let n = tree.len() - self.offset;
        let mut weight = vec![0.0; n];
        let mut f = vec![0.0; n];
        let mut g = vec![0.0; n];
        for i in self.offset..tree.len() {
            let s = tree.node(i).time();
            weight[self.local(i)] = -self.utilities[s].inverse_marginal_slope(m[self.local(i)]);
        }
        for (k, leaf) in tree.leaves().enumerate() {
            let a = weight[self.local(leaf)];
            f[self.local(leaf)] = residual[k] / a;
            g[self.local(leaf)] = 1.0 / a;
        }
        for s in (self.start..tree.horizon()).rev() {
            for i in tree.slice(s) {
                let (mut ff, mut gg) = (0.0, 0.0);
                for &c in tree.node(i).children() {
                    let p = tree.node(c).prob();
                    ff += p * f[self.local(c)];
                    gg += p * g[self.local(c)];
                }
                let d = 1.0 + gg * weight[self.local(i)];
                f[self.local(i)] = ff / d;
                g[self.local(i)] = gg / d;
            }
        }
        // downward sweep: S is the path sum of a_v dM_v above the node
        let mut above = vec![0.0; n];
        let mut dm = vec![0.0; n];
        for i in self.offset..tree.len() {
            let node = tree.node(i);
            let s_above = if node.time() == self.start {
                0.0
            } else {
                let p = node.parent().expect("s > start");
                above[self.local(p)] + weight[self.local(p)] * dm[self.local(p)]
            };
            above[self.local(i)] = s_above;
            dm[self.local(i)] = f[self.local(i)] - g[self.local(i)] * s_above;
        }
        tree.leaves().map(|leaf| dm[self.local(leaf)]).collect()
    }

    /// Gauss–Seidel sweep: zero each leaf residual in turn by a scalar
    /// monotone solve on its own `log M_T`, other leaves held fixed.
    fn coordinate_sweep(&self, log_leaf: &mut [f64], m: &mut [f64]) -> Result<()> {
        let tree = self.tree;
        for (k, leaf) in tree.leaves().enumerate() {
            let mut path = Vec::with_capacity(tree.horizon() + 1 - self.start);
            let mut v = leaf;
            loop {
                path.push((v, tree.conditional_prob(v, leaf)));
                if tree.node(v).time() == self.start {
                    break;
                }
                v = tree.node(v).parent().expect("s > start");
            }
            let current = m[self.local(leaf)];
            let target = self.z.values()[leaf - self.leaf_base];
            let residual = |log_m: f64| {
                let delta = log_m.exp() - current;
                path.iter()
                    .map(|&(v, w)| self.inverse(v, m[self.local(v)] + w * delta))
                    .sum::<f64>()
                    - target
            };
            let no_deriv: Option<fn(f64) -> f64> = None;
            let solved = solve_decreasing(residual, no_deriv, log_leaf[k], RootOptions::default())?;
            let delta = solved.exp() - current;
            for &(v, w) in &path {
                m[self.local(v)] += w * delta;
            }
            log_leaf[k] = solved;
        }
        Ok(())
    }
}

/// Solves for the optimal diversification of `Z` from time `t`.
///
/// `utilities[s]` is the effective (agent-convolved) utility at time `s`.
pub fn general_allocation_solve<U: Utility>(
    tree: &ScenarioTree,
    z: &RandomVariable,
    utilities: &[U],
    t: usize,
    opts: SolverOptions,
) -> Result<GeneralSolution> {
    check_terminal(tree, z)?;
    if utilities.len() != tree.horizon() + 1 {
        return Err(Error::HorizonMismatch {
            tree: tree.horizon(),
            what: "utility list",
            other: utilities.len().saturating_sub(1),
        });
    }
    if t > tree.horizon() {
        return Err(Error::InvalidParameter(format!("time {t} beyond horizon")));
    }
    let ws = Workspace {
        tree,
        utilities,
        z,
        start: t,
        offset: tree.slice(t).start,
        leaf_base: tree.leaves().start,
    };
    let n = tree.len() - ws.offset;
    let leaves = tree.slice_len(tree.horizon());
    let mut log_leaf = vec![0.0; leaves];
    let mut m = vec![0.0; n];
    let mut prefix = vec![0.0; n];
    let mut residual = vec![0.0; leaves];

    ws.fill_martingale(&log_leaf, &mut m);
    let mut err = ws.residuals(&m, &mut prefix, &mut residual);
    let mut iterations = 0;
    let mut fallback_sweeps = 0;
    // polish below the threshold while Newton keeps making progress
    let polish = opts.tol * 1e-4;
    while iterations < opts.max_iter && !(err <= polish) {
        iterations += 1;
        let dm = ws.newton_direction(&m, &residual);
        let mut step = 1.0;
        let mut accepted = false;
        let mut trial_log = vec![0.0; leaves];
        let mut trial_m = vec![0.0; n];
        let mut trial_res = vec![0.0; leaves];
        for _ in 0..40 {
            for (k, leaf) in tree.leaves().enumerate() {
                trial_log[k] = log_leaf[k] + step * dm[k] / m[ws.local(leaf)];
            }
            ws.fill_martingale(&trial_log, &mut trial_m);
            let trial_err = ws.residuals(&trial_m, &mut prefix, &mut trial_res);
            if trial_err < err {
                log_leaf.copy_from_slice(&trial_log);
                m.copy_from_slice(&trial_m);
                residual.copy_from_slice(&trial_res);
                err = trial_err;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if err <= opts.tol {
                break;
            }
            fallback_sweeps += 1;
            ws.coordinate_sweep(&mut log_leaf, &mut m)?;
            ws.fill_martingale(&log_leaf, &mut m);
            let swept = ws.residuals(&m, &mut prefix, &mut residual);
            if !(swept < err) && fallback_sweeps > 3 {
                break;
            }
            err = swept;
        }
    }
    if !(err <= opts.tol) {
        return Err(Error::NonConvergence {
            iterations,
            residual: err,
        });
    }

    let dual = AdaptedProcess::from_fn(tree, t, |i| m[ws.local(i)]);
    let allocation = AdaptedProcess::from_fn(tree, t, |i| ws.inverse(i, m[ws.local(i)]));
    let martingale_residual = tree.is_martingale(&dual, 0.0).max_residual;
    Ok(GeneralSolution {
        start: t,
        allocation,
        dual,
        diagnostics: SolveDiagnostics {
            iterations,
            fallback_sweeps,
            max_residual: err,
            martingale_residual,
        },
    })
}

/// Per-agent split `X_{i,s} = I_{i,s}(M_s)` of a solved allocation.
pub fn agent_split(tree: &ScenarioTree, family: &UtilityFamily, dual: &AdaptedProcess) -> Vec<AdaptedProcess> {
    (0..family.agents())
        .map(|k| {
            AdaptedProcess::from_fn(tree, dual.start(), |i| {
                family.member(k, tree.node(i).time()).inverse_marginal(dual.at(i))
            })
        })
        .collect()
}

/// Dynamic utility `U_t(Z) = Σ_s E[u_s(X̂_s) | F_t]` at the optimum.
pub fn general_utility<U: Utility>(
    tree: &ScenarioTree,
    z: &RandomVariable,
    utilities: &[U],
    t: usize,
    opts: SolverOptions,
) -> Result<RandomVariable> {
    let solution = general_allocation_solve(tree, z, utilities, t, opts)?;
    primal_objective(tree, &solution.allocation, utilities, t)
}

/// Time-0 indifference premium: the root of `K ↦ U_0(K − Z)`, which is
/// increasing and continuous, bracketed by `[E Z, max Z]`.
pub fn general_premium<U: Utility>(
    tree: &ScenarioTree,
    z: &RandomVariable,
    utilities: &[U],
    opts: SolverOptions,
) -> Result<f64> {
    check_terminal(tree, z)?;
    let mean = tree.expectation(z);
    let top = z.max();
    if top - mean <= 1e-12 * (1.0 + mean.abs()) {
        return Ok(mean);
    }
    let utility_of = |k: f64| -> f64 {
        let shifted = z.map(|v| k - v);
        general_utility(tree, &shifted, utilities, 0, opts)
            .map(|u| u.values()[0])
            .unwrap_or(f64::NAN)
    };
    let width = top - mean;
    bisect_increasing(utility_of, mean - 1e-6 * width, top + 1e-6 * width, 1e-10)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::preferences::{ExponentialUtility, MixedExponentialUtility, RiskAversionSchedule};
    use crate::valuation::dual::aggregate_exponentials;
    use crate::valuation::exponential::{optimal_allocation, premium_process};

    #[test]
    fn exponential_family_matches_closed_form() {
        let tree = ScenarioTree::binomial(3, 0.4).unwrap();
        let z = tree.rv_from_fn(3, |i| (tree.slot(i) as f64).cos() * 1.5 + 0.2);
        let s = RiskAversionSchedule::from_matrix(vec![vec![1.0, 2.0, 0.5, 1.5]]).unwrap();
        let utilities = aggregate_exponentials(&s);
        for t in 0..=1 {
            let general = general_allocation_solve(&tree, &z, &utilities, t, SolverOptions::default()).unwrap();
            let closed = optimal_allocation(&tree, &z, &s, t).unwrap();
            assert!(general.allocation.max_abs_diff(&closed.aggregate) < 1e-7);
            assert!(general.dual.max_abs_diff(&closed.dual) < 1e-7);
        }
    }

    #[test]
    fn zero_payoff_gives_unit_dual() {
        let tree = ScenarioTree::binomial(2, 0.5).unwrap();
        let u: Vec<Arc<dyn Utility>> =
            vec![Arc::new(MixedExponentialUtility::new(0.4, 0.5, 2.0).unwrap()); 3];
        let sol = general_allocation_solve(&tree, &tree.constant(2, 0.0), &u, 0, SolverOptions::default()).unwrap();
        assert!(sol.dual.iter().all(|(_, m)| (m - 1.0).abs() < 1e-12));
        assert!(sol.allocation.iter().all(|(_, x)| x.abs() < 1e-12));
    }

    #[test]
    fn general_premium_agrees_with_recursion_for_exponentials() {
        let tree = ScenarioTree::binomial(2, 0.3).unwrap();
        let z = tree.rv_from_fn(2, |i| tree.slot(i) as f64 * 0.5);
        let s = RiskAversionSchedule::homogeneous(1, 2, 1.0).unwrap();
        let utilities: Vec<ExponentialUtility> = aggregate_exponentials(&s);
        let h = general_premium(&tree, &z, &utilities, SolverOptions::default()).unwrap();
        let closed = premium_process(&tree, &z, &s).unwrap().at(0);
        assert!((h - closed).abs() < 1e-8, "{h} vs {closed}");
    }

    #[test]
    fn horizon_mismatch_is_rejected() {
        let tree = ScenarioTree::binomial(2, 0.3).unwrap();
        let u = vec![ExponentialUtility::new(1.0).unwrap(); 2];
        assert!(matches!(
            general_allocation_solve(&tree, &tree.constant(2, 0.0), &u, 0, SolverOptions::default()),
            Err(Error::HorizonMismatch { .. })
        ));
    }
}
