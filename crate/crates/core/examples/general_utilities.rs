//! Optimal diversification when utilities are not exponential: the Newton
//! solver on the dual martingale, and the premium found by bisection.
//!
//! cargo run --example general_utilities

use std::sync::Arc;

use divprem::preferences::{ExponentialUtility, MixedExponentialUtility, Utility, UtilityFamily};
use divprem::tree::ScenarioTree;
use divprem::valuation::{agent_split, general_allocation_solve, general_premium, SolverOptions};

fn main() -> divprem::Result<()> {
    let tree = ScenarioTree::binomial(3, 0.45)?;
    let z = tree.rv_from_fn(3, |i| tree.node(i).id().matches('u').count() as f64 - 1.0);

    let cautious: Arc<dyn Utility> = Arc::new(MixedExponentialUtility::new(0.3, 0.5, 4.0)?);
    let bold: Arc<dyn Utility> = Arc::new(ExponentialUtility::new(0.8)?);
    let family = UtilityFamily::stationary(vec![cautious, bold], tree.horizon())?;
    let aggregates = family.aggregates();

    let solution = general_allocation_solve(&tree, &z, &aggregates, 0, SolverOptions::default())?;
    println!("{:?}", solution.diagnostics);
    let split = agent_split(&tree, &family, &solution.dual);
    for (i, node) in tree.nodes().iter().enumerate().take(7) {
        println!(
            "{:>4}  M {:.5}  X {:>9.5}  cautious {:>9.5}  bold {:>9.5}",
            node.id(),
            solution.dual.at(i),
            solution.allocation.at(i),
            split[0].at(i),
            split[1].at(i)
        );
    }
    let premium = general_premium(&tree, &z, &aggregates, SolverOptions::default())?;
    println!("E[Z] = {:.6}, premium = {:.6}", tree.expectation(&z), premium);
    Ok(())
}
