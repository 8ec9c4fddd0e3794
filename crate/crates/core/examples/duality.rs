//! Weak and strong duality: random allocations and martingale densities
//! bracket the optimum, and the optimal pair closes the gap.
//!
//! cargo run --example duality

use divprem::instances::{random_allocation, random_martingale, random_payoff, random_tree, TreeShape};
use divprem::oracle::duality_gap;
use divprem::preferences::RiskAversionSchedule;
use divprem::valuation::{aggregate_exponentials, optimal_allocation, utility_process};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> divprem::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let tree = random_tree(&mut rng, TreeShape { max_horizon: 3, ..TreeShape::default() })?;
    let z = random_payoff(&mut rng, &tree, 1.0);
    let schedule = RiskAversionSchedule::homogeneous(2, tree.horizon(), 1.5)?;
    let utilities = aggregate_exponentials(&schedule);

    let u0 = utility_process(&tree, &z, &schedule, 0)?.values()[0];
    println!("tree with {} nodes, T = {}, U_0 = {:.8}", tree.len(), tree.horizon(), u0);

    let opt = optimal_allocation(&tree, &z, &schedule, 0)?;
    let at_opt = duality_gap(&tree, &z, &utilities, &opt.aggregate, &opt.dual)?;
    println!("optimal pair: primal {:.8}  dual {:.8}  gap {:.2e}", at_opt.primal[0], at_opt.dual[0], at_opt.gap);

    for _ in 0..5 {
        let x = random_allocation(&mut rng, &tree, &z, 0, 1.0);
        let m = random_martingale(&mut rng, &tree, 0, 0.5);
        let g = duality_gap(&tree, &z, &utilities, &x, &m)?;
        println!("random pair:  primal {:.6} <= {:.6} <= dual {:.6}", g.primal[0], u0, g.dual[0]);
    }
    Ok(())
}
