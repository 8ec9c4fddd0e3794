//! Premium of a binomial payoff shared by n identical agents: the loading
//! over E[Z] falls like 1/n, and what is left after the first-order term
//! falls like 1/n².
//!
//! cargo run --release --example sweep_n

use divprem::asymptotics::expansion_check;
use divprem::tree::ScenarioTree;

fn main() -> divprem::Result<()> {
    let tree = ScenarioTree::binomial(2, 0.3)?;
    let z = tree.rv_from_fn(2, |i| tree.node(i).id().matches('u').count() as f64);
    let grid: Vec<usize> = (0..=10).map(|k| 1 << k).collect();

    let report = expansion_check(&tree, &z, 1.0, &grid)?;
    print!("{}", report.to_csv()?);
    println!("log-log slope of the loading: {:.4}", report.slope.unwrap_or(f64::NAN));
    for r in &report.ratios {
        println!("r({})/r({}) = {:.4}", r.n, 2 * r.n, r.ratio);
    }
    Ok(())
}
