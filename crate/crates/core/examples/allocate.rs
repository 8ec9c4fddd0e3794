//! Optimal split of a payoff between two agents over three dates, with the
//! dual martingale that certifies it.
//!
//! cargo run --example allocate

use divprem::preferences::RiskAversionSchedule;
use divprem::tree::TreeFile;
use divprem::valuation::valuate;

fn main() -> divprem::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/binomial2.json");
    let (tree, z) = TreeFile::read(path)?.tree_and_rv("Z")?;
    let schedule = RiskAversionSchedule::from_matrix(vec![vec![1.0, 2.0, 2.0], vec![0.5, 1.0, 4.0]])?;

    let result = valuate(&tree, &z, &schedule, 0)?;
    println!("premium H_0 = {:.6}, utility U_0 = {:.6}", result.premium, result.utility.values()[0]);
    println!("{:>4} {:>10} {:>10} {:>10} {:>10}", "node", "X", "X_1", "X_2", "M");
    let a = &result.allocation;
    for (i, node) in tree.nodes().iter().enumerate() {
        println!(
            "{:>4} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
            node.id(),
            a.aggregate.at(i),
            a.agents[0].at(i),
            a.agents[1].at(i),
            a.dual.at(i)
        );
    }
    println!("{:?}", result.diagnostics);
    Ok(())
}
