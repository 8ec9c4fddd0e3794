//! Premium process of a two-period payoff, read from a tree file.
//!
//! cargo run --example premium

use divprem::preferences::RiskAversionSchedule;
use divprem::tree::TreeFile;
use divprem::valuation::{premium_process, value_process};

fn main() -> divprem::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/binomial2.json");
    let (tree, z) = TreeFile::read(path)?.tree_and_rv("Z")?;
    let schedule = RiskAversionSchedule::homogeneous(1, tree.horizon(), 1.0)?;

    let h = premium_process(&tree, &z, &schedule)?;
    let v = value_process(&tree, &z, &schedule)?;
    println!("E[Z] = {:.6}", tree.expectation(&z));
    println!("{:>4} {:>4} {:>12} {:>12}", "node", "t", "H", "V");
    for (i, node) in tree.nodes().iter().enumerate() {
        println!("{:>4} {:>4} {:>12.6} {:>12.6}", node.id(), node.time(), h.at(i), v.at(i));
    }
    Ok(())
}
