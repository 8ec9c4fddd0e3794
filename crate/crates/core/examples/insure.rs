//! Closed-form premium of a small term-insurance book, checked against the
//! recursion on its expanded scenario tree.
//!
//! cargo run --example insure

use divprem::insurance::{h_recursion, hazard_to_tree, PortfolioSpec, SurvivalState};
use divprem::valuation::premium_process;

fn main() -> divprem::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/life_book.json");
    let portfolio = PortfolioSpec::read(path)?.build()?;
    let table = h_recursion(&portfolio);
    let alive = vec![SurvivalState::Alive; portfolio.contracts().len()];
    let premium = table.premium(&portfolio, 0, &alive)?;

    for (c, row) in portfolio.contracts().iter().zip(table.rows()) {
        let row: Vec<String> = row.iter().map(|h| format!("{h:.6}")).collect();
        println!("{:>8}  h = [{}]", c.id, row.join(", "));
    }
    println!("expected claims {:.6}", portfolio.expected_claims());
    println!("premium         {:.6}", premium);

    let expanded = hazard_to_tree(&portfolio, 4)?;
    let h = premium_process(&expanded.tree, &expanded.payoff, portfolio.schedule())?;
    println!(
        "tree recursion  {:.6} ({} leaves)",
        h.at(expanded.tree.root()),
        expanded.tree.slice_len(portfolio.horizon())
    );
    Ok(())
}
