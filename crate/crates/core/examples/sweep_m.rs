//! More trading dates over the same horizon lower the premium of a fixed
//! coin-flip payoff. Two refinements of the same law are compared.
//!
//! cargo run --release --example sweep_m

use divprem::asymptotics::{time_refinement_sweep, CoinFlipFirstStep, MajorityWalk, PayoffGenerator};

fn main() -> divprem::Result<()> {
    let grid = [1, 2, 4, 8, 12];
    let generators: [&dyn PayoffGenerator; 2] = [&CoinFlipFirstStep::default(), &MajorityWalk];
    for g in generators {
        let report = time_refinement_sweep(g, &grid, 1.0)?;
        let first = report.points[0].gap();
        println!("{}", g.name());
        for p in &report.points {
            println!("  m = {:>2}  premium {:.6}  gap {:.6}  ({:.1}% of m = 1)", p.n_or_m, p.premium, p.gap(), 100.0 * p.gap() / first);
        }
    }
    Ok(())
}
