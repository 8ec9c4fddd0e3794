//! Sup-convolution of three utilities: the optimal split of wealth and the
//! common marginal utility at a few wealth levels.
//!
//! cargo run --example convolve

use std::sync::Arc;

use divprem::preferences::{ExponentialUtility, MixedExponentialUtility, SupConvolution, Utility};

fn main() -> divprem::Result<()> {
    let members: Vec<Arc<dyn Utility>> = vec![
        Arc::new(ExponentialUtility::new(1.0)?),
        Arc::new(ExponentialUtility::new(3.0)?),
        Arc::new(MixedExponentialUtility::new(0.4, 0.5, 2.0)?),
    ];
    let conv = SupConvolution::new(members)?;
    println!("{:>6} {:>10} {:>10}  split", "x", "value", "lambda");
    for k in -4..=8 {
        let x = 0.5 * k as f64;
        let c = conv.solve(x)?;
        let split: Vec<String> = c.split.iter().map(|s| format!("{s:.4}")).collect();
        println!("{:>6.2} {:>10.5} {:>10.5}  [{}]", x, c.value, c.lambda, split.join(", "));
    }
    Ok(())
}
