//! Dynamic indifference premiums and Pareto-optimal risk diversification on
//! finite scenario trees.
//!
//! A terminal risk `Z` is split across agents and times so that the sum of
//! conditional expected utilities is maximal. For exponential utilities the
//! optimum, the premium process and the dual martingale certificate all
//! have closed forms driven by an entropic backward recursion; for general
//! utilities they are found by a tree-structured Newton solver. Brute-force
//! oracles, a closed-form insurance pricer and desk-scale diversification
//! experiments sit on top.

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod instances;
pub mod insurance;
pub mod oracle;
pub mod preferences;
pub mod report;
pub mod roots;
pub mod tree;
pub mod valuation;

pub use error::{Error, Result};
pub use preferences::{
    conjugate, sup_convolution, ExponentialUtility, MixedExponentialUtility, RiskAversionSchedule,
    SupConvolution, Utility, UtilityFamily,
};
pub use tree::{AdaptedProcess, RandomVariable, ScenarioTree};
