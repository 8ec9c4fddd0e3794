//! Fixed-payment insurance portfolios over independent event times.
//!
//! Contract `i` pays `c_{i,t}` at time `t` when its event time falls in
//! `(t − 1, t]`. With exponential utilities the premium factorises over
//! contracts and is assembled from the backward multipliers `h_{i,t}` of
//! [`h_recursion`]. [`hazard_to_tree`] expands a portfolio into its natural
//! filtration so the closed form can be checked against the generic
//! recursion.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preferences::{RiskAversionSchedule, ScheduleSpec};
use crate::tree::{NodeSpec, RandomVariable, ScenarioTree};

/// Largest horizon accepted by [`hazard_to_tree`].
pub const MAX_TREE_HORIZON: usize = 6;
/// Default contract budget for [`hazard_to_tree`].
pub const DEFAULT_MAX_CONTRACTS: usize = 4;

/// Exponents below this are evaluated directly, above it with a max shift.
const SHIFT_THRESHOLD: f64 = 600.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub id: String,
    /// Discounted payments `c_1..c_T`.
    pub payments: Vec<f64>,
    /// Hazards `q_0..q_{T−1}`, `q_t = P(τ ≤ t + 1 | τ > t)`.
    pub hazard: Vec<f64>,
}

impl Contract {
    /// Payment at time `t ∈ 1..=T`.
    pub fn payment(&self, t: usize) -> f64 {
        self.payments[t - 1]
    }

    /// Probability that the event falls in `(t − 1, t]`.
    pub fn event_prob(&self, t: usize) -> f64 {
        let survive: f64 = self.hazard[..t - 1].iter().map(|q| 1.0 - q).product();
        survive * self.hazard[t - 1]
    }

    fn validate(&self, horizon: usize) -> Result<()> {
        if self.payments.len() != horizon || self.hazard.len() != horizon {
            return Err(Error::InvalidParameter(format!(
                "contract {}: expected {horizon} payments and hazards, got {} and {}",
                self.id,
                self.payments.len(),
                self.hazard.len()
            )));
        }
        if let Some(c) = self.payments.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "contract {}: payment {c} must be finite and nonnegative",
                self.id
            )));
        }
        if let Some(q) = self.hazard.iter().find(|q| !(**q >= 0.0 && **q < 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "contract {}: hazard {q} must lie in [0, 1)",
                self.id
            )));
        }
        Ok(())
    }
}

/// Portfolio JSON: `{"T": int, "schedule": {...}, "contracts": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSpec {
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    pub contracts: Vec<Contract>,
}

impl PortfolioSpec {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn build(&self) -> Result<InsurancePortfolio> {
        let schedule = self.schedule.schedule(self.horizon)?;
        InsurancePortfolio::new(self.contracts.clone(), schedule)
    }
}

#[derive(Debug, Clone)]
pub struct InsurancePortfolio {
    contracts: Vec<Contract>,
    schedule: RiskAversionSchedule,
}

impl InsurancePortfolio {
    pub fn new(contracts: Vec<Contract>, schedule: RiskAversionSchedule) -> Result<Self> {
        let horizon = schedule.horizon();
        if horizon == 0 {
            return Err(Error::InvalidParameter("portfolio horizon must be at least 1".into()));
        }
        let mut ids = HashSet::new();
        for c in &contracts {
            if !ids.insert(c.id.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate contract id {:?}", c.id)));
            }
            c.validate(horizon)?;
        }
        Ok(InsurancePortfolio {
            contracts,
            schedule,
        })
    }

    pub fn contracts(&self) -> &[Contract] {
        &self.contracts
    }

    pub fn schedule(&self) -> &RiskAversionSchedule {
        &self.schedule
    }

    pub fn horizon(&self) -> usize {
        self.schedule.horizon()
    }

    /// `E[Z] = Σ_{i,t} c_{i,t} P(t − 1 < τ_i ≤ t)`.
    pub fn expected_claims(&self) -> f64 {
        self.contracts
            .iter()
            .map(|c| (1..=self.horizon()).map(|t| c.payment(t) * c.event_prob(t)).sum::<f64>())
            .sum()
    }
}

/// Status of one contract at a given time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivalState {
    Alive,
    /// Event time in `(s − 1, s]`.
    DiedAt(usize),
}

/// Backward multipliers, stored as `log h_{i,t}` for `t = 1..=T+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HTable {
    log_h: Vec<Vec<f64>>,
}

impl HTable {
    pub fn contracts(&self) -> usize {
        self.log_h.len()
    }

    pub fn log_h(&self, contract: usize, t: usize) -> f64 {
        self.log_h[contract][t - 1]
    }

    pub fn h(&self, contract: usize, t: usize) -> f64 {
        self.log_h(contract, t).exp()
    }

    /// Rows of `h_{i,1..=T+1}`.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.log_h
            .iter()
            .map(|row| row.iter().map(|x| x.exp()).collect())
            .collect()
    }

    /// Premium at time `t` given each contract's status at `t`.
    pub fn premium(
        &self,
        portfolio: &InsurancePortfolio,
        t: usize,
        states: &[SurvivalState],
    ) -> Result<f64> {
        if t > portfolio.horizon() {
            return Err(Error::InvalidParameter(format!(
                "time {t} beyond horizon {}",
                portfolio.horizon()
            )));
        }
        if states.len() != portfolio.contracts.len() {
            return Err(Error::InconsistentState(format!(
                "{} states for {} contracts",
                states.len(),
                portfolio.contracts.len()
            )));
        }
        let mut total = 0.0;
        for (i, (contract, state)) in portfolio.contracts.iter().zip(states).enumerate() {
            total += match *state {
                SurvivalState::Alive => self.log_h(i, t + 1),
                SurvivalState::DiedAt(s) if s >= 1 && s <= t => contract.payment(s),
                SurvivalState::DiedAt(s) => {
                    return Err(Error::InconsistentState(format!(
                        "contract {} died at {s}, not observable at time {t}",
                        contract.id
                    )))
                }
            };
        }
        Ok(total)
    }
}

/// `h_{i,T+1} = 1`, `h_{i,t} = [e^{β_t c_{i,t}} q_{i,t−1} + h_{i,t+1}^{β_t} p_{i,t−1}]^{1/β_t}`,
/// evaluated in the log domain.
pub fn h_recursion(portfolio: &InsurancePortfolio) -> HTable {
    let horizon = portfolio.horizon();
    let log_h = portfolio
        .contracts
        .iter()
        .map(|c| {
            let mut row = vec![0.0; horizon + 1];
            for t in (1..=horizon).rev() {
                let b = portfolio.schedule.beta(t);
                let q = c.hazard[t - 1];
                let next = row[t];
                let die = b * c.payment(t);
                let live = b * next;
                row[t - 1] = if q == 0.0 {
                    next
                } else {
                    let shift = die.max(live);
                    if shift < SHIFT_THRESHOLD {
                        (q * die.exp() + (1.0 - q) * live.exp()).ln() / b
                    } else {
                        let sum = q * (die - shift).exp() + (1.0 - q) * (live - shift).exp();
                        (shift + sum.ln()) / b
                    }
                };
            }
            row
        })
        .collect();
    HTable { log_h }
}

pub fn premium_closed_form(
    portfolio: &InsurancePortfolio,
    t: usize,
    states: &[SurvivalState],
) -> Result<f64> {
    h_recursion(portfolio).premium(portfolio, t, states)
}

/// Natural-filtration tree of a portfolio with the claim payoff at the leaves.
#[derive(Debug, Clone)]
pub struct InsuranceTree {
    pub tree: ScenarioTree,
    pub payoff: RandomVariable,
    /// Per arena node, each contract's status at that node's time.
    pub states: Vec<Vec<SurvivalState>>,
}

fn state_code(states: &[SurvivalState]) -> String {
    let codes: Vec<String> = states
        .iter()
        .map(|s| match s {
            SurvivalState::Alive => "a".to_string(),
            SurvivalState::DiedAt(s) => s.to_string(),
        })
        .collect();
    codes.join(".")
}

pub fn hazard_to_tree(portfolio: &InsurancePortfolio, max_contracts: usize) -> Result<InsuranceTree> {
    let horizon = portfolio.horizon();
    let n = portfolio.contracts.len();
    if n > max_contracts {
        return Err(Error::Budget(format!(
            "{n} contracts exceed the tree budget of {max_contracts}"
        )));
    }
    if horizon > MAX_TREE_HORIZON {
        return Err(Error::Budget(format!(
            "horizon {horizon} exceeds the tree budget of {MAX_TREE_HORIZON}"
        )));
    }

    let root_states = vec![SurvivalState::Alive; n];
    let mut specs = vec![NodeSpec {
        id: format!("0:{}", state_code(&root_states)),
        time: 0,
        parent: None,
        prob: 1.0,
    }];
    let mut by_id: BTreeMap<String, Vec<SurvivalState>> = BTreeMap::new();
    by_id.insert(specs[0].id.clone(), root_states.clone());
    let mut frontier = vec![(specs[0].id.clone(), root_states)];

    for t in 0..horizon {
        let mut next = Vec::new();
        for (parent, states) in &frontier {
            let mut branches: Vec<(Vec<SurvivalState>, f64)> = vec![(Vec::with_capacity(n), 1.0)];
            for (contract, state) in portfolio.contracts.iter().zip(states) {
                let mut grown = Vec::with_capacity(branches.len() * 2);
                for (prefix, prob) in &branches {
                    let q = contract.hazard[t];
                    let options: Vec<(SurvivalState, f64)> = match state {
                        SurvivalState::DiedAt(_) => vec![(*state, 1.0)],
                        SurvivalState::Alive if q == 0.0 => vec![(SurvivalState::Alive, 1.0)],
                        SurvivalState::Alive => vec![
                            (SurvivalState::DiedAt(t + 1), q),
                            (SurvivalState::Alive, 1.0 - q),
                        ],
                    };
                    for (s, p) in options {
                        let mut v = prefix.clone();
                        v.push(s);
                        grown.push((v, prob * p));
                    }
                }
                branches = grown;
            }
            for (child, prob) in branches {
                let id = format!("{}:{}", t + 1, state_code(&child));
                specs.push(NodeSpec {
                    id: id.clone(),
                    time: t + 1,
                    parent: Some(parent.clone()),
                    prob,
                });
                by_id.insert(id.clone(), child.clone());
                next.push((id, child));
            }
        }
        frontier = next;
    }

    let tree = ScenarioTree::build(horizon, &specs)?;
    let states: Vec<Vec<SurvivalState>> = tree
        .nodes()
        .iter()
        .map(|node| by_id[node.id()].clone())
        .collect();
    let payoff = tree.rv_from_fn(horizon, |i| {
        portfolio
            .contracts
            .iter()
            .zip(&states[i])
            .map(|(c, s)| match s {
                SurvivalState::DiedAt(s) => c.payment(*s),
                SurvivalState::Alive => 0.0,
            })
            .sum()
    });
    Ok(InsuranceTree {
        tree,
        payoff,
        states,
    })
}
