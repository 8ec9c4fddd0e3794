//! Utility functions, their inverse marginals and conjugates, aggregate
//! risk-aversion schedules, and the sup-convolution of several utilities.
//!
//! Every utility is normalised so that `u(0) = 0` and `u'(0) = 1`, with
//! `u'(+∞) = 0` and `u'(−∞) = +∞`.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::{solve_decreasing, RootOptions};

/// Strictly increasing, strictly concave utility on ℝ.
pub trait Utility: Debug + Send + Sync {
    fn value(&self, x: f64) -> f64;

    /// First derivative `u'(x)`.
    fn marginal(&self, x: f64) -> f64;

    /// Second derivative `u''(x) < 0`.
    fn curvature(&self, x: f64) -> f64;

    /// `I(y) = (u')⁻¹(y)` for `y > 0`; NaN when the root cannot be found.
    fn inverse_marginal(&self, y: f64) -> f64 {
        if !(y > 0.0) {
            return f64::NAN;
        }
        let target = y.ln();
        solve_decreasing(
            |x| self.marginal(x).ln() - target,
            Some(|x: f64| self.curvature(x) / self.marginal(x)),
            0.0,
            RootOptions {
                ftol: 1e-14,
                ..RootOptions::default()
            },
        )
        .unwrap_or(f64::NAN)
    }

    /// Derivative of the inverse marginal, `I'(y) = 1 / u''(I(y))`.
    fn inverse_marginal_slope(&self, y: f64) -> f64 {
        1.0 / self.curvature(self.inverse_marginal(y))
    }

    /// Convex conjugate `u*(y) = sup_x {u(x) − xy} = u(I(y)) − y I(y)`, `y > 0`.
    fn conjugate(&self, y: f64) -> f64 {
        let x = self.inverse_marginal(y);
        self.value(x) - x * y
    }
}

impl<U: Utility + ?Sized> Utility for Arc<U> {
    fn value(&self, x: f64) -> f64 {
        (**self).value(x)
    }

    fn marginal(&self, x: f64) -> f64 {
        (**self).marginal(x)
    }

    fn curvature(&self, x: f64) -> f64 {
        (**self).curvature(x)
    }

    fn inverse_marginal(&self, y: f64) -> f64 {
        (**self).inverse_marginal(y)
    }

    fn inverse_marginal_slope(&self, y: f64) -> f64 {
        (**self).inverse_marginal_slope(y)
    }

    fn conjugate(&self, y: f64) -> f64 {
        (**self).conjugate(y)
    }
}

/// Conjugate with the domain check: `u*(y) = +∞` for `y ≤ 0` is an error.
pub fn conjugate(u: &dyn Utility, y: f64) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::ConjugateDomain(y));
    }
    Ok(u.conjugate(y))
}

/// `u(x) = (1 − e^{−αx}) / α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialUtility {
    alpha: f64,
}

impl ExponentialUtility {
    pub fn new(alpha: f64) -> Result<Self> {
        check_positive("risk aversion", alpha)?;
        Ok(ExponentialUtility { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Utility for ExponentialUtility {
    fn value(&self, x: f64) -> f64 {
        -(-self.alpha * x).exp_m1() / self.alpha
    }

    fn marginal(&self, x: f64) -> f64 {
        (-self.alpha * x).exp()
    }

    fn curvature(&self, x: f64) -> f64 {
        -self.alpha * (-self.alpha * x).exp()
    }

    fn inverse_marginal(&self, y: f64) -> f64 {
        -y.ln() / self.alpha
    }

    fn inverse_marginal_slope(&self, y: f64) -> f64 {
        -1.0 / (self.alpha * y)
    }

    fn conjugate(&self, y: f64) -> f64 {
        (1.0 - y + y * y.ln()) / self.alpha
    }
}

/// Convex combination of two exponential utilities,
/// `u = w·u_{α₁} + (1 − w)·u_{α₂}`. Its inverse marginal has no closed
/// form and is found numerically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedExponentialUtility {
    weight: f64,
    first: ExponentialUtility,
    second: ExponentialUtility,
}

impl MixedExponentialUtility {
    pub fn new(weight: f64, alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(weight > 0.0 && weight < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "mixture weight {weight} must lie in (0, 1)"
            )));
        }
        Ok(MixedExponentialUtility {
            weight,
            first: ExponentialUtility::new(alpha1)?,
            second: ExponentialUtility::new(alpha2)?,
        })
    }
}

impl Utility for MixedExponentialUtility {
    fn value(&self, x: f64) -> f64 {
        self.weight * self.first.value(x) + (1.0 - self.weight) * self.second.value(x)
    }

    fn marginal(&self, x: f64) -> f64 {
        self.weight * self.first.marginal(x) + (1.0 - self.weight) * self.second.marginal(x)
    }

    fn curvature(&self, x: f64) -> f64 {
        self.weight * self.first.curvature(x) + (1.0 - self.weight) * self.second.curvature(x)
    }
}

/// Result of a sup-convolution at one wealth level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convolution {
    pub x: f64,
    pub value: f64,
    /// Common marginal utility `λ` at the optimal split.
    pub lambda: f64,
    pub split: Vec<f64>,
}

/// Sup-convolution `u⁽ⁿ⁾(x) = sup{Σ u_i(x_i) : Σ x_i = x}`.
///
/// At the optimum all marginal utilities equal a common `λ`, so
/// `(u⁽ⁿ⁾)'⁻¹ = Σ I_i` and the convolution is itself a [`Utility`].
#[derive(Debug, Clone)]
pub struct SupConvolution {
    members: Vec<Arc<dyn Utility>>,
}

impl SupConvolution {
    pub fn new(members: Vec<Arc<dyn Utility>>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidParameter("sup-convolution of no utilities".into()));
        }
        Ok(SupConvolution { members })
    }

    pub fn members(&self) -> &[Arc<dyn Utility>] {
        &self.members
    }

    /// `λ = (Σ I_i)⁻¹(x)`, solved on `log λ` where `Σ I_i` is strictly decreasing.
    pub fn price(&self, x: f64) -> Result<f64> {
        if self.members.len() == 1 {
            return Ok(self.members[0].marginal(x));
        }
        let z = solve_decreasing(
            |z| self.inverse_marginal(z.exp()) - x,
            Some(|z: f64| {
                let y = z.exp();
                self.inverse_marginal_slope(y) * y
            }),
            0.0,
            RootOptions::default(),
        )?;
        Ok(z.exp())
    }

    /// Optimal value and split at wealth `x`.
    pub fn solve(&self, x: f64) -> Result<Convolution> {
        let lambda = self.price(x)?;
        let split: Vec<f64> = if self.members.len() == 1 {
            vec![x]
        } else {
            self.members.iter().map(|u| u.inverse_marginal(lambda)).collect()
        };
        let value = self.members.iter().zip(&split).map(|(u, &xi)| u.value(xi)).sum();
        Ok(Convolution {
            x,
            value,
            lambda,
            split,
        })
    }

    /// `Σ u_i(I_i(λ))`: the convolution value at the wealth whose price is `λ`.
    pub fn value_at_price(&self, lambda: f64) -> f64 {
        self.members
            .iter()
            .map(|u| u.value(u.inverse_marginal(lambda)))
            .sum()
    }

    /// Per-member split at price `λ`.
    pub fn split_at_price(&self, lambda: f64) -> Vec<f64> {
        self.members.iter().map(|u| u.inverse_marginal(lambda)).collect()
    }
}

impl Utility for SupConvolution {
    fn value(&self, x: f64) -> f64 {
        if self.members.len() == 1 {
            return self.members[0].value(x);
        }
        self.price(x).map_or(f64::NAN, |l| self.value_at_price(l))
    }

    fn marginal(&self, x: f64) -> f64 {
        self.price(x).unwrap_or(f64::NAN)
    }

    fn curvature(&self, x: f64) -> f64 {
        if self.members.len() == 1 {
            return self.members[0].curvature(x);
        }
        self.price(x)
            .map_or(f64::NAN, |l| 1.0 / self.inverse_marginal_slope(l))
    }

    fn inverse_marginal(&self, y: f64) -> f64 {
        self.members.iter().map(|u| u.inverse_marginal(y)).sum()
    }

    fn inverse_marginal_slope(&self, y: f64) -> f64 {
        self.members.iter().map(|u| u.inverse_marginal_slope(y)).sum()
    }

    /// The conjugate of a sup-convolution is the sum of the conjugates.
    fn conjugate(&self, y: f64) -> f64 {
        self.members.iter().map(|u| u.conjugate(y)).sum()
    }
}

/// Sup-convolution of `members` evaluated at `x`.
pub fn sup_convolution(members: &[Arc<dyn Utility>], x: f64) -> Result<Convolution> {
    SupConvolution::new(members.to_vec())?.solve(x)
}

/// Sampled check of the utility axioms: positive decreasing marginal,
/// normalisation at zero, and `I(u'(x)) = x`.
pub fn validate_utility(u: &dyn Utility) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidParameter(msg));
    if u.value(0.0).abs() > 1e-12 || (u.marginal(0.0) - 1.0).abs() > 1e-12 {
        return bad(format!(
            "utility not normalised: u(0) = {}, u'(0) = {}",
            u.value(0.0),
            u.marginal(0.0)
        ));
    }
    let mut prev = f64::INFINITY;
    for k in -40..=40 {
        let x = k as f64 * 0.25;
        let m = u.marginal(x);
        if !(m > 0.0) || !(m < prev) {
            return bad(format!("marginal utility not positive and decreasing at x = {x}"));
        }
        prev = m;
        let back = u.inverse_marginal(m);
        if (back - x).abs() > 1e-10 {
            return bad(format!("I(u'({x})) = {back}"));
        }
    }
    if !(u.marginal(200.0) < 1e-6 && u.marginal(-200.0) > 1e6) {
        return bad("marginal utility limits at ±∞ violated".into());
    }
    Ok(())
}

fn check_positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} {v} must be positive and finite")))
    }
}

/// JSON utility selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum UtilitySpec {
    #[serde(rename = "exp")]
    Exponential { alpha: f64 },
    #[serde(rename = "mixexp")]
    MixedExponential { weight: f64, alpha: f64, alpha2: f64 },
}

impl UtilitySpec {
    pub fn build(&self) -> Result<Arc<dyn Utility>> {
        Ok(match *self {
            UtilitySpec::Exponential { alpha } => Arc::new(ExponentialUtility::new(alpha)?),
            UtilitySpec::MixedExponential { weight, alpha, alpha2 } => {
                Arc::new(MixedExponentialUtility::new(weight, alpha, alpha2)?)
            }
        })
    }
}

/// Risk aversions `α_{i,s}`, the harmonic aggregate `α_s` and the modified
/// schedule `1/β_t = Σ_{s=t}^T 1/α_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAversionSchedule {
    alpha: Vec<Vec<f64>>,
    aggregate: Vec<f64>,
    beta: Vec<f64>,
}

impl RiskAversionSchedule {
    /// `alpha[i][s]` for agent `i` and time `s = 0..=T`.
    pub fn from_matrix(alpha: Vec<Vec<f64>>) -> Result<Self> {
        let cols = alpha.first().map(Vec::len).unwrap_or(0);
        if alpha.is_empty() || cols == 0 {
            return Err(Error::InvalidParameter("empty risk-aversion matrix".into()));
        }
        if alpha.iter().any(|row| row.len() != cols) {
            return Err(Error::InvalidParameter("ragged risk-aversion matrix".into()));
        }
        for (i, row) in alpha.iter().enumerate() {
            for (s, &a) in row.iter().enumerate() {
                check_positive(&format!("alpha[{i}][{s}]"), a)?;
            }
        }
        let aggregate: Vec<f64> = (0..cols)
            .map(|s| 1.0 / alpha.iter().map(|row| 1.0 / row[s]).sum::<f64>())
            .collect();
        let mut beta = vec![0.0; cols];
        let mut tolerance = 0.0;
        for t in (0..cols).rev() {
            tolerance += 1.0 / aggregate[t];
            beta[t] = 1.0 / tolerance;
        }
        Ok(RiskAversionSchedule {
            alpha,
            aggregate,
            beta,
        })
    }

    /// `n` agents sharing a constant risk aversion over `0..=horizon`.
    pub fn homogeneous(agents: usize, horizon: usize, alpha: f64) -> Result<Self> {
        if agents == 0 {
            return Err(Error::InvalidParameter("at least one agent required".into()));
        }
        Self::from_matrix(vec![vec![alpha; horizon + 1]; agents])
    }

    pub fn agents(&self) -> usize {
        self.alpha.len()
    }

    pub fn horizon(&self) -> usize {
        self.aggregate.len() - 1
    }

    pub fn alpha(&self, agent: usize, s: usize) -> f64 {
        self.alpha[agent][s]
    }

    /// Aggregate risk aversion `α_s` of the convolved utility at time `s`.
    pub fn aggregate(&self, s: usize) -> f64 {
        self.aggregate[s]
    }

    pub fn aggregates(&self) -> &[f64] {
        &self.aggregate
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.alpha
    }
}

/// `{"alpha": scalar | [per-s] | [[per-i, s]]}` with an optional agent count
/// for the broadcast forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub alpha: AlphaSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Scalar(f64),
    PerTime(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            alpha: AlphaSpec::Scalar(1.0),
            agents: None,
        }
    }
}

impl ScheduleSpec {
    pub fn schedule(&self, horizon: usize) -> Result<RiskAversionSchedule> {
        let agents = self.agents.unwrap_or(1);
        if agents == 0 {
            return Err(Error::InvalidParameter("at least one agent required".into()));
        }
        let matrix = match &self.alpha {
            AlphaSpec::Scalar(a) => vec![vec![*a; horizon + 1]; agents],
            AlphaSpec::PerTime(row) => vec![row.clone(); agents],
            AlphaSpec::Matrix(m) => {
                if self.agents.is_some_and(|n| n != m.len()) {
                    return Err(Error::InvalidParameter(
                        "agent count disagrees with matrix rows".into(),
                    ));
                }
                m.clone()
            }
        };
        let schedule = RiskAversionSchedule::from_matrix(matrix)?;
        if schedule.horizon() != horizon {
            return Err(Error::HorizonMismatch {
                tree: horizon,
                what: "schedule",
                other: schedule.horizon(),
            });
        }
        Ok(schedule)
    }
}

/// Per-agent, per-time utilities `u_{i,s}`.
#[derive(Debug, Clone)]
pub struct UtilityFamily {
    members: Vec<Vec<Arc<dyn Utility>>>,
}

impl UtilityFamily {
    /// `members[i][s]` for agent `i` and time `s = 0..=T`.
    pub fn new(members: Vec<Vec<Arc<dyn Utility>>>) -> Result<Self> {
        let cols = members.first().map(Vec::len).unwrap_or(0);
        if cols == 0 || members.iter().any(|row| row.len() != cols) {
            return Err(Error::InvalidParameter(
                "utility family must be a nonempty agents × times table".into(),
            ));
        }
        Ok(UtilityFamily { members })
    }

    pub fn exponential(schedule: &RiskAversionSchedule) -> Self {
        let members = schedule
            .matrix()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&a| {
                        Arc::new(ExponentialUtility::new(a).expect("validated schedule"))
                            as Arc<dyn Utility>
                    })
                    .collect()
            })
            .collect();
        UtilityFamily { members }
    }

    /// One agent per time using the same utility at every time.
    pub fn stationary(agents: Vec<Arc<dyn Utility>>, horizon: usize) -> Result<Self> {
        Self::new(agents.into_iter().map(|u| vec![u; horizon + 1]).collect())
    }

    pub fn agents(&self) -> usize {
        self.members.len()
    }

    pub fn horizon(&self) -> usize {
        self.members[0].len() - 1
    }

    pub fn member(&self, agent: usize, s: usize) -> &Arc<dyn Utility> {
        &self.members[agent][s]
    }

    /// Convolution over agents at time `s`: the effective single-agent utility.
    pub fn aggregate(&self, s: usize) -> SupConvolution {
        SupConvolution {
            members: self.members.iter().map(|row| row[s].clone()).collect(),
        }
    }

    pub fn aggregates(&self) -> Vec<SupConvolution> {
        (0..=self.horizon()).map(|s| self.aggregate(s)).collect()
    }
}
