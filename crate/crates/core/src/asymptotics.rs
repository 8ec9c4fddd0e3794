//! Finite-size diversification experiments.
//!
//! With `n` identical exponential agents the premium `H_{n,0}(Z)` decreases
//! to `E[Z]` like `1/n`, with first-order term `½ Σ_t β_t E[(ΔZ_t)²]` where
//! `ΔZ` are the martingale differences of `Z`. Splitting a fixed horizon into
//! more trading dates has a similar effect; [`time_refinement_sweep`] runs the
//! discrete version of that experiment on nested refinements produced by a
//! [`PayoffGenerator`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{fmt_sig, round_sig};
use crate::tree::{NodeSpec, RandomVariable, ScenarioTree};
use crate::valuation::premium_process_with_betas;

/// Node budget for generated refinement trees.
pub const MAX_REFINEMENT_NODES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Agents,
    Expansion,
    TimeRefinement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_or_m: usize,
    pub premium: f64,
    /// `E[Z]`.
    pub reference: f64,
    /// `½ Σ_t β_t E[(ΔZ_t)²]`.
    pub expansion_term: f64,
    /// `premium − reference − expansion_term`.
    pub residual: f64,
}

impl SweepPoint {
    /// Risk loading `premium − reference`.
    pub fn gap(&self) -> f64 {
        self.premium - self.reference
    }
}

/// `r(n) / r(2n)` with `r(2n)` evaluated directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRatio {
    pub n: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of `log(premium − reference)` against `log n`.
    pub slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ratios: Vec<ResidualRatio>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl SweepReport {
    fn new(kind: SweepKind, points: Vec<SweepPoint>) -> Self {
        let slope = log_log_slope(&points);
        SweepReport {
            kind,
            points,
            slope,
            ratios: Vec::new(),
            note: None,
        }
    }

    /// Premiums never increase along the grid (up to `tol`).
    pub fn is_nonincreasing(&self, tol: f64) -> bool {
        self.points.windows(2).all(|w| w[1].premium <= w[0].premium + tol)
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].premium < w[0].premium)
    }

    /// Every premium is at least `E[Z]` (up to `tol`).
    pub fn above_reference(&self, tol: f64) -> bool {
        self.points.iter().all(|p| p.premium >= p.reference - tol)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["n_or_m", "premium", "reference", "expansion_term", "residual"])?;
        for p in &self.points {
            w.write_record([
                p.n_or_m.to_string(),
                fmt_sig(p.premium),
                fmt_sig(p.reference),
                fmt_sig(p.expansion_term),
                fmt_sig(p.residual),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Copy with every number rounded to the reporting precision.
    pub fn rounded(&self) -> Self {
        let mut out = self.clone();
        for p in &mut out.points {
            p.premium = round_sig(p.premium);
            p.reference = round_sig(p.reference);
            p.expansion_term = round_sig(p.expansion_term);
            p.residual = round_sig(p.residual);
        }
        out.slope = out.slope.map(round_sig);
        for r in &mut out.ratios {
            r.ratio = round_sig(r.ratio);
        }
        out
    }
}

fn log_log_slope(points: &[SweepPoint]) -> Option<f64> {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.gap() > 0.0 && p.n_or_m > 0)
        .map(|p| ((p.n_or_m as f64).ln(), p.gap().ln()))
        .collect();
    if xy.len() < 2 {
        return None;
    }
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `β_t = α / (n (T − t + 1))` for `n` agents of constant risk aversion `α`.
pub fn homogeneous_betas(horizon: usize, alpha: f64, agents: usize) -> Vec<f64> {
    (0..=horizon)
        .map(|t| alpha / (agents as f64 * (horizon - t + 1) as f64))
        .collect()
}

/// `Σ_t E[(ΔZ_t)²]` per date `t = 1..=T`.
pub fn martingale_difference_variances(tree: &ScenarioTree, z: &RandomVariable) -> Result<Vec<f64>> {
    let dz = tree.martingale_differences(z)?;
    Ok((1..=tree.horizon())
        .map(|t| {
            tree.slice(t)
                .map(|i| tree.node(i).path_prob() * dz.at(i).powi(2))
                .sum()
        })
        .collect())
}

struct Experiment<'a> {
    tree: &'a ScenarioTree,
    z: &'a RandomVariable,
    alpha: f64,
    reference: f64,
    variances: Vec<f64>,
}

impl<'a> Experiment<'a> {
    fn new(tree: &'a ScenarioTree, z: &'a RandomVariable, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("risk aversion {alpha} must be positive")));
        }
        Ok(Experiment {
            tree,
            z,
            alpha,
            reference: tree.expectation(z),
            variances: martingale_difference_variances(tree, z)?,
        })
    }

    fn point(&self, n: usize) -> Result<SweepPoint> {
        let betas = homogeneous_betas(self.tree.horizon(), self.alpha, n);
        let premium = premium_process_with_betas(self.tree, self.z, &betas)?.at(self.tree.root());
        let expansion_term = 0.5
            * self
                .variances
                .iter()
                .enumerate()
                .map(|(k, v)| betas[k + 1] * v)
                .sum::<f64>();
        Ok(SweepPoint {
            n_or_m: n,
            premium,
            reference: self.reference,
            expansion_term,
            residual: premium - self.reference - expansion_term,
        })
    }

    fn points(&self, grid: &[usize]) -> Result<Vec<SweepPoint>> {
        grid.par_iter().map(|&n| self.point(n)).collect()
    }
}

fn check_grid(grid: &[usize]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    if grid.contains(&0) {
        return Err(Error::InvalidParameter("grid values must be at least 1".into()));
    }
    Ok(())
}

/// Premium with `n` identical agents of risk aversion `base_alpha`, per grid point.
pub fn large_n_sweep(
    tree: &ScenarioTree,
    z: &RandomVariable,
    base_alpha: f64,
    n_grid: &[usize],
) -> Result<SweepReport> {
    check_grid(n_grid)?;
    let exp = Experiment::new(tree, z, base_alpha)?;
    Ok(SweepReport::new(SweepKind::Agents, exp.points(n_grid)?))
}

/// Second-order residuals `r(n)` with ratios `r(n)/r(2n)`.
pub fn expansion_check(
    tree: &ScenarioTree,
    z: &RandomVariable,
    base_alpha: f64,
    n_grid: &[usize],
) -> Result<SweepReport> {
    check_grid(n_grid)?;
    let exp = Experiment::new(tree, z, base_alpha)?;
    let points = exp.points(n_grid)?;
    let doubled = exp.points(&n_grid.iter().map(|n| 2 * n).collect::<Vec<_>>())?;
    let ratios = points
        .iter()
        .zip(&doubled)
        .map(|(p, q)| ResidualRatio {
            n: p.n_or_m,
            ratio: p.residual / q.residual,
        })
        .collect();
    let mut report = SweepReport::new(SweepKind::Expansion, points);
    report.ratios = ratios;
    Ok(report)
}

/// Produces, for each number of sub-periods `m`, a tree with `m` dates and a
/// terminal payoff whose law does not depend on `m`.
pub trait PayoffGenerator: Sync {
    fn name(&self) -> &str;
    fn generate(&self, m: usize) -> Result<(ScenarioTree, RandomVariable)>;
}

/// Fair coin revealed in the first sub-period, nothing new afterwards.
/// `Z = high` on heads, `low` on tails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoinFlipFirstStep {
    pub high: f64,
    pub low: f64,
}

impl Default for CoinFlipFirstStep {
    fn default() -> Self {
        CoinFlipFirstStep { high: 1.0, low: 0.0 }
    }
}

impl PayoffGenerator for CoinFlipFirstStep {
    fn name(&self) -> &str {
        "coin-first-step"
    }

    fn generate(&self, m: usize) -> Result<(ScenarioTree, RandomVariable)> {
        if m == 0 {
            return Err(Error::InvalidParameter("at least one sub-period required".into()));
        }
        let mut specs = vec![NodeSpec {
            id: "r".into(),
            time: 0,
            parent: None,
            prob: 1.0,
        }];
        for side in ["h", "t"] {
            for s in 1..=m {
                specs.push(NodeSpec {
                    id: format!("{side}{s:03}"),
                    time: s,
                    parent: Some(if s == 1 { "r".into() } else { format!("{side}{:03}", s - 1) }),
                    prob: if s == 1 { 0.5 } else { 1.0 },
                });
            }
        }
        let tree = ScenarioTree::build(m, &specs)?;
        let z = tree.rv_from_fn(m, |i| {
            if tree.node(i).id().starts_with('h') {
                self.high
            } else {
                self.low
            }
        });
        Ok((tree, z))
    }
}

/// Symmetric ±1 walk over `m` sub-periods; `Z = 1` when the walk ends above
/// zero, ties decided by the last step. `Z` is a fair coin for every `m`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MajorityWalk;

impl PayoffGenerator for MajorityWalk {
    fn name(&self) -> &str {
        "majority-walk"
    }

    fn generate(&self, m: usize) -> Result<(ScenarioTree, RandomVariable)> {
        if m == 0 {
            return Err(Error::InvalidParameter("at least one sub-period required".into()));
        }
        let nodes = (1usize << (m + 1).min(63)) - 1;
        if m >= 63 || nodes > MAX_REFINEMENT_NODES {
            return Err(Error::Budget(format!(
                "majority walk with {m} steps needs more than {MAX_REFINEMENT_NODES} nodes"
            )));
        }
        let tree = ScenarioTree::binomial(m, 0.5)?;
        let z = tree.rv_from_fn(m, |i| {
            let id = tree.node(i).id();
            let ups = id.bytes().filter(|&b| b == b'u').count() as i64;
            let walk = 2 * ups - m as i64;
            let last_up = id.ends_with('u');
            if walk > 0 || (walk == 0 && last_up) {
                1.0
            } else {
                0.0
            }
        });
        Ok((tree, z))
    }
}

/// Premium of a single agent with constant per-date risk aversion `alpha`
/// on successive refinements of the same payoff law.
pub fn time_refinement_sweep(
    generator: &dyn PayoffGenerator,
    m_grid: &[usize],
    alpha: f64,
) -> Result<SweepReport> {
    check_grid(m_grid)?;
    let points = m_grid
        .par_iter()
        .map(|&m| {
            let (tree, z) = generator.generate(m)?;
            Experiment::new(&tree, &z, alpha)?.point(1).map(|p| SweepPoint { n_or_m: m, ..p })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = SweepReport::new(SweepKind::TimeRefinement, points);
    report.note = Some(format!(
        "discrete refinement analogue of the continuous-time limit ({})",
        generator.name()
    ));
    Ok(report)
}
