//! Command-line front end.
//!
//! Every subcommand builds a serialisable report, prints it as JSON or CSV
//! with twelve significant digits, and returns the process exit code:
//! 0 on success, 2 when `--strict` is set and a diagnostic exceeds its
//! tolerance. Errors map to exit code 1 in `main`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::asymptotics::{expansion_check, time_refinement_sweep, CoinFlipFirstStep, MajorityWalk, PayoffGenerator, SweepReport};
use crate::error::{Error, Result};
use crate::insurance::{h_recursion, hazard_to_tree, PortfolioSpec, SurvivalState, DEFAULT_MAX_CONTRACTS, MAX_TREE_HORIZON};
use crate::oracle::{run_oracle_checks, OracleReport};
use crate::preferences::{ScheduleSpec, SupConvolution, Utility, UtilitySpec};
use crate::report::{fmt_sig, round_sig, NodeTable};
use crate::tree::{RandomVariable, ScenarioTree, TreeFile};
use crate::valuation::{premium_process, valuate, value_process, Tolerances, ValuationReport};

/// Environment variable capping the worker threads of parallel sweeps.
pub const THREADS_ENV: &str = "DIVPREM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "divprem", version, about = "Dynamic indifference premiums and optimal risk diversification on scenario trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Premium process H of a terminal payoff.
    Premium(ValuationArgs),
    /// Optimal allocation, dual martingale and diagnostics.
    Allocate(ValuationArgs),
    /// Sup-convolution of a list of utilities over a wealth grid.
    Convolve(ConvolveArgs),
    /// Closed-form premium of an insurance portfolio.
    Insure(InsureArgs),
    /// Premium against the number of agents, with second-order residuals.
    SweepN(SweepNArgs),
    /// Premium against the number of trading dates.
    SweepM(SweepMArgs),
    /// Brute-force verification on tiny instances.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit with status 2 when a diagnostic exceeds its tolerance.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct ValuationArgs {
    #[arg(long)]
    pub tree: PathBuf,
    /// Name of the payoff in the tree file's `rvs` block.
    #[arg(long, default_value = "Z")]
    pub rv: String,
    /// Schedule JSON, inline or as a file path. Defaults to one agent with α = 1.
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub t: usize,
    /// Threshold for the `H + V(−Z)` residual.
    #[arg(long)]
    pub recursion_tol: Option<f64>,
    /// Threshold for the martingale, budget and duality residuals.
    #[arg(long)]
    pub martingale_tol: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl ValuationArgs {
    fn tolerances(&self) -> Result<Tolerances> {
        let mut tol = Tolerances::default();
        for (name, given, slot) in [
            ("recursion", self.recursion_tol, &mut tol.recursion),
            ("martingale", self.martingale_tol, &mut tol.martingale),
        ] {
            if let Some(v) = given {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter(format!("{name} tolerance must be positive, got {v}")));
                }
                *slot = v;
            }
        }
        Ok(tol)
    }
}

#[derive(Debug, Args)]
pub struct ConvolveArgs {
    /// JSON list of utilities, inline or as a file path.
    #[arg(long)]
    pub utilities: String,
    /// Wealth grid `lo:hi:step`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct InsureArgs {
    #[arg(long)]
    pub portfolio: PathBuf,
    /// Overrides the portfolio's schedule.
    #[arg(long)]
    pub schedule: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepNArgs {
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long, default_value = "Z")]
    pub rv: String,
    /// Per-agent risk aversion.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Comma-separated agent counts.
    #[arg(long, default_value = "1,2,4,8,16,32,64,128,256,512,1024")]
    pub grid: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PayoffKind {
    /// Fair coin revealed in the first sub-period.
    Coin,
    /// Sign of a symmetric random walk.
    Majority,
}

#[derive(Debug, Args)]
pub struct SweepMArgs {
    #[arg(long, value_enum, default_value_t = PayoffKind::Coin)]
    pub payoff: PayoffKind,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Comma-separated numbers of sub-periods.
    #[arg(long, default_value = "1,2,4,8,12")]
    pub grid: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid step of the brute-force searches.
    #[arg(long, default_value_t = 1e-3)]
    pub grid: f64,
    /// Random instances for the duality checks.
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Parses `args` (including the program name) and runs the subcommand,
/// writing to `stdout` unless `--out` is given.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Result<i32>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            write!(stdout, "{e}")?;
            return Ok(0);
        }
        Err(e) => return Err(Error::InvalidParameter(e.to_string())),
    };
    configure_threads();
    let (output, outcome) = match &cli.command {
        Command::Premium(a) => (&a.output, premium(a)?),
        Command::Allocate(a) => (&a.output, allocate(a)?),
        Command::Convolve(a) => (&a.output, convolve(a)?),
        Command::Insure(a) => (&a.output, insure(a)?),
        Command::SweepN(a) => (&a.output, sweep_n(a)?),
        Command::SweepM(a) => (&a.output, sweep_m(a)?),
        Command::OracleCheck(a) => (&a.output, oracle(a)?),
    };
    let rendered = match output.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&rounded(outcome.json))?;
            s.push('\n');
            s
        }
        Format::Csv => outcome.csv,
    };
    let breaches = outcome.breaches;
    match &output.out {
        Some(path) => std::fs::write(path, rendered.as_bytes())?,
        None => stdout.write_all(rendered.as_bytes())?,
    }
    for b in &breaches {
        eprintln!("diagnostic breach: {b}");
    }
    Ok(if output.strict && !breaches.is_empty() { 2 } else { 0 })
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // a pool may already exist when run is called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// A report in both renderings plus its diagnostic breaches.
struct Outcome {
    json: Value,
    csv: String,
    breaches: Vec<String>,
}

/// Rounds every number in a JSON tree to the reporting precision.
pub fn rounded(value: Value) -> Value {
    match value {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => {
            let x = n.as_f64().expect("finite number");
            serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(rounded).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, rounded(v))).collect()),
        other => other,
    }
}

fn to_json<T: Serialize>(report: &T) -> Value {
    serde_json::to_value(report).expect("reports serialise")
}

/// Inline JSON when the argument starts with `{` or `[`, a file path otherwise.
fn read_json<T: serde::de::DeserializeOwned>(arg: &str) -> Result<T> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).map_err(|e| Error::parse("<inline>", e));
    }
    let path = Path::new(arg);
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

fn load_valuation(a: &ValuationArgs) -> Result<(ScenarioTree, RandomVariable, crate::preferences::RiskAversionSchedule)> {
    let file = TreeFile::read(&a.tree)?;
    let (tree, z) = file.tree_and_rv(&a.rv)?;
    let spec: ScheduleSpec = match &a.schedule {
        Some(s) => read_json(s)?,
        None => ScheduleSpec::default(),
    };
    let schedule = spec.schedule(tree.horizon())?;
    Ok((tree, z, schedule))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiumReport {
    /// `H_0(Z)` at the root.
    pub premium: f64,
    pub t: usize,
    /// `H_t(Z)` on the time-`t` slice.
    pub premium_t: Vec<f64>,
    pub nodes: NodeTable,
    /// `max |H_t(Z) + V_t(−Z)|`.
    pub premium_value_residual: f64,
}

fn premium(a: &ValuationArgs) -> Result<Outcome> {
    let (tree, z, schedule) = load_valuation(a)?;
    if a.t > tree.horizon() {
        return Err(Error::InvalidParameter(format!("--t {} beyond horizon {}", a.t, tree.horizon())));
    }
    let h = premium_process(&tree, &z, &schedule)?;
    let v = value_process(&tree, &z, &schedule)?;
    let v_neg = value_process(&tree, &z.map(|x| -x), &schedule)?;
    let residual = h.iter().map(|(i, x)| (x + v_neg.at(i)).abs()).fold(0.0, f64::max);
    let nodes = NodeTable::new(&tree, &[("H", &h), ("V", &v)]);
    let report = PremiumReport {
        premium: h.at(tree.root()),
        t: a.t,
        premium_t: h.slice(a.t).to_vec(),
        nodes,
        premium_value_residual: residual,
    };
    let tol = a.tolerances()?;
    let breaches = if residual <= tol.recursion {
        Vec::new()
    } else {
        vec![format!("premium_value_residual = {residual:e} exceeds {:e}", tol.recursion)]
    };
    Ok(Outcome {
        csv: report.nodes.to_csv()?,
        json: to_json(&report),
        breaches,
    })
}

fn allocate(a: &ValuationArgs) -> Result<Outcome> {
    let (tree, z, schedule) = load_valuation(a)?;
    let result = valuate(&tree, &z, &schedule, a.t)?;
    let report: ValuationReport = result.report(&tree);
    Ok(Outcome {
        csv: report.nodes.to_csv()?,
        json: to_json(&report),
        breaches: result.diagnostics.breaches(&a.tolerances()?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionRow {
    pub x: f64,
    pub value: f64,
    pub lambda: f64,
    pub split: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionReport {
    pub members: Vec<UtilitySpec>,
    pub rows: Vec<ConvolutionRow>,
    /// `max |Σ x_i − x|` over the grid.
    pub split_residual: f64,
    /// `max |u'_i(x_i) − λ|` over the grid.
    pub marginal_residual: f64,
}

/// Parses `lo:hi:step`.
pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::InvalidParameter(format!("grid {s:?} must be lo:hi:step"));
    let [lo, hi, step] = parts.as_slice() else { return Err(bad()) };
    let (lo, hi, step): (f64, f64, f64) = (
        lo.trim().parse().map_err(|_| bad())?,
        hi.trim().parse().map_err(|_| bad())?,
        step.trim().parse().map_err(|_| bad())?,
    );
    if !(step > 0.0 && lo <= hi && lo.is_finite() && hi.is_finite()) {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    if count > 1_000_000 {
        return Err(Error::Budget(format!("grid {s:?} has {count} points")));
    }
    Ok((0..count).map(|k| lo + k as f64 * step).collect())
}

/// Parses a comma-separated list of positive integers.
pub fn parse_counts(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::InvalidParameter(format!("grid entry {p:?} must be a positive integer")))
        })
        .collect()
}

fn convolve(a: &ConvolveArgs) -> Result<Outcome> {
    let specs: Vec<UtilitySpec> = read_json(&a.utilities)?;
    let members: Vec<Arc<dyn Utility>> = specs.iter().map(UtilitySpec::build).collect::<Result<_>>()?;
    let conv = SupConvolution::new(members.clone())?;
    let mut rows = Vec::new();
    let mut split_residual: f64 = 0.0;
    let mut marginal_residual: f64 = 0.0;
    for x in parse_range(&a.grid)? {
        let c = conv.solve(x)?;
        split_residual = split_residual.max((c.split.iter().sum::<f64>() - x).abs());
        for (u, &xi) in members.iter().zip(&c.split) {
            marginal_residual = marginal_residual.max((u.marginal(xi) - c.lambda).abs() / c.lambda.max(1.0));
        }
        rows.push(ConvolutionRow {
            x,
            value: c.value,
            lambda: c.lambda,
            split: c.split,
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["x".to_string(), "value".into(), "lambda".into()];
    header.extend((1..=members.len()).map(|k| format!("x_{k}")));
    w.write_record(&header)?;
    for r in &rows {
        let mut record = vec![fmt_sig(r.x), fmt_sig(r.value), fmt_sig(r.lambda)];
        record.extend(r.split.iter().map(|&v| fmt_sig(v)));
        w.write_record(&record)?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8");
    let mut breaches = Vec::new();
    if split_residual > 1e-10 {
        breaches.push(format!("split_residual = {split_residual:e} exceeds 1e-10"));
    }
    if marginal_residual > 1e-10 {
        breaches.push(format!("marginal_residual = {marginal_residual:e} exceeds 1e-10"));
    }
    let report = ConvolutionReport {
        members: specs,
        rows,
        split_residual,
        marginal_residual,
    };
    Ok(Outcome {
        json: to_json(&report),
        csv,
        breaches,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsuranceReport {
    pub premium: f64,
    pub expected_claims: f64,
    pub contracts: Vec<String>,
    /// `h_{i,1..=T+1}` per contract.
    pub h: Vec<Vec<f64>>,
    /// `max |closed form − tree recursion|` over the expanded tree, when it fits the budget.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree_residual: Option<f64>,
}

fn insure(a: &InsureArgs) -> Result<Outcome> {
    let mut spec = PortfolioSpec::read(&a.portfolio)?;
    if let Some(s) = &a.schedule {
        spec.schedule = read_json(s)?;
    }
    let portfolio = spec.build()?;
    let table = h_recursion(&portfolio);
    let n = portfolio.contracts().len();
    let premium = table.premium(&portfolio, 0, &vec![SurvivalState::Alive; n])?;
    let tree_residual = if n <= DEFAULT_MAX_CONTRACTS && portfolio.horizon() <= MAX_TREE_HORIZON {
        let expanded = hazard_to_tree(&portfolio, DEFAULT_MAX_CONTRACTS)?;
        let h = premium_process(&expanded.tree, &expanded.payoff, portfolio.schedule())?;
        let mut worst: f64 = 0.0;
        for (i, node) in expanded.tree.nodes().iter().enumerate() {
            let closed = table.premium(&portfolio, node.time(), &expanded.states[i])?;
            worst = worst.max((closed - h.at(i)).abs());
        }
        Some(worst)
    } else {
        None
    };
    let report = InsuranceReport {
        premium,
        expected_claims: portfolio.expected_claims(),
        contracts: portfolio.contracts().iter().map(|c| c.id.clone()).collect(),
        h: table.rows(),
        tree_residual,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["contract".to_string()];
    header.extend((1..=portfolio.horizon() + 1).map(|t| format!("h_{t}")));
    w.write_record(&header)?;
    for (id, row) in report.contracts.iter().zip(&report.h) {
        let mut record = vec![id.clone()];
        record.extend(row.iter().map(|&v| fmt_sig(v)));
        w.write_record(&record)?;
    }
    let mut csv = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8");
    csv.push_str(&format!("premium,{}\n", fmt_sig(premium)));
    let breaches = match tree_residual {
        Some(r) if !(r <= 1e-10) => vec![format!("tree_residual = {r:e} exceeds 1e-10")],
        _ => Vec::new(),
    };
    Ok(Outcome {
        json: to_json(&report),
        csv,
        breaches,
    })
}

fn sweep_outcome(report: SweepReport) -> Result<Outcome> {
    let mut breaches = Vec::new();
    if !report.is_nonincreasing(1e-12) {
        breaches.push("premiums increase along the grid".to_string());
    }
    if !report.above_reference(1e-12) {
        breaches.push("a premium falls below the expected payoff".to_string());
    }
    Ok(Outcome {
        csv: report.to_csv()?,
        json: to_json(&report.rounded()),
        breaches,
    })
}

fn sweep_n(a: &SweepNArgs) -> Result<Outcome> {
    let file = TreeFile::read(&a.tree)?;
    let (tree, z) = file.tree_and_rv(&a.rv)?;
    sweep_outcome(expansion_check(&tree, &z, a.alpha, &parse_counts(&a.grid)?)?)
}

fn sweep_m(a: &SweepMArgs) -> Result<Outcome> {
    let generator: &dyn PayoffGenerator = match a.payoff {
        PayoffKind::Coin => &CoinFlipFirstStep::default(),
        PayoffKind::Majority => &MajorityWalk,
    };
    sweep_outcome(time_refinement_sweep(generator, &parse_counts(&a.grid)?, a.alpha)?)
}

fn oracle(a: &OracleArgs) -> Result<Outcome> {
    let report: OracleReport = run_oracle_checks(a.seed, a.grid, a.trials)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["check", "passed", "value", "tolerance"])?;
    for c in &report.checks {
        w.write_record([c.name.clone(), c.passed.to_string(), fmt_sig(c.value), fmt_sig(c.tolerance)])?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8");
    let breaches = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} = {:e} exceeds {:e}", c.name, c.value, c.tolerance))
        .collect();
    Ok(Outcome {
        json: to_json(&report),
        csv,
        breaches,
    })
}
