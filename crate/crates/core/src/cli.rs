//! Command-line front end: `solve`, `sweep`, `simulate` and `validate`.
//!
//! Parameter values resolve as flags over the JSON config file over the
//! built-in base case (`a = 30, b1 = 4, b2 = 20, mu = 10, m = 5, s = 0.95,
//! F = 2, c = 10, K = 1`).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::certify::{run_certification, CertificationReport, CertifyOptions};
use crate::closed_form::{solve_p1, solve_p2, Solution};
use crate::comparison::sweep;
use crate::error::Error;
use crate::market::{MarketParams, Policy};
use crate::numeric::{solve_mm1_baseline, solve_p0_numeric, SolverConfig};
use crate::sim::{self, SimReport, ValidationVerdict};

pub const EXIT_INVALID_CONFIG: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_VALIDATION_FAILED: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "mto-quote", version, about = "Price and lead-time quotation for make-to-order queues")]
pub struct Cli {
    /// Worker threads for grid and sweep evaluation (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the optimal policy of one model.
    Solve(SolveArgs),
    /// Relative gain of rejection over acceptance across an (a, b2) grid.
    Sweep(SweepArgs),
    /// Simulate a policy and check it against the analytic queue metrics.
    Simulate(SimulateArgs),
    /// Run the self-certification suite.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Single-slot rejection system, closed form.
    Mm11,
    /// Accept-all queue.
    Mm1,
    /// Capacity-K rejection system, numeric.
    Mm1k,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

impl Toggle {
    fn is_on(self) -> bool {
        self == Toggle::On
    }
}

/// Parameter overrides; also the schema of the JSON config file.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamArgs {
    /// JSON file with any of the keys a, b1, b2, mu, m, s, F, c, K.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b1: Option<f64>,
    #[arg(long)]
    pub b2: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long = "F")]
    #[serde(rename = "F")]
    pub f: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long = "K")]
    #[serde(rename = "K")]
    pub k: Option<u32>,
}

impl ParamArgs {
    fn apply(&self, p: &mut MarketParams) {
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut p.market_potential, self.a);
        set(&mut p.price_sensitivity, self.b1);
        set(&mut p.lead_time_sensitivity, self.b2);
        set(&mut p.service_rate, self.mu);
        set(&mut p.unit_cost, self.m);
        set(&mut p.service_level, self.s);
        set(&mut p.holding_cost, self.f);
        set(&mut p.penalty_rate, self.c);
        if let Some(k) = self.k {
            p.capacity = k;
        }
    }

    /// Resolves defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<MarketParams, CliError> {
        let mut params = MarketParams::base_case(30.0, 20.0);
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            let file: ParamArgs = serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            file.apply(&mut params);
        }
        self.apply(&mut params);
        params.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(params)
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, value_enum, default_value = "mm11")]
    pub model: Model,
    #[arg(long, value_enum, default_value = "on")]
    pub costs: Toggle,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, value_enum, default_value = "on")]
    pub costs: Toggle,
    /// Market potentials (columns).
    #[arg(long, value_delimiter = ',', default_values_t = [30.0, 40.0, 50.0, 60.0, 70.0])]
    pub a_values: Vec<f64>,
    /// Lead-time sensitivities (rows).
    #[arg(long, value_delimiter = ',', default_values_t = (5..=20).map(f64::from).collect::<Vec<_>>())]
    pub b2_values: Vec<f64>,
    /// CSV output (default: stdout).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON output with per-cell solutions.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Model solved for the policy when none is given.
    #[arg(long, value_enum, default_value = "mm11")]
    pub model: Model,
    #[arg(long, value_enum, default_value = "on")]
    pub costs: Toggle,
    #[arg(long, requires_all = ["lead_time", "rate"])]
    pub price: Option<f64>,
    #[arg(long)]
    pub lead_time: Option<f64>,
    #[arg(long)]
    pub rate: Option<f64>,
    /// Simulated time; overrides --arrivals.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Target number of post-warm-up arrivals.
    #[arg(long, default_value_t = 1e6)]
    pub arrivals: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    #[arg(long, default_value_t = 200)]
    pub resolution: usize,
    #[arg(long, default_value_t = 1e6)]
    pub sim_arrivals: f64,
    #[arg(long, default_value_t = 2016)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutput {
    pub model: Model,
    pub costs_on: bool,
    pub params: MarketParams,
    pub solution: Solution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub params: MarketParams,
    pub policy: Policy,
    pub report: SimReport,
    pub verdict: ValidationVerdict,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID_CONFIG,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::config(e.to_string())
    }
}

/// Finished command: what was written and which exit status it maps to.
#[derive(Debug)]
pub struct Outcome {
    pub code: u8,
    pub summary: String,
}

fn emit(out: Option<&Path>, body: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, body).map_err(|e| CliError::config(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(body.as_bytes())
                .map_err(|e| CliError::config(e.to_string()))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn solve_model(params: &MarketParams, model: Model, costs_on: bool) -> Result<Solution, CliError> {
    let config = SolverConfig::default();
    let effective = if costs_on { *params } else { params.without_costs() };
    let solution = match model {
        Model::Mm11 => {
            if params.capacity != 1 {
                return Err(CliError::config(format!(
                    "model mm11 requires K = 1, got K = {}",
                    params.capacity
                )));
            }
            if costs_on {
                solve_p2(&effective)?
            } else {
                solve_p1(&effective)?
            }
        }
        Model::Mm1 => solve_mm1_baseline(&effective, costs_on, &config)?,
        Model::Mm1k => solve_p0_numeric(&effective, &config)?,
    };
    Ok(solution)
}

fn run_solve(args: &SolveArgs) -> Result<Outcome, CliError> {
    let params = args.params.resolve()?;
    let costs_on = args.costs.is_on();
    let solution = solve_model(&params, args.model, costs_on)?;
    let feasible = solution.feasible;
    let summary = format!("profit {:.6}, feasible {feasible}", solution.profit);
    let output = SolveOutput {
        model: args.model,
        costs_on,
        params,
        solution,
    };
    emit(args.out.as_deref(), &to_json(&output)?)?;
    Ok(Outcome {
        code: if feasible { 0 } else { EXIT_INFEASIBLE },
        summary,
    })
}

fn run_sweep(args: &SweepArgs) -> Result<Outcome, CliError> {
    let base = args.params.resolve()?;
    let table = sweep(&base, &args.a_values, &args.b2_values, args.costs.is_on(), &SolverConfig::default())?;
    let csv = table.to_csv_string()?;
    emit(args.csv.as_deref(), &csv)?;
    if let Some(path) = &args.json {
        emit(Some(path), &to_json(&table)?)?;
    }
    let flagged = table.flagged_cells();
    Ok(Outcome {
        code: if flagged == 0 { 0 } else { EXIT_INFEASIBLE },
        summary: format!(
            "{} cells, {} positive, {flagged} flagged",
            table.a_values.len() * table.b2_values.len(),
            table.positive_cells()
        ),
    })
}

fn run_simulate(args: &SimulateArgs) -> Result<Outcome, CliError> {
    let params = args.params.resolve()?;
    if args.model == Model::Mm1 && args.price.is_none() {
        return Err(CliError::config("simulate needs a finite-capacity model (mm11 or mm1k)"));
    }
    let policy = match (args.price, args.lead_time, args.rate) {
        (Some(price), Some(lead_time), Some(rate)) => Policy::new(price, lead_time, rate),
        (None, None, None) => {
            let sol = solve_model(&params, args.model, args.costs.is_on())?;
            if !sol.feasible {
                return Err(CliError {
                    code: EXIT_INFEASIBLE,
                    message: "instance is infeasible; nothing to simulate".into(),
                });
            }
            sol.policy
        }
        _ => return Err(CliError::config("--price, --lead-time and --rate go together")),
    };
    if !policy.is_non_negative() {
        return Err(CliError::config("policy values must be non-negative"));
    }
    let horizon = args
        .horizon
        .unwrap_or(args.arrivals / policy.arrival_rate / (1.0 - sim::WARMUP_FRACTION));
    let report = sim::simulate(&policy, &params, horizon, args.seed)?;
    let verdict = sim::validate(&report, &params, &policy);
    let pass = verdict.pass;
    let output = SimulateOutput {
        params,
        policy,
        report,
        verdict,
    };
    emit(args.out.as_deref(), &to_json(&output)?)?;
    Ok(Outcome {
        code: if pass { 0 } else { EXIT_VALIDATION_FAILED },
        summary: format!("validation {}", if pass { "passed" } else { "FAILED" }),
    })
}

fn run_validate(args: &ValidateArgs) -> Result<Outcome, CliError> {
    let opts = CertifyOptions {
        instances: args.instances,
        oracle_resolution: args.resolution,
        sim_arrivals: args.sim_arrivals,
        seed: args.seed,
    };
    let report: CertificationReport = run_certification(&opts);
    emit(args.out.as_deref(), &to_json(&report)?)?;
    let summary = report
        .properties
        .iter()
        .map(|p| format!("{} {}", if p.pass { "PASS" } else { "FAIL" }, p.name))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome {
        code: if report.pass { 0 } else { EXIT_VALIDATION_FAILED },
        summary,
    })
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let dispatch = || match &cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Validate(a) => run_validate(a),
    };
    match cli.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::config(e.to_string()))?
            .install(dispatch),
        None => dispatch(),
    }
}

/// Entry point used by the binary.
pub fn main_with_args<I, S>(args: I) -> ExitCode
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID_CONFIG } else { 0 });
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            eprintln!("{}", outcome.summary);
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.message, "code": e.code }));
            ExitCode::from(e.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        fs::write(&path, r#"{"a": 50, "b2": 10, "K": 1}"#).unwrap();
        let args = ParamArgs {
            config: Some(path),
            b2: Some(12.0),
            ..Default::default()
        };
        let p = args.resolve().unwrap();
        assert_eq!(p.market_potential, 50.0);
        assert_eq!(p.lead_time_sensitivity, 12.0);
        assert_eq!(p.price_sensitivity, 4.0);
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        fs::write(&path, r#"{"alpha": 50}"#).unwrap();
        let args = ParamArgs {
            config: Some(path),
            ..Default::default()
        };
        assert_eq!(args.resolve().unwrap_err().code, EXIT_INVALID_CONFIG);
    }

    #[test]
    fn mm11_rejects_larger_capacity() {
        let p = MarketParams::<f64>::base_case(30.0, 20.0).with_capacity(3);
        assert_eq!(solve_model(&p, Model::Mm11, true).unwrap_err().code, EXIT_INVALID_CONFIG);
    }

    #[test]
    fn parses_uppercase_flags() {
        let cli = Cli::try_parse_from(["mto-quote", "solve", "--F", "3", "--K", "2", "--model", "mm1k"]).unwrap();
        let Command::Solve(args) = cli.command else { panic!() };
        assert_eq!(args.params.f, Some(3.0));
        assert_eq!(args.params.k, Some(2));
    }
}
