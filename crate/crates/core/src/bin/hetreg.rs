use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hetreg::cli::{error_record, exit_code, ingest_csv, render_table, run_test, CsvSchema, MethodChoice, RunConfig};
use hetreg::engines::DEFAULT_DRAWS;
use hetreg::model::fit_groups;
use hetreg::simulation::{compare_distributions, estimate_size, Method, SimulationScenario};
use hetreg::Error;

#[derive(Parser)]
#[command(name = "hetreg", version, about = "Equality of regression coefficients under unequal error variances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test equality of coefficient vectors across the groups of a CSV file.
    Test(TestArgs),
    /// Estimate the empirical size of the tests on a simulated null scenario.
    Simulate(SimulateArgs),
    /// KS comparison of fiducial and generalized draws for a CSV file.
    Compare(CompareArgs),
}

#[derive(Args)]
struct InputArgs {
    /// CSV file with a header row.
    input: PathBuf,
    /// Column holding the group label.
    #[arg(long, default_value = "group")]
    group: String,
    /// Column holding the response.
    #[arg(long, default_value = "y")]
    response: String,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',', conflicts_with = "intercept_only")]
    covariates: Vec<String>,
    /// Use a column of ones as the only regressor (means comparison).
    #[arg(long)]
    intercept_only: bool,
    /// Do not prepend an intercept column to the covariates.
    #[arg(long, conflicts_with = "intercept_only")]
    no_intercept: bool,
}

impl InputArgs {
    fn schema(&self) -> CsvSchema {
        CsvSchema {
            group: self.group.clone(),
            response: self.response.clone(),
            covariates: if self.intercept_only { Vec::new() } else { self.covariates.clone() },
            intercept: !self.no_intercept,
        }
    }
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = MethodChoice::All)]
    method: MethodChoice,
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Methods to evaluate; all three when omitted.
    #[arg(long, value_enum, value_delimiter = ',')]
    method: Vec<Method>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 2000)]
    replications: usize,
    /// Monte Carlo draws per inner p-value.
    #[arg(long, default_value_t = 2000)]
    draws: usize,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_json<T: Serialize>(path: &PathBuf, value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn test(args: TestArgs) -> Result<(), Error> {
    let (groups, fingerprint) = ingest_csv(&args.input.input, &args.input.schema())?;
    let config = RunConfig { method: args.method, draws: args.draws, seed: args.seed, alpha: args.alpha };
    let report = run_test(&groups, fingerprint, &config)?;
    print!("{}", render_table(&report));
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let mut scenario = SimulationScenario::from_file(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let methods = if args.method.is_empty() {
        vec![Method::Chi2, Method::Fiducial, Method::Generalized]
    } else {
        args.method
    };
    let mut reports = Vec::new();
    println!(
        "{:<12} {:>8} {:>8} {:>10} {:>10}",
        "method", "alpha", "reps", "size", "+/-95%"
    );
    for m in methods {
        let r = estimate_size(&scenario, m, args.alpha, args.replications, args.draws)?;
        println!(
            "{:<12} {:>8} {:>8} {:>10.4} {:>10.4}",
            r.method.to_string(),
            r.nominal_alpha,
            r.replications,
            r.empirical_size,
            r.mc_half_width
        );
        reports.push(r);
    }
    if let Some(path) = &args.out {
        write_json(path, &reports)?;
    }
    Ok(())
}

fn compare(args: CompareArgs) -> Result<(), Error> {
    let (groups, _) = ingest_csv(&args.input.input, &args.input.schema())?;
    let estimates = fit_groups(&groups)?;
    if estimates.len() < 2 {
        return Err(Error::NeedTwoGroups(estimates.len()));
    }
    let r = compare_distributions(&estimates, args.draws, args.seed)?;
    println!(
        "KS distance {:.6}  critical (1%) {:.6}  draws {}  {}",
        r.distance,
        r.critical_value,
        r.draws,
        if r.passed { "same distribution not rejected" } else { "distributions differ" }
    );
    if let Some(path) = &args.out {
        write_json(path, &r)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Test(a) => test(a),
        Command::Simulate(a) => simulate(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
