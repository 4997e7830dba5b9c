//! Command-line front end: scenario resolution, batch execution, report
//! files, and assertion-aware exit codes.
//!
//! Exit codes: 0 all per-run assertions held, 1 an assertion or decision
//! failed (the violating seed is named), 2 usage or configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use abalab_cli::{run_batch, write_reports, Scenario};
use clap::Parser;

#[derive(Debug, Parser)]
#[command(
    name = "abalab",
    about = "Deterministic laboratory for asynchronous Byzantine agreement"
)]
struct Args {
    /// Scenario file (TOML); inline flags override its values.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Number of processes.
    #[arg(long)]
    n: Option<usize>,
    /// Tolerated faults.
    #[arg(long)]
    t: Option<usize>,
    /// Input bits, one per process, e.g. 0011.
    #[arg(long)]
    inputs: Option<String>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long)]
    trials: Option<u64>,
    /// First seed of the batch.
    #[arg(long)]
    seed: Option<u64>,
    /// Explicit comma-separated seed list (overrides --trials/--seed).
    #[arg(long)]
    seeds: Option<String>,
    /// Adversary by name: none, delay, reorder, silent, wrong_point,
    /// equivocating_dealer. Parameterized scripts go in the scenario file.
    #[arg(long)]
    adversary: Option<String>,
    /// Delivery budget per run.
    #[arg(long)]
    max_steps: Option<u64>,
    /// Field modulus.
    #[arg(long)]
    prime: Option<u64>,
    /// Fairness bound.
    #[arg(long)]
    fairness: Option<u64>,
    /// Report directory; defaults to $ABALAB_OUT_DIR or the working
    /// directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// What to print to stdout.
    #[arg(long, value_parser = ["csv", "json"], default_value = "json")]
    format: String,
}

fn build_scenario(args: &Args) -> Result<Scenario, String> {
    let mut scenario = match &args.scenario {
        Some(path) => Scenario::from_path(path).map_err(|e| e.to_string())?,
        None => Scenario::default(),
    };
    if let Some(n) = args.n {
        scenario.n = n;
    }
    if let Some(t) = args.t {
        scenario.t = t;
    }
    if let Some(inputs) = &args.inputs {
        scenario.inputs = Some(inputs.clone());
    }
    if let Some(max_steps) = args.max_steps {
        scenario.max_steps = max_steps;
    }
    if let Some(prime) = args.prime {
        scenario.prime = prime;
    }
    if let Some(fairness) = args.fairness {
        scenario.fairness = Some(fairness);
    }
    if let Some(list) = &args.seeds {
        let seeds: Result<Vec<u64>, _> =
            list.split(',').map(|s| s.trim().parse::<u64>()).collect();
        let seeds = seeds.map_err(|e| format!("bad --seeds list: {e}"))?;
        scenario.seeds = abalab_cli::SeedSpec::List { list: seeds };
    } else if args.trials.is_some() || args.seed.is_some() {
        scenario.seeds = abalab_cli::SeedSpec::Range {
            start: args.seed.unwrap_or(0),
            count: args.trials.unwrap_or(1),
        };
    }
    if let Some(name) = &args.adversary {
        scenario.set_adversary_by_name(name).map_err(|e| e.to_string())?;
    }
    Ok(scenario)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let scenario = match build_scenario(&args) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let configs = match scenario.run_configs() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = match run_batch(&configs) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let out_dir = args
        .out_dir
        .or_else(|| std::env::var_os("ABALAB_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let (csv_path, json_path, report) = match write_reports(&out_dir, &scenario, &outcome) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: cannot write reports: {e}");
            return ExitCode::from(2);
        }
    };
    match args.format.as_str() {
        "csv" => print!("{}", abalab_cli::report::csv_text(&outcome.runs)),
        _ => println!("{}", abalab_cli::summary_json(&scenario, &report)),
    }
    eprintln!("wrote {} and {}", csv_path.display(), json_path.display());

    let undecided: Vec<u64> = outcome
        .runs
        .iter()
        .filter(|m| scenario.protocol == "aba" && !m.decided)
        .map(|m| m.seed)
        .collect();
    let failing = outcome.failing_seeds();
    if !failing.is_empty() {
        eprintln!("assertion failures at seeds: {failing:?}");
        return ExitCode::from(1);
    }
    if !undecided.is_empty() {
        eprintln!("no decision within the step budget at seeds: {undecided:?}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
