//! Report files: one CSV row per seed with a fixed schema, plus a JSON
//! summary with the batch aggregates and the per-run budget check.

use std::io::Write;
use std::path::{Path, PathBuf};

use abalab_core::simnet::RunMetrics;
use serde::Serialize;

use crate::batch::BatchOutcome;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub max: u64,
}

fn stats(values: &[u64]) -> Stats {
    if values.is_empty() {
        return Stats { mean: 0.0, median: 0.0, max: 0 };
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let mean = sorted.iter().sum::<u64>() as f64 / sorted.len() as f64;
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 0 {
        (sorted[mid - 1] + sorted[mid]) as f64 / 2.0
    } else {
        sorted[mid] as f64
    };
    Stats { mean, median, max: *sorted.last().expect("nonempty") }
}

/// Frequency table of unanimous coin values.
#[derive(Debug, Clone, Serialize)]
pub struct CoinTable {
    pub zero: u64,
    pub one: u64,
    /// Rounds with diverging or missing coin outputs.
    pub undetermined: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetCheck {
    /// `3t/delta + 1` for the scenario shape.
    pub budget: f64,
    pub max_observed: u32,
    pub ok: bool,
}

/// Batch aggregates; everything the summary JSON carries.
#[derive(Debug, Clone, Serialize)]
pub struct BatchReport {
    pub trials: usize,
    pub decision_rate: f64,
    pub rounds: Stats,
    pub duration: Stats,
    /// First-round coins across runs (independent samples).
    pub coin_round1: CoinTable,
    /// All rounds of all runs.
    pub coin_all_rounds: CoinTable,
    /// Runs by number of divergence rounds.
    pub e_round_counts: Vec<(u32, u64)>,
    pub fp_pairs: Stats,
    /// Per-run divergence-round budget: e_rounds <= 3t/delta + 1.
    pub e_round_budget: BudgetCheck,
    pub checks_ok: bool,
    pub failing_seeds: Vec<u64>,
}

impl BatchReport {
    pub fn from_outcome(scenario: &Scenario, outcome: &BatchOutcome) -> Self {
        let runs = &outcome.runs;
        let trials = runs.len();
        let decided = runs.iter().filter(|m| m.decided).count();
        let rounds = stats(&runs.iter().map(|m| m.rounds as u64).collect::<Vec<_>>());
        let duration = stats(&runs.iter().map(|m| m.duration.round() as u64).collect::<Vec<_>>());
        let mut coin_round1 = CoinTable { zero: 0, one: 0, undetermined: 0 };
        let mut coin_all = CoinTable { zero: 0, one: 0, undetermined: 0 };
        for m in runs {
            for (&round, verdict) in &m.coin_rounds {
                let table = if round == 1 { &mut coin_round1 } else { &mut coin_all };
                match verdict {
                    Some(false) => table.zero += 1,
                    Some(true) => table.one += 1,
                    None => table.undetermined += 1,
                }
            }
        }
        coin_all.zero += coin_round1.zero;
        coin_all.one += coin_round1.one;
        coin_all.undetermined += coin_round1.undetermined;
        let mut histogram = std::collections::BTreeMap::new();
        for m in runs {
            *histogram.entry(m.e_rounds).or_insert(0u64) += 1;
        }
        let delta = (scenario.n - 3 * scenario.t) as f64;
        let budget = 3.0 * scenario.t as f64 / delta + 1.0;
        let max_e = runs.iter().map(|m| m.e_rounds).max().unwrap_or(0);
        let fp_pairs = stats(&runs.iter().map(|m| m.fp_pairs as u64).collect::<Vec<_>>());
        let failing = outcome.failing_seeds();
        BatchReport {
            trials,
            decision_rate: if trials == 0 { 0.0 } else { decided as f64 / trials as f64 },
            rounds,
            duration,
            coin_round1,
            coin_all_rounds: coin_all,
            e_round_counts: histogram.into_iter().collect(),
            fp_pairs,
            e_round_budget: BudgetCheck {
                budget,
                max_observed: max_e,
                ok: (max_e as f64) <= budget,
            },
            checks_ok: failing.is_empty(),
            failing_seeds: failing,
        }
    }
}

/// The batch CSV: fixed header plus one row per seed, in scenario order.
pub fn csv_text(runs: &[RunMetrics]) -> String {
    let mut text = String::from(RunMetrics::CSV_HEADER);
    text.push('\n');
    for m in runs {
        text.push_str(&m.csv_row());
        text.push('\n');
    }
    text
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    scenario: &'a Scenario,
    report: &'a BatchReport,
}

pub fn summary_json(scenario: &Scenario, report: &BatchReport) -> String {
    serde_json::to_string_pretty(&Summary { scenario, report }).expect("plain data serializes")
}

/// Writes `runs.csv` and `summary.json` under `dir`; returns their paths.
pub fn write_reports(
    dir: &Path,
    scenario: &Scenario,
    outcome: &BatchOutcome,
) -> std::io::Result<(PathBuf, PathBuf, BatchReport)> {
    std::fs::create_dir_all(dir)?;
    let report = BatchReport::from_outcome(scenario, outcome);
    let csv_path = dir.join("runs.csv");
    let mut f = std::fs::File::create(&csv_path)?;
    f.write_all(csv_text(&outcome.runs).as_bytes())?;
    let json_path = dir.join("summary.json");
    let mut f = std::fs::File::create(&json_path)?;
    f.write_all(summary_json(scenario, &report).as_bytes())?;
    f.write_all(b"\n")?;
    Ok((csv_path, json_path, report))
}
