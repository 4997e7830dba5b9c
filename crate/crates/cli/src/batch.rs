//! Batch execution: trials fan out across worker threads keyed by seed;
//! aggregation is a single-threaded reduce over the seed-ordered results.

use abalab_core::simnet::{run, ConfigError, RunConfig, RunMetrics};
use rayon::prelude::*;

/// The outcome of one batch, in the seed order of the scenario.
#[derive(Debug)]
pub struct BatchOutcome {
    pub runs: Vec<RunMetrics>,
}

impl BatchOutcome {
    /// Seeds whose per-run assertions failed (or that failed to decide in
    /// the agreement protocol within the step budget).
    pub fn failing_seeds(&self) -> Vec<u64> {
        self.runs
            .iter()
            .filter(|m| !m.checks.all_hold())
            .map(|m| m.seed)
            .collect()
    }
}

/// Runs every configuration; identical inputs give identical outcomes
/// regardless of worker interleaving.
pub fn run_batch(configs: &[RunConfig]) -> Result<BatchOutcome, ConfigError> {
    let runs: Result<Vec<RunMetrics>, ConfigError> =
        configs.par_iter().map(run).collect();
    Ok(BatchOutcome { runs: runs? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_preserves_seed_order_and_is_deterministic() {
        let configs: Vec<RunConfig> =
            (0..4).map(|s| RunConfig::aba(4, 1, vec![true, false, true, false], s)).collect();
        let a = run_batch(&configs).unwrap();
        let b = run_batch(&configs).unwrap();
        assert_eq!(a.runs.iter().map(|m| m.seed).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        for (x, y) in a.runs.iter().zip(&b.runs) {
            assert_eq!(x.csv_row(), y.csv_row());
        }
    }
}
