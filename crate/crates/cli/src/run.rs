//! Runs every configured strategy over the rate grid.

use std::time::Instant;

use relaynet::estimate_curves;
use relaynet::outage::OutageError;

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::ResultRow;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Outage(#[from] OutageError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Time each strategy in its own pass and report it in `wall_time_ms`.
    /// Off by default so that output files are reproducible byte for byte.
    pub timings: bool,
}

/// One row per `(strategy, r)`, in config order. All strategies share the
/// same channel draws.
pub fn run_experiment(config: &ExperimentConfig, options: RunOptions) -> Result<Vec<ResultRow>, RunError> {
    config.validate()?;
    let setup = config.setup()?;
    let n = setup.topology.n_relays();
    let estimators: Vec<_> = config.strategies.iter().map(|s| s.estimator(n, config.n_inner)).collect();
    let timed: Vec<(Vec<relaynet::OutageEstimate>, u64)> = if options.timings {
        estimators
            .iter()
            .map(|e| {
                let t = Instant::now();
                let curve = estimate_curves(&setup, std::slice::from_ref(e), &config.rate_grid)?.remove(0);
                Ok((curve, t.elapsed().as_millis() as u64))
            })
            .collect::<Result<_, OutageError>>()?
    } else {
        estimate_curves(&setup, &estimators, &config.rate_grid)?.into_iter().map(|c| (c, 0)).collect()
    };
    let mut rows = Vec::new();
    for (s, (curve, ms)) in config.strategies.iter().zip(timed) {
        for e in curve {
            rows.push(ResultRow {
                strategy: s.label(),
                r: e.r,
                epsilon_hat: e.epsilon_hat,
                ci_lo: e.ci_lo,
                ci_hi: e.ci_hi,
                n_outer: e.n_outer,
                n_inner: e.n_inner,
                wall_time_ms: ms,
            });
        }
    }
    Ok(rows)
}
