//! Parallel Monte-Carlo over independent cash-flow paths.
//!
//! Path `k` always draws from `RngStream::new(seed, k)` and results are
//! collected in path order, so the summary does not depend on the thread count.

use clearnet_core::continuous::{simulate_path, Event, PathConfig};
use clearnet_core::processes::{aggregate, RngStream};
use clearnet_core::{ClearingError, Vector};
use rayon::prelude::*;
use serde::Serialize;

/// Terminal wealth below this counts as a default.
pub const DEFAULT_THRESHOLD: f64 = -1e-9;
pub const QUANTILE_LEVELS: [f64; 7] = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99];
/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "CLEARNET_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum McError {
    #[error("path {path}: {source}")]
    Path { path: u64, source: ClearingError },
    #[error("invalid Monte-Carlo setup: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub wealth: Vector,
    pub cash: Vector,
    /// Total received by society over `[0, T]`.
    pub societal_payment: f64,
    pub steps: usize,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// `(level, value)` pairs, linear interpolation between order statistics.
    pub quantiles: Vec<(f64, f64)>,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Self {
            mean,
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            quantiles: QUANTILE_LEVELS
                .iter()
                .map(|&q| (q, quantile_sorted(&sorted, q)))
                .collect(),
        }
    }
}

/// Quantile of sorted data, interpolating linearly at position `q (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub seed: u64,
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub samples: Vec<PathSample>,
    /// Fraction of paths with `V_i(T) < DEFAULT_THRESHOLD`, per node.
    pub default_frequency: Vec<f64>,
    pub societal_wealth: Distribution,
    pub societal_payment: Distribution,
    /// Distinct warnings raised by any path.
    pub warnings: Vec<String>,
}

/// Payments received by society: its wealth gain net of the external cash it
/// received and of the claims it accrued, `V_0(T) - V_0(0) - c_0(T) + Σ_i L̄_i0`.
pub fn societal_payment(config: &PathConfig, wealth: &Vector, cash: &Vector) -> f64 {
    let owed: f64 = aggregate(&config.liabilities, 0.0, config.horizon)
        .column(0)
        .sum();
    wealth[0] - config.initial_wealth[0] - cash[0] + owed
}

/// Worker count from `CLEARNET_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

pub fn run_monte_carlo(
    config: &PathConfig,
    seed: u64,
    n_paths: usize,
    keep_events: bool,
) -> Result<McSummary, McError> {
    if n_paths == 0 {
        return Err(McError::Setup("at least one path is required".into()));
    }
    config
        .validate()
        .map_err(|e| McError::Setup(e.to_string()))?;
    let owed: f64 = aggregate(&config.liabilities, 0.0, config.horizon)
        .column(0)
        .sum();
    let run_one = |k: u64| -> Result<(PathSample, Vec<String>), McError> {
        let mut rng = RngStream::new(seed, k);
        let out = simulate_path(config, &mut rng, false)
            .map_err(|source| McError::Path { path: k, source })?;
        let t = out.terminal;
        let payment = t.wealth[0] - config.initial_wealth[0] - t.cash[0] + owed;
        let warnings = out.warnings.iter().map(|w| w.to_string()).collect();
        Ok((
            PathSample {
                societal_payment: payment,
                steps: out.steps,
                events: if keep_events { t.events } else { Vec::new() },
                wealth: t.wealth,
                cash: t.cash,
            },
            warnings,
        ))
    };
    let results: Vec<Result<(PathSample, Vec<String>), McError>> = match thread_cap() {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| McError::Setup(e.to_string()))?
            .install(|| (0..n_paths as u64).into_par_iter().map(run_one).collect()),
        None => (0..n_paths as u64).into_par_iter().map(run_one).collect(),
    };

    let mut samples = Vec::with_capacity(n_paths);
    let mut warnings: Vec<String> = Vec::new();
    for r in results {
        let (sample, ws) = r?;
        for w in ws {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        samples.push(sample);
    }
    Ok(summarize(config, seed, samples, warnings))
}

fn summarize(config: &PathConfig, seed: u64, samples: Vec<PathSample>, warnings: Vec<String>) -> McSummary {
    let dim = config.dim();
    let n = samples.len();
    let mut defaults = vec![0usize; dim];
    for s in &samples {
        for (i, &v) in s.wealth.iter().enumerate().skip(1) {
            if v < DEFAULT_THRESHOLD {
                defaults[i] += 1;
            }
        }
    }
    let wealth0: Vec<f64> = samples.iter().map(|s| s.wealth[0]).collect();
    let payments: Vec<f64> = samples.iter().map(|s| s.societal_payment).collect();
    McSummary {
        seed,
        n_paths: n,
        dt: config.base_step,
        horizon: config.horizon,
        default_frequency: defaults.iter().map(|&d| d as f64 / n as f64).collect(),
        societal_wealth: Distribution::of(&wealth0),
        societal_payment: Distribution::of(&payments),
        samples,
        warnings,
    }
}
