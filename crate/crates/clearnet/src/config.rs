//! JSON scenario files.
//!
//! ```json
//! {
//!   "network": {"n": 2, "L": [[0,0,0],[2,0,2],[1,0,0]], "names": ["society","a","b"]},
//!   "x": [0, 1, 1],
//!   "cashflow": {"type": "bridge", "vol": 1.0},
//!   "liabilities": {"type": "windows", "windows": [{"column": 1, "scale": 5, "start": 0, "end": 0.2}]},
//!   "T": 1.0, "dt": 0.001, "seed": 7, "n_paths": 100
//! }
//! ```
//!
//! `x` doubles as the initial wealth `V(0)` unless `v0` is given. Without a
//! `liabilities` block the network matrix is spread evenly over `[0, T]`;
//! without a `cashflow` block each bank receives exactly its net new claims.

use std::path::Path;

use clearnet_core::discrete::DiscreteSchedule;
use clearnet_core::processes::{aggregate, CashFlowSpec, LiabilitySchedule, RateSegment, Window};
use clearnet_core::{ClearingError, FinancialNetwork, LiabilityMatrix, Matrix, Vector};
use serde::Deserialize;

pub const DEFAULT_HORIZON: f64 = 1.0;
pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

/// Attaches a JSON path to a core validation error, pointing at the offending
/// entry when the error names one.
fn located(path: &str, err: ClearingError) -> ConfigError {
    let at = match &err {
        ClearingError::NonFinite { row, col }
        | ClearingError::NegativeEntry { row, col, .. } => format!("{path}[{row}][{col}]"),
        ClearingError::NonzeroDiagonal { index, .. } => format!("{path}[{index}][{index}]"),
        ClearingError::SocietyLiability { col, .. } => format!("{path}[0][{col}]"),
        ClearingError::NegativeAsset { index, .. } => format!("{path}[{index}]"),
        _ => path.to_string(),
    };
    invalid(at, err.to_string())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    network: NetworkBlock,
    x: Option<Vec<f64>>,
    v0: Option<Vec<f64>>,
    cashflow: Option<CashFlowBlock>,
    liabilities: Option<LiabilityBlock>,
    #[serde(rename = "T")]
    horizon: Option<f64>,
    dt: Option<f64>,
    seed: Option<u64>,
    n_paths: Option<usize>,
    discrete: Option<DiscreteBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkBlock {
    n: usize,
    #[serde(rename = "L")]
    l: Vec<Vec<f64>>,
    names: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum CashFlowBlock {
    Constant {
        mu: Vec<f64>,
    },
    /// Target defaults to the aggregate net claims `L̄^T 1 - L̄ 1`.
    Bridge {
        target: Option<Vec<f64>>,
        vol: f64,
    },
    Affine {
        mu: Vec<f64>,
        sigma: Vec<Vec<f64>>,
    },
    NetLiabilities,
    Piecewise {
        segments: Vec<SegmentBlock>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentBlock {
    mu: Vec<f64>,
    start: f64,
    end: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum LiabilityBlock {
    Constant,
    Windows { windows: Vec<WindowBlock> },
}

/// A window's rate is either an explicit matrix, or `scale` times one column
/// (obligations owed to that node) or one row (obligations of that node) of
/// the network matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowBlock {
    rate: Option<Vec<Vec<f64>>>,
    column: Option<usize>,
    row: Option<usize>,
    #[serde(default = "one")]
    scale: f64,
    start: f64,
    end: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscreteBlock {
    steps: Vec<DiscreteStepBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscreteStepBlock {
    c: Vec<f64>,
    #[serde(rename = "L")]
    l: Vec<Vec<f64>>,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub network: FinancialNetwork,
    /// External assets for static clearing.
    pub assets: Vector,
    /// `V(0)` for discrete and continuous runs.
    pub initial_wealth: Vector,
    pub cash_flow: CashFlowSpec,
    pub liabilities: LiabilitySchedule,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub n_paths: usize,
    /// Explicit per-period data; when absent, discrete runs integrate the
    /// continuous specification over steps of `dt`.
    pub discrete: Option<DiscreteSchedule>,
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        file.resolve()
    }

    pub fn dim(&self) -> usize {
        self.network.n() + 1
    }

    /// Re-checks the run parameters, typically after command-line overrides.
    pub fn check_run_parameters(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if self.n_paths == 0 {
            return Err(invalid("n_paths", "must be at least 1"));
        }
        Ok(())
    }

    pub fn path_config(&self) -> clearnet_core::continuous::PathConfig {
        clearnet_core::continuous::PathConfig {
            initial_wealth: self.initial_wealth.clone(),
            cash_flow: self.cash_flow.clone(),
            liabilities: self.liabilities.clone(),
            horizon: self.horizon,
            base_step: self.dt,
        }
    }

    pub fn names(&self) -> Vec<String> {
        match self.network.names() {
            Some(names) => names.to_vec(),
            None => node_names(self.dim()),
        }
    }
}

/// `society, bank1, bank2, ...`
pub fn node_names(dim: usize) -> Vec<String> {
    (0..dim)
        .map(|i| {
            if i == 0 {
                "society".to_string()
            } else {
                format!("bank{i}")
            }
        })
        .collect()
}

fn matrix(path: &str, rows: &[Vec<f64>], dim: usize) -> Result<Matrix, ConfigError> {
    if rows.len() != dim {
        return Err(invalid(path, format!("expected {dim} rows, got {}", rows.len())));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(invalid(
                format!("{path}[{i}]"),
                format!("expected {dim} entries, got {}", row.len()),
            ));
        }
    }
    Ok(Matrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

fn vector(path: &str, xs: &[f64], dim: usize) -> Result<Vector, ConfigError> {
    if xs.len() != dim {
        return Err(invalid(path, format!("expected {dim} entries, got {}", xs.len())));
    }
    if let Some(k) = xs.iter().position(|x| !x.is_finite()) {
        return Err(invalid(format!("{path}[{k}]"), "must be finite"));
    }
    Ok(Vector::from_column_slice(xs))
}

fn liability(path: &str, rows: &[Vec<f64>], dim: usize) -> Result<LiabilityMatrix, ConfigError> {
    LiabilityMatrix::new(matrix(path, rows, dim)?).map_err(|e| located(path, e))
}

fn selector(total: &Matrix, line: usize, column: bool) -> Matrix {
    Matrix::from_fn(total.nrows(), total.ncols(), |i, j| {
        if (column && j == line) || (!column && i == line) {
            total[(i, j)]
        } else {
            0.0
        }
    })
}

impl ScenarioFile {
    fn resolve(self) -> Result<Scenario, ConfigError> {
        if self.network.n < 1 {
            return Err(invalid("network.n", "need at least one bank"));
        }
        let dim = self.network.n + 1;
        let total = liability("network.L", &self.network.l, dim)?;
        if let Some(names) = &self.network.names {
            if names.len() != dim {
                return Err(invalid(
                    "network.names",
                    format!("expected {dim} names, got {}", names.len()),
                ));
            }
        }
        let network = FinancialNetwork::new(total.clone(), self.network.names.clone())
            .map_err(|e| located("network", e))?;

        let check_assets = |path: &str, xs: &[f64]| -> Result<Vector, ConfigError> {
            let v = vector(path, xs, dim)?;
            if let Some(k) = v.iter().position(|&x| x < 0.0) {
                return Err(invalid(format!("{path}[{k}]"), "must be non-negative"));
            }
            Ok(v)
        };
        let assets = match (&self.x, &self.v0) {
            (Some(x), _) => check_assets("x", x)?,
            (None, Some(v0)) => check_assets("v0", v0)?,
            (None, None) => return Err(invalid("x", "external assets are required")),
        };
        let initial_wealth = match &self.v0 {
            Some(v0) => check_assets("v0", v0)?,
            None => assets.clone(),
        };

        let horizon = self.horizon.unwrap_or(DEFAULT_HORIZON);
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("T", format!("must be positive, got {horizon}")));
        }

        let liabilities = match self.liabilities.unwrap_or(LiabilityBlock::Constant) {
            LiabilityBlock::Constant => {
                LiabilitySchedule::constant(&total, horizon).map_err(|e| located("liabilities", e))?
            }
            LiabilityBlock::Windows { windows } => {
                if windows.is_empty() {
                    return Err(invalid("liabilities.windows", "at least one window is required"));
                }
                let mut parsed = Vec::with_capacity(windows.len());
                for (k, w) in windows.iter().enumerate() {
                    let path = format!("liabilities.windows[{k}]");
                    let base = match (&w.rate, w.column, w.row) {
                        (Some(rate), None, None) => {
                            liability(&format!("{path}.rate"), rate, dim)?.into_matrix()
                        }
                        (None, Some(c), None) if c < dim => selector(total.as_matrix(), c, true),
                        (None, None, Some(r)) if r < dim => selector(total.as_matrix(), r, false),
                        (None, Some(_), None) | (None, None, Some(_)) => {
                            return Err(invalid(path, format!("node index must be below {dim}")))
                        }
                        _ => {
                            return Err(invalid(
                                path,
                                "give exactly one of \"rate\", \"column\" or \"row\"",
                            ))
                        }
                    };
                    if !(w.scale >= 0.0 && w.scale.is_finite()) {
                        return Err(invalid(format!("{path}.scale"), "must be non-negative"));
                    }
                    if !(0.0 <= w.start && w.start < w.end && w.end <= horizon) {
                        return Err(invalid(
                            path,
                            format!("window [{}, {}) must lie inside [0, {horizon}]", w.start, w.end),
                        ));
                    }
                    parsed.push(Window {
                        rate: base * w.scale,
                        start: w.start,
                        end: w.end,
                    });
                }
                LiabilitySchedule::windows(parsed, horizon)
                    .map_err(|e| located("liabilities.windows", e))?
            }
        };

        let cash_flow = match self.cashflow.unwrap_or(CashFlowBlock::NetLiabilities) {
            CashFlowBlock::Constant { mu } => CashFlowSpec::ConstantRate {
                mu: vector("cashflow.mu", &mu, dim)?,
            },
            CashFlowBlock::Bridge { target, vol } => {
                let target = match target {
                    Some(t) => vector("cashflow.target", &t, dim)?,
                    None => {
                        let agg = aggregate(&liabilities, 0.0, horizon);
                        let ones = Vector::from_element(dim, 1.0);
                        agg.transpose() * &ones - &agg * &ones
                    }
                };
                CashFlowSpec::BrownianBridge { target, vol }
            }
            CashFlowBlock::Affine { mu, sigma } => CashFlowSpec::AffineDiffusion {
                mu: vector("cashflow.mu", &mu, dim)?,
                sigma: matrix("cashflow.sigma", &sigma, dim)?,
            },
            CashFlowBlock::NetLiabilities => CashFlowSpec::net_liability_flow(&liabilities),
            CashFlowBlock::Piecewise { segments } => {
                let mut parsed = Vec::with_capacity(segments.len());
                for (k, s) in segments.iter().enumerate() {
                    parsed.push(RateSegment {
                        mu: vector(&format!("cashflow.segments[{k}].mu"), &s.mu, dim)?,
                        start: s.start,
                        end: s.end,
                    });
                }
                CashFlowSpec::PiecewiseRate { segments: parsed }
            }
        };
        cash_flow
            .validate(dim, horizon)
            .map_err(|e| located("cashflow", e))?;

        let discrete = match self.discrete {
            None => None,
            Some(block) => {
                let mut steps = Vec::with_capacity(block.steps.len());
                for (k, s) in block.steps.iter().enumerate() {
                    let path = format!("discrete.steps[{k}]");
                    steps.push((
                        vector(&format!("{path}.c"), &s.c, dim)?,
                        liability(&format!("{path}.L"), &s.l, dim)?,
                    ));
                }
                Some(DiscreteSchedule {
                    initial_wealth: initial_wealth.clone(),
                    steps,
                })
            }
        };

        let scenario = Scenario {
            network,
            assets,
            initial_wealth,
            cash_flow,
            liabilities,
            horizon,
            dt: self.dt.unwrap_or(DEFAULT_STEP),
            seed: self.seed.unwrap_or(0),
            n_paths: self.n_paths.unwrap_or(1),
            discrete,
        };
        scenario.check_run_parameters()?;
        Ok(scenario)
    }
}
