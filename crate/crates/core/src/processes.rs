//! Cash-flow processes, liability schedules and seeded normal draws.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ClearingError, Result};
use crate::network::{LiabilityMatrix, Matrix, Vector};

/// The bridge drift `(target - c) / (1 - t)` is refused from this time on.
pub const BRIDGE_HORIZON_GUARD: f64 = 1.0 - 1e-9;

/// Itô cash-flow specification `dc = μ(t, c) dt + σ(t, c) dW`.
#[derive(Debug, Clone, PartialEq)]
pub enum CashFlowSpec {
    /// `dc = μ dt`.
    ConstantRate { mu: Vector },
    /// `dc = (target - c) / (1 - t) dt + vol dW` on `[0, 1]` with `c(0) = 0`.
    BrownianBridge { target: Vector, vol: f64 },
    /// `dc = μ dt + σ dW` with constant coefficients.
    AffineDiffusion { mu: Vector, sigma: Matrix },
    /// `dc = μ(t) dt` with `μ` the sum of the segments active at `t`.
    PiecewiseRate { segments: Vec<RateSegment> },
}

/// A cash-flow rate active on `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSegment {
    pub mu: Vector,
    pub start: f64,
    pub end: f64,
}

impl CashFlowSpec {
    pub fn dim(&self) -> usize {
        match self {
            CashFlowSpec::ConstantRate { mu } => mu.len(),
            CashFlowSpec::BrownianBridge { target, .. } => target.len(),
            CashFlowSpec::AffineDiffusion { mu, .. } => mu.len(),
            CashFlowSpec::PiecewiseRate { segments } => segments.first().map_or(0, |s| s.mu.len()),
        }
    }

    /// Cash flow that exactly funds each bank's net new obligations,
    /// `dc = dL^T 1 - dL 1`.
    pub fn net_liability_flow(sched: &LiabilitySchedule) -> Self {
        let dim = sched.dim();
        let ones = Vector::from_element(dim, 1.0);
        let net = |rate: &Matrix| rate.transpose() * &ones - rate * &ones;
        let segments = match sched {
            LiabilitySchedule::ConstantRate { rate, horizon } => alloc::vec![RateSegment {
                mu: net(rate),
                start: 0.0,
                end: *horizon,
            }],
            LiabilitySchedule::PiecewiseWindows { windows, .. } => windows
                .iter()
                .map(|w| RateSegment {
                    mu: net(&w.rate),
                    start: w.start,
                    end: w.end,
                })
                .collect(),
        };
        CashFlowSpec::PiecewiseRate { segments }
    }

    /// Times at which the drift jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = match self {
            CashFlowSpec::PiecewiseRate { segments } => {
                segments.iter().flat_map(|s| [s.start, s.end]).collect()
            }
            _ => Vec::new(),
        };
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    pub fn validate(&self, dim: usize, horizon: f64) -> Result<()> {
        if self.dim() != dim {
            return Err(ClearingError::Length {
                what: "cash-flow vector",
                expected: dim,
                got: self.dim(),
            });
        }
        match self {
            CashFlowSpec::BrownianBridge { vol, .. } => {
                if !(*vol >= 0.0 && vol.is_finite()) {
                    return Err(ClearingError::Parameter(format!(
                        "bridge volatility must be finite and non-negative, got {vol}"
                    )));
                }
                if horizon != 1.0 {
                    return Err(ClearingError::Parameter(format!(
                        "Brownian bridge requires horizon T = 1, got {horizon}"
                    )));
                }
            }
            CashFlowSpec::AffineDiffusion { sigma, .. } => {
                if sigma.nrows() != dim || sigma.ncols() != dim {
                    return Err(ClearingError::Shape {
                        expected: dim,
                        rows: sigma.nrows(),
                        cols: sigma.ncols(),
                    });
                }
            }
            CashFlowSpec::PiecewiseRate { segments } => {
                if segments.is_empty() {
                    return Err(ClearingError::Schedule("no cash-flow segments".into()));
                }
                for (k, seg) in segments.iter().enumerate() {
                    if seg.mu.len() != dim {
                        return Err(ClearingError::Length {
                            what: "cash-flow segment",
                            expected: dim,
                            got: seg.mu.len(),
                        });
                    }
                    if !(0.0 <= seg.start && seg.start < seg.end && seg.end <= horizon)
                        || seg.mu.iter().any(|m| !m.is_finite())
                    {
                        return Err(ClearingError::Schedule(format!(
                            "cash-flow segment {k} on [{}, {}) is invalid for horizon {horizon}",
                            seg.start, seg.end
                        )));
                    }
                }
            }
            CashFlowSpec::ConstantRate { .. } => {}
        }
        Ok(())
    }

    /// True when the diffusion coefficient is identically zero.
    pub fn is_deterministic(&self) -> bool {
        match self {
            CashFlowSpec::ConstantRate { .. } | CashFlowSpec::PiecewiseRate { .. } => true,
            CashFlowSpec::BrownianBridge { vol, .. } => *vol == 0.0,
            CashFlowSpec::AffineDiffusion { sigma, .. } => sigma.iter().all(|&s| s == 0.0),
        }
    }

    /// Exact `∫_{t0}^{t1} dc` for deterministic specifications started at
    /// `c(0) = 0`; `None` when the process is stochastic.
    pub fn deterministic_increment(&self, t0: f64, t1: f64) -> Option<Vector> {
        if !self.is_deterministic() {
            return None;
        }
        Some(match self {
            CashFlowSpec::ConstantRate { mu } | CashFlowSpec::AffineDiffusion { mu, .. } => {
                mu * (t1 - t0)
            }
            // a zero-volatility bridge is the straight line c(t) = target * t
            CashFlowSpec::BrownianBridge { target, .. } => target * (t1 - t0),
            CashFlowSpec::PiecewiseRate { segments } => {
                let mut total = Vector::zeros(self.dim());
                for seg in segments {
                    let overlap = seg.end.min(t1) - seg.start.max(t0);
                    if overlap > 0.0 {
                        total += &seg.mu * overlap;
                    }
                }
                total
            }
        })
    }
}

/// Drift and diffusion coefficients at `(t, c)`.
pub fn eval_mu_sigma(spec: &CashFlowSpec, t: f64, c: &Vector) -> Result<(Vector, Matrix)> {
    let dim = spec.dim();
    match spec {
        CashFlowSpec::ConstantRate { mu } => Ok((mu.clone(), Matrix::zeros(dim, dim))),
        CashFlowSpec::BrownianBridge { target, vol } => {
            if t >= BRIDGE_HORIZON_GUARD {
                return Err(ClearingError::HorizonGuard { t });
            }
            let mu = (target - c) / (1.0 - t);
            Ok((mu, Matrix::identity(dim, dim) * *vol))
        }
        CashFlowSpec::AffineDiffusion { mu, sigma } => Ok((mu.clone(), sigma.clone())),
        CashFlowSpec::PiecewiseRate { segments } => {
            let mu = segments
                .iter()
                .filter(|s| s.start <= t && t < s.end)
                .fold(Vector::zeros(dim), |acc, s| acc + &s.mu);
            Ok((mu, Matrix::zeros(dim, dim)))
        }
    }
}

/// A liability rate matrix active on `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub rate: Matrix,
    pub start: f64,
    pub end: f64,
}

/// Deterministic nominal-liability rates `dL(t) = L̇(t) dt`.
#[derive(Debug, Clone, PartialEq)]
pub enum LiabilitySchedule {
    /// `L̇ = L̄ / T` on `[0, T]`.
    ConstantRate { rate: Matrix, horizon: f64 },
    /// Sum of windowed rates; windows are left-closed, right-open.
    PiecewiseWindows { windows: Vec<Window>, horizon: f64 },
}

fn validate_rate(rate: &Matrix) -> Result<()> {
    LiabilityMatrix::new(rate.clone()).map(|_| ())
}

impl LiabilitySchedule {
    /// Spreads the aggregate `total` evenly over `[0, horizon]`.
    pub fn constant(total: &LiabilityMatrix, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ClearingError::Schedule(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        Ok(LiabilitySchedule::ConstantRate {
            rate: total.as_matrix() / horizon,
            horizon,
        })
    }

    pub fn windows(windows: Vec<Window>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ClearingError::Schedule(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let dim = windows.first().map(|w| w.rate.nrows());
        for (k, w) in windows.iter().enumerate() {
            if Some(w.rate.nrows()) != dim {
                return Err(ClearingError::Schedule(format!(
                    "window {k} has a {}x{} rate matrix",
                    w.rate.nrows(),
                    w.rate.ncols()
                )));
            }
            validate_rate(&w.rate)
                .map_err(|e| ClearingError::Schedule(format!("window {k}: {e}")))?;
            if !(0.0 <= w.start && w.start < w.end && w.end <= horizon) {
                return Err(ClearingError::Schedule(format!(
                    "window {k} [{}, {}) is not inside [0, {horizon}]",
                    w.start, w.end
                )));
            }
        }
        if windows.is_empty() {
            return Err(ClearingError::Schedule("no windows".into()));
        }
        Ok(LiabilitySchedule::PiecewiseWindows { windows, horizon })
    }

    pub fn horizon(&self) -> f64 {
        match self {
            LiabilitySchedule::ConstantRate { horizon, .. }
            | LiabilitySchedule::PiecewiseWindows { horizon, .. } => *horizon,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LiabilitySchedule::ConstantRate { rate, .. } => rate.nrows(),
            LiabilitySchedule::PiecewiseWindows { windows, .. } => windows[0].rate.nrows(),
        }
    }

    /// Endpoints of every window, sorted and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = match self {
            LiabilitySchedule::ConstantRate { horizon, .. } => alloc::vec![0.0, *horizon],
            LiabilitySchedule::PiecewiseWindows { windows, .. } => windows
                .iter()
                .flat_map(|w| [w.start, w.end])
                .collect(),
        };
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Windows active at `t`, as `(rate, start, end)` triples.
    fn active(&self, t: f64) -> impl Iterator<Item = (&Matrix, f64, f64)> {
        let (constant, windows) = match self {
            LiabilitySchedule::ConstantRate { rate, horizon } => (Some((rate, 0.0, *horizon)), &[][..]),
            LiabilitySchedule::PiecewiseWindows { windows, .. } => (None, &windows[..]),
        };
        constant
            .into_iter()
            .chain(windows.iter().map(|w| (&w.rate, w.start, w.end)))
            .filter(move |&(_, s, e)| s <= t && t < e)
    }

    /// Minimum over active windows of `L̇_i0 / Σ_k L̇_ik` across banks; the
    /// rate is constant between breakpoints, so one probe per interval suffices.
    pub fn min_society_share(&self) -> f64 {
        let pts = self.breakpoints();
        let mut delta = f64::INFINITY;
        for pair in pts.windows(2) {
            let rate = eval_liability_rate(self, 0.5 * (pair[0] + pair[1]));
            for i in 1..rate.nrows() {
                let total: f64 = rate.row(i).iter().sum();
                if total > 0.0 {
                    delta = delta.min(rate[(i, 0)] / total);
                }
            }
        }
        delta
    }
}

/// `L̇(t)`: sum of the rates of every window containing `t`.
pub fn eval_liability_rate(sched: &LiabilitySchedule, t: f64) -> Matrix {
    let dim = sched.dim();
    sched
        .active(t)
        .fold(Matrix::zeros(dim, dim), |acc, (rate, _, _)| acc + rate)
}

pub fn breakpoints(sched: &LiabilitySchedule) -> Vec<f64> {
    sched.breakpoints()
}

/// `∫_{t0}^{t1} dL`.
pub fn aggregate(sched: &LiabilitySchedule, t0: f64, t1: f64) -> Matrix {
    let dim = sched.dim();
    let mut total = Matrix::zeros(dim, dim);
    let pieces: Vec<(&Matrix, f64, f64)> = match sched {
        LiabilitySchedule::ConstantRate { rate, horizon } => alloc::vec![(rate, 0.0, *horizon)],
        LiabilitySchedule::PiecewiseWindows { windows, .. } => {
            windows.iter().map(|w| (&w.rate, w.start, w.end)).collect()
        }
    };
    for (rate, s, e) in pieces {
        let overlap = e.min(t1) - s.max(t0);
        if overlap > 0.0 {
            total += rate * overlap;
        }
    }
    total
}

/// Counter-based normal stream keyed by `(seed, path_index)`.
///
/// ChaCha8 seeded from `seed`, with `path_index` selecting the ChaCha stream,
/// so every path gets an independent, reproducible sequence.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    path_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub const ALGORITHM: &'static str = "ChaCha8 (rand_chacha), stream = path index";

    pub fn new(seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        Self {
            seed,
            path_index,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    pub fn draw_standard_normal(&mut self, dim: usize) -> Vector {
        Vector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(&mut self.rng)))
    }
}

pub fn draw_standard_normal(stream: &mut RngStream, dim: usize) -> Vector {
    stream.draw_standard_normal(dim)
}
