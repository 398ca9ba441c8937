//! Continuous-time clearing: an Euler scheme with event location.
//!
//! Between distress events the wealths follow
//!
//! ```text
//! dV = (I - A^T Λ)^{-1} (dc - dL^T 1 + A^T dL 1)
//! ```
//!
//! where `Λ` flags the distressed banks. Solvent rows of the relative exposures
//! `A` track the normalized liability rates; distressed rows average new rates
//! against the unpaid debt they are rolling forward. Steps are shortened so
//! that no bank crosses zero wealth inside a step, and schedule breakpoints are
//! never straddled.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{ClearingError, Result, Warning};
use crate::network::{
    distress_matrix, exposure_transpose_masked, try_normalized_row, uniform_row, DistressMatrix,
    Matrix, Vector,
};
use crate::processes::{
    eval_liability_rate, eval_mu_sigma, CashFlowSpec, LiabilitySchedule, RngStream,
};

/// Steps never shrink below this fraction of the base step.
pub const STEP_FLOOR_RATIO: f64 = 1e-12;
/// Remaining horizon below this fraction of `T` is treated as reached.
pub const HORIZON_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    IntoDistress,
    OutOfDistress,
}

impl Crossing {
    pub fn as_str(self) -> &'static str {
        match self {
            Crossing::IntoDistress => "into_distress",
            Crossing::OutOfDistress => "out_of_distress",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub node: usize,
    pub direction: Crossing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousState {
    pub t: f64,
    /// Cumulative cash flow `c(t)`.
    pub cash: Vector,
    pub wealth: Vector,
    pub exposures: Matrix,
    pub distress: DistressMatrix,
    pub events: Vec<Event>,
    /// Last non-empty normalized liability-rate row of each bank.
    rate_shares: Matrix,
}

impl ContinuousState {
    /// State at `t = 0`: no cash flow yet, no distress, exposures equal to the
    /// normalized initial liability rates.
    pub fn initial(wealth: Vector, rate: &Matrix) -> Self {
        let dim = wealth.len();
        let mut rate_shares = Matrix::zeros(dim, dim);
        for i in 0..dim {
            rate_shares
                .row_mut(i)
                .copy_from_slice(&uniform_row(dim, i));
        }
        let mut state = Self {
            t: 0.0,
            cash: Vector::zeros(dim),
            exposures: rate_shares.clone(),
            wealth,
            distress: DistressMatrix::none(dim),
            events: Vec::new(),
            rate_shares,
        };
        state.sync_solvent_rows(rate);
        state
    }

    pub fn dim(&self) -> usize {
        self.wealth.len()
    }

    fn update_rate_shares(&mut self, rate: &Matrix) {
        for i in 1..self.dim() {
            if let Some(row) = try_normalized_row(rate, i) {
                self.rate_shares.row_mut(i).copy_from_slice(&row);
            }
        }
    }

    /// Non-distressed bank rows equal the current normalized rates (or the
    /// last ones seen when a bank has no new obligations).
    fn sync_solvent_rows(&mut self, rate: &Matrix) {
        self.update_rate_shares(rate);
        for i in 1..self.dim() {
            if self.wealth[i] >= 0.0 {
                let row = self.rate_shares.row(i).clone_owned();
                self.exposures.row_mut(i).copy_from(&row);
            }
        }
    }
}

/// `(I - A^T Λ)^{-1}` by direct inversion.
pub fn leontief_inverse(a: &Matrix, lam: &DistressMatrix) -> Result<Matrix> {
    let dim = a.nrows();
    (Matrix::identity(dim, dim) - exposure_transpose_masked(a, lam))
        .try_inverse()
        .ok_or_else(|| ClearingError::Singular {
            distressed: lam.indices(),
        })
}

/// Wealth drift and diffusion after propagating losses through distressed banks:
///
/// ```text
/// μ̄ = (I - A^T Λ)^{-1} (μ - L̇^T 1 + A^T L̇ 1)
/// σ̄ = (I - A^T Λ)^{-1} σ Z
/// ```
pub fn transformed_coefficients(
    a: &Matrix,
    lam: &DistressMatrix,
    mu: &Vector,
    sigma: &Matrix,
    rate: &Matrix,
    z: &Vector,
) -> Result<(Vector, Vector)> {
    let dim = a.nrows();
    let ones = Vector::from_element(dim, 1.0);
    let outgoing = rate * &ones;
    let drift = mu - rate.transpose() * &ones + a.transpose() * &outgoing;
    let noise = sigma * z;
    if lam.is_empty() {
        return Ok((drift, noise));
    }
    let lu = (Matrix::identity(dim, dim) - exposure_transpose_masked(a, lam)).lu();
    let singular = || ClearingError::Singular {
        distressed: lam.indices(),
    };
    let mu_bar = lu.solve(&drift).ok_or_else(singular)?;
    let sigma_bar = lu.solve(&noise).ok_or_else(singular)?;
    Ok((mu_bar, sigma_bar))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepConstraint {
    None,
    ZeroCrossing,
    SignPreservation,
    Breakpoint,
}

impl StepConstraint {
    pub fn as_str(self) -> &'static str {
        match self {
            StepConstraint::None => "none",
            StepConstraint::ZeroCrossing => "zero-crossing",
            StepConstraint::SignPreservation => "sign-preservation",
            StepConstraint::Breakpoint => "schedule-breakpoint",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepBounds {
    pub base: f64,
    pub dt: f64,
    pub binding: StepConstraint,
    /// Bank whose cap binds, when the binding constraint is per-bank.
    pub node: Option<usize>,
    /// Banks whose zero-crossing cap fell below the step floor; the caller
    /// treats them as sitting exactly at zero.
    pub crossed: Vec<usize>,
}

/// Largest step not exceeding `base` or the breakpoint gap that keeps every
/// bank's wealth `V + μ̄ Δt + σ̄ √Δt` on its side of zero.
pub fn event_limited_dt(
    v: &Vector,
    mu_bar: &Vector,
    sigma_bar: &Vector,
    base: f64,
    breakpoint_gap: Option<f64>,
) -> Result<StepBounds> {
    limit_step(v, mu_bar, sigma_bar, base, breakpoint_gap, STEP_FLOOR_RATIO * base)
}

fn limit_step(
    v: &Vector,
    mu_bar: &Vector,
    sigma_bar: &Vector,
    base: f64,
    breakpoint_gap: Option<f64>,
    floor: f64,
) -> Result<StepBounds> {
    let mut bounds = StepBounds {
        base,
        dt: base,
        binding: StepConstraint::None,
        node: None,
        crossed: Vec::new(),
    };
    if let Some(gap) = breakpoint_gap {
        if gap < bounds.dt {
            bounds.dt = gap;
            bounds.binding = StepConstraint::Breakpoint;
        }
    }
    for i in 1..v.len() {
        let (vi, m, s) = (v[i], mu_bar[i], sigma_bar[i]);
        let crossing = first_root(vi, m, s).map(|r| r * r);
        if let Some(cap) = crossing {
            if cap < floor {
                bounds.crossed.push(i);
            } else if cap < bounds.dt {
                bounds.dt = cap;
                bounds.binding = StepConstraint::ZeroCrossing;
                bounds.node = Some(i);
            }
        }
        if m * s < 0.0 {
            let cap = (s * s / (m * m)).max(floor);
            if cap < bounds.dt {
                bounds.dt = cap;
                bounds.binding = StepConstraint::SignPreservation;
                bounds.node = Some(i);
            }
        }
    }
    if !(bounds.dt > 0.0 && bounds.dt.is_finite()) {
        return Err(ClearingError::StepUnderflow {
            t: f64::NAN,
            dt: bounds.dt,
            floor,
            context: format!("binding {:?} at node {:?}", bounds.binding, bounds.node),
        });
    }
    Ok(bounds)
}

/// Smallest positive root of `V + μ̄ r² + σ̄ r` in `r = √Δt`. Written without
/// the `-σ̄ ± √disc` subtraction, which loses every digit when `V` is tiny.
/// A solvent bank with `μ̄ > 0` and `σ̄ < 0` can dip below zero before the
/// `σ̄²/μ̄²` cap, so that sign pattern is covered too.
fn first_root(v: f64, m: f64, s: f64) -> Option<f64> {
    if v == 0.0 {
        return None;
    }
    if m == 0.0 {
        return (v * s < 0.0).then(|| -v / s);
    }
    let disc = s * s - 4.0 * m * v;
    if disc < 0.0 {
        return None;
    }
    let q = -0.5 * (s + libm::copysign(libm::sqrt(disc), s));
    [q / m, if q != 0.0 { v / q } else { f64::NAN }]
        .into_iter()
        .filter(|r| *r > 0.0)
        .reduce(f64::min)
}

/// One Euler step of length `dt` with the state's distress set.
///
/// Distressed rows of `A` (strictly negative wealth at the start of the step)
/// move by `(L̇_i - a_i Σ_k L̇_ik) Δt / V_i^-`; when `Δt Σ_k L̇_ik` exceeds
/// `V_i^-` that explicit update would leave the simplex, and the row instead
/// takes the rate-weighted average `(L̇_i Δt + a_i V_i^-) / (Σ_k L̇_ik Δt + V_i^-)`.
/// Other bank rows take the normalized rate; the society row never moves.
pub fn advance(
    state: &ContinuousState,
    dt: f64,
    z: &Vector,
    mu: &Vector,
    sigma: &Matrix,
    rate: &Matrix,
) -> Result<ContinuousState> {
    let mut next = ContinuousState {
        t: state.t,
        cash: state.cash.clone(),
        wealth: state.wealth.clone(),
        exposures: state.exposures.clone(),
        distress: state.distress.clone(),
        events: Vec::new(),
        rate_shares: state.rate_shares.clone(),
    };
    advance_in_place(&mut next, dt, z, mu, sigma, rate)?;
    next.events = state.events.clone();
    Ok(next)
}

fn advance_in_place(
    state: &mut ContinuousState,
    dt: f64,
    z: &Vector,
    mu: &Vector,
    sigma: &Matrix,
    rate: &Matrix,
) -> Result<()> {
    let (mu_bar, sigma_bar) =
        transformed_coefficients(&state.exposures, &state.distress, mu, sigma, rate, z)?;
    let root_dt = libm::sqrt(dt);
    let strict = DistressMatrix::strict(&state.wealth);
    state.update_rate_shares(rate);
    let dim = state.dim();
    for i in 1..dim {
        if strict.is_distressed(i) {
            let shortfall = -state.wealth[i];
            let total: f64 = rate.row(i).iter().sum();
            if total * dt <= shortfall {
                for j in 0..dim {
                    let a = state.exposures[(i, j)];
                    state.exposures[(i, j)] = a + (rate[(i, j)] - a * total) * dt / shortfall;
                }
            } else {
                for j in 0..dim {
                    let a = state.exposures[(i, j)];
                    state.exposures[(i, j)] =
                        (rate[(i, j)] * dt + a * shortfall) / (total * dt + shortfall);
                }
            }
        } else {
            let row = state.rate_shares.row(i).clone_owned();
            state.exposures.row_mut(i).copy_from(&row);
        }
    }
    state.cash += mu * dt + sigma * z * root_dt;
    state.wealth += mu_bar * dt + sigma_bar * root_dt;
    state.t += dt;
    Ok(())
}

fn lerp_into(prev: &Vector, next: &mut Vector, frac: f64) {
    for (n, p) in next.iter_mut().zip(prev.iter()) {
        *n = p + (*n - p) * frac;
    }
}

/// Everything a single path needs besides its random stream.
#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    pub initial_wealth: Vector,
    pub cash_flow: CashFlowSpec,
    pub liabilities: LiabilitySchedule,
    pub horizon: f64,
    pub base_step: f64,
}

impl PathConfig {
    pub fn dim(&self) -> usize {
        self.initial_wealth.len()
    }

    /// Checks shapes and parameters; returns the non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<Warning>> {
        let dim = self.dim();
        if dim < 2 {
            return Err(ClearingError::EmptyNetwork);
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ClearingError::Parameter(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.base_step > 0.0 && self.base_step.is_finite()) {
            return Err(ClearingError::Parameter(format!(
                "base step must be positive, got {}",
                self.base_step
            )));
        }
        if self.liabilities.dim() != dim {
            return Err(ClearingError::Length {
                what: "liability schedule",
                expected: dim,
                got: self.liabilities.dim(),
            });
        }
        if self.liabilities.horizon() != self.horizon {
            return Err(ClearingError::Parameter(format!(
                "schedule horizon {} differs from run horizon {}",
                self.liabilities.horizon(),
                self.horizon
            )));
        }
        self.cash_flow.validate(dim, self.horizon)?;
        let mut warnings = Vec::new();
        for (index, &value) in self.initial_wealth.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ClearingError::NegativeAsset { index, value });
            }
            if value == 0.0 {
                warnings.push(Warning::ZeroInitialWealth { node: index });
            }
        }
        let delta = self.liabilities.min_society_share();
        if delta <= 0.0 {
            warnings.push(Warning::NonPositiveSocietyShare { delta });
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub cash: Vector,
    pub wealth: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    pub terminal: ContinuousState,
    /// Accepted states `(t, c, V)`, including `t = 0`; empty unless recorded.
    pub trajectory: Vec<TrajectoryPoint>,
    pub steps: usize,
    /// Banks snapped to zero wealth because their crossing cap underflowed.
    pub floor_snaps: usize,
    pub warnings: Vec<Warning>,
}

impl PathOutcome {
    pub fn events(&self) -> &[Event] {
        &self.terminal.events
    }
}

/// Simulates one path on `[0, T]`, optionally recording the trajectory.
pub fn simulate_path(config: &PathConfig, rng: &mut RngStream, record: bool) -> Result<PathOutcome> {
    let mut trajectory = Vec::new();
    let mut outcome = simulate_path_with(config, rng, |s| {
        if record {
            trajectory.push(TrajectoryPoint {
                t: s.t,
                cash: s.cash.clone(),
                wealth: s.wealth.clone(),
            });
        }
    })?;
    outcome.trajectory = trajectory;
    Ok(outcome)
}

/// Simulates one path, calling `observe` on the initial state and after every
/// accepted step. A step overshooting `T` is linearly interpolated back to `T`.
pub fn simulate_path_with<F: FnMut(&ContinuousState)>(
    config: &PathConfig,
    rng: &mut RngStream,
    mut observe: F,
) -> Result<PathOutcome> {
    let mut warnings = config.validate()?;
    let dim = config.dim();
    let horizon = config.horizon;
    let base = config.base_step;
    let floor = STEP_FLOOR_RATIO * base;
    let sched = &config.liabilities;
    let mut breakpoints: Vec<f64> = sched
        .breakpoints()
        .into_iter()
        .chain(config.cash_flow.breakpoints())
        .filter(|&b| b > 0.0 && b < horizon)
        .collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();

    let mut state =
        ContinuousState::initial(config.initial_wealth.clone(), &eval_liability_rate(sched, 0.0));
    observe(&state);
    let mut events = Vec::new();
    let mut steps = 0;
    let mut floor_snaps = 0;
    let mut loop_caps = 0;

    while horizon - state.t > HORIZON_SNAP * horizon {
        let t = state.t;
        let rate = eval_liability_rate(sched, t);
        let (mu, sigma) = eval_mu_sigma(&config.cash_flow, t, &state.cash)?;
        state.sync_solvent_rows(&rate);
        let z = rng.draw_standard_normal(dim);
        let next_breakpoint = breakpoints
            .iter()
            .copied()
            .find(|&b| b - t > snap_tol(floor, b));
        let gap = next_breakpoint.map(|b| b - t);

        // refine the distress set with a single normal draw
        let mut dt = base;
        let mut binding = StepConstraint::None;
        let mut lam = state.distress.clone();
        let mut settled = false;
        for _ in 0..=dim {
            let (mu_bar, sigma_bar) =
                transformed_coefficients(&state.exposures, &lam, &mu, &sigma, &rate, &z)?;
            let bounds = limit_step(&state.wealth, &mu_bar, &sigma_bar, dt, gap, floor)
                .map_err(|e| with_time(e, t))?;
            if bounds.dt < dt || binding == StepConstraint::None {
                binding = bounds.binding;
            }
            dt = bounds.dt;
            for &i in &bounds.crossed {
                state.wealth[i] = 0.0;
                floor_snaps += 1;
            }
            let dv = mu_bar * dt + sigma_bar * libm::sqrt(dt);
            let refined = distress_matrix(&state.wealth, &dv);
            if refined == lam {
                settled = true;
                break;
            }
            lam = refined;
        }
        if !settled {
            loop_caps += 1;
            if loop_caps == 1 {
                warnings.push(Warning::DistressLoopCap { t });
            }
        }
        if dt < floor {
            return Err(ClearingError::StepUnderflow {
                t,
                dt,
                floor,
                context: format!("distressed banks {:?}", lam.indices()),
            });
        }
        for i in 1..dim {
            if lam.is_distressed(i) != state.distress.is_distressed(i) {
                events.push(Event {
                    t,
                    node: i,
                    direction: if lam.is_distressed(i) {
                        Crossing::IntoDistress
                    } else {
                        Crossing::OutOfDistress
                    },
                });
            }
        }
        state.distress = lam;

        let (prev_cash, prev_wealth, prev_exposures) =
            (state.cash.clone(), state.wealth.clone(), state.exposures.clone());
        advance_in_place(&mut state, dt, &z, &mu, &sigma, &rate)?;
        // land exactly on a breakpoint reached by any cap, so the next step
        // evaluates the new rates
        if let Some(b) = next_breakpoint {
            if binding == StepConstraint::Breakpoint || (state.t - b).abs() <= snap_tol(floor, b) {
                state.t = b;
            }
        }
        if state.t > horizon {
            let frac = (horizon - t) / (state.t - t);
            lerp_into(&prev_cash, &mut state.cash, frac);
            lerp_into(&prev_wealth, &mut state.wealth, frac);
            for (n, p) in state.exposures.iter_mut().zip(prev_exposures.iter()) {
                *n = p + (*n - p) * frac;
            }
            state.t = horizon;
        } else if horizon - state.t <= HORIZON_SNAP * horizon {
            state.t = horizon;
        }
        steps += 1;
        observe(&state);
    }

    state.events = events;
    Ok(PathOutcome {
        terminal: state,
        trajectory: Vec::new(),
        steps,
        floor_snaps,
        warnings,
    })
}

fn snap_tol(floor: f64, t: f64) -> f64 {
    floor.max(8.0 * f64::EPSILON * t.abs())
}

fn with_time(e: ClearingError, t: f64) -> ClearingError {
    match e {
        ClearingError::StepUnderflow {
            dt, floor, context, ..
        } => ClearingError::StepUnderflow {
            t,
            dt,
            floor,
            context,
        },
        other => other,
    }
}
