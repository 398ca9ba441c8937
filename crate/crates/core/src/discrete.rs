//! Discrete-time clearing with debt that rolls forward between dates.
//!
//! At each date the total obligations are the new liabilities plus any unpaid
//! debt from the previous date, `p̄_i(t) = Σ_j L_ij(t) + V_i(t-1)^-`, and the
//! clearing wealths solve
//!
//! ```text
//! V(t) = V(t-1) + c(t) - A(t)^T V(t)^- + A(t-1)^T V(t-1)^-
//! ```
//!
//! with `A` the relative exposures. Each date is solved by the fictitious
//! default loop using the relative liabilities `Π(t)`, which coincide with
//! `A(t)` at any clearing solution.

use alloc::vec::Vec;

use crate::error::{ClearingError, Result, Warning};
use crate::network::{uniform_row, LiabilityMatrix, Matrix, Vector};
use crate::processes::{aggregate, CashFlowSpec, LiabilitySchedule};
use crate::static_clearing::{fictitious_default, society_warnings};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteState {
    /// Date index; the initial state sits at `-1`.
    pub t: i64,
    pub wealth: Vector,
    /// Relative exposures `A(t)`.
    pub exposures: Matrix,
    /// Total obligations `p̄(t)` including rolled-forward debt.
    pub obligations: Vector,
    /// Insolvent sets of the fictitious default rounds at this date.
    pub default_rounds: Vec<Vec<usize>>,
    pub warnings: Vec<Warning>,
}

impl DiscreteState {
    /// State before the first clearing date. Wealth must be non-negative.
    pub fn initial(wealth: Vector) -> Result<Self> {
        let dim = wealth.len();
        if dim < 2 {
            return Err(ClearingError::EmptyNetwork);
        }
        for (index, &value) in wealth.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ClearingError::NegativeAsset { index, value });
            }
        }
        let mut exposures = Matrix::zeros(dim, dim);
        for i in 0..dim {
            exposures.row_mut(i).copy_from_slice(&uniform_row(dim, i));
        }
        Ok(Self {
            t: -1,
            wealth,
            exposures,
            obligations: Vector::zeros(dim),
            default_rounds: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.wealth.len()
    }

    /// Number of fictitious default rounds that changed the insolvent set.
    pub fn rounds(&self) -> usize {
        self.default_rounds.len()
    }
}

fn negative_part(v: &Vector) -> Vector {
    v.map(|x| (-x).max(0.0))
}

fn step_warnings(
    prev: &DiscreteState,
    cash: &Vector,
    liabilities: &LiabilityMatrix,
    step: i64,
) -> Vec<Warning> {
    let mut warnings = society_warnings(liabilities, Some(step));
    let l = liabilities.as_matrix();
    let dim = prev.dim();
    for i in 0..dim {
        let incoming: f64 = (1..dim).map(|j| l[(j, i)]).sum();
        let outgoing: f64 = l.row(i).iter().sum();
        let floor = incoming - outgoing;
        // relative slack absorbs rounding in c = x + L^T 1 - L 1
        let slack = 1e-12 * (incoming + outgoing + cash[i].abs()).max(1.0);
        if cash[i] < floor - slack {
            warnings.push(Warning::CashFlowBelowInterbank {
                node: i,
                step: Some(step),
                shortfall: floor - cash[i],
            });
        }
    }
    warnings
}

/// Advances one clearing date given net cash flow `c(t)` and new liabilities `L(t)`.
pub fn discrete_step(
    prev: &DiscreteState,
    cash: &Vector,
    liabilities: &LiabilityMatrix,
) -> Result<DiscreteState> {
    let dim = prev.dim();
    if cash.len() != dim {
        return Err(ClearingError::Length {
            what: "cash flow",
            expected: dim,
            got: cash.len(),
        });
    }
    if liabilities.dim() != dim {
        return Err(ClearingError::Shape {
            expected: dim,
            rows: liabilities.dim(),
            cols: liabilities.dim(),
        });
    }
    let step = prev.t + 1;
    let l = liabilities.as_matrix();
    let rolled = negative_part(&prev.wealth);

    // carried[i][j] = L_ij(t) + a_ij(t-1) V_i(t-1)^-
    let mut carried = l.clone();
    for i in 1..dim {
        if rolled[i] > 0.0 {
            for j in 0..dim {
                carried[(i, j)] += prev.exposures[(i, j)] * rolled[i];
            }
        }
    }
    let obligations = Vector::from_fn(dim, |i, _| carried.row(i).sum());

    let mut pi = Matrix::zeros(dim, dim);
    for i in 0..dim {
        if i != 0 && obligations[i] > 0.0 {
            for j in 0..dim {
                pi[(i, j)] = carried[(i, j)] / obligations[i];
            }
        } else {
            pi.row_mut(i).copy_from_slice(&uniform_row(dim, i));
        }
    }

    let base = &prev.wealth + cash + prev.exposures.transpose() * &rolled;
    let fd = fictitious_default(&pi, &base)?;
    let wealth = fd.wealth;

    let shortfall = negative_part(&wealth);
    let mut exposures = Matrix::zeros(dim, dim);
    for i in 0..dim {
        if i != 0 && obligations[i] > 0.0 {
            let denom = obligations[i].max(shortfall[i]);
            for j in 0..dim {
                exposures[(i, j)] = carried[(i, j)] / denom;
            }
        } else {
            exposures.row_mut(i).copy_from_slice(&uniform_row(dim, i));
        }
    }

    Ok(DiscreteState {
        t: step,
        wealth,
        exposures,
        obligations,
        default_rounds: fd.orders,
        warnings: step_warnings(prev, cash, liabilities, step),
    })
}

/// Per-date cash flows and liabilities, plus the wealth before the first date.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSchedule {
    pub initial_wealth: Vector,
    pub steps: Vec<(Vector, LiabilityMatrix)>,
}

/// Runs every date of the schedule; the trajectory excludes the initial state.
pub fn run_discrete(sched: &DiscreteSchedule) -> Result<Vec<DiscreteState>> {
    let mut state = DiscreteState::initial(sched.initial_wealth.clone())?;
    let mut out = Vec::with_capacity(sched.steps.len());
    for (cash, liabilities) in &sched.steps {
        state = discrete_step(&state, cash, liabilities)?;
        out.push(state.clone());
    }
    Ok(out)
}

/// One step of the step-size-parameterized recursion, with increments
/// `Δc = ∫ dc` and `ΔL = ∫ dL` over the step.
pub fn discrete_step_dt(
    prev: &DiscreteState,
    cash_increment: &Vector,
    liability_increment: &LiabilityMatrix,
) -> Result<DiscreteState> {
    discrete_step(prev, cash_increment, liability_increment)
}

/// Runs the step-size-`dt` recursion on `[0, horizon]` for deterministic
/// cash flows; the last step is shortened to land on the horizon.
/// Returns `(time, state)` pairs for every date.
pub fn run_discrete_dt(
    initial_wealth: Vector,
    cash_flow: &CashFlowSpec,
    liabilities: &LiabilitySchedule,
    horizon: f64,
    dt: f64,
) -> Result<Vec<(f64, DiscreteState)>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ClearingError::Parameter(alloc::format!(
            "step size must be positive, got {dt}"
        )));
    }
    if !cash_flow.is_deterministic() {
        return Err(ClearingError::Parameter(
            "discrete recursion needs deterministic cash flows".into(),
        ));
    }
    let steps = libm::ceil(horizon / dt - 1e-9).max(1.0) as usize;
    let mut state = DiscreteState::initial(initial_wealth)?;
    let mut out = Vec::with_capacity(steps);
    let mut t0 = 0.0;
    for k in 1..=steps {
        let t1 = if k == steps { horizon } else { k as f64 * dt };
        let dc = cash_flow
            .deterministic_increment(t0, t1)
            .expect("deterministic cash flow");
        let dl = LiabilityMatrix::new(aggregate(liabilities, t0, t1))?;
        state = discrete_step_dt(&state, &dc, &dl)?;
        out.push((t1, state.clone()));
        t0 = t1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::static_clearing::{clear_static, StaticProblem};
    use approx::assert_abs_diff_eq;

    fn lbar() -> LiabilityMatrix {
        LiabilityMatrix::from_rows(&[
            &[0.0, 0.0, 0.0, 0.0, 0.0],
            &[3.0, 0.0, 7.0, 1.0, 1.0],
            &[3.0, 3.0, 0.0, 3.0, 3.0],
            &[3.0, 1.0, 1.0, 0.0, 1.0],
            &[3.0, 1.0, 2.0, 1.0, 0.0],
        ])
        .unwrap()
    }

    fn v0() -> Vector {
        Vector::from_vec(alloc::vec![100.0, 1.0, 3.0, 2.0, 5.0])
    }

    fn book_capital(l: &LiabilityMatrix) -> Vector {
        l.total_claims() - l.total_obligations()
    }

    #[test]
    fn single_period_reduces_to_static() {
        let l = lbar();
        let start = DiscreteState::initial(Vector::zeros(5)).unwrap();
        let next = discrete_step(&start, &(v0() + book_capital(&l)), &l).unwrap();
        for (v, e) in next.wealth.iter().zip([109.38, -6.81, -3.03, -0.32, 1.62]) {
            assert_abs_diff_eq!(*v, e, epsilon = 1e-2);
        }
        assert_eq!(next.t, 0);
        assert!(next.rounds() <= 4);
    }

    #[test]
    fn solvent_step_adds_cash_flow() {
        let l = lbar();
        let start = DiscreteState::initial(v0()).unwrap();
        let cash = Vector::from_vec(alloc::vec![1.0, 20.0, 20.0, 20.0, 20.0]);
        let next = discrete_step(&start, &cash, &l).unwrap();
        assert_abs_diff_eq!(next.wealth, v0() + &cash, epsilon = 1e-12);
        let pi = crate::network::relative_liabilities(&l);
        assert_abs_diff_eq!(next.exposures, pi.into_matrix(), epsilon = 1e-15);
        assert!(next.default_rounds.is_empty());
    }

    #[test]
    fn even_split_matches_static() {
        let l = lbar();
        let steps = (0..10)
            .map(|_| (book_capital(&l) / 10.0, l.scaled(0.1)))
            .collect();
        let traj = run_discrete(&DiscreteSchedule {
            initial_wealth: v0(),
            steps,
        })
        .unwrap();
        assert_eq!(traj.len(), 10);
        let stat = clear_static(&StaticProblem::new(v0(), l).unwrap()).unwrap();
        assert_abs_diff_eq!(traj[9].wealth, stat.wealth, epsilon = 1e-2);
    }

    #[test]
    fn all_solvent_telescopes() {
        let l = lbar().scaled(0.01);
        let cash = Vector::from_vec(alloc::vec![0.5, 1.0, 1.0, 1.0, 1.0]);
        let steps: Vec<_> = (0..5).map(|_| (cash.clone(), l.clone())).collect();
        let traj = run_discrete(&DiscreteSchedule {
            initial_wealth: v0(),
            steps,
        })
        .unwrap();
        assert_abs_diff_eq!(traj[4].wealth, v0() + &cash * 5.0, epsilon = 1e-12);
    }

    #[test]
    fn rolled_debt_recovers_when_cash_arrives() {
        // bank 1 is short at t = 0 and then receives enough to repay everything
        let l = LiabilityMatrix::from_rows(&[&[0.0, 0.0, 0.0], &[2.0, 0.0, 2.0], &[1.0, 0.0, 0.0]])
            .unwrap();
        let zero = LiabilityMatrix::zeros(2);
        let sched = DiscreteSchedule {
            initial_wealth: Vector::from_vec(alloc::vec![0.0, 0.0, 0.0]),
            steps: alloc::vec![
                (Vector::from_vec(alloc::vec![3.0, -3.0, 1.0]), l),
                (Vector::from_vec(alloc::vec![0.0, 10.0, 0.0]), zero),
            ],
        };
        let traj = run_discrete(&sched).unwrap();
        assert!(traj[0].wealth[1] < 0.0);
        // after repayment everyone is whole: bank 1 has 1 + 10 - 4 = 7 left
        assert_abs_diff_eq!(traj[1].wealth[1], 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(traj[1].wealth[2], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(traj[1].wealth[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn dt_single_interval_matches_aggregate_step() {
        let l = lbar();
        let sched = LiabilitySchedule::constant(&l, 1.0).unwrap();
        let cash = CashFlowSpec::ConstantRate { mu: book_capital(&l) };
        let traj = run_discrete_dt(v0(), &cash, &sched, 1.0, 1.0).unwrap();
        let direct = discrete_step(&DiscreteState::initial(v0()).unwrap(), &book_capital(&l), &l)
            .unwrap();
        assert_eq!(traj.len(), 1);
        assert_abs_diff_eq!(traj[0].1.wealth, direct.wealth, epsilon = 1e-12);
    }

    #[test]
    fn dt_small_all_solvent_increments_by_cash() {
        let l = lbar().scaled(0.01);
        let sched = LiabilitySchedule::constant(&l, 1.0).unwrap();
        let mu = Vector::from_vec(alloc::vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let cash = CashFlowSpec::ConstantRate { mu: mu.clone() };
        let traj = run_discrete_dt(v0(), &cash, &sched, 1.0, 0.01).unwrap();
        assert_eq!(traj.len(), 100);
        let (t, s) = &traj[0];
        assert_abs_diff_eq!(*t, 0.01);
        assert_abs_diff_eq!(s.wealth, v0() + &mu * 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(traj[99].1.wealth, v0() + &mu, epsilon = 1e-10);
    }

    #[test]
    fn warns_on_hypothesis_violations() {
        let l = LiabilityMatrix::from_rows(&[&[0.0, 0.0, 0.0], &[0.0, 0.0, 2.0], &[1.0, 0.0, 0.0]])
            .unwrap();
        let start = DiscreteState::initial(Vector::from_vec(alloc::vec![1.0, 1.0, 1.0])).unwrap();
        let next = discrete_step(&start, &Vector::from_vec(alloc::vec![0.0, -5.0, 0.0]), &l).unwrap();
        assert!(next
            .warnings
            .contains(&Warning::NoSocietyObligation { node: 1, step: Some(0) }));
        assert!(next.warnings.iter().any(|w| matches!(
            w,
            Warning::CashFlowBelowInterbank { node: 1, .. }
        )));
    }
}
