//! Static clearing in wealth form.
//!
//! Clearing wealths solve `V = x + Π^T (p̄ - V^-)^+ - p̄` and the clearing
//! payments are recovered as `p = (p̄ - V^-)^+`.

use alloc::vec::Vec;

use crate::error::{ClearingError, Result, Warning};
use crate::network::{
    exposure_transpose_masked, relative_liabilities, DistressMatrix, LiabilityMatrix, Matrix,
    Vector,
};

/// Absolute per-component stopping tolerance of the Picard oracle.
pub const PICARD_TOLERANCE: f64 = 1e-10;
pub const PICARD_MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct StaticProblem {
    assets: Vector,
    liabilities: LiabilityMatrix,
}

impl StaticProblem {
    pub fn new(assets: Vector, liabilities: LiabilityMatrix) -> Result<Self> {
        if assets.len() != liabilities.dim() {
            return Err(ClearingError::Length {
                what: "external assets",
                expected: liabilities.dim(),
                got: assets.len(),
            });
        }
        for (index, &value) in assets.iter().enumerate() {
            if !value.is_finite() {
                return Err(ClearingError::NonFinite { row: index, col: 0 });
            }
            if value < 0.0 {
                return Err(ClearingError::NegativeAsset { index, value });
            }
        }
        Ok(Self {
            assets,
            liabilities,
        })
    }

    pub fn assets(&self) -> &Vector {
        &self.assets
    }

    pub fn liabilities(&self) -> &LiabilityMatrix {
        &self.liabilities
    }

    pub fn n(&self) -> usize {
        self.liabilities.n()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticSolution {
    pub wealth: Vector,
    pub payments: Vector,
    /// Insolvent set of each fictitious-default round; nested and strictly growing.
    pub orders: Vec<Vec<usize>>,
    pub first_order_solvent: Vec<usize>,
    /// Banks with `x_i - p̄_i == 0`, left out of `first_order_solvent`.
    pub boundary: Vec<usize>,
    pub warnings: Vec<Warning>,
}

impl StaticSolution {
    /// Round in which node `i` first defaults, or 0 when it stays solvent.
    pub fn default_order(&self, i: usize) -> usize {
        self.orders
            .iter()
            .position(|d| d.contains(&i))
            .map_or(0, |k| k + 1)
    }

    pub fn defaults(&self) -> Vec<usize> {
        self.orders.last().cloned().unwrap_or_default()
    }
}

/// Outcome of the fictitious default loop for `V = b + Π^T Λ V`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FictitiousDefault {
    pub wealth: Vector,
    pub orders: Vec<Vec<usize>>,
    pub solves: usize,
}

/// Grows the insolvent set round by round, solving
/// `V^k = (I - Π^T Λ^k)^{-1} b` each time, until the set repeats.
pub(crate) fn fictitious_default(pi: &Matrix, base: &Vector) -> Result<FictitiousDefault> {
    let dim = base.len();
    let mut wealth = base.clone();
    let mut current: Vec<usize> = Vec::new();
    let mut orders = Vec::new();
    let mut solves = 0;
    loop {
        let next: Vec<usize> = (1..dim).filter(|&i| wealth[i] < 0.0).collect();
        if next == current {
            break;
        }
        let lam = DistressMatrix::from_set(dim, &next);
        let system = Matrix::identity(dim, dim) - exposure_transpose_masked(pi, &lam);
        wealth = system
            .lu()
            .solve(base)
            .ok_or_else(|| ClearingError::Singular {
                distressed: next.clone(),
            })?;
        solves += 1;
        orders.push(next.clone());
        current = next;
        // The insolvent set only grows, so more than n rounds means a bad solve.
        if solves > dim {
            return Err(ClearingError::NoConvergence { iterations: solves });
        }
    }
    Ok(FictitiousDefault {
        wealth,
        orders,
        solves,
    })
}

/// `x + Π^T p̄ - p̄`: wealth when every bank pays in full.
fn full_payment_wealth(prob: &StaticProblem, pi: &Matrix) -> Vector {
    let pbar = prob.liabilities.total_obligations();
    &prob.assets + pi.transpose() * &pbar - &pbar
}

pub(crate) fn society_warnings(l: &LiabilityMatrix, step: Option<i64>) -> Vec<Warning> {
    l.banks_without_society_obligation()
        .into_iter()
        .map(|node| Warning::NoSocietyObligation { node, step })
        .collect()
}

/// Clears a static network with the fictitious default algorithm.
pub fn clear_static(prob: &StaticProblem) -> Result<StaticSolution> {
    let pi = relative_liabilities(&prob.liabilities).into_matrix();
    let base = full_payment_wealth(prob, &pi);
    let fd = fictitious_default(&pi, &base)?;
    let pbar = prob.liabilities.total_obligations();
    let payments = payments_from_wealth(&pbar, &fd.wealth);
    let (first_order_solvent, boundary) = first_order_solvency(prob);
    Ok(StaticSolution {
        wealth: fd.wealth,
        payments,
        orders: fd.orders,
        first_order_solvent,
        boundary,
        warnings: society_warnings(&prob.liabilities, None),
    })
}

/// `p = (p̄ - V^-)^+`.
pub fn payments_from_wealth(pbar: &Vector, wealth: &Vector) -> Vector {
    Vector::from_fn(pbar.len(), |i, _| {
        (pbar[i] - (-wealth[i]).max(0.0)).max(0.0)
    })
}

fn first_order_solvency(prob: &StaticProblem) -> (Vec<usize>, Vec<usize>) {
    let pbar = prob.liabilities.total_obligations();
    let mut solvent = alloc::vec![0];
    let mut boundary = Vec::new();
    for i in 1..prob.assets.len() {
        let margin = prob.assets[i] - pbar[i];
        if margin > 0.0 {
            solvent.push(i);
        } else if margin == 0.0 {
            boundary.push(i);
        }
    }
    (solvent, boundary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefaultOrders {
    pub orders: Vec<Vec<usize>>,
    pub first_order_solvent: Vec<usize>,
    pub boundary: Vec<usize>,
}

/// Default rounds of the fictitious default algorithm and the first-order
/// solvent set `{0} ∪ {i : x_i - p̄_i > 0}`.
pub fn classify_orders(prob: &StaticProblem) -> Result<DefaultOrders> {
    let pi = relative_liabilities(&prob.liabilities).into_matrix();
    let fd = fictitious_default(&pi, &full_payment_wealth(prob, &pi))?;
    let (first_order_solvent, boundary) = first_order_solvency(prob);
    Ok(DefaultOrders {
        orders: fd.orders,
        first_order_solvent,
        boundary,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardBounds {
    pub greatest: Vector,
    pub least: Vector,
    pub iterations: (usize, usize),
}

/// Iterates the monotone payment map `p ↦ p̄ ∧ (x + Π^T p)` from `p̄` and
/// from `0`, returning the wealths of the greatest and least fixed points.
pub fn picard_oracle(prob: &StaticProblem) -> Result<PicardBounds> {
    let pi_t = relative_liabilities(&prob.liabilities)
        .into_matrix()
        .transpose();
    let pbar = prob.liabilities.total_obligations();
    let iterate = |start: Vector| -> Result<(Vector, usize)> {
        let mut p = start;
        for k in 1..=PICARD_MAX_ITERATIONS {
            let inflow = &prob.assets + &pi_t * &p;
            let next = pbar.zip_map(&inflow, f64::min);
            let step = (&next - &p).amax();
            p = next;
            if step < PICARD_TOLERANCE {
                return Ok((p, k));
            }
        }
        Err(ClearingError::NoConvergence {
            iterations: PICARD_MAX_ITERATIONS,
        })
    };
    let (p_hi, k_hi) = iterate(pbar.clone())?;
    let (p_lo, k_lo) = iterate(Vector::zeros(pbar.len()))?;
    let wealth = |p: &Vector| &prob.assets + &pi_t * p - &pbar;
    Ok(PicardBounds {
        greatest: wealth(&p_hi),
        least: wealth(&p_lo),
        iterations: (k_hi, k_lo),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ex41() -> StaticProblem {
        let l = LiabilityMatrix::from_rows(&[
            &[0.0, 0.0, 0.0, 0.0, 0.0],
            &[3.0, 0.0, 7.0, 1.0, 1.0],
            &[3.0, 3.0, 0.0, 3.0, 3.0],
            &[3.0, 1.0, 1.0, 0.0, 1.0],
            &[3.0, 1.0, 2.0, 1.0, 0.0],
        ])
        .unwrap();
        StaticProblem::new(Vector::from_vec(alloc::vec![100.0, 1.0, 3.0, 2.0, 5.0]), l).unwrap()
    }

    fn chain() -> StaticProblem {
        let l = LiabilityMatrix::from_rows(&[&[0.0, 0.0, 0.0], &[2.0, 0.0, 2.0], &[1.0, 0.0, 0.0]])
            .unwrap();
        StaticProblem::new(Vector::from_vec(alloc::vec![0.0, 1.0, 1.0]), l).unwrap()
    }

    #[test]
    fn example_wealths_and_orders() {
        let sol = clear_static(&ex41()).unwrap();
        let expected = [109.38, -6.81, -3.03, -0.32, 1.62];
        for (v, e) in sol.wealth.iter().zip(expected) {
            assert_abs_diff_eq!(*v, e, epsilon = 0.01);
        }
        assert_eq!(sol.orders, alloc::vec![alloc::vec![1], alloc::vec![1, 2], alloc::vec![1, 2, 3]]);
        assert_eq!(sol.default_order(4), 0);
        assert_eq!(sol.default_order(3), 3);
        assert!(sol.warnings.is_empty());
        let positive: f64 = sol.wealth.iter().map(|v| v.max(0.0)).sum();
        assert_abs_diff_eq!(positive, 111.0, epsilon = 1e-8);
    }

    #[test]
    fn society_only_obligations() {
        let l = LiabilityMatrix::from_rows(&[&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]])
            .unwrap();
        let prob = StaticProblem::new(Vector::from_vec(alloc::vec![0.0, 5.0, 5.0]), l).unwrap();
        let sol = clear_static(&prob).unwrap();
        assert_eq!(sol.wealth.as_slice(), &[2.0, 4.0, 4.0]);
        assert!(sol.orders.is_empty());
        assert_eq!(sol.first_order_solvent, [0, 1, 2]);
    }

    #[test]
    fn two_bank_chain() {
        let sol = clear_static(&chain()).unwrap();
        for (v, e) in sol.wealth.iter().zip([1.5, -3.0, 0.5]) {
            assert_abs_diff_eq!(*v, e, epsilon = 1e-12);
        }
        for (p, e) in sol.payments.iter().zip([0.0, 1.0, 1.0]) {
            assert_abs_diff_eq!(*p, e, epsilon = 1e-12);
        }
        let orders = classify_orders(&chain()).unwrap();
        assert_eq!(orders.orders, alloc::vec![alloc::vec![1]]);
        assert_eq!(orders.first_order_solvent, [0]);
        assert_eq!(orders.boundary, [2]);
    }

    #[test]
    fn picard_matches_fictitious_default_on_example() {
        let prob = ex41();
        let sol = clear_static(&prob).unwrap();
        let bounds = picard_oracle(&prob).unwrap();
        assert_abs_diff_eq!(bounds.greatest, sol.wealth, epsilon = 1e-8);
        assert_abs_diff_eq!(bounds.least, sol.wealth, epsilon = 1e-8);
    }

    #[test]
    fn picard_zero_liabilities_is_immediate() {
        let prob = StaticProblem::new(
            Vector::from_vec(alloc::vec![1.0, 2.0, 3.0]),
            LiabilityMatrix::zeros(2),
        )
        .unwrap();
        let bounds = picard_oracle(&prob).unwrap();
        assert_eq!(bounds.greatest, *prob.assets());
        assert_eq!(bounds.least, *prob.assets());
        assert_eq!(bounds.iterations, (1, 1));
    }

    #[test]
    fn missing_society_obligation_warns() {
        let prob = chain();
        let l = LiabilityMatrix::from_rows(&[&[0.0, 0.0, 0.0], &[0.0, 0.0, 2.0], &[1.0, 0.0, 0.0]])
            .unwrap();
        let prob = StaticProblem::new(prob.assets().clone(), l).unwrap();
        let sol = clear_static(&prob).unwrap();
        assert_eq!(
            sol.warnings,
            [Warning::NoSocietyObligation { node: 1, step: None }]
        );
    }

    #[test]
    fn rejects_negative_assets() {
        let err = StaticProblem::new(
            Vector::from_vec(alloc::vec![0.0, -1.0, 0.0]),
            LiabilityMatrix::zeros(2),
        );
        assert_eq!(err, Err(ClearingError::NegativeAsset { index: 1, value: -1.0 }));
    }
}
