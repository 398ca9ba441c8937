//! Network data model shared by every solver.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{ClearingError, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Nominal obligations `L[i][j]` owed by node `i` to node `j`.
///
/// Entries are finite and non-negative, the diagonal is zero and the society
/// row (row 0) is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LiabilityMatrix(Matrix);

impl LiabilityMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        let dim = m.nrows();
        if m.ncols() != dim {
            return Err(ClearingError::Shape {
                expected: dim,
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if dim < 2 {
            return Err(ClearingError::EmptyNetwork);
        }
        for i in 0..dim {
            for j in 0..dim {
                let v = m[(i, j)];
                if !v.is_finite() {
                    return Err(ClearingError::NonFinite { row: i, col: j });
                }
                if v < 0.0 {
                    return Err(ClearingError::NegativeEntry {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
            if m[(i, i)] != 0.0 {
                return Err(ClearingError::NonzeroDiagonal {
                    index: i,
                    value: m[(i, i)],
                });
            }
        }
        if let Some(col) = (0..dim).find(|&j| m[(0, j)] != 0.0) {
            return Err(ClearingError::SocietyLiability {
                col,
                value: m[(0, col)],
            });
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(ClearingError::Shape {
                expected: dim,
                rows: dim,
                cols: bad.len(),
            });
        }
        Self::new(Matrix::from_fn(dim, dim, |i, j| rows[i][j]))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Matrix::zeros(n + 1, n + 1))
    }

    /// Number of banks, excluding society.
    pub fn n(&self) -> usize {
        self.0.nrows() - 1
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Total obligations `L 1` per node.
    pub fn total_obligations(&self) -> Vector {
        row_sums(&self.0)
    }

    /// Total claims `L^T 1` per node.
    pub fn total_claims(&self) -> Vector {
        let dim = self.dim();
        Vector::from_fn(dim, |j, _| (0..dim).map(|i| self.0[(i, j)]).sum())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(&self.0 * factor)
    }

    /// Banks with no obligation to society.
    pub fn banks_without_society_obligation(&self) -> Vec<usize> {
        (1..self.dim()).filter(|&i| self.0[(i, 0)] <= 0.0).collect()
    }
}

/// A network of `n` banks plus society, optionally with display names.
#[derive(Debug, Clone, PartialEq)]
pub struct FinancialNetwork {
    liabilities: LiabilityMatrix,
    names: Option<Vec<String>>,
}

impl FinancialNetwork {
    pub fn new(liabilities: LiabilityMatrix, names: Option<Vec<String>>) -> Result<Self> {
        if let Some(names) = &names {
            if names.len() != liabilities.dim() {
                return Err(ClearingError::Length {
                    what: "names",
                    expected: liabilities.dim(),
                    got: names.len(),
                });
            }
        }
        Ok(Self { liabilities, names })
    }

    pub fn n(&self) -> usize {
        self.liabilities.n()
    }

    pub fn liabilities(&self) -> &LiabilityMatrix {
        &self.liabilities
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }
}

/// Row-stochastic matrix of relative liabilities with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeLiabilities(Matrix);

impl RelativeLiabilities {
    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Relative liabilities: each row of `L` divided by its sum. Rows that sum to
/// zero, and always the society row, use `1/n` off the diagonal.
pub fn relative_liabilities(l: &LiabilityMatrix) -> RelativeLiabilities {
    let m = l.as_matrix();
    let dim = m.nrows();
    let mut pi = Matrix::zeros(dim, dim);
    for i in 0..dim {
        let row = normalized_row(m, i);
        pi.row_mut(i).copy_from_slice(&row);
    }
    RelativeLiabilities(pi)
}

/// Row `i` of a non-negative matrix scaled to sum to one, or the uniform
/// `1/n` row when `i == 0` or the row is empty.
pub(crate) fn normalized_row(m: &Matrix, i: usize) -> Vec<f64> {
    match try_normalized_row(m, i) {
        Some(r) => r,
        None => uniform_row(m.nrows(), i),
    }
}

pub(crate) fn try_normalized_row(m: &Matrix, i: usize) -> Option<Vec<f64>> {
    if i == 0 {
        return None;
    }
    let total: f64 = m.row(i).iter().sum();
    if total > 0.0 {
        Some(m.row(i).iter().map(|v| v / total).collect())
    } else {
        None
    }
}

pub(crate) fn uniform_row(dim: usize, i: usize) -> Vec<f64> {
    let share = 1.0 / (dim - 1) as f64;
    (0..dim).map(|j| if j == i { 0.0 } else { share }).collect()
}

pub(crate) fn row_sums(m: &Matrix) -> Vector {
    Vector::from_fn(m.nrows(), |i, _| m.row(i).iter().sum())
}

/// Diagonal 0/1 matrix of distressed banks, stored as its diagonal.
/// Society (index 0) is never flagged.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DistressMatrix {
    flags: Vec<bool>,
}

impl DistressMatrix {
    pub fn none(dim: usize) -> Self {
        Self {
            flags: alloc::vec![false; dim],
        }
    }

    /// Flags exactly the listed banks; index 0 is ignored.
    pub fn from_set(dim: usize, banks: &[usize]) -> Self {
        let mut flags = alloc::vec![false; dim];
        for &i in banks {
            if i != 0 && i < dim {
                flags[i] = true;
            }
        }
        Self { flags }
    }

    /// Banks with strictly negative wealth.
    pub fn strict(v: &Vector) -> Self {
        Self {
            flags: v
                .iter()
                .enumerate()
                .map(|(i, &x)| i != 0 && x < 0.0)
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.flags.len()
    }

    pub fn is_distressed(&self, i: usize) -> bool {
        self.flags[i]
    }

    pub fn is_empty(&self) -> bool {
        !self.flags.iter().any(|&f| f)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn to_matrix(&self) -> Matrix {
        let d = self.dim();
        Matrix::from_fn(d, d, |i, j| if i == j && self.flags[i] { 1.0 } else { 0.0 })
    }
}

/// Distress classification used by the continuous-time integrator: a bank is
/// distressed when its wealth is negative, or exactly zero and about to fall.
/// A bank at zero with a zero increment counts as solvent.
pub fn distress_matrix(v: &Vector, dv: &Vector) -> DistressMatrix {
    assert_eq!(v.len(), dv.len(), "wealth and increment lengths differ");
    DistressMatrix {
        flags: v
            .iter()
            .zip(dv.iter())
            .enumerate()
            .map(|(i, (&x, &dx))| i != 0 && (x < 0.0 || (x == 0.0 && dx < 0.0)))
            .collect(),
    }
}

/// `A^T Λ` for a distress set: column `j` of the result is row `j` of `A`
/// when bank `j` is distressed and zero otherwise.
pub(crate) fn exposure_transpose_masked(a: &Matrix, lam: &DistressMatrix) -> Matrix {
    let d = a.nrows();
    Matrix::from_fn(d, d, |i, j| if lam.is_distressed(j) { a[(j, i)] } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ex41() -> LiabilityMatrix {
        LiabilityMatrix::from_rows(&[
            &[0.0, 0.0, 0.0, 0.0, 0.0],
            &[3.0, 0.0, 7.0, 1.0, 1.0],
            &[3.0, 3.0, 0.0, 3.0, 3.0],
            &[3.0, 1.0, 1.0, 0.0, 1.0],
            &[3.0, 1.0, 2.0, 1.0, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn relative_row_of_bank_one() {
        let pi = relative_liabilities(&ex41());
        let expected = [0.25, 0.0, 7.0 / 12.0, 1.0 / 12.0, 1.0 / 12.0];
        for (j, e) in expected.iter().enumerate() {
            assert_relative_eq!(pi.as_matrix()[(1, j)], *e, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_row_uses_uniform_convention() {
        let pi = relative_liabilities(&LiabilityMatrix::zeros(4));
        for i in 0..5 {
            for j in 0..5 {
                let e = if i == j { 0.0 } else { 0.25 };
                assert_eq!(pi.as_matrix()[(i, j)], e);
            }
        }
    }

    #[test]
    fn single_creditor_row() {
        let l = LiabilityMatrix::from_rows(&[&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 2.0, 0.0]])
            .unwrap();
        let pi = relative_liabilities(&l);
        assert_eq!(pi.as_matrix().row(1).iter().copied().collect::<Vec<_>>(), [1.0, 0.0, 0.0]);
        assert_eq!(pi.as_matrix().row(2).iter().copied().collect::<Vec<_>>(), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn validation_names_offending_index() {
        let neg = LiabilityMatrix::from_rows(&[&[0.0, 0.0], &[-1.0, 0.0]]);
        assert_eq!(
            neg,
            Err(ClearingError::NegativeEntry { row: 1, col: 0, value: -1.0 })
        );
        let diag = LiabilityMatrix::from_rows(&[&[0.0, 0.0], &[1.0, 2.0]]);
        assert_eq!(diag, Err(ClearingError::NonzeroDiagonal { index: 1, value: 2.0 }));
        let society = LiabilityMatrix::from_rows(&[&[0.0, 3.0], &[1.0, 0.0]]);
        assert_eq!(society, Err(ClearingError::SocietyLiability { col: 1, value: 3.0 }));
        assert_eq!(
            LiabilityMatrix::new(Matrix::zeros(1, 1)),
            Err(ClearingError::EmptyNetwork)
        );
    }

    #[test]
    fn distress_all_solvent() {
        let v = Vector::from_vec(alloc::vec![1.0, 2.0, 3.0]);
        let dv = Vector::from_vec(alloc::vec![-5.0, -5.0, -5.0]);
        assert!(distress_matrix(&v, &dv).is_empty());
    }

    #[test]
    fn distress_case_split() {
        let v = Vector::from_vec(alloc::vec![5.0, -1.0, 0.0]);
        let dv = Vector::from_vec(alloc::vec![0.0, 0.0, -1.0]);
        let lam = distress_matrix(&v, &dv);
        assert_eq!(lam.indices(), [1, 2]);
        let m = lam.to_matrix();
        assert_eq!(m[(1, 1)], 1.0);
        assert_eq!(m[(2, 2)], 1.0);
        assert_eq!(m[(0, 0)], 0.0);
    }

    #[test]
    fn distress_never_flags_society() {
        let v = Vector::from_vec(alloc::vec![-1.0, 1.0]);
        let dv = Vector::from_vec(alloc::vec![-1.0, 0.0]);
        assert!(distress_matrix(&v, &dv).is_empty());
    }

    #[test]
    fn zero_wealth_zero_increment_is_solvent() {
        let v = Vector::from_vec(alloc::vec![1.0, 0.0]);
        let dv = Vector::from_vec(alloc::vec![0.0, 0.0]);
        assert!(distress_matrix(&v, &dv).is_empty());
    }

    fn liability_strategy() -> impl Strategy<Value = Matrix> {
        (1usize..7).prop_flat_map(|n| {
            let dim = n + 1;
            (
                proptest::collection::vec(0.0f64..10.0, dim * dim),
                proptest::collection::vec(proptest::bool::weighted(0.3), dim * dim),
            )
                .prop_map(move |(vals, zero)| {
                    Matrix::from_fn(dim, dim, |i, j| {
                        if i == 0 || i == j || zero[i * dim + j] {
                            0.0
                        } else {
                            vals[i * dim + j]
                        }
                    })
                })
        })
    }

    proptest! {
        #[test]
        fn relative_liabilities_row_stochastic(m in liability_strategy()) {
            let pi = relative_liabilities(&LiabilityMatrix::new(m).unwrap());
            let pi = pi.as_matrix();
            for i in 0..pi.nrows() {
                let s: f64 = pi.row(i).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert_eq!(pi[(i, i)], 0.0);
                prop_assert!(pi.row(i).iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }

        #[test]
        fn distress_invariant_under_positive_scaling(
            v in proptest::collection::vec(-3i32..4, 2..8),
            dv in proptest::collection::vec(-3i32..4, 8),
            s in 0.01f64..100.0,
            r in 0.01f64..100.0,
        ) {
            let v = Vector::from_iterator(v.len(), v.iter().map(|&x| x as f64));
            let dv = Vector::from_iterator(v.len(), dv.iter().take(v.len()).map(|&x| x as f64));
            prop_assert_eq!(distress_matrix(&v, &dv), distress_matrix(&(&v * s), &(&dv * r)));
        }
    }
}
