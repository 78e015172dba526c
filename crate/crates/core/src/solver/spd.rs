//! Sparse symmetric positive definite solves backed by faer's Cholesky.

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Side};
use nalgebra_sparse::CsrMatrix;

use crate::error::{Error, Result};

/// Relative diagonal shift applied to semidefinite systems: `SHIFT * trace / n`.
pub const SHIFT: f64 = 1e-10;
const RESIDUAL_BOUND: f64 = 1e-10;
const REFINEMENT_STEPS: usize = 10;

/// Lower-triangular column-compressed sparsity pattern. The diagonal is
/// always present.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerPattern {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl LowerPattern {
    /// Pattern holding the diagonal and every `(row, col)` pair, mirrored
    /// into the lower triangle.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut cols: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
        for (r, c) in pairs {
            let (r, c) = if r >= c { (r, c) } else { (c, r) };
            cols[c].push(r);
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for mut col in cols {
            col.sort_unstable();
            col.dedup();
            row_idx.extend(col);
            col_ptr.push(row_idx.len());
        }
        LowerPattern { n, col_ptr, row_idx }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Value slot of `(row, col)` with `row >= col`.
    pub fn find(&self, row: usize, col: usize) -> Option<usize> {
        debug_assert!(row >= col);
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        self.row_idx[range.clone()].binary_search(&row).ok().map(|k| range.start + k)
    }

    pub fn diag(&self, i: usize) -> usize {
        // the diagonal is the smallest row of its column
        self.col_ptr[i]
    }

    /// `A x` for a symmetric `A` stored in the lower triangle.
    pub fn sym_mul(&self, values: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let range = self.col_ptr[j]..self.col_ptr[j + 1];
            for (&i, &v) in self.row_idx[range.clone()].iter().zip(&values[range]) {
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    pub fn trace(&self, values: &[f64]) -> f64 {
        (0..self.n).map(|i| values[self.diag(i)]).sum()
    }

    fn symbolic(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx)
    }
}

/// Cholesky factorization with a reusable symbolic analysis.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    pattern: LowerPattern,
    symbolic: SymbolicLlt<usize>,
    numeric: Option<Llt<usize, f64>>,
}

impl SpdFactor {
    pub fn new(pattern: LowerPattern) -> Result<Self> {
        let symbolic = SymbolicLlt::try_new(pattern.symbolic(), Side::Lower)
            .map_err(|e| Error::SolveFailure(format!("symbolic factorization: {e:?}")))?;
        Ok(SpdFactor {
            pattern,
            symbolic,
            numeric: None,
        })
    }

    pub fn pattern(&self) -> &LowerPattern {
        &self.pattern
    }

    /// Numeric factorization of the matrix with the stored pattern.
    pub fn factor(&mut self, values: &[f64]) -> Result<()> {
        assert_eq!(values.len(), self.pattern.nnz());
        self.numeric = None;
        let mat = SparseColMatRef::new(self.pattern.symbolic(), values);
        let llt = Llt::try_new_with_symbolic(self.symbolic.clone(), mat, Side::Lower)
            .map_err(|e| Error::SolveFailure(format!("matrix is not positive definite: {e}")))?;
        self.numeric = Some(llt);
        Ok(())
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let llt = self.numeric.as_ref().expect("solve before factor");
        let n = rhs.len();
        llt.solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(rhs, n, 1));
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Result of [`solve_spd`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpdSolution {
    pub x: Vec<f64>,
    /// `‖A x - b‖∞`.
    pub residual: f64,
    /// Diagonal shift that was needed, zero for definite systems.
    pub shift: f64,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `A x = b` for symmetric positive (semi)definite `A`.
///
/// A plain Cholesky solve is tried first. If it breaks down or misses
/// `‖A x - b‖∞ <= 1e-10 ‖b‖∞`, the diagonal is shifted by
/// `1e-10 * trace(A) / n` and the shifted factor drives iterative refinement
/// against the unshifted matrix, which converges to a minimum-norm-like
/// solution for consistent singular systems.
pub fn solve_spd(a: &CsrMatrix<f64>, b: &[f64]) -> Result<SpdSolution> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::SolveFailure("dimension mismatch".into()));
    }
    let mut pairs = Vec::with_capacity(a.nnz());
    for (i, j, _) in a.triplet_iter() {
        if i >= j {
            pairs.push((i, j));
        }
    }
    let pattern = LowerPattern::from_pairs(n, pairs);
    let mut values = vec![0.0; pattern.nnz()];
    for (i, j, &v) in a.triplet_iter() {
        if i >= j {
            values[pattern.find(i, j).unwrap()] += v;
        }
    }
    let mut factor = SpdFactor::new(pattern)?;
    let bound = RESIDUAL_BOUND * max_abs(b);
    let residual = |x: &[f64], pat: &LowerPattern| -> Vec<f64> {
        pat.sym_mul(&values, x).iter().zip(b).map(|(ax, bi)| bi - ax).collect()
    };

    if factor.factor(&values).is_ok() {
        let mut x = factor.solve(b);
        let mut r = residual(&x, factor.pattern());
        for _ in 0..2 {
            if max_abs(&r) <= bound {
                break;
            }
            let dx = factor.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
            r = residual(&x, factor.pattern());
        }
        if max_abs(&r) <= bound {
            return Ok(SpdSolution {
                residual: max_abs(&r),
                x,
                shift: 0.0,
            });
        }
    }

    let trace = factor.pattern().trace(&values);
    let shift = SHIFT * trace.abs().max(f64::MIN_POSITIVE) / n.max(1) as f64;
    let mut shifted = values.clone();
    for i in 0..n {
        shifted[factor.pattern().diag(i)] += shift;
    }
    factor.factor(&shifted)?;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    for _ in 0..REFINEMENT_STEPS {
        let dx = factor.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        r = residual(&x, factor.pattern());
        if max_abs(&r) <= bound {
            break;
        }
    }
    let res = max_abs(&r);
    if res > bound {
        return Err(Error::SolveFailure(format!(
            "residual {res:e} exceeds {bound:e} after diagonal shift {shift:e}"
        )));
    }
    Ok(SpdSolution { x, residual: res, shift })
}
