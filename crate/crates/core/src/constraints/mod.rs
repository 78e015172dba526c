//! Constraint functions, their sparse Jacobians and Hessians.
//!
//! A [`ConstraintSystem`] stacks several [`ConstraintSet`]s (isometry, edge
//! lengths, pins, coupling). Each set owns a contiguous block of rows; row
//! order and per-row sparsity never change for a given set, so downstream
//! solvers can reuse symbolic factorizations.

mod edge;
mod isometry;
mod linear;

use nalgebra::{DMatrix, Matrix3};

use crate::geometry::Vec3;

pub use edge::EdgeLengthConstraints;
pub use isometry::{
    assemble_jacobian, constraint_gradients, eval_constraints, geometric_stiffness, IsometryConstraints,
    IsometryGradients,
};
pub use linear::{LinearConstraints, LinearRow};

/// Stacked constraint values `g`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintValues(pub Vec<f64>);

impl ConstraintValues {
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Row-compressed Jacobian whose entries are 3-vector blocks, one per point
/// touched by the row.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockJacobian {
    npoints: usize,
    row_ptr: Vec<usize>,
    points: Vec<usize>,
    blocks: Vec<Vec3>,
}

impl BlockJacobian {
    pub fn new(npoints: usize) -> Self {
        BlockJacobian {
            npoints,
            row_ptr: vec![0],
            points: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn clear(&mut self) {
        self.row_ptr.truncate(1);
        self.points.clear();
        self.blocks.clear();
    }

    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, Vec3)>) {
        for (p, b) in entries {
            debug_assert!(p < self.npoints);
            self.points.push(p);
            self.blocks.push(b);
        }
        self.row_ptr.push(self.points.len());
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn npoints(&self) -> usize {
        self.npoints
    }

    pub fn nnz_blocks(&self) -> usize {
        self.points.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[Vec3]) {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.points[range.clone()], &self.blocks[range])
    }

    pub fn same_pattern(&self, other: &BlockJacobian) -> bool {
        self.npoints == other.npoints && self.row_ptr == other.row_ptr && self.points == other.points
    }

    /// `J v`.
    pub fn mul(&self, v: &[Vec3]) -> Vec<f64> {
        (0..self.nrows())
            .map(|r| {
                let (pts, blocks) = self.row(r);
                pts.iter().zip(blocks).map(|(&p, b)| b.dot(&v[p])).sum()
            })
            .collect()
    }

    /// `Jᵀ λ`.
    pub fn tr_mul(&self, lambda: &[f64]) -> Vec<Vec3> {
        let mut out = vec![Vec3::zeros(); self.npoints];
        for (r, &l) in lambda.iter().enumerate().take(self.nrows()) {
            if l == 0.0 {
                continue;
            }
            let (pts, blocks) = self.row(r);
            for (&p, b) in pts.iter().zip(blocks) {
                out[p] += b * l;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), 3 * self.npoints);
        for r in 0..self.nrows() {
            let (pts, blocks) = self.row(r);
            for (&p, b) in pts.iter().zip(blocks) {
                for c in 0..3 {
                    m[(r, 3 * p + c)] += b[c];
                }
            }
        }
        m
    }
}

/// `Σ_k λ_k ∇²g_k` as a list of 3x3 blocks. Both `(p, q)` and `(q, p)` are
/// stored; duplicates add up.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricStiffness {
    pub npoints: usize,
    pub blocks: Vec<(usize, usize, Matrix3<f64>)>,
}

impl GeometricStiffness {
    pub fn new(npoints: usize) -> Self {
        GeometricStiffness {
            npoints,
            blocks: Vec::new(),
        }
    }

    pub fn add(&mut self, p: usize, q: usize, m: Matrix3<f64>) {
        self.blocks.push((p, q, m));
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|(_, _, m)| m.iter().all(|&x| x == 0.0))
    }

    pub fn mul(&self, v: &[Vec3]) -> Vec<Vec3> {
        let mut out = vec![Vec3::zeros(); self.npoints];
        for (p, q, m) in &self.blocks {
            out[*p] += m * v[*q];
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(3 * self.npoints, 3 * self.npoints);
        for (p, q, m) in &self.blocks {
            for a in 0..3 {
                for b in 0..3 {
                    d[(3 * p + a, 3 * q + b)] += m[(a, b)];
                }
            }
        }
        d
    }
}

/// A homogeneous family of equality constraints `g(Y) = 0`.
pub trait ConstraintSet: std::fmt::Debug + Send + Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends `len()` values.
    fn evaluate(&self, y: &[Vec3], out: &mut Vec<f64>);

    /// Appends `len()` rows. The pattern must not depend on `y`.
    fn append_jacobian(&self, y: &[Vec3], jac: &mut BlockJacobian);

    /// Adds `Σ_k λ_k ∇²g_k`; `lambda` holds this set's `len()` multipliers.
    fn add_geometric_stiffness(&self, y: &[Vec3], lambda: &[f64], out: &mut GeometricStiffness);

    /// Like [`add_geometric_stiffness`](Self::add_geometric_stiffness) with
    /// negative curvature clipped, so the result is positive semidefinite.
    fn add_convex_stiffness(&self, y: &[Vec3], lambda: &[f64], out: &mut GeometricStiffness);

    /// True when every row is invariant under rigid translation.
    fn translation_invariant(&self) -> bool {
        true
    }
}

/// Ordered stack of constraint sets.
#[derive(Debug, Default)]
pub struct ConstraintSystem {
    npoints: usize,
    sets: Vec<Box<dyn ConstraintSet>>,
}

impl ConstraintSystem {
    pub fn new(npoints: usize) -> Self {
        ConstraintSystem {
            npoints,
            sets: Vec::new(),
        }
    }

    pub fn with(mut self, set: impl ConstraintSet + 'static) -> Self {
        self.push(set);
        self
    }

    pub fn push(&mut self, set: impl ConstraintSet + 'static) {
        if !set.is_empty() {
            self.sets.push(Box::new(set));
        }
    }

    pub fn npoints(&self) -> usize {
        self.npoints
    }

    pub fn len(&self) -> usize {
        self.sets.iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn translation_invariant(&self) -> bool {
        self.sets.iter().all(|s| s.translation_invariant())
    }

    pub fn evaluate(&self, y: &[Vec3]) -> ConstraintValues {
        let mut out = Vec::with_capacity(self.len());
        for s in &self.sets {
            s.evaluate(y, &mut out);
        }
        ConstraintValues(out)
    }

    pub fn jacobian(&self, y: &[Vec3]) -> BlockJacobian {
        let mut jac = BlockJacobian::new(self.npoints);
        self.jacobian_into(y, &mut jac);
        jac
    }

    pub fn jacobian_into(&self, y: &[Vec3], jac: &mut BlockJacobian) {
        jac.clear();
        for s in &self.sets {
            s.append_jacobian(y, jac);
        }
    }

    pub fn geometric_stiffness(&self, y: &[Vec3], lambda: &[f64]) -> GeometricStiffness {
        let mut k = GeometricStiffness::new(self.npoints);
        let mut offset = 0;
        for s in &self.sets {
            let n = s.len();
            s.add_geometric_stiffness(y, &lambda[offset..offset + n], &mut k);
            offset += n;
        }
        k
    }

    /// Positive semidefinite part of [`geometric_stiffness`](Self::geometric_stiffness),
    /// clipped per constraint group.
    pub fn convex_stiffness(&self, y: &[Vec3], lambda: &[f64]) -> GeometricStiffness {
        let mut k = GeometricStiffness::new(self.npoints);
        let mut offset = 0;
        for s in &self.sets {
            let n = s.len();
            s.add_convex_stiffness(y, &lambda[offset..offset + n], &mut k);
            offset += n;
        }
        k
    }
}
