//! The averaged isometry constraint pair of a neighborhood.
//!
//! With `C = FᵀF` the pair is
//!
//! ```text
//! g_tr  = tr(C)  - 2
//! g_det = det(C) - 1
//! ```
//!
//! For symmetric positive semidefinite `C` both vanish exactly when both
//! eigenvalues are one, i.e. when the averaged strain `C - I` is zero. Neither
//! gradient vanishes at the strain-free state, and there the two gradients
//! coincide because `adj(I) = I`.
//!
//! Two other choices do not work as well. Constraining the three independent
//! entries of the strain adds a third row per neighborhood and makes the
//! gradients rank deficient. Constraining `tr(C - I)` and `det(C - I)` puts a
//! critical point of the determinant row at the strain-free state, where a
//! projection needs a regular value.

use nalgebra::{Matrix2, Matrix3, Matrix6};

use super::{BlockJacobian, ConstraintSet, ConstraintValues, GeometricStiffness};
use crate::geometry::{Neighborhood, Vec2, Vec3};
use crate::kinematics::{DeformationGradient, MlsEntry, MlsOperator};

/// `(g_tr, g_det)` of a deformation gradient.
pub fn eval_constraints(f: &DeformationGradient) -> (f64, f64) {
    let (f1, f2) = f.columns();
    (f1.norm_squared() + f2.norm_squared() - 2.0, f1.cross(&f2).norm_squared() - 1.0)
}

/// Per-point gradients of the pair over a neighborhood stencil, center first.
#[derive(Debug, Clone, PartialEq)]
pub struct IsometryGradients {
    pub tr: Vec<Vec3>,
    pub det: Vec<Vec3>,
}

fn adjugate(m: &Matrix2<f64>) -> Matrix2<f64> {
    Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)])
}

/// Member `j` receives column `j` of `2 F Aᵀ` (trace) and `2 F adj(FᵀF) Aᵀ`
/// (determinant); the center receives minus their sum.
pub fn constraint_gradients(f: &DeformationGradient, entry: &MlsEntry) -> IsometryGradients {
    let f = f.0;
    let c = f.transpose() * f;
    let tr_op = 2.0 * f;
    let det_op = 2.0 * f * adjugate(&c);
    let n = entry.coeffs.len();
    let mut tr = Vec::with_capacity(n + 1);
    let mut det = Vec::with_capacity(n + 1);
    tr.push(Vec3::zeros());
    det.push(Vec3::zeros());
    for a in &entry.coeffs {
        let gt = tr_op * a;
        let gd = det_op * a;
        tr[0] -= gt;
        det[0] -= gd;
        tr.push(gt);
        det.push(gd);
    }
    IsometryGradients { tr, det }
}

/// Isometry constraints for every neighborhood: rows `2i` (trace) and `2i + 1`
/// (determinant).
#[derive(Debug, Clone)]
pub struct IsometryConstraints {
    npoints: usize,
    /// Center first, then members.
    stencils: Vec<Vec<usize>>,
    /// Member coefficients `A_j`, aligned with `stencils[i][1..]`.
    coeffs: Vec<Vec<Vec2>>,
}

impl IsometryConstraints {
    pub fn new(npoints: usize, nbhds: &[Neighborhood], ops: &MlsOperator) -> Self {
        assert_eq!(nbhds.len(), ops.entries.len());
        IsometryConstraints {
            npoints,
            stencils: nbhds.iter().map(|n| n.stencil().collect()).collect(),
            coeffs: ops.entries.iter().map(|e| e.coeffs.clone()).collect(),
        }
    }

    pub fn neighborhoods(&self) -> usize {
        self.stencils.len()
    }

    pub fn stencil(&self, i: usize) -> &[usize] {
        &self.stencils[i]
    }

    pub fn deformation_gradient(&self, y: &[Vec3], i: usize) -> DeformationGradient {
        let s = &self.stencils[i];
        let yi = y[s[0]];
        let mut f1 = Vec3::zeros();
        let mut f2 = Vec3::zeros();
        for (a, &j) in self.coeffs[i].iter().zip(&s[1..]) {
            let d = y[j] - yi;
            f1 += d * a.x;
            f2 += d * a.y;
        }
        DeformationGradient(nalgebra::Matrix3x2::from_columns(&[f1, f2]))
    }

    fn stencil_coeff(&self, i: usize, k: usize) -> Vec2 {
        if k == 0 {
            -self.coeffs[i].iter().fold(Vec2::zeros(), |acc, a| acc + a)
        } else {
            self.coeffs[i][k - 1]
        }
    }

    fn gradients(&self, y: &[Vec3], i: usize) -> (Vec<Vec3>, Vec<Vec3>) {
        let (f1, f2) = self.deformation_gradient(y, i).columns();
        let (d11, d22, d12) = (f1.norm_squared(), f2.norm_squared(), f1.dot(&f2));
        let dtr = (2.0 * f1, 2.0 * f2);
        let ddet = (2.0 * (d22 * f1 - d12 * f2), 2.0 * (d11 * f2 - d12 * f1));
        let n = self.stencils[i].len();
        let mut tr = Vec::with_capacity(n);
        let mut det = Vec::with_capacity(n);
        for k in 0..n {
            let c = self.stencil_coeff(i, k);
            tr.push(dtr.0 * c.x + dtr.1 * c.y);
            det.push(ddet.0 * c.x + ddet.1 * c.y);
        }
        (tr, det)
    }

    /// `l_tr ∇²g_tr + l_det ∇²g_det` of neighborhood `i` with respect to the
    /// columns of `F`, as a 2x2 grid of 3x3 blocks.
    fn f_hessian(&self, y: &[Vec3], i: usize, l_tr: f64, l_det: f64) -> Matrix6<f64> {
        let (f1, f2) = self.deformation_gradient(y, i).columns();
        let id = Matrix3::identity();
        let p11 = 2.0 * (f2.norm_squared() * id - f2 * f2.transpose());
        let p22 = 2.0 * (f1.norm_squared() * id - f1 * f1.transpose());
        let p12 = 4.0 * f1 * f2.transpose() - 2.0 * f2 * f1.transpose() - 2.0 * f1.dot(&f2) * id;
        let mut h = Matrix6::zeros();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&(2.0 * l_tr * id + l_det * p11));
        h.fixed_view_mut::<3, 3>(3, 3).copy_from(&(2.0 * l_tr * id + l_det * p22));
        h.fixed_view_mut::<3, 3>(0, 3).copy_from(&(l_det * p12));
        h.fixed_view_mut::<3, 3>(3, 0).copy_from(&(l_det * p12.transpose()));
        h
    }

    /// Pulls an `F`-space Hessian back to the stencil points, since `F` is
    /// linear in them.
    fn scatter(&self, i: usize, h: &Matrix6<f64>, out: &mut GeometricStiffness) {
        let s = &self.stencils[i];
        let c: Vec<Vec2> = (0..s.len()).map(|k| self.stencil_coeff(i, k)).collect();
        let (h11, h12) = (h.fixed_view::<3, 3>(0, 0), h.fixed_view::<3, 3>(0, 3));
        let (h21, h22) = (h.fixed_view::<3, 3>(3, 0), h.fixed_view::<3, 3>(3, 3));
        for (u, cu) in c.iter().enumerate() {
            for (v, cv) in c.iter().enumerate() {
                let b = h11 * (cu.x * cv.x) + h12 * (cu.x * cv.y) + h21 * (cu.y * cv.x) + h22 * (cu.y * cv.y);
                out.add(s[u], s[v], b);
            }
        }
    }
}

impl ConstraintSet for IsometryConstraints {
    fn len(&self) -> usize {
        2 * self.stencils.len()
    }

    fn evaluate(&self, y: &[Vec3], out: &mut Vec<f64>) {
        for i in 0..self.stencils.len() {
            let (t, d) = eval_constraints(&self.deformation_gradient(y, i));
            out.push(t);
            out.push(d);
        }
    }

    fn append_jacobian(&self, y: &[Vec3], jac: &mut BlockJacobian) {
        for i in 0..self.stencils.len() {
            let (tr, det) = self.gradients(y, i);
            let s = &self.stencils[i];
            jac.push_row(s.iter().copied().zip(tr));
            jac.push_row(s.iter().copied().zip(det));
        }
    }

    fn add_geometric_stiffness(&self, y: &[Vec3], lambda: &[f64], out: &mut GeometricStiffness) {
        for i in 0..self.stencils.len() {
            let (lt, ld) = (lambda[2 * i], lambda[2 * i + 1]);
            if lt != 0.0 || ld != 0.0 {
                self.scatter(i, &self.f_hessian(y, i, lt, ld), out);
            }
        }
    }

    fn add_convex_stiffness(&self, y: &[Vec3], lambda: &[f64], out: &mut GeometricStiffness) {
        for i in 0..self.stencils.len() {
            let (lt, ld) = (lambda[2 * i], lambda[2 * i + 1]);
            if lt == 0.0 && ld == 0.0 {
                continue;
            }
            let mut eig = self.f_hessian(y, i, lt, ld).symmetric_eigen();
            if eig.eigenvalues.iter().all(|&e| e <= 0.0) {
                continue;
            }
            eig.eigenvalues.iter_mut().for_each(|e| *e = e.max(0.0));
            self.scatter(i, &eig.recompose(), out);
        }
    }
}

/// Isometry Jacobian and values at `y`.
pub fn assemble_jacobian(y: &[Vec3], constraints: &IsometryConstraints) -> (BlockJacobian, ConstraintValues) {
    let mut jac = BlockJacobian::new(constraints.npoints);
    constraints.append_jacobian(y, &mut jac);
    let mut g = Vec::with_capacity(constraints.len());
    constraints.evaluate(y, &mut g);
    (jac, ConstraintValues(g))
}

/// `Σ_k λ_k ∇²g_k` over the isometry rows.
pub fn geometric_stiffness(y: &[Vec3], lambda: &[f64], constraints: &IsometryConstraints) -> GeometricStiffness {
    let mut k = GeometricStiffness::new(constraints.npoints);
    constraints.add_geometric_stiffness(y, lambda, &mut k);
    k
}
