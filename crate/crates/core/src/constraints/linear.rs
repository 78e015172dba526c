use super::{BlockJacobian, ConstraintSet, GeometricStiffness};
use crate::geometry::Vec3;

/// `Σ_p w_p Y_p[axis] - target = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub terms: Vec<(usize, f64)>,
    pub axis: usize,
    pub target: f64,
}

/// Linear equality constraints: pins and average-position coupling.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearConstraints {
    pub rows: Vec<LinearRow>,
}

impl LinearConstraints {
    pub fn new() -> Self {
        Self::default()
    }

    /// Three rows fixing point `p` at `target`.
    pub fn pin(&mut self, p: usize, target: Vec3) {
        for axis in 0..3 {
            self.rows.push(LinearRow {
                terms: vec![(p, 1.0)],
                axis,
                target: target[axis],
            });
        }
    }

    /// Three rows fixing the weighted sum of positions at `target`.
    pub fn couple(&mut self, weights: Vec<(usize, f64)>, target: Vec3) {
        for axis in 0..3 {
            self.rows.push(LinearRow {
                terms: weights.clone(),
                axis,
                target: target[axis],
            });
        }
    }
}

impl ConstraintSet for LinearConstraints {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn evaluate(&self, y: &[Vec3], out: &mut Vec<f64>) {
        for row in &self.rows {
            let v: f64 = row.terms.iter().map(|&(p, w)| w * y[p][row.axis]).sum();
            out.push(v - row.target);
        }
    }

    fn append_jacobian(&self, _y: &[Vec3], jac: &mut BlockJacobian) {
        for row in &self.rows {
            jac.push_row(row.terms.iter().map(|&(p, w)| {
                let mut b = Vec3::zeros();
                b[row.axis] = w;
                (p, b)
            }));
        }
    }

    fn add_geometric_stiffness(&self, _y: &[Vec3], _lambda: &[f64], _out: &mut GeometricStiffness) {}

    fn add_convex_stiffness(&self, _y: &[Vec3], _lambda: &[f64], _out: &mut GeometricStiffness) {}

    fn translation_invariant(&self) -> bool {
        false
    }
}
