use nalgebra::Matrix3;

use super::{BlockJacobian, ConstraintSet, GeometricStiffness};
use crate::error::Result;
use crate::geometry::{RestSurface, Vec3};

/// Inextensible mesh edges, `|Y_a - Y_b|² / L² - 1 = 0`.
///
/// This is the classic triangle-mesh isometry model. On irregular meshes it
/// removes nearly all degrees of freedom and locks; it exists as a baseline.
#[derive(Debug, Clone)]
pub struct EdgeLengthConstraints {
    edges: Vec<[usize; 2]>,
    rest_sq: Vec<f64>,
}

impl EdgeLengthConstraints {
    pub fn from_surface(surface: &RestSurface) -> Result<Self> {
        let edges = surface.edges()?;
        let p = &surface.positions;
        let rest_sq = edges.iter().map(|&[a, b]| (p[a] - p[b]).norm_squared()).collect();
        Ok(EdgeLengthConstraints { edges, rest_sq })
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }
}

impl ConstraintSet for EdgeLengthConstraints {
    fn len(&self) -> usize {
        self.edges.len()
    }

    fn evaluate(&self, y: &[Vec3], out: &mut Vec<f64>) {
        for (&[a, b], l2) in self.edges.iter().zip(&self.rest_sq) {
            out.push((y[a] - y[b]).norm_squared() / l2 - 1.0);
        }
    }

    fn append_jacobian(&self, y: &[Vec3], jac: &mut BlockJacobian) {
        for (&[a, b], l2) in self.edges.iter().zip(&self.rest_sq) {
            let g = (y[a] - y[b]) * (2.0 / l2);
            jac.push_row([(a, g), (b, -g)]);
        }
    }

    fn add_geometric_stiffness(&self, _y: &[Vec3], lambda: &[f64], out: &mut GeometricStiffness) {
        for ((&[a, b], l2), &l) in self.edges.iter().zip(&self.rest_sq).zip(lambda) {
            if l == 0.0 {
                continue;
            }
            let h = Matrix3::identity() * (2.0 * l / l2);
            out.add(a, a, h);
            out.add(b, b, h);
            out.add(a, b, -h);
            out.add(b, a, -h);
        }
    }

    fn add_convex_stiffness(&self, y: &[Vec3], lambda: &[f64], out: &mut GeometricStiffness) {
        let clipped: Vec<f64> = lambda.iter().map(|l| l.max(0.0)).collect();
        self.add_geometric_stiffness(y, &clipped, out);
    }
}
