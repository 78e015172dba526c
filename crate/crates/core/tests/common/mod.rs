#![allow(dead_code)]

use isoplate::constraints::{ConstraintSystem, IsometryConstraints};
use isoplate::geometry::{build_neighborhoods, compute_lumped_masses, mesh};
use isoplate::kinematics::precompute_all;
use isoplate::{NeighborhoodStrategy, RestSurface, Vec3};
use nalgebra::{DMatrix, Matrix3, UnitQuaternion, Vector3};
use rand::Rng;

/// A flat irregular unit sheet in the xy plane with one-ring neighborhoods.
pub struct Sheet {
    pub surface: RestSurface,
    pub masses: Vec<f64>,
    pub isometry: IsometryConstraints,
}

impl Sheet {
    pub fn new(points: usize, seed: u64) -> Sheet {
        let m = mesh::irregular_square(points, 1.0, seed);
        let surface = RestSurface::new(m.embed_xy(), Some(m.triangles.clone()), 0.2).unwrap();
        let masses = compute_lumped_masses(&surface).unwrap().masses;
        let nbhds = build_neighborhoods(&surface, NeighborhoodStrategy::GraphDistance(1)).unwrap();
        let ops = precompute_all(&nbhds, &masses).unwrap();
        let isometry = IsometryConstraints::new(points, &nbhds, &ops);
        Sheet {
            surface,
            masses,
            isometry,
        }
    }

    pub fn rest(&self) -> &[Vec3] {
        &self.surface.positions
    }

    pub fn system(&self) -> ConstraintSystem {
        ConstraintSystem::new(self.surface.len()).with(self.isometry.clone())
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(self.rest())
    }
}

pub fn bbox_diagonal(y: &[Vec3]) -> f64 {
    let lo = y.iter().fold(Vec3::repeat(f64::INFINITY), |a, p| a.inf(p));
    let hi = y.iter().fold(Vec3::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
    (hi - lo).norm()
}

pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    UnitQuaternion::from_scaled_axis(axis.normalize() * angle).to_rotation_matrix().into_inner()
}

pub fn random_vec(rng: &mut impl Rng, scale: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

/// Central-difference Jacobian of the stacked constraint values.
pub fn fd_jacobian(system: &ConstraintSystem, y: &[Vec3], h: f64) -> DMatrix<f64> {
    let rows = system.evaluate(y).0.len();
    let mut out = DMatrix::zeros(rows, 3 * y.len());
    let mut probe = y.to_vec();
    for p in 0..y.len() {
        for axis in 0..3 {
            probe[p][axis] = y[p][axis] + h;
            let plus = system.evaluate(&probe).0;
            probe[p][axis] = y[p][axis] - h;
            let minus = system.evaluate(&probe).0;
            probe[p][axis] = y[p][axis];
            for r in 0..rows {
                out[(r, 3 * p + axis)] = (plus[r] - minus[r]) / (2.0 * h);
            }
        }
    }
    out
}

pub fn relative(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
