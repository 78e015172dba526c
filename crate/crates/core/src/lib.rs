//! Simulation of inextensible thin plates with meshless isometry constraints.
//!
//! Membrane forces are replaced by hard constraints on a strain tensor that is
//! averaged over point neighborhoods by moving least squares. Because the
//! averaged constraints are two per sample point rather than one per mesh
//! edge, they do not lock: the plate keeps enough freedom to bend
//! isometrically. Bending uses a quadratic energy with a constant, prefactored
//! Hessian; constraints are enforced every step with Fast Projections and an
//! augmented Lagrangian fallback.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`]: sample points, neighborhoods, flat local coordinates,
//!   lumped masses and the cotangent Laplacian.
//! * [`kinematics`]: the moving least squares deformation gradient and strain.
//! * [`constraints`]: isometry, edge-length and linear equality constraints
//!   with Jacobians and Hessians.
//! * [`solver`]: constraint projection.
//! * [`dynamics`]: time stepping, bending and collisions.
//! * [`scene_io`]: scene files, OBJ/CSV output and run drivers.
//! * [`diagnostics`]: strain, distance and sag metrics and the Jacobian rank probe.
//! * [`suite`]: the reference experiments used as acceptance checks.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
#[macro_use]
mod testutil;

pub mod constraints;
pub mod diagnostics;
pub mod dynamics;
mod error;
pub mod geometry;
pub mod kinematics;
pub mod scene_io;
pub mod solver;
pub mod suite;

pub use constraints::{
    BlockJacobian, ConstraintSet, ConstraintSystem, ConstraintValues, EdgeLengthConstraints, GeometricStiffness,
    IsometryConstraints, LinearConstraints,
};
pub use dynamics::{BendingSystem, Collider, MaterialParams, Scene, SimState, Simulation, StepReport};
pub use error::{Error, Result};
pub use geometry::{LumpedMasses, Neighborhood, NeighborhoodStrategy, RestSurface, Vec2, Vec3};
pub use kinematics::{DeformationGradient, MlsEntry, MlsOperator, StrainTensor};
pub use solver::{ProjectionConfig, ProjectionReport, Projector};
