//! Time stepping.
//!
//! One step of length `h`:
//!
//! 1. linearly implicit velocity solve
//!    `(M (1 + h γ) + h² K) V⁺ = M V + h (F_ext - K Y)`,
//! 2. prediction `Y* = Y + h V⁺`,
//! 3. projection of `Y*` onto the constraints (isometry or edge lengths,
//!    pins, coupling),
//! 4. collision correction,
//! 5. `V = (Y_new - Y) / h`.
//!
//! `K` is the constant bending Hessian and `γ` an optional mass-proportional
//! damping rate (zero by default).

mod bending;
mod collision;

use std::time::{Duration, Instant};

pub use bending::{bending_force_and_energy, BendingSystem};
pub use collision::{apply_collisions, Collider, CONTACT_OFFSET};

use crate::constraints::{
    max_abs, ConstraintSystem, EdgeLengthConstraints, IsometryConstraints, LinearConstraints,
};
use crate::diagnostics::max_edge_strain;
use crate::error::{Error, Result};
use crate::geometry::{
    assemble_laplacian, build_neighborhoods, compute_lumped_masses, NeighborhoodStrategy, RestSurface, Vec3,
};
use crate::kinematics::precompute_all;
use crate::solver::{ProjectionConfig, Projector};

/// Positions (m), velocities (m/s) and time (s).
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub time: f64,
}

impl SimState {
    pub fn at_rest(positions: Vec<Vec3>) -> Self {
        let n = positions.len();
        SimState {
            positions,
            velocities: vec![Vec3::zeros(); n],
            time: 0.0,
        }
    }
}

/// Plate material.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialParams {
    /// Bending stiffness `k` of the quadratic bending energy.
    pub bending_stiffness: f64,
    /// kg/m².
    pub area_density: f64,
    /// `(E, t, ν)` when `k` was derived from elastic constants.
    pub elastic: Option<(f64, f64, f64)>,
}

impl MaterialParams {
    pub fn new(bending_stiffness: f64, area_density: f64) -> Self {
        MaterialParams {
            bending_stiffness,
            area_density,
            elastic: None,
        }
    }

    /// `k = E t³ / (12 (1 - ν²))`.
    pub fn from_elastic(youngs_modulus: f64, thickness: f64, poisson: f64, area_density: f64) -> Self {
        let k = youngs_modulus * thickness.powi(3) / (12.0 * (1.0 - poisson * poisson));
        MaterialParams {
            bending_stiffness: k,
            area_density,
            elastic: Some((youngs_modulus, thickness, poisson)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bending_stiffness > 0.0 && self.bending_stiffness.is_finite()) {
            return Err(Error::Validation("material.k must be > 0".into()));
        }
        if !(self.area_density > 0.0 && self.area_density.is_finite()) {
            return Err(Error::Validation("material.area_density must be > 0".into()));
        }
        if let Some((e, t, nu)) = self.elastic {
            if !(e > 0.0) || !(t > 0.0) || !(-1.0..0.5).contains(&nu) {
                return Err(Error::Validation("material needs E > 0, t > 0 and -1 <= nu < 0.5".into()));
            }
        }
        Ok(())
    }
}

/// Which membrane constraints the simulation enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstraintModel {
    /// Averaged isometry constraints, two per neighborhood.
    #[default]
    Isometry,
    /// One length constraint per mesh edge.
    EdgeLength,
}

/// Everything needed to build a [`Simulation`].
#[derive(Debug, Clone)]
pub struct Scene {
    pub surface: RestSurface,
    /// Starting positions; the rest positions when absent.
    pub initial_positions: Option<Vec<Vec3>>,
    pub neighborhoods: NeighborhoodStrategy,
    pub material: MaterialParams,
    /// m/s².
    pub gravity: Vec3,
    pub pins: Vec<(usize, Vec3)>,
    /// Weighted position sums held at a target.
    pub coupling: Vec<(Vec<(usize, f64)>, Vec3)>,
    /// Constant point forces (N).
    pub loads: Vec<(usize, Vec3)>,
    pub colliders: Vec<Collider>,
    pub dt: f64,
    /// Simulated time (s).
    pub duration: f64,
    /// Mass-proportional damping rate (1/s).
    pub damping: f64,
    pub projection: ProjectionConfig,
    /// Steps between written frames.
    pub frame_stride: usize,
    /// Project once more after collision correction.
    pub reproject_after_collision: bool,
    pub model: ConstraintModel,
}

impl Scene {
    /// Defaults: dt 1e-3 s, tolerance 0.1, gravity 9.81 m/s² along -y, no
    /// damping, one-hop graph neighborhoods.
    pub fn new(surface: RestSurface, material: MaterialParams) -> Self {
        Scene {
            surface,
            initial_positions: None,
            neighborhoods: NeighborhoodStrategy::GraphDistance(1),
            material,
            gravity: Vec3::new(0.0, -9.81, 0.0),
            pins: Vec::new(),
            coupling: Vec::new(),
            loads: Vec::new(),
            colliders: Vec::new(),
            dt: 1e-3,
            duration: 1.0,
            damping: 0.0,
            projection: ProjectionConfig::default(),
            frame_stride: 100,
            reproject_after_collision: false,
            model: ConstraintModel::Isometry,
        }
    }

    /// Pins every listed point at its starting position.
    pub fn pin_in_place(&mut self, points: &[usize]) {
        for &p in points {
            let target = self.initial_positions.as_ref().unwrap_or(&self.surface.positions)[p];
            self.pins.push((p, target));
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.surface.len();
        self.surface.validate()?;
        self.material.validate()?;
        self.projection.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation("sim.dt must be > 0".into()));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::Validation("sim.duration must be >= 0".into()));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::Validation("sim.damping must be >= 0".into()));
        }
        if !self.gravity.iter().all(|c| c.is_finite()) {
            return Err(Error::Validation("sim.gravity must be finite".into()));
        }
        if self.frame_stride == 0 {
            return Err(Error::Validation("output.frame_stride must be >= 1".into()));
        }
        if let Some(y) = &self.initial_positions {
            if y.len() != n || y.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
                return Err(Error::Validation("initial positions must be finite, one per point".into()));
            }
        }
        for (p, _) in self.pins.iter().chain(&self.loads) {
            if *p >= n {
                return Err(Error::Validation(format!("point index {p} out of range (N = {n})")));
            }
        }
        for (w, _) in &self.coupling {
            if w.is_empty() || w.iter().any(|(p, _)| *p >= n) {
                return Err(Error::Validation("coupling weights must name valid points".into()));
            }
        }
        for c in &self.colliders {
            c.validate()?;
        }
        Ok(())
    }
}

/// Per-step measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    pub fp_iterations: usize,
    pub used_fallback: bool,
    /// `‖g‖∞` after projection.
    pub max_abs_g: f64,
    /// `‖g‖∞` at the end of the step, after collision correction.
    pub final_abs_g: f64,
    pub bending_energy: f64,
    pub kinetic_energy: f64,
    /// Largest relative edge length change.
    pub max_edge_strain: f64,
    /// `‖Σ m v‖`.
    pub momentum: f64,
    pub contacts: usize,
}

/// A scene with all precomputation done, and its current state.
#[derive(Debug)]
pub struct Simulation {
    pub scene: Scene,
    pub state: SimState,
    pub masses: Vec<f64>,
    pub bending: BendingSystem,
    pub constraints: ConstraintSystem,
    pub projector: Projector,
    external: Vec<Vec3>,
    edges: Vec<[usize; 2]>,
    step: usize,
    /// Wall time spent on precomputation.
    pub setup_time: Duration,
}

impl Simulation {
    pub fn new(scene: Scene) -> Result<Self> {
        let start = Instant::now();
        scene.validate()?;
        let n = scene.surface.len();
        let mut surface = scene.surface.clone();
        surface.density = scene.material.area_density;
        let masses = compute_lumped_masses(&surface)?.masses;
        let laplacian = assemble_laplacian(&surface)?;
        let bending = BendingSystem::new(
            &laplacian,
            &masses,
            scene.material.bending_stiffness,
            scene.dt,
            scene.damping,
        )?;
        let mut constraints = ConstraintSystem::new(n);
        match scene.model {
            ConstraintModel::Isometry => {
                let nbhds = build_neighborhoods(&surface, scene.neighborhoods)?;
                let ops = precompute_all(&nbhds, &masses)?;
                constraints.push(IsometryConstraints::new(n, &nbhds, &ops));
            }
            ConstraintModel::EdgeLength => constraints.push(EdgeLengthConstraints::from_surface(&surface)?),
        }
        let mut linear = LinearConstraints::new();
        for (p, target) in &scene.pins {
            linear.pin(*p, *target);
        }
        for (w, target) in &scene.coupling {
            linear.couple(w.clone(), *target);
        }
        constraints.push(linear);

        let mut external: Vec<Vec3> = masses.iter().map(|m| scene.gravity * *m).collect();
        for (p, f) in &scene.loads {
            external[*p] += f;
        }
        let edges = surface.edges()?;
        let state = SimState::at_rest(scene.initial_positions.clone().unwrap_or_else(|| surface.positions.clone()));
        let projector = Projector::new(scene.projection.clone());
        Ok(Simulation {
            scene,
            state,
            masses,
            bending,
            constraints,
            projector,
            external,
            edges,
            step: 0,
            setup_time: start.elapsed(),
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.state
            .velocities
            .iter()
            .zip(&self.masses)
            .map(|(v, m)| 0.5 * m * v.norm_squared())
            .sum()
    }

    pub fn momentum(&self) -> Vec3 {
        self.state
            .velocities
            .iter()
            .zip(&self.masses)
            .fold(Vec3::zeros(), |acc, (v, m)| acc + v * *m)
    }

    /// Measurements of the current state, as reported after a step.
    pub fn report(&self, fp_iterations: usize, used_fallback: bool, max_abs_g: f64, contacts: usize) -> StepReport {
        let y = &self.state.positions;
        StepReport {
            step: self.step,
            time: self.state.time,
            fp_iterations,
            used_fallback,
            max_abs_g,
            final_abs_g: max_abs(&self.constraints.evaluate(y).0),
            bending_energy: self.bending.energy(y),
            kinetic_energy: self.kinetic_energy(),
            max_edge_strain: max_edge_strain(y, &self.scene.surface.positions, &self.edges),
            momentum: self.momentum().norm(),
            contacts,
        }
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let h = self.scene.dt;
        let y = &self.state.positions;
        let v = &self.state.velocities;
        let bend = self.bending.force(y);
        let rhs: Vec<Vec3> = v
            .iter()
            .zip(&self.masses)
            .zip(bend.iter().zip(&self.external))
            .map(|((v, m), (fb, fe))| v * *m + (fe + fb) * h)
            .collect();
        let v_plus = self.bending.solve(&rhs);
        let predicted: Vec<Vec3> = y.iter().zip(&v_plus).map(|(p, v)| p + v * h).collect();

        let (mut projected, report) = self.projector.project(&predicted, &self.constraints, &self.masses)?;
        let mut iterations = report.iterations_used;
        let mut used_fallback = report.used_fallback;
        let max_abs_g = report.final_residual;

        let mut velocities: Vec<Vec3> = projected.iter().zip(y).map(|(a, b)| (a - b) / h).collect();
        let mut contacts = apply_collisions(&mut projected, &mut velocities, &self.scene.colliders);
        if contacts > 0 && self.scene.reproject_after_collision {
            let (again, second) = self.projector.project(&projected, &self.constraints, &self.masses)?;
            iterations += second.iterations_used;
            used_fallback |= second.used_fallback;
            for ((vel, a), b) in velocities.iter_mut().zip(&again).zip(&projected) {
                *vel += (a - b) / h;
            }
            projected = again;
            contacts = apply_collisions(&mut projected, &mut velocities, &self.scene.colliders);
        }

        self.state.positions = projected;
        self.state.velocities = velocities;
        self.state.time += h;
        self.step += 1;
        Ok(self.report(iterations, used_fallback, max_abs_g, contacts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh;

    fn sheet_scene() -> Scene {
        let m = mesh::irregular_square(60, 0.5, 7);
        let surface = RestSurface::new(m.embed_xy(), Some(m.triangles.clone()), 0.2).unwrap();
        Scene::new(surface, MaterialParams::new(1e-4, 0.2))
    }

    #[test]
    fn elastic_constants() {
        let m = MaterialParams::from_elastic(2e9, 1e-4, 0.3, 0.1);
        let expected = 2e9 * 1e-12 / (12.0 * 0.91);
        assert!((m.bending_stiffness - expected).abs() <= 1e-12 * expected);
        m.validate().unwrap();
    }

    #[test]
    fn rest_state_without_forces_is_a_fixed_point() {
        let mut scene = sheet_scene();
        scene.gravity = Vec3::zeros();
        let mut sim = Simulation::new(scene).unwrap();
        let start = sim.state.positions.clone();
        for _ in 0..5 {
            let r = sim.step().unwrap();
            assert_eq!(r.fp_iterations, 0);
        }
        for (a, b) in start.iter().zip(&sim.state.positions) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn free_fall_follows_the_ballistic_trajectory() {
        let mut scene = sheet_scene();
        scene.gravity = Vec3::new(0.3, -9.81, 0.1);
        let h = scene.dt;
        let g = scene.gravity;
        let mut sim = Simulation::new(scene).unwrap();
        let total: f64 = sim.masses.iter().sum();
        let com = |s: &Simulation| s.state.positions.iter().zip(&s.masses).fold(Vec3::zeros(), |a, (p, m)| a + p * *m) / total;
        let c0 = com(&sim);
        let steps = 20;
        for _ in 0..steps {
            let r = sim.step().unwrap();
            assert!(r.max_abs_g <= 0.1);
        }
        let n = steps as f64;
        let v = sim.momentum() / total;
        assert!((v - g * (n * h)).norm() <= 1e-9 * (g * n * h).norm());
        // implicit Euler: x_n = x_0 + h² g n(n+1)/2
        let expected = c0 + g * (h * h * n * (n + 1.0) / 2.0);
        assert!((com(&sim) - expected).norm() < 1e-12);
    }

    #[test]
    fn invalid_scenes() {
        let mut s = sheet_scene();
        s.dt = -1.0;
        assert!(matches!(s.validate(), Err(Error::Validation(m)) if m == "sim.dt must be > 0"));
        let mut s = sheet_scene();
        s.pins.push((10_000, Vec3::zeros()));
        assert!(s.validate().is_err());
    }
}
