//! Fixtures shared by the benchmarks.

use isoplate::constraints::{ConstraintSystem, IsometryConstraints};
use isoplate::geometry::{build_neighborhoods, compute_lumped_masses, mesh, Neighborhood};
use isoplate::kinematics::precompute_all;
use isoplate::suite::pinned_sheet;
use isoplate::dynamics::ConstraintModel;
use isoplate::{NeighborhoodStrategy, RestSurface, Simulation, Vec3};

/// A flat irregular unit sheet with its one-ring neighborhoods.
pub struct SheetFixture {
    pub surface: RestSurface,
    pub masses: Vec<f64>,
    pub neighborhoods: Vec<Neighborhood>,
    pub system: ConstraintSystem,
}

impl SheetFixture {
    pub fn new(points: usize) -> SheetFixture {
        let m = mesh::irregular_square(points, 1.0, 1);
        let surface = RestSurface::new(m.embed_xy(), Some(m.triangles), 0.2).expect("valid sheet");
        let masses = compute_lumped_masses(&surface).expect("masses").masses;
        let neighborhoods = build_neighborhoods(&surface, NeighborhoodStrategy::GraphDistance(1)).expect("neighborhoods");
        let ops = precompute_all(&neighborhoods, &masses).expect("operator");
        let system = ConstraintSystem::new(points).with(IsometryConstraints::new(points, &neighborhoods, &ops));
        SheetFixture {
            surface,
            masses,
            neighborhoods,
            system,
        }
    }

    /// The sheet bent into a bowl and stretched slightly, as a predicted
    /// state that needs a few projection iterations.
    pub fn predicted(&self) -> Vec<Vec3> {
        self.surface
            .positions
            .iter()
            .map(|p| {
                let (u, v) = (p.x - 0.5, p.y - 0.5);
                Vec3::new(1.02 * p.x, p.y, 0.3 * (u * u + v * v))
            })
            .collect()
    }
}

/// The two-corner pinned sheet at tolerance 0.1, advanced `warmup` steps so
/// it is in motion.
pub fn moving_sheet(points: usize, warmup: usize) -> Simulation {
    let (scene, _) = pinned_sheet(points, 0.1, ConstraintModel::Isometry).expect("scene");
    let mut sim = Simulation::new(scene).expect("simulation");
    for _ in 0..warmup {
        sim.step().expect("step");
    }
    sim
}
