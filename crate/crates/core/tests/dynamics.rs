use isoplate::geometry::mesh;
use isoplate::{MaterialParams, RestSurface, Scene, Simulation, Vec3};

fn sheet_scene(points: usize) -> Scene {
    let m = mesh::irregular_square(points, 0.6, 11);
    let surface = RestSurface::new(m.embed(Vec3::zeros(), Vec3::x(), Vec3::z()), Some(m.triangles), 0.2).unwrap();
    Scene::new(surface, MaterialParams::new(1e-4, 0.2))
}

fn total_energy(sim: &Simulation) -> f64 {
    sim.kinetic_energy() + sim.bending.energy(&sim.state.positions)
}

#[test]
fn energy_does_not_grow_without_gravity() {
    let mut scene = sheet_scene(100);
    scene.gravity = Vec3::zeros();
    // a gentle roll about the x axis, pinned along its straight edge
    let radius = 1.5;
    let rolled: Vec<Vec3> = scene
        .surface
        .positions
        .iter()
        .map(|p| Vec3::new(p.x, radius * (1.0 - (p.z / radius).cos()), radius * (p.z / radius).sin()))
        .collect();
    scene.initial_positions = Some(rolled);
    let edge: Vec<usize> = (0..scene.surface.len()).filter(|&i| scene.surface.positions[i].z == 0.0).collect();
    assert!(edge.len() >= 2);
    scene.pin_in_place(&edge);
    let mut sim = Simulation::new(scene).unwrap();
    let start = total_energy(&sim);
    assert!(start > 0.0);
    let mut before = start;
    for step in 0..400 {
        sim.step().unwrap();
        let after = total_energy(&sim);
        assert!(after <= before * (1.0 + 1e-6), "step {step}: {before} -> {after}");
        before = after;
    }
    assert!(before < start);
}

#[test]
fn pinned_cloth_keeps_its_constraints() {
    let mut scene = sheet_scene(120);
    scene.duration = 1.0;
    let corners = [0, scene.surface.len() / 3];
    scene.pin_in_place(&corners);
    let tolerance = scene.projection.tolerance;
    let mut sim = Simulation::new(scene).unwrap();
    let (mut within, mut steps) = (0, 0);
    for _ in 0..1000 {
        let r = sim.step().unwrap();
        assert_eq!(r.contacts, 0);
        steps += 1;
        if r.final_abs_g <= tolerance {
            within += 1;
        }
    }
    assert!(within * 100 >= steps * 99, "{within} of {steps} steps within tolerance");
}

#[test]
fn free_sheet_conserves_momentum() {
    let mut scene = sheet_scene(80);
    scene.gravity = Vec3::zeros();
    scene.projection.tolerance = 1e-3;
    let mut sim = Simulation::new(scene).unwrap();
    let spin = Vec3::new(0.5, -1.0, 3.0);
    let drift = Vec3::new(0.1, 0.2, -0.3);
    sim.state.velocities = sim
        .state
        .positions
        .iter()
        .map(|p| drift + spin.cross(&(p - Vec3::new(0.3, 0.0, 0.3))))
        .collect();
    let mut before = sim.momentum();
    let mut projected = 0;
    for _ in 0..100 {
        let r = sim.step().unwrap();
        projected += usize::from(r.fp_iterations > 0);
        let after = sim.momentum();
        assert!((after - before).norm() <= 1e-9 * before.norm(), "{before} -> {after}");
        before = after;
    }
    assert!(projected > 0, "the spin never needed a projection");
}

#[test]
fn trajectories_are_bit_identical() {
    let run = || {
        let mut scene = sheet_scene(90);
        scene.pin_in_place(&[0]);
        scene.projection.use_geometric_stiffness = true;
        let mut sim = Simulation::new(scene).unwrap();
        for _ in 0..150 {
            sim.step().unwrap();
        }
        (sim.state.positions, sim.state.velocities)
    };
    assert_eq!(run(), run());
}
