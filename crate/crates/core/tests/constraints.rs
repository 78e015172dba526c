mod common;

use common::{fd_jacobian, random_rotation, random_vec, relative, Sheet};
use isoplate::constraints::{ConstraintSystem, EdgeLengthConstraints, LinearConstraints};
use isoplate::diagnostics::jacobian_rank_probe;
use isoplate::suite::{random_patch, random_state};
use isoplate::Vec3;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn patch_system(seed: u64) -> (ConstraintSystem, Vec<Vec3>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patch = random_patch(&mut rng);
    let y = random_state(&patch, &mut rng);
    let system = ConstraintSystem::new(y.len()).with(patch.constraints);
    (system, y, rng)
}

/// `K(λ) v` against the central difference of `J(Y)ᵀ λ` along `v`.
fn stiffness_fd_error(system: &ConstraintSystem, y: &[Vec3], lambda: &[f64], v: &[Vec3]) -> f64 {
    let h = 1e-6;
    let shifted = |s: f64| -> Vec<Vec3> { y.iter().zip(v).map(|(p, d)| p + d * s).collect() };
    let plus = system.jacobian(&shifted(h)).tr_mul(lambda);
    let minus = system.jacobian(&shifted(-h)).tr_mul(lambda);
    let fd: Vec<Vec3> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect();
    let kv = system.geometric_stiffness(y, lambda).mul(v);
    let diff: f64 = kv.iter().zip(&fd).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
    let scale: f64 = fd.iter().map(|a| a.norm_squared()).sum::<f64>().sqrt();
    diff / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn isometry_jacobian_matches_central_differences(seed in any::<u64>()) {
        let (system, y, _) = patch_system(seed);
        let err = relative(&fd_jacobian(&system, &y, 1e-6), &system.jacobian(&y).to_dense());
        prop_assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn geometric_stiffness_is_the_jacobian_derivative(seed in any::<u64>()) {
        let (system, y, mut rng) = patch_system(seed);
        let lambda: Vec<f64> = (0..2).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let v: Vec<Vec3> = y.iter().map(|_| random_vec(&mut rng, 1.0)).collect();
        let err = stiffness_fd_error(&system, &y, &lambda, &v);
        prop_assert!(err < 1e-6, "relative error {err}");
        let k = system.geometric_stiffness(&y, &lambda).to_dense();
        prop_assert!((&k - k.transpose()).norm() <= 1e-12 * k.norm());
    }

    #[test]
    fn convex_stiffness_is_positive_semidefinite(seed in any::<u64>()) {
        let (system, y, mut rng) = patch_system(seed);
        let lambda: Vec<f64> = (0..2).map(|_| rand::Rng::random_range(&mut rng, -10.0..10.0)).collect();
        let k = system.convex_stiffness(&y, &lambda).to_dense();
        prop_assert!((&k - k.transpose()).norm() <= 1e-12 * k.norm().max(1e-300));
        let eig = k.symmetric_eigen().eigenvalues;
        let top = eig.amax();
        prop_assert!(eig.min() >= -1e-10 * top, "min eigenvalue {} of {}", eig.min(), top);
    }

    #[test]
    fn rigid_motion_rotates_the_jacobian(seed in any::<u64>()) {
        let (system, y, mut rng) = patch_system(seed);
        let rot = random_rotation(&mut rng);
        let t = random_vec(&mut rng, 1.0);
        let moved: Vec<Vec3> = y.iter().map(|p| rot * p + t).collect();
        let g = system.evaluate(&y).0;
        let gm = system.evaluate(&moved).0;
        for (a, b) in g.iter().zip(&gm) {
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        let j = system.jacobian(&y).to_dense();
        let jm = system.jacobian(&moved).to_dense();
        let mut block_rt = DMatrix::zeros(3 * y.len(), 3 * y.len());
        for p in 0..y.len() {
            block_rt.view_mut((3 * p, 3 * p), (3, 3)).copy_from(&rot.transpose());
        }
        prop_assert!((&jm - &j * block_rt).norm() <= 1e-12 * j.norm());
    }

    #[test]
    fn both_gradients_are_nonzero_at_isometric_states(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let patch = random_patch(&mut rng);
        let rot = random_rotation(&mut rng);
        let t = random_vec(&mut rng, 1.0);
        let y: Vec<Vec3> = patch.uv.iter().map(|x| rot * Vec3::new(x.x, x.y, 0.0) + t).collect();
        let system = ConstraintSystem::new(y.len()).with(patch.constraints);
        prop_assert!(system.evaluate(&y).max_abs() <= 1e-12);
        let jac = system.jacobian(&y);
        for r in 0..2 {
            let norm: f64 = jac.row(r).1.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt();
            prop_assert!(norm > 1.0, "row {r} norm {norm}");
        }
    }

    #[test]
    fn edge_constraints_match_central_differences(seed in any::<u64>()) {
        let sheet = Sheet::new(30, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<Vec3> = sheet.rest().iter().map(|p| p + random_vec(&mut rng, 0.02)).collect();
        let system = ConstraintSystem::new(y.len()).with(EdgeLengthConstraints::from_surface(&sheet.surface).unwrap());
        let err = relative(&fd_jacobian(&system, &y, 1e-6), &system.jacobian(&y).to_dense());
        prop_assert!(err < 1e-6, "relative error {err}");
        let lambda: Vec<f64> = (0..system.evaluate(&y).0.len()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let v: Vec<Vec3> = y.iter().map(|_| random_vec(&mut rng, 1.0)).collect();
        let err = stiffness_fd_error(&system, &y, &lambda, &v);
        prop_assert!(err < 1e-6, "stiffness relative error {err}");
    }
}

#[test]
fn edge_constraints_vanish_at_rest() {
    let sheet = Sheet::new(40, 1);
    let edges = EdgeLengthConstraints::from_surface(&sheet.surface).unwrap();
    let system = ConstraintSystem::new(sheet.surface.len()).with(edges);
    assert_eq!(system.evaluate(sheet.rest()).max_abs(), 0.0);
}

#[test]
fn pins_and_coupling_are_linear() {
    let sheet = Sheet::new(20, 1);
    let mut linear = LinearConstraints::new();
    linear.pin(3, Vec3::new(1.0, 2.0, 3.0));
    linear.couple(vec![(0, 0.25), (1, 0.75)], Vec3::zeros());
    let system = ConstraintSystem::new(20).with(linear);
    let y = sheet.rest().to_vec();
    let g = system.evaluate(&y).0;
    assert_eq!(g.len(), 6);
    assert_eq!(g[0], y[3].x - 1.0);
    assert_eq!(g[5], 0.25 * y[0].z + 0.75 * y[1].z);
    let j = system.jacobian(&y).to_dense();
    assert!(relative(&fd_jacobian(&system, &y, 1e-3), &j) < 1e-12);
    assert!(system.geometric_stiffness(&y, &[1.0; 6]).is_zero());
    assert!(!system.translation_invariant());
}

#[test]
fn flat_rest_rows_pair_up() {
    let sheet = Sheet::new(80, 2);
    let probe = jacobian_rank_probe(sheet.rest(), &sheet.isometry);
    let n = sheet.surface.len();
    assert!(probe.max_paired_row_gap <= 1e-10, "gap {}", probe.max_paired_row_gap);
    assert!(probe.rank.unwrap() <= n, "rank {:?} of {n} neighborhoods", probe.rank);
}
