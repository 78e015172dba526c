mod common;

use common::{random_vec, Sheet};
use isoplate::constraints::{ConstraintSystem, IsometryConstraints, LinearConstraints};
use isoplate::geometry::parameterization_from_uv;
use isoplate::kinematics::{precompute_mls, MlsOperator};
use isoplate::solver::{augmented_lagrangian_projection, fast_projection, kkt_residual, FastOutcome};
use isoplate::{Error, ProjectionConfig, Projector, Vec2, Vec3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(tolerance: f64) -> ProjectionConfig {
    ProjectionConfig {
        tolerance,
        ..ProjectionConfig::default()
    }
}

fn momentum_change(y: &[Vec3], y_pred: &[Vec3], masses: &[f64]) -> (Vec3, f64) {
    let mut sum = Vec3::zeros();
    let mut scale = 0.0;
    for ((a, b), m) in y.iter().zip(y_pred).zip(masses) {
        sum += (a - b) * *m;
        scale += (a - b).norm() * m;
    }
    (sum, scale)
}

/// Center and two members at unit distance along the axes.
fn triangle_patch() -> (ConstraintSystem, Vec<Vec3>, Vec<f64>) {
    let uv = [Vec2::zeros(), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
    let masses = vec![1.0; 3];
    let nbhd = parameterization_from_uv(&uv, 0, vec![1, 2]).unwrap();
    let operator = MlsOperator {
        entries: vec![precompute_mls(&nbhd, &masses).unwrap()],
    };
    let iso = IsometryConstraints::new(3, &[nbhd], &operator);
    let rest = uv.iter().map(|x| Vec3::new(x.x, x.y, 0.0)).collect();
    (ConstraintSystem::new(3).with(iso), rest, masses)
}

#[test]
fn feasible_input_is_returned_unchanged() {
    let sheet = Sheet::new(120, 1);
    let rest = sheet.rest().to_vec();
    let (y, report) = fast_projection(&rest, &sheet.system(), &sheet.masses, &config(0.1)).unwrap();
    assert_eq!(report.iterations_used, 0);
    assert!(!report.used_fallback);
    assert_eq!(y, rest);
    let (y, report) = augmented_lagrangian_projection(&rest, &sheet.system(), &sheet.masses, &config(1e-9)).unwrap();
    assert_eq!(report.iterations_used, 0);
    assert_eq!(y, rest);
}

#[test]
fn slight_stretch_converges_and_agrees_with_exact_projection() {
    let sheet = Sheet::new(200, 2);
    let system = sheet.system();
    let stretched: Vec<Vec3> = sheet.rest().iter().map(|p| p * 1.001).collect();
    let g0 = system.evaluate(&stretched).max_abs();
    assert!((g0 - 2.0 * (1.001f64.powi(2) - 1.0)).abs() < 1e-3, "g {g0}");

    let (_, report) = fast_projection(&stretched, &system, &sheet.masses, &config(0.1)).unwrap();
    assert_eq!(report.iterations_used, 0);

    let (fast, report) = fast_projection(&stretched, &system, &sheet.masses, &config(1e-3)).unwrap();
    assert!(report.iterations_used >= 1);
    assert!(!report.used_fallback);
    assert!(report.final_residual <= 1e-3);
    assert!(system.evaluate(&fast).max_abs() <= 1e-3);

    let (exact, report) = augmented_lagrangian_projection(&stretched, &system, &sheet.masses, &config(1e-3)).unwrap();
    assert!(report.final_residual <= 1e-3);
    let gap = fast.iter().zip(&exact).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(gap < 1e-3 * sheet.bbox_diagonal(), "gap {gap}");
}

#[test]
fn exact_projection_of_a_doubled_triangle_satisfies_kkt() {
    let (system, rest, masses) = triangle_patch();
    let y_pred: Vec<Vec3> = rest.iter().map(|p| p * 2.0).collect();
    // at the solution the two rows coincide and the determinant row is only
    // quadratic there, so convergence is sublinear; a stiff start keeps it short
    let cfg = ProjectionConfig {
        al_penalty: Some(1e3),
        ..config(1e-8)
    };
    let (y, report) = augmented_lagrangian_projection(&y_pred, &system, &masses, &cfg).unwrap();
    assert!(report.used_fallback);
    assert!(system.evaluate(&y).max_abs() <= 1e-8);
    let jac = system.jacobian(&y);
    let kkt = kkt_residual(&y, &y_pred, &masses, &jac, &report.multipliers);
    let momentum_norm = y_pred.iter().zip(&masses).map(|(p, m)| (p * *m).norm_squared()).sum::<f64>().sqrt();
    assert!(kkt < 1e-6 * momentum_norm, "kkt {kkt}");
    // the symmetric stretch shrinks back to the rest shape about the centroid
    let centroid = |v: &[Vec3]| v.iter().sum::<Vec3>() / 3.0;
    assert!((centroid(&y) - centroid(&y_pred)).norm() < 1e-9);
    assert!(((y[1] - y[0]).norm() - 1.0).abs() < 1e-6);
}

#[test]
fn infeasible_pins_exhaust_the_outer_iterations() {
    let (mut system, rest, masses) = triangle_patch();
    let mut pins = LinearConstraints::new();
    pins.pin(1, Vec3::new(5.0, 0.0, 0.0));
    pins.pin(2, Vec3::new(0.0, 5.0, 0.0));
    system.push(pins);
    let cfg = ProjectionConfig {
        tolerance: 1e-6,
        al_max_outer: 8,
        ..ProjectionConfig::default()
    };
    match augmented_lagrangian_projection(&rest, &system, &masses, &cfg) {
        Err(Error::MaxIterations { iterations, residual }) => {
            assert_eq!(iterations, 8);
            assert!(residual > 1e-6);
        }
        other => panic!("expected MaxIterations, got {other:?}"),
    }
}

#[test]
fn projections_conserve_linear_momentum() {
    let sheet = Sheet::new(150, 3);
    let system = sheet.system();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let y_pred: Vec<Vec3> = sheet.rest().iter().map(|p| p * 1.05 + random_vec(&mut rng, 0.005)).collect();
    for (name, result) in [
        ("fast", fast_projection(&y_pred, &system, &sheet.masses, &config(1e-3))),
        ("exact", augmented_lagrangian_projection(&y_pred, &system, &sheet.masses, &config(1e-6))),
    ] {
        let (y, _) = result.unwrap();
        let (sum, scale) = momentum_change(&y, &y_pred, &sheet.masses);
        assert!(sum.norm() <= 1e-10 * scale, "{name}: {} of {scale}", sum.norm());
    }
}

#[test]
fn stiffness_regularization_is_inert_without_multipliers() {
    let sheet = Sheet::new(150, 4);
    let system = sheet.system();
    let y_pred: Vec<Vec3> = sheet.rest().iter().map(|p| Vec3::new(p.x * 1.02, p.y, 0.1 * p.x * p.x)).collect();
    let one_step = |regularized: bool| {
        let cfg = ProjectionConfig {
            tolerance: 1e-12,
            max_fp_iters: 1,
            use_geometric_stiffness: regularized,
            warm_start: false,
            ..ProjectionConfig::default()
        };
        match Projector::new(cfg).fast(&y_pred, &system, &sheet.masses).unwrap() {
            FastOutcome::Stalled(stall) => stall.positions,
            FastOutcome::Converged(..) => panic!("one iteration cannot reach 1e-12"),
        }
    };
    assert_eq!(one_step(false), one_step(true));
}

#[test]
fn projection_is_deterministic() {
    let sheet = Sheet::new(150, 5);
    let system = sheet.system();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let y_pred: Vec<Vec3> = sheet.rest().iter().map(|p| p + random_vec(&mut rng, 0.01)).collect();
    let cfg = ProjectionConfig {
        use_geometric_stiffness: true,
        ..config(1e-4)
    };
    let a = fast_projection(&y_pred, &system, &sheet.masses, &cfg).unwrap();
    let b = fast_projection(&y_pred, &system, &sheet.masses, &cfg).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1.multipliers, b.1.multipliers);
}

#[test]
fn mismatched_inputs_are_rejected() {
    let sheet = Sheet::new(40, 1);
    let system = sheet.system();
    let rest = sheet.rest();
    assert!(matches!(
        fast_projection(&rest[1..], &system, &sheet.masses[1..], &config(0.1)),
        Err(Error::Validation(_))
    ));
    let mut bad = rest.to_vec();
    bad[3].x = f64::NAN;
    assert!(fast_projection(&bad, &system, &sheet.masses, &config(0.1)).is_err());
    assert!(config(-1.0).validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fallback_triggers_exactly_on_a_stall(stretch in 1.0f64..1.6, noise in 0.0f64..0.02, seed in any::<u64>()) {
        let sheet = Sheet::new(60, 6);
        let system = sheet.system();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y_pred: Vec<Vec3> = sheet.rest().iter().map(|p| p * stretch + random_vec(&mut rng, noise)).collect();
        let cfg = config(1e-3);
        // run length of non-decreasing residuals ending at each iteration
        let runs = |res: &[f64]| -> Vec<usize> {
            let mut out = vec![0];
            for w in res.windows(2) {
                let last = *out.last().unwrap();
                out.push(if w[1] >= w[0] { last + 1 } else { 0 });
            }
            out
        };
        match Projector::new(cfg.clone()).fast(&y_pred, &system, &sheet.masses).unwrap() {
            FastOutcome::Converged(_, report) => {
                prop_assert!(runs(&report.fp_residuals).iter().all(|&r| r < cfg.stall_iters));
                prop_assert!(report.iterations_used <= cfg.max_fp_iters);
            }
            FastOutcome::Stalled(stall) => {
                let r = runs(&stall.residuals);
                let (last, earlier) = r.split_last().unwrap();
                prop_assert!(earlier.iter().all(|&k| k < cfg.stall_iters));
                prop_assert!(*last == cfg.stall_iters || stall.residuals.len() == cfg.max_fp_iters + 1);
            }
        }
    }
}
