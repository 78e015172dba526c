//! Reference experiments with pass/fail checks.
//!
//! Two scenes carry the dynamic checks. The pinned sheet is a 1 m square,
//! initially horizontal, held at two diagonally opposite corners; it folds
//! down along the pin diagonal under gravity. Its sag is the largest drop of
//! any point below the pin segment. The shear flag hangs in a vertical plane
//! from a pinned pole edge with a point load on its free bottom corner.
//!
//! The remaining checks are static: finite-difference gradients, invariances,
//! Jacobian rank and the exact-projection fallback.

use std::fmt;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Rotation3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::{max_abs, ConstraintSet, IsometryConstraints};
use crate::diagnostics::{distance_change_field, jacobian_rank_probe, sag_metric};
use crate::dynamics::ConstraintModel;
use crate::error::Result;
use crate::geometry::{
    assemble_laplacian, build_neighborhoods, compute_lumped_masses, mesh, parameterization_from_uv,
    NeighborhoodStrategy, RestSurface, Vec2, Vec3,
};
use crate::kinematics::{precompute_all, precompute_mls, MlsOperator};
use crate::solver::{FastOutcome, ProjectionConfig, Projector};
use crate::{BendingSystem, ConstraintSystem, MaterialParams, Scene, Simulation};

pub const COARSE_POINTS: usize = 662;
pub const FINE_POINTS: usize = 1656;
const MESH_SEED: u64 = 1;
const AREA_DENSITY: f64 = 0.2;
const BENDING_STIFFNESS: f64 = 1e-4;
/// Mass-proportional damping so the scenes settle within a few seconds.
const SETTLE_DAMPING: f64 = 2.0;
const SHEET_SECONDS: f64 = 5.0;
const FLAG_SECONDS: f64 = 3.0;
const FLAG_TOLERANCE: f64 = 1e-3;
/// Newtons on the flag's free corner, about half the flag's weight.
const FLAG_LOAD: f64 = 1.0;

/// One checked criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} [{}] {}: {}", self.id, self.name, self.detail)
    }
}

fn outcome(id: usize, name: &'static str, passed: bool, detail: String) -> Outcome {
    Outcome {
        id,
        name,
        passed,
        detail,
    }
}

fn failed(id: usize, name: &'static str, err: impl fmt::Display) -> Outcome {
    outcome(id, name, false, format!("error: {err}"))
}

/// The pinned sheet and its two pinned corners.
pub fn pinned_sheet(points: usize, tolerance: f64, model: ConstraintModel) -> Result<(Scene, [usize; 2])> {
    let m = mesh::irregular_square(points, 1.0, MESH_SEED);
    let positions = m.embed(Vec3::zeros(), Vec3::x(), Vec3::z());
    let surface = RestSurface::new(positions, Some(m.triangles.clone()), AREA_DENSITY)?;
    let mut scene = Scene::new(surface, MaterialParams::new(BENDING_STIFFNESS, AREA_DENSITY));
    scene.projection.tolerance = tolerance;
    scene.damping = SETTLE_DAMPING;
    scene.duration = SHEET_SECONDS;
    scene.model = model;
    let pins = [m.nearest(Vec2::new(0.0, 0.0)), m.nearest(Vec2::new(1.0, 1.0))];
    scene.pin_in_place(&pins);
    Ok((scene, pins))
}

/// Summary of a pinned sheet run.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetRun {
    pub points: usize,
    pub tolerance: f64,
    pub model: ConstraintModel,
    pub sag: f64,
    pub pin_separation: f64,
    /// Largest post-projection `‖g‖∞` over all steps.
    pub max_abs_g: f64,
    pub median_fp_iterations: usize,
    pub fallback_steps: usize,
    pub wall: Duration,
}

pub fn run_pinned_sheet(points: usize, tolerance: f64, model: ConstraintModel) -> Result<SheetRun> {
    let start = Instant::now();
    let (scene, [a, b]) = pinned_sheet(points, tolerance, model)?;
    let steps = scene.steps();
    let mut sim = Simulation::new(scene)?;
    let mut iterations = Vec::with_capacity(steps);
    let mut max_g = 0.0f64;
    let mut fallbacks = 0;
    for _ in 0..steps {
        let r = sim.step()?;
        iterations.push(r.fp_iterations);
        max_g = max_g.max(r.max_abs_g);
        fallbacks += usize::from(r.used_fallback);
    }
    iterations.sort_unstable();
    let y = &sim.state.positions;
    Ok(SheetRun {
        points,
        tolerance,
        model,
        sag: sag_metric(y, a, b),
        pin_separation: (sim.scene.surface.positions[a] - sim.scene.surface.positions[b]).norm(),
        max_abs_g: max_g,
        median_fp_iterations: iterations[iterations.len() / 2],
        fallback_steps: fallbacks,
        wall: start.elapsed(),
    })
}

/// The shear flag and the anchor corner of its distance field.
pub fn shear_flag(points: usize, tolerance: f64) -> Result<(Scene, usize)> {
    let m = mesh::irregular_square(points, 1.0, MESH_SEED);
    // u runs away from the pole, v up
    let positions = m.embed(Vec3::zeros(), Vec3::x(), Vec3::y());
    let surface = RestSurface::new(positions, Some(m.triangles.clone()), AREA_DENSITY)?;
    let mut scene = Scene::new(surface, MaterialParams::new(BENDING_STIFFNESS, AREA_DENSITY));
    scene.projection.tolerance = tolerance;
    scene.damping = SETTLE_DAMPING;
    scene.duration = FLAG_SECONDS;
    let pole: Vec<usize> = (0..m.len()).filter(|&i| m.uv[i].x == 0.0).collect();
    scene.pin_in_place(&pole);
    let corner = m.nearest(Vec2::new(1.0, 0.0));
    scene.loads.push((corner, Vec3::new(0.0, -FLAG_LOAD, 0.0)));
    Ok((scene, m.nearest(Vec2::new(0.0, 1.0))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlagRun {
    /// Largest relative distance change from the anchor, over samples taken
    /// every 50 steps during the last sixth of the run.
    pub max_distance_change: f64,
    pub final_kinetic_energy: f64,
    pub wall: Duration,
}

pub fn run_shear_flag(points: usize, tolerance: f64) -> Result<FlagRun> {
    let start = Instant::now();
    let (scene, anchor) = shear_flag(points, tolerance)?;
    let steps = scene.steps();
    let rest = scene.surface.positions.clone();
    let mut sim = Simulation::new(scene)?;
    let mut worst = 0.0f64;
    let mut ke = 0.0;
    for s in 1..=steps {
        ke = sim.step()?.kinetic_energy;
        if 6 * s >= 5 * steps && s % 50 == 0 {
            worst = worst.max(distance_change_field(&sim.state.positions, &rest, anchor).max());
        }
    }
    Ok(FlagRun {
        max_distance_change: worst,
        final_kinetic_energy: ke,
        wall: start.elapsed(),
    })
}

/// A single neighborhood on its own point set: point 0 is the center.
#[derive(Debug, Clone)]
pub struct Patch {
    pub uv: Vec<Vec2>,
    pub masses: Vec<f64>,
    pub constraints: IsometryConstraints,
    pub operator: MlsOperator,
}

/// A neighborhood of 3 to 12 members scattered around the center.
pub fn random_patch(rng: &mut impl Rng) -> Patch {
    loop {
        let members = rng.random_range(3..=12);
        let mut uv = vec![Vec2::zeros()];
        for _ in 0..members {
            let r = rng.random_range(0.02..0.1);
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            uv.push(Vec2::new(r * a.cos(), r * a.sin()));
        }
        let masses: Vec<f64> = (0..=members).map(|_| rng.random_range(1e-4..1e-3)).collect();
        let Ok(nbhd) = parameterization_from_uv(&uv, 0, (1..=members).collect()) else {
            continue;
        };
        let Ok(entry) = precompute_mls(&nbhd, &masses) else {
            continue;
        };
        let operator = MlsOperator { entries: vec![entry] };
        let constraints = IsometryConstraints::new(uv.len(), &[nbhd], &operator);
        return Patch {
            uv,
            masses,
            constraints,
            operator,
        };
    }
}

/// A generic deformed state of a patch: a random linear map of the rest
/// coordinates plus per-point noise.
pub fn random_state(patch: &Patch, rng: &mut impl Rng) -> Vec<Vec3> {
    let mut unit = || rng.random_range(-1.0..1.0);
    let c1 = Vec3::new(1.0 + 0.3 * unit(), 0.3 * unit(), 0.3 * unit());
    let c2 = Vec3::new(0.3 * unit(), 1.0 + 0.3 * unit(), 0.3 * unit());
    let offset = Vec3::new(unit(), unit(), unit());
    patch
        .uv
        .iter()
        .map(|x| offset + c1 * x.x + c2 * x.y + Vec3::new(unit(), unit(), unit()) * 0.01)
        .collect()
}

fn perturbed(y: &[Vec3], p: usize, axis: usize, h: f64) -> Vec<Vec3> {
    let mut out = y.to_vec();
    out[p][axis] += h;
    out
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

fn flatten(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

/// Worst relative errors of analytic derivatives against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientErrors {
    pub trace: f64,
    pub determinant: f64,
    pub bending: f64,
    pub stiffness: f64,
}

pub fn gradient_errors(samples: usize, seed: u64) -> Result<GradientErrors> {
    const H: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = GradientErrors {
        trace: 0.0,
        determinant: 0.0,
        bending: 0.0,
        stiffness: 0.0,
    };
    for _ in 0..samples {
        let patch = random_patch(&mut rng);
        let y = random_state(&patch, &mut rng);
        let set = &patch.constraints;
        let system = ConstraintSystem::new(y.len()).with(set.clone());
        let jac = system.jacobian(&y);
        let n = y.len();
        let mut fd = [vec![0.0; 3 * n], vec![0.0; 3 * n]];
        for p in 0..n {
            for a in 0..3 {
                let plus = system.evaluate(&perturbed(&y, p, a, H)).0;
                let minus = system.evaluate(&perturbed(&y, p, a, -H)).0;
                for r in 0..2 {
                    fd[r][3 * p + a] = (plus[r] - minus[r]) / (2.0 * H);
                }
            }
        }
        for (r, fd_row) in fd.iter().enumerate() {
            let mut analytic = vec![0.0; 3 * n];
            let (pts, blocks) = jac.row(r);
            for (&p, b) in pts.iter().zip(blocks) {
                for a in 0..3 {
                    analytic[3 * p + a] += b[a];
                }
            }
            let e = rel_err(&analytic, fd_row);
            if r == 0 {
                worst.trace = worst.trace.max(e);
            } else {
                worst.determinant = worst.determinant.max(e);
            }
        }

        // K(λ) v against the directional derivative of Jᵀλ
        let lambda = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let v: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let kv = system.geometric_stiffness(&y, &lambda).mul(&v);
        let shifted = |s: f64| -> Vec<Vec3> {
            let ys: Vec<Vec3> = y.iter().zip(&v).map(|(p, d)| p + d * s).collect();
            system.jacobian(&ys).tr_mul(&lambda)
        };
        let (fp, fm) = (shifted(H), shifted(-H));
        let fd_kv: Vec<Vec3> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * H)).collect();
        worst.stiffness = worst.stiffness.max(rel_err(&flatten(&kv), &flatten(&fd_kv)));
    }

    // bending force against the energy on random states of a small sheet
    let m = mesh::irregular_square(40, 1.0, seed);
    let rest = m.embed_xy();
    let surface = RestSurface::new(rest.clone(), Some(m.triangles.clone()), AREA_DENSITY)?;
    let masses = compute_lumped_masses(&surface)?.masses;
    let bending = BendingSystem::new(&assemble_laplacian(&surface)?, &masses, BENDING_STIFFNESS, 1e-3, 0.0)?;
    for _ in 0..samples {
        let y: Vec<Vec3> = rest
            .iter()
            .map(|p| p + Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)))
            .collect();
        let force = flatten(&bending.force(&y));
        let mut fd = vec![0.0; force.len()];
        for p in 0..y.len() {
            for a in 0..3 {
                let e_plus = bending.energy(&perturbed(&y, p, a, H));
                let e_minus = bending.energy(&perturbed(&y, p, a, -H));
                fd[3 * p + a] = -(e_plus - e_minus) / (2.0 * H);
            }
        }
        worst.bending = worst.bending.max(rel_err(&force, &fd));
    }
    Ok(worst)
}

/// Worst deviations found by the invariance checks.
#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceErrors {
    /// `|g(R Y + t) - g(Y)|`.
    pub rigid: f64,
    /// Largest component of a Jacobian row's block sum.
    pub row_sum: f64,
    /// Per-step momentum change minus the gravity impulse, relative to the
    /// momentum after the step.
    pub momentum: f64,
    /// `F` from the precomputed operator against a dense weighted fit.
    pub mls_oracle: f64,
}

/// Deformation gradient of the patch by solving the weighted least squares
/// problem `min Σ m_j |F X_j - (Y_j - Y_0)|²` directly.
pub fn dense_weighted_fit(patch: &Patch, y: &[Vec3]) -> DMatrix<f64> {
    let n = patch.uv.len() - 1;
    let mut a = DMatrix::zeros(n, 2);
    let mut b = DMatrix::zeros(n, 3);
    for j in 0..n {
        let w = patch.masses[j + 1].sqrt();
        let x = patch.uv[j + 1] - patch.uv[0];
        let d = y[j + 1] - y[0];
        a[(j, 0)] = w * x.x;
        a[(j, 1)] = w * x.y;
        for c in 0..3 {
            b[(j, c)] = w * d[c];
        }
    }
    // a Fᵀ = b in the least squares sense
    let ft = a.svd(true, true).solve(&b, 1e-14).expect("svd solve");
    ft.transpose()
}

pub fn invariance_errors(samples: usize, seed: u64) -> Result<InvarianceErrors> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = InvarianceErrors {
        rigid: 0.0,
        row_sum: 0.0,
        momentum: 0.0,
        mls_oracle: 0.0,
    };
    for _ in 0..samples {
        let patch = random_patch(&mut rng);
        let y = random_state(&patch, &mut rng);
        let mut g = Vec::new();
        patch.constraints.evaluate(&y, &mut g);
        let rot = Rotation3::from_euler_angles(
            rng.random_range(-3.0..3.0),
            rng.random_range(-1.5..1.5),
            rng.random_range(-3.0..3.0),
        );
        let t = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let moved: Vec<Vec3> = y.iter().map(|p| rot * p + t).collect();
        let mut gm = Vec::new();
        patch.constraints.evaluate(&moved, &mut gm);
        for (a, b) in g.iter().zip(&gm) {
            worst.rigid = worst.rigid.max((a - b).abs());
        }

        let system = ConstraintSystem::new(y.len()).with(patch.constraints.clone());
        let jac = system.jacobian(&y);
        for r in 0..jac.nrows() {
            let sum = jac.row(r).1.iter().fold(Vec3::zeros(), |acc, b| acc + b);
            worst.row_sum = worst.row_sum.max(sum.amax());
        }

        let f = patch.constraints.deformation_gradient(&y, 0).0;
        let oracle = dense_weighted_fit(&patch, &y);
        for r in 0..3 {
            for c in 0..2 {
                worst.mls_oracle = worst.mls_oracle.max((f[(r, c)] - oracle[(r, c)]).abs());
            }
        }
    }
    worst.momentum = free_fall_momentum_error(seed)?;
    Ok(worst)
}

/// A free sheet thrown with a spin, so that every step needs projection.
fn free_fall_momentum_error(seed: u64) -> Result<f64> {
    let m = mesh::irregular_square(120, 1.0, seed);
    let rest = m.embed(Vec3::zeros(), Vec3::x(), Vec3::z());
    let surface = RestSurface::new(rest.clone(), Some(m.triangles.clone()), AREA_DENSITY)?;
    let mut scene = Scene::new(surface, MaterialParams::new(BENDING_STIFFNESS, AREA_DENSITY));
    scene.projection.tolerance = 1e-3;
    let mut sim = Simulation::new(scene)?;
    let spin = Vec3::new(0.3, 2.0, -0.5);
    sim.state.velocities = rest.iter().map(|p| spin.cross(&(p - Vec3::new(0.5, 0.0, 0.5)))).collect();
    let total_mass: f64 = sim.masses.iter().sum();
    let impulse = sim.scene.gravity * (total_mass * sim.scene.dt);
    let momentum = |sim: &Simulation| -> Vec3 {
        sim.state
            .velocities
            .iter()
            .zip(&sim.masses)
            .fold(Vec3::zeros(), |acc, (v, m)| acc + v * *m)
    };
    let mut worst = 0.0f64;
    let mut before = momentum(&sim);
    for _ in 0..200 {
        sim.step()?;
        let after = momentum(&sim);
        let err = (after - before - impulse).norm() / after.norm().max(before.norm());
        worst = worst.max(err);
        before = after;
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankCheck {
    pub points: usize,
    pub flat_row_gap: f64,
    pub flat_rank: usize,
    /// `‖g‖∞` of the bent state the nullity was measured at.
    pub bent_residual: f64,
    pub bent_nullity: usize,
}

/// A 100-point sheet, flat and then rolled onto a cylinder of radius 0.4 m
/// and projected back onto the constraints to `‖g‖∞ <= 1e-6`.
pub fn rank_check(seed: u64) -> Result<RankCheck> {
    let m = mesh::irregular_square(100, 1.0, seed);
    let flat = m.embed_xy();
    let surface = RestSurface::new(flat.clone(), Some(m.triangles.clone()), AREA_DENSITY)?;
    let masses = compute_lumped_masses(&surface)?.masses;
    let nbhds = build_neighborhoods(&surface, NeighborhoodStrategy::GraphDistance(1))?;
    let ops = precompute_all(&nbhds, &masses)?;
    let iso = IsometryConstraints::new(flat.len(), &nbhds, &ops);
    let flat_probe = jacobian_rank_probe(&flat, &iso);

    let radius = 0.4;
    let rolled: Vec<Vec3> = flat
        .iter()
        .map(|p| Vec3::new(radius * (p.x / radius).sin(), p.y, radius * (1.0 - (p.x / radius).cos())))
        .collect();
    let system = ConstraintSystem::new(flat.len()).with(iso.clone());
    let config = ProjectionConfig {
        tolerance: 1e-6,
        ..ProjectionConfig::default()
    };
    let (bent, report) = Projector::new(config).project(&rolled, &system, &masses)?;
    let bent_probe = jacobian_rank_probe(&bent, &iso);
    Ok(RankCheck {
        points: flat.len(),
        flat_row_gap: flat_probe.max_paired_row_gap,
        flat_rank: flat_probe.rank.unwrap_or(usize::MAX),
        bent_residual: report.final_residual,
        bent_nullity: bent_probe.nullity.unwrap_or(0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FallbackCheck {
    pub fast_stalled: bool,
    pub used_fallback: bool,
    pub residual: f64,
    pub tolerance: f64,
    pub kkt_relative: f64,
}

/// The coarse sheet uniformly stretched by 50% in its plane and projected
/// with default settings.
pub fn fallback_check() -> Result<FallbackCheck> {
    let m = mesh::irregular_square(COARSE_POINTS, 1.0, MESH_SEED);
    let rest = m.embed(Vec3::zeros(), Vec3::x(), Vec3::z());
    let surface = RestSurface::new(rest.clone(), Some(m.triangles.clone()), AREA_DENSITY)?;
    let masses = compute_lumped_masses(&surface)?.masses;
    let nbhds = build_neighborhoods(&surface, NeighborhoodStrategy::GraphDistance(1))?;
    let ops = precompute_all(&nbhds, &masses)?;
    let system = ConstraintSystem::new(rest.len()).with(IsometryConstraints::new(rest.len(), &nbhds, &ops));
    let stretched: Vec<Vec3> = rest.iter().map(|p| p * 1.5).collect();
    let config = ProjectionConfig::default();
    let fast_stalled = matches!(
        Projector::new(config.clone()).fast(&stretched, &system, &masses)?,
        FastOutcome::Stalled(_)
    );
    let (y, report) = Projector::new(config.clone()).project(&stretched, &system, &masses)?;
    debug_assert!(max_abs(&system.evaluate(&y).0) <= config.tolerance);
    Ok(FallbackCheck {
        fast_stalled,
        used_fallback: report.used_fallback,
        residual: report.final_residual,
        tolerance: config.tolerance,
        kkt_relative: report.kkt_residual.unwrap_or(f64::INFINITY),
    })
}

/// Sheet runs shared between criteria.
#[derive(Debug)]
struct SheetRuns {
    coarse: [Result<SheetRun>; 3],
    fine: Result<SheetRun>,
    edge: Result<SheetRun>,
}

const TOLERANCES: [f64; 3] = [0.1, 0.01, 0.001];

fn sheet_runs() -> (SheetRuns, Result<FlagRun>) {
    std::thread::scope(|s| {
        let coarse = TOLERANCES.map(|tol| s.spawn(move || run_pinned_sheet(COARSE_POINTS, tol, ConstraintModel::Isometry)));
        let fine = s.spawn(|| run_pinned_sheet(FINE_POINTS, 0.01, ConstraintModel::Isometry));
        let edge = s.spawn(|| run_pinned_sheet(COARSE_POINTS, 0.01, ConstraintModel::EdgeLength));
        let flag = s.spawn(|| run_shear_flag(COARSE_POINTS, FLAG_TOLERANCE));
        let join = |h: std::thread::ScopedJoinHandle<'_, Result<SheetRun>>| h.join().expect("sheet run panicked");
        let runs = SheetRuns {
            coarse: coarse.map(join),
            fine: join(fine),
            edge: join(edge),
        };
        (runs, flag.join().expect("flag run panicked"))
    })
}

fn describe(run: &SheetRun) -> String {
    format!(
        "sag {:.4} m (tol {}, {} points, {:.1} s)",
        run.sag,
        run.tolerance,
        run.points,
        run.wall.as_secs_f64()
    )
}

fn criterion_no_locking(runs: &SheetRuns) -> Outcome {
    const NAME: &str = "no-locking sag";
    let (mls, edge) = match (&runs.coarse[1], &runs.edge) {
        (Ok(m), Ok(e)) => (m, e),
        (Err(e), _) | (_, Err(e)) => return failed(1, NAME, e),
    };
    let sags = mls.sag > 0.05 * mls.pin_separation;
    let feasible = mls.max_abs_g <= mls.tolerance;
    let locks = edge.sag < 0.2 * mls.sag;
    let fast = mls.wall < Duration::from_secs(300);
    outcome(
        1,
        NAME,
        sags && feasible && locks && fast,
        format!(
            "isometry {} > {:.4}, max |g| {:.2e} <= {}; edge baseline sag {:.4} < {:.4}",
            describe(mls),
            0.05 * mls.pin_separation,
            mls.max_abs_g,
            mls.tolerance,
            edge.sag,
            0.2 * mls.sag
        ),
    )
}

fn criterion_monotone(runs: &SheetRuns) -> Outcome {
    const NAME: &str = "tolerance monotonicity";
    let mut sags = Vec::new();
    for r in &runs.coarse {
        match r {
            Ok(r) => sags.push(r.sag),
            Err(e) => return failed(2, NAME, e),
        }
    }
    let passed = sags.windows(2).all(|w| w[1] < w[0]);
    let listed: Vec<String> = TOLERANCES.iter().zip(&sags).map(|(t, s)| format!("{t}: {s:.4}")).collect();
    outcome(2, NAME, passed, format!("sag by tolerance {}", listed.join(", ")))
}

fn criterion_resolution(runs: &SheetRuns) -> Outcome {
    const NAME: &str = "resolution consistency";
    let (coarse, fine) = match (&runs.coarse[1], &runs.fine) {
        (Ok(c), Ok(f)) => (c, f),
        (Err(e), _) | (_, Err(e)) => return failed(3, NAME, e),
    };
    let gap = (coarse.sag - fine.sag).abs() / coarse.sag.max(fine.sag);
    outcome(
        3,
        NAME,
        gap < 0.1,
        format!("{} vs {}: relative gap {:.2}% < 10%", describe(coarse), describe(fine), 100.0 * gap),
    )
}

fn criterion_shear(flag: &Result<FlagRun>) -> Outcome {
    const NAME: &str = "shear flag distance change";
    match flag {
        Ok(f) => outcome(
            4,
            NAME,
            f.max_distance_change < 0.01,
            format!(
                "max relative distance change {:.3}% < 1% (tol {FLAG_TOLERANCE}, final kinetic energy {:.1e} J, {:.1} s)",
                100.0 * f.max_distance_change,
                f.final_kinetic_energy,
                f.wall.as_secs_f64()
            ),
        ),
        Err(e) => failed(4, NAME, e),
    }
}

fn criterion_efficiency(runs: &SheetRuns) -> Outcome {
    const NAME: &str = "fast projection efficiency";
    match &runs.coarse[0] {
        Ok(r) => outcome(
            5,
            NAME,
            r.median_fp_iterations <= 3,
            format!(
                "median iterations {} <= 3 at tol {} ({} fallback steps)",
                r.median_fp_iterations, r.tolerance, r.fallback_steps
            ),
        ),
        Err(e) => failed(5, NAME, e),
    }
}

fn criterion_gradients() -> Outcome {
    const NAME: &str = "gradient correctness";
    match gradient_errors(100, 7) {
        Ok(e) => {
            let worst = e.trace.max(e.determinant).max(e.bending).max(e.stiffness);
            outcome(
                6,
                NAME,
                worst < 1e-4,
                format!(
                    "relative errors tr {:.1e}, det {:.1e}, bending {:.1e}, stiffness {:.1e} < 1e-4",
                    e.trace, e.determinant, e.bending, e.stiffness
                ),
            )
        }
        Err(e) => failed(6, NAME, e),
    }
}

fn criterion_invariance() -> Outcome {
    const NAME: &str = "invariance suite";
    match invariance_errors(100, 11) {
        Ok(e) => outcome(
            7,
            NAME,
            e.rigid <= 1e-12 && e.row_sum <= 1e-12 && e.momentum <= 1e-9 && e.mls_oracle <= 1e-10,
            format!(
                "rigid {:.1e} <= 1e-12, row sums {:.1e} <= 1e-12, momentum {:.1e} <= 1e-9, closed form vs dense fit {:.1e} <= 1e-10",
                e.rigid, e.row_sum, e.momentum, e.mls_oracle
            ),
        ),
        Err(e) => failed(7, NAME, e),
    }
}

fn criterion_rank() -> Outcome {
    const NAME: &str = "rank structure";
    match rank_check(3) {
        Ok(r) => outcome(
            8,
            NAME,
            r.flat_row_gap <= 1e-12 && r.flat_rank <= r.points && r.bent_nullity >= r.points,
            format!(
                "flat: row gap {:.1e}, rank {} <= {}; bent (|g| {:.1e}): nullity {} >= {}",
                r.flat_row_gap, r.flat_rank, r.points, r.bent_residual, r.bent_nullity, r.points
            ),
        ),
        Err(e) => failed(8, NAME, e),
    }
}

fn criterion_fallback() -> Outcome {
    const NAME: &str = "fallback correctness";
    match fallback_check() {
        Ok(f) => outcome(
            9,
            NAME,
            f.fast_stalled && f.used_fallback && f.residual <= f.tolerance && f.kkt_relative < 1e-6,
            format!(
                "fast projection stalled: {}, fallback used: {}, |g| {:.2e} <= {}, relative KKT {:.1e} < 1e-6",
                f.fast_stalled, f.used_fallback, f.residual, f.tolerance, f.kkt_relative
            ),
        ),
        Err(e) => failed(9, NAME, e),
    }
}

/// Runs every criterion. The simulation scenes run on separate threads.
pub fn run_all() -> Vec<Outcome> {
    let (runs, flag) = sheet_runs();
    vec![
        criterion_no_locking(&runs),
        criterion_monotone(&runs),
        criterion_resolution(&runs),
        criterion_shear(&flag),
        criterion_efficiency(&runs),
        criterion_gradients(),
        criterion_invariance(),
        criterion_rank(),
        criterion_fallback(),
    ]
}

/// Only the criteria that need no time stepping, in a few seconds.
pub fn run_static() -> Vec<Outcome> {
    vec![criterion_gradients(), criterion_invariance(), criterion_rank(), criterion_fallback()]
}
