//! Projection of a predicted state onto the constraint manifold.
//!
//! [`Projector`] runs Fast Projections: with Jacobian `J`, diagonal masses
//! `M` and constraint values `g` it repeats
//!
//! ```text
//! (J M̃⁻¹ Jᵀ) δλ = g,    Y ← Y - M̃⁻¹ Jᵀ δλ
//! ```
//!
//! until `‖g‖∞` reaches the tolerance. `M̃` is `M`, or `M + K_geo(λ)` when
//! geometric stiffness is enabled, where `λ` are the accumulated multipliers.
//! Multipliers here are position-level (force times `h²`), so this is the
//! same matrix as `M + h² K_geo` written with force-level multipliers.
//!
//! If the residual stops decreasing for `stall_iters` consecutive iterations
//! or `max_fp_iters` is exceeded, the projector restarts from the predictor
//! and computes the exact mass-weighted closest point with an augmented
//! Lagrangian method.

mod spd;

use std::collections::HashMap;

use nalgebra::Matrix3;

pub use spd::{solve_spd, LowerPattern, SpdFactor, SpdSolution, SHIFT};

use crate::constraints::{max_abs, BlockJacobian, ConstraintSystem, GeometricStiffness};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Projection settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionConfig {
    /// Target `‖g‖∞`.
    pub tolerance: f64,
    pub max_fp_iters: usize,
    /// Consecutive non-decreasing iterations that count as a stall.
    pub stall_iters: usize,
    /// Initial augmented Lagrangian penalty in kg. `None` uses the mean mass.
    pub al_penalty: Option<f64>,
    pub al_penalty_growth: f64,
    pub al_max_outer: usize,
    pub use_geometric_stiffness: bool,
    /// Reuse the previous projection's multipliers as the geometric
    /// stiffness estimate of the first iteration.
    pub warm_start: bool,
    /// Levenberg shift of the multiplier system, relative to its mean
    /// diagonal. Damps Gauss-Newton overshoot near rank-deficient states.
    pub fp_levenberg: f64,
    /// Step halvings tried when a full step does not lower `‖g‖∞`.
    pub fp_backtracks: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            tolerance: 0.1,
            max_fp_iters: 20,
            stall_iters: 3,
            al_penalty: None,
            al_penalty_growth: 10.0,
            al_max_outer: 60,
            use_geometric_stiffness: false,
            warm_start: false,
            fp_levenberg: 1e-6,
            fp_backtracks: 4,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        if !(self.tolerance > 0.0) {
            return bad("projection tolerance must be positive");
        }
        if self.max_fp_iters == 0 {
            return bad("max_fp_iters must be at least 1");
        }
        if self.stall_iters == 0 {
            return bad("stall_iters must be at least 1");
        }
        if let Some(p) = self.al_penalty {
            if !(p > 0.0) {
                return bad("al_penalty must be positive");
            }
        }
        if !(self.al_penalty_growth > 1.0) {
            return bad("al_penalty_growth must exceed 1");
        }
        if !(self.fp_levenberg >= 0.0 && self.fp_levenberg.is_finite()) {
            return bad("fp_levenberg must be non-negative");
        }
        if self.al_max_outer == 0 {
            return bad("al_max_outer must be at least 1");
        }
        Ok(())
    }
}

/// Outcome of a projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionReport {
    /// Fast Projection iterations, or outer iterations when the fallback ran.
    pub iterations_used: usize,
    pub final_residual: f64,
    pub used_fallback: bool,
    /// Position-level multipliers, one per constraint row.
    pub multipliers: Vec<f64>,
    /// `‖g‖∞` before the first and after every Fast Projection iteration.
    pub fp_residuals: Vec<f64>,
    /// `‖M (Y - Y_pred) + Jᵀ λ‖∞`, measured only by the fallback.
    pub kkt_residual: Option<f64>,
}

/// Fast Projection stopped without reaching the tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Stall {
    pub positions: Vec<Vec3>,
    pub residuals: Vec<f64>,
}

/// Result of the Fast Projection stage alone.
#[derive(Debug, Clone, PartialEq)]
pub enum FastOutcome {
    Converged(Vec<Vec3>, ProjectionReport),
    Stalled(Stall),
}

/// Reusable projection workspace. Sparsity patterns and symbolic
/// factorizations are cached for as long as the Jacobian pattern stays the
/// same.
#[derive(Debug, Default)]
pub struct Projector {
    pub config: ProjectionConfig,
    schur: Option<SchurCache>,
    blocks: Option<BlockCache>,
    last_multipliers: Vec<f64>,
}

impl Projector {
    pub fn new(config: ProjectionConfig) -> Self {
        Projector {
            config,
            ..Default::default()
        }
    }

    /// Fast Projections with the augmented Lagrangian fallback.
    pub fn project(
        &mut self,
        y_pred: &[Vec3],
        system: &ConstraintSystem,
        masses: &[f64],
    ) -> Result<(Vec<Vec3>, ProjectionReport)> {
        match self.fast(y_pred, system, masses)? {
            FastOutcome::Converged(y, report) => Ok((y, report)),
            FastOutcome::Stalled(stall) => {
                let (y, mut report) = self.augmented_lagrangian(y_pred, system, masses)?;
                report.fp_residuals = stall.residuals;
                Ok((y, report))
            }
        }
    }

    /// Fast Projections only.
    pub fn fast(&mut self, y_pred: &[Vec3], system: &ConstraintSystem, masses: &[f64]) -> Result<FastOutcome> {
        check_inputs(y_pred, system, masses)?;
        let cfg = self.config.clone();
        let mut y = y_pred.to_vec();
        let mut g = system.evaluate(&y).0;
        let mut residual = max_abs(&g);
        let mut residuals = vec![residual];
        let mut lambda = vec![0.0; g.len()];
        if residual <= cfg.tolerance {
            return Ok(FastOutcome::Converged(
                y,
                ProjectionReport {
                    iterations_used: 0,
                    final_residual: residual,
                    used_fallback: false,
                    multipliers: lambda,
                    fp_residuals: residuals,
                    kkt_residual: None,
                },
            ));
        }
        let inv_mass: Vec<f64> = masses.iter().map(|m| 1.0 / m).collect();
        let mut stiffness_lambda = if cfg.warm_start && self.last_multipliers.len() == g.len() {
            self.last_multipliers.clone()
        } else {
            vec![0.0; g.len()]
        };
        let mut jac = BlockJacobian::new(system.npoints());
        let mut stalled_for = 0;
        let mut iterations = 0;
        while residual > cfg.tolerance {
            if iterations >= cfg.max_fp_iters || stalled_for >= cfg.stall_iters {
                return Ok(FastOutcome::Stalled(Stall { positions: y, residuals }));
            }
            iterations += 1;
            system.jacobian_into(&y, &mut jac);
            self.ensure_schur(&jac)?;
            let schur = self.schur.as_mut().unwrap();
            schur.factor(&jac, &inv_mass, cfg.fp_levenberg)?;

            let stiffness = if cfg.use_geometric_stiffness {
                let k = system.geometric_stiffness(&y, &stiffness_lambda);
                (!k.is_zero()).then_some(k)
            } else {
                None
            };
            let mut step = None;
            if let Some(k) = stiffness {
                if self.blocks.as_ref().is_none_or(|b| !b.matches(&jac)) {
                    self.blocks = Some(BlockCache::new(&jac)?);
                }
                step = regularized_step(self.blocks.as_mut().unwrap(), self.schur.as_ref().unwrap(), &jac, masses, &k, &g);
            }
            let (dlambda, dy) = match step {
                Some(s) => s,
                None => {
                    let dl = self.schur.as_ref().unwrap().solve_filtered(&g);
                    let f = jac.tr_mul(&dl);
                    let dy: Vec<Vec3> = f.iter().zip(&inv_mass).map(|(v, w)| v * *w).collect();
                    (dl, dy)
                }
            };
            let mut t = 1.0;
            let base = y.clone();
            let mut next;
            let mut k = 0;
            loop {
                for ((yp, b), d) in y.iter_mut().zip(&base).zip(&dy) {
                    *yp = b - d * t;
                }
                g = system.evaluate(&y).0;
                next = max_abs(&g);
                if next < residual || k >= cfg.fp_backtracks {
                    break;
                }
                k += 1;
                t *= 0.5;
            }
            for (l, d) in lambda.iter_mut().zip(&dlambda) {
                *l += d * t;
            }
            stiffness_lambda.clone_from(&lambda);
            if !next.is_finite() {
                return Ok(FastOutcome::Stalled(Stall { positions: y, residuals }));
            }
            if next >= residual {
                stalled_for += 1;
            } else {
                stalled_for = 0;
            }
            residual = next;
            residuals.push(residual);
        }
        self.last_multipliers.clone_from(&lambda);
        Ok(FastOutcome::Converged(
            y,
            ProjectionReport {
                iterations_used: iterations,
                final_residual: residual,
                used_fallback: false,
                multipliers: lambda,
                fp_residuals: residuals,
                kkt_residual: None,
            },
        ))
    }

    /// Exact mass-weighted projection by the augmented Lagrangian method.
    pub fn augmented_lagrangian(
        &mut self,
        y_pred: &[Vec3],
        system: &ConstraintSystem,
        masses: &[f64],
    ) -> Result<(Vec<Vec3>, ProjectionReport)> {
        check_inputs(y_pred, system, masses)?;
        let cfg = self.config.clone();
        let n = y_pred.len();
        let mut y = y_pred.to_vec();
        let mut g = system.evaluate(&y).0;
        let mut lambda = vec![0.0; g.len()];
        let mut residual = max_abs(&g);
        if residual <= cfg.tolerance {
            return Ok((
                y,
                ProjectionReport {
                    iterations_used: 0,
                    final_residual: residual,
                    used_fallback: true,
                    multipliers: lambda,
                    fp_residuals: Vec::new(),
                    kkt_residual: Some(0.0),
                },
            ));
        }
        let mean_mass = masses.iter().sum::<f64>() / n as f64;
        let mut rho = cfg.al_penalty.unwrap_or(mean_mass);
        // near isometry the paired rows almost coincide and no finite penalty
        // speeds up that direction; past this the Newton matrix only degrades
        let max_rho = MAX_PENALTY_GROWTH * rho;
        let scale = y_pred
            .iter()
            .zip(masses)
            .fold(0.0f64, |m, (p, w)| m.max(p.amax() * w))
            .max(mean_mass);
        // the KKT residual equals the inner gradient after the multiplier update
        let inner_tol = 1e-9 * scale;
        let mut jac = system.jacobian(&y);
        if self.blocks.as_ref().is_none_or(|b| !b.matches(&jac)) {
            self.blocks = Some(BlockCache::new(&jac)?);
        }
        let blocks = self.blocks.as_mut().unwrap();

        for outer in 1..=cfg.al_max_outer {
            minimize_augmented(blocks, system, &mut jac, masses, y_pred, &lambda, rho, inner_tol, &mut y)?;
            g = system.evaluate(&y).0;
            for (l, gi) in lambda.iter_mut().zip(&g) {
                *l += rho * gi;
            }
            let next = max_abs(&g);
            if next <= cfg.tolerance {
                system.jacobian_into(&y, &mut jac);
                let kkt = kkt_residual(&y, y_pred, masses, &jac, &lambda);
                self.last_multipliers.clone_from(&lambda);
                return Ok((
                    y,
                    ProjectionReport {
                        iterations_used: outer,
                        final_residual: next,
                        used_fallback: true,
                        multipliers: lambda,
                        fp_residuals: Vec::new(),
                        kkt_residual: Some(kkt / scale),
                    },
                ));
            }
            if next > 0.25 * residual && rho < max_rho {
                rho *= cfg.al_penalty_growth;
            }
            residual = next;
        }
        Err(Error::MaxIterations {
            iterations: cfg.al_max_outer,
            residual,
        })
    }
}

/// Fast Projections with fallback, using a fresh [`Projector`].
pub fn fast_projection(
    y_pred: &[Vec3],
    system: &ConstraintSystem,
    masses: &[f64],
    config: &ProjectionConfig,
) -> Result<(Vec<Vec3>, ProjectionReport)> {
    Projector::new(config.clone()).project(y_pred, system, masses)
}

/// Exact projection, using a fresh [`Projector`].
pub fn augmented_lagrangian_projection(
    y_pred: &[Vec3],
    system: &ConstraintSystem,
    masses: &[f64],
    config: &ProjectionConfig,
) -> Result<(Vec<Vec3>, ProjectionReport)> {
    Projector::new(config.clone()).augmented_lagrangian(y_pred, system, masses)
}

/// `‖M (Y - Y_pred) + Jᵀ λ‖∞`.
pub fn kkt_residual(y: &[Vec3], y_pred: &[Vec3], masses: &[f64], jac: &BlockJacobian, lambda: &[f64]) -> f64 {
    let f = jac.tr_mul(lambda);
    y.iter()
        .zip(y_pred)
        .zip(masses)
        .zip(&f)
        .fold(0.0f64, |m, (((a, b), w), fi)| m.max(((a - b) * *w + fi).amax()))
}

fn check_inputs(y: &[Vec3], system: &ConstraintSystem, masses: &[f64]) -> Result<()> {
    if y.len() != system.npoints() || masses.len() != y.len() {
        return Err(Error::Validation(format!(
            "projection of {} points with {} masses against a system of {} points",
            y.len(),
            masses.len(),
            system.npoints()
        )));
    }
    if y.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::Validation("predicted positions are not finite".into()));
    }
    if masses.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::Validation("masses must be positive".into()));
    }
    Ok(())
}

impl Projector {
    fn ensure_schur(&mut self, jac: &BlockJacobian) -> Result<()> {
        if self.schur.as_ref().is_none_or(|s| !s.matches(jac)) {
            self.schur = Some(SchurCache::new(jac)?);
        }
        Ok(())
    }
}

/// `S = J M⁻¹ Jᵀ` with a fixed pattern.
#[derive(Debug)]
struct SchurCache {
    row_ptr: Vec<usize>,
    points: Vec<usize>,
    /// `(slot, block a, block b)`: `S[slot] += J_a · J_b / m` where both blocks
    /// sit on the same point.
    terms: Vec<(usize, usize, usize)>,
    values: Vec<f64>,
    shift: f64,
    factor: SpdFactor,
}

impl SchurCache {
    fn new(jac: &BlockJacobian) -> Result<Self> {
        let nrows = jac.nrows();
        let mut by_point: Vec<Vec<(usize, usize)>> = vec![Vec::new(); jac.npoints()];
        let mut k = 0;
        for r in 0..nrows {
            let (pts, _) = jac.row(r);
            for &p in pts {
                by_point[p].push((r, k));
                k += 1;
            }
        }
        let mut pairs = Vec::new();
        for list in &by_point {
            for (i, &(ra, _)) in list.iter().enumerate() {
                for &(rb, _) in &list[..=i] {
                    pairs.push((ra, rb));
                }
            }
        }
        let pattern = LowerPattern::from_pairs(nrows, pairs);
        let mut terms = Vec::new();
        for list in &by_point {
            for (i, &(ra, ka)) in list.iter().enumerate() {
                for &(rb, kb) in &list[..=i] {
                    let slot = pattern.find(ra.max(rb), ra.min(rb)).unwrap();
                    terms.push((slot, ka, kb));
                }
            }
        }
        let (row_ptr, points) = pattern_of(jac);
        let values = vec![0.0; pattern.nnz()];
        Ok(SchurCache {
            row_ptr,
            points,
            terms,
            values,
            shift: 0.0,
            factor: SpdFactor::new(pattern)?,
        })
    }

    fn matches(&self, jac: &BlockJacobian) -> bool {
        let (row_ptr, points) = pattern_of(jac);
        row_ptr == self.row_ptr && points == self.points
    }

    fn factor(&mut self, jac: &BlockJacobian, inv_mass: &[f64], relative_shift: f64) -> Result<()> {
        let blocks = flat_blocks(jac);
        self.values.iter_mut().for_each(|v| *v = 0.0);
        for &(slot, ka, kb) in &self.terms {
            let p = self.points[ka];
            self.values[slot] += blocks[ka].dot(&blocks[kb]) * inv_mass[p];
        }
        let pattern = self.factor.pattern();
        let n = pattern.dim();
        // a flat sheet has rigid in-plane motions that leave g unchanged, so S
        // is singular there; a tiny Levenberg shift keeps the factor defined
        let trace = pattern.trace(&self.values);
        self.shift = relative_shift * trace.max(f64::MIN_POSITIVE) / n.max(1) as f64;
        let mut shifted = self.values.clone();
        for i in 0..n {
            shifted[pattern.diag(i)] += self.shift;
        }
        self.factor.factor(&shifted)
    }

    /// `S (S + αI)⁻²`-filtered solve: matches `S⁻¹ g` on well-conditioned
    /// directions and damps components in the null space of `Jᵀ`, which would
    /// otherwise blow up the multipliers without moving any point.
    fn solve_filtered(&self, g: &[f64]) -> Vec<f64> {
        let x = self.factor.solve(g);
        let sx = self.factor.pattern().sym_mul(&self.values, &x);
        self.factor.solve(&sx)
    }
}

fn pattern_of(jac: &BlockJacobian) -> (Vec<usize>, Vec<usize>) {
    let mut row_ptr = vec![0];
    let mut points = Vec::with_capacity(jac.nnz_blocks());
    for r in 0..jac.nrows() {
        points.extend_from_slice(jac.row(r).0);
        row_ptr.push(points.len());
    }
    (row_ptr, points)
}

fn flat_blocks(jac: &BlockJacobian) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(jac.nnz_blocks());
    for r in 0..jac.nrows() {
        out.extend_from_slice(jac.row(r).1);
    }
    out
}

/// Symmetric `3N × 3N` matrices whose 3x3 blocks couple points that share a
/// constraint row. Holds the factor used for `M + K_geo` and for the
/// augmented Lagrangian Newton matrix.
#[derive(Debug)]
struct BlockCache {
    row_ptr: Vec<usize>,
    points: Vec<usize>,
    /// Block `(p, q)` with `p >= q` → slot of its first row in each of the
    /// three columns.
    slots: HashMap<(usize, usize), [usize; 3]>,
    values: Vec<f64>,
    factor: SpdFactor,
}

impl BlockCache {
    fn new(jac: &BlockJacobian) -> Result<Self> {
        let n = jac.npoints();
        let mut block_pairs = Vec::new();
        for r in 0..jac.nrows() {
            let (pts, _) = jac.row(r);
            for &p in pts {
                for &q in pts {
                    if p > q {
                        block_pairs.push((p, q));
                    }
                }
            }
        }
        block_pairs.sort_unstable();
        block_pairs.dedup();
        let mut scalar = Vec::with_capacity(9 * block_pairs.len() + 3 * n);
        for p in 0..n {
            scalar.push((3 * p + 1, 3 * p));
            scalar.push((3 * p + 2, 3 * p));
            scalar.push((3 * p + 2, 3 * p + 1));
        }
        for &(p, q) in &block_pairs {
            for a in 0..3 {
                for b in 0..3 {
                    scalar.push((3 * p + a, 3 * q + b));
                }
            }
        }
        let pattern = LowerPattern::from_pairs(3 * n, scalar);
        let mut slots = HashMap::with_capacity(block_pairs.len() + n);
        for p in 0..n {
            slots.insert((p, p), [0, 1, 2].map(|b| pattern.diag(3 * p + b)));
        }
        for &(p, q) in &block_pairs {
            slots.insert((p, q), [0, 1, 2].map(|b| pattern.find(3 * p, 3 * q + b).unwrap()));
        }
        let (row_ptr, points) = pattern_of(jac);
        Ok(BlockCache {
            row_ptr,
            points,
            slots,
            values: vec![0.0; pattern.nnz()],
            factor: SpdFactor::new(pattern)?,
        })
    }

    fn matches(&self, jac: &BlockJacobian) -> bool {
        let (row_ptr, points) = pattern_of(jac);
        row_ptr == self.row_ptr && points == self.points
    }

    fn clear(&mut self, masses: &[f64]) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
        self.add_mass(masses, 1.0);
    }

    /// Adds block `(p, q)`; blocks with `p < q` are ignored because the
    /// mirrored block carries the same information.
    fn add(&mut self, p: usize, q: usize, m: &Matrix3<f64>) {
        if p < q {
            return;
        }
        let cols = self.slots[&(p, q)];
        for b in 0..3 {
            let first = if p == q { b } else { 0 };
            for a in first..3 {
                self.values[cols[b] + a - first] += m[(a, b)];
            }
        }
    }

    fn add_mass(&mut self, masses: &[f64], scale: f64) {
        for (p, &m) in masses.iter().enumerate() {
            for b in 0..3 {
                let d = self.factor.pattern().diag(3 * p + b);
                self.values[d] += scale * m;
            }
        }
    }

    fn add_stiffness(&mut self, k: &GeometricStiffness) {
        for (p, q, m) in &k.blocks {
            self.add(*p, *q, m);
        }
    }

    fn add_gram(&mut self, jac: &BlockJacobian, weight: f64) {
        for r in 0..jac.nrows() {
            let (pts, blocks) = jac.row(r);
            for (i, (&p, bp)) in pts.iter().zip(blocks).enumerate() {
                for (&q, bq) in pts[..=i].iter().zip(blocks) {
                    let outer = bp * bq.transpose() * weight;
                    if p >= q {
                        self.add(p, q, &outer);
                    } else {
                        self.add(q, p, &outer.transpose());
                    }
                }
            }
        }
    }

    fn factor(&mut self) -> Result<()> {
        self.factor.factor(&self.values)
    }

    fn solve(&self, rhs: &[Vec3]) -> Vec<Vec3> {
        let mut flat: Vec<f64> = rhs.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        self.factor.solve_in_place(&mut flat);
        flat.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
    }

    fn mul(&self, x: &[Vec3]) -> Vec<Vec3> {
        let flat: Vec<f64> = x.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        let y = self.factor.pattern().sym_mul(&self.values, &flat);
        y.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
    }
}

/// One regularized Fast Projection step, or `None` when `M + K_geo` is not
/// positive definite or the inner solve does not converge; the caller then
/// takes a plain step.
fn regularized_step(
    blocks: &mut BlockCache,
    schur: &SchurCache,
    jac: &BlockJacobian,
    masses: &[f64],
    k: &GeometricStiffness,
    g: &[f64],
) -> Option<(Vec<f64>, Vec<Vec3>)> {
    blocks.clear(masses);
    blocks.add_stiffness(k);
    blocks.factor().ok()?;
    // PCG on J M̃⁻¹ Jᵀ, preconditioned with the plain Schur complement
    let apply = |x: &[f64]| jac.mul(&blocks.solve(&jac.tr_mul(x)));
    let precond = |r: &[f64]| schur.factor.solve(r);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bound = 1e-10 * max_abs(g);
    let mut x = precond(g);
    let ax = apply(&x);
    let mut r: Vec<f64> = g.iter().zip(&ax).map(|(a, b)| a - b).collect();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..50 {
        if max_abs(&r) <= bound {
            let dy = blocks.solve(&jac.tr_mul(&x));
            return Some((x, dy));
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return None;
        }
        let alpha = rz / pap;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        z = precond(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    None
}

const INNER_NEWTON_ITERS: usize = 200;
const MAX_PENALTY_GROWTH: f64 = 1e6;

/// Newton minimization of
/// `½‖Y - Y_pred‖²_M + λᵀg + ρ/2 ‖g‖²` starting from `y`.
#[allow(clippy::too_many_arguments)]
fn minimize_augmented(
    blocks: &mut BlockCache,
    system: &ConstraintSystem,
    jac: &mut BlockJacobian,
    masses: &[f64],
    y_pred: &[Vec3],
    lambda: &[f64],
    rho: f64,
    tol: f64,
    y: &mut Vec<Vec3>,
) -> Result<()> {
    let objective = |y: &[Vec3]| -> f64 {
        let g = system.evaluate(y).0;
        let inertia: f64 = y
            .iter()
            .zip(y_pred)
            .zip(masses)
            .map(|((a, b), m)| 0.5 * m * (a - b).norm_squared())
            .sum();
        inertia + g.iter().zip(lambda).map(|(gi, li)| li * gi + 0.5 * rho * gi * gi).sum::<f64>()
    };
    let mut value = objective(y);
    for _ in 0..INNER_NEWTON_ITERS {
        let g = system.evaluate(y).0;
        system.jacobian_into(y, jac);
        let sigma: Vec<f64> = lambda.iter().zip(&g).map(|(l, gi)| l + rho * gi).collect();
        let jt = jac.tr_mul(&sigma);
        let grad: Vec<Vec3> = y
            .iter()
            .zip(y_pred)
            .zip(masses)
            .zip(&jt)
            .map(|(((a, b), m), f)| (a - b) * *m + f)
            .collect();
        let grad_norm = grad.iter().fold(0.0f64, |m, v| m.max(v.amax()));
        if grad_norm <= tol {
            return Ok(());
        }
        // exact Newton matrix when it is definite, otherwise the one with
        // each neighborhood's negative curvature clipped
        blocks.clear(masses);
        blocks.add_gram(jac, rho);
        let gram = blocks.values.clone();
        blocks.add_stiffness(&system.geometric_stiffness(y, &sigma));
        if blocks.factor().is_err() {
            blocks.values.clone_from(&gram);
            blocks.add_stiffness(&system.convex_stiffness(y, &sigma));
            let convex = blocks.values.clone();
            // rounding can still break a huge penalty term; shift by μM
            let mut mu = 1e-8;
            while blocks.factor().is_err() {
                if mu > 1e8 {
                    return Err(Error::SolveFailure("augmented Lagrangian Newton matrix is not definite".into()));
                }
                blocks.values.clone_from(&convex);
                blocks.add_mass(masses, mu);
                mu *= 100.0;
            }
        }
        let dir: Vec<Vec3> = blocks.solve(&grad).into_iter().map(|d| -d).collect();
        // one refinement step against the assembled matrix
        let res: Vec<Vec3> = blocks
            .mul(&dir)
            .iter()
            .zip(&grad)
            .map(|(hd, gr)| -gr - hd)
            .collect();
        let corr = blocks.solve(&res);
        let dir: Vec<Vec3> = dir.iter().zip(&corr).map(|(d, c)| d + c).collect();
        let slope: f64 = dir.iter().zip(&grad).map(|(d, gr)| d.dot(gr)).sum();
        if !(slope < 0.0) {
            return Ok(());
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<Vec3> = y.iter().zip(&dir).map(|(a, d)| a + d * t).collect();
            let v = objective(&trial);
            if v <= value + 1e-4 * t * slope {
                *y = trial;
                value = v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no further progress is representable
            return Ok(());
        }
    }
    Ok(())
}
