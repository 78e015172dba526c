//! Measurements on simulated states.

use nalgebra::DMatrix;

use crate::constraints::{assemble_jacobian, eval_constraints, IsometryConstraints};
use crate::geometry::Vec3;

/// Relative singular value below which a direction counts as null.
pub const RANK_THRESHOLD: f64 = 1e-8;
/// Largest point count for which the dense SVD is run.
pub const DENSE_RANK_LIMIT: usize = 500;

/// Edge and neighborhood strain of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainReport {
    /// `(|y_a - y_b| - |x_a - x_b|) / |x_a - x_b|` per edge.
    pub edge_strains: Vec<f64>,
    /// `(g_tr, g_det)` per neighborhood.
    pub pairs: Vec<(f64, f64)>,
    pub max_edge_strain: f64,
    pub mean_edge_strain: f64,
    pub max_abs_g: f64,
    pub mean_abs_g: f64,
}

pub fn edge_strains(y: &[Vec3], rest: &[Vec3], edges: &[[usize; 2]]) -> Vec<f64> {
    edges
        .iter()
        .map(|&[a, b]| {
            let l0 = (rest[a] - rest[b]).norm();
            ((y[a] - y[b]).norm() - l0) / l0
        })
        .collect()
}

/// Largest absolute relative edge length change, zero without edges.
pub fn max_edge_strain(y: &[Vec3], rest: &[Vec3], edges: &[[usize; 2]]) -> f64 {
    edge_strains(y, rest, edges).iter().fold(0.0, |m, s| m.max(s.abs()))
}

pub fn strain_report(y: &[Vec3], rest: &[Vec3], edges: &[[usize; 2]], isometry: &IsometryConstraints) -> StrainReport {
    let edge_strains = edge_strains(y, rest, edges);
    let pairs: Vec<(f64, f64)> = (0..isometry.neighborhoods())
        .map(|i| eval_constraints(&isometry.deformation_gradient(y, i)))
        .collect();
    let abs_edges = edge_strains.iter().map(|s| s.abs());
    let abs_g = pairs.iter().flat_map(|&(a, b)| [a.abs(), b.abs()]);
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    StrainReport {
        max_edge_strain: abs_edges.clone().fold(0.0, f64::max),
        mean_edge_strain: mean(abs_edges.sum(), edge_strains.len()),
        max_abs_g: abs_g.clone().fold(0.0, f64::max),
        mean_abs_g: mean(abs_g.sum(), 2 * pairs.len()),
        edge_strains,
        pairs,
    }
}

/// Relative change of the straight-line distance from every point to an
/// anchor point.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceChangeField {
    pub anchor: usize,
    pub values: Vec<f64>,
}

impl DistanceChangeField {
    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v))
    }
}

/// `(|y_p - y_anchor| - |x_p - x_anchor|) / |x_p - x_anchor|`, zero at the
/// anchor and at points coincident with it at rest.
pub fn distance_change_field(y: &[Vec3], rest: &[Vec3], anchor: usize) -> DistanceChangeField {
    let values = y
        .iter()
        .zip(rest)
        .enumerate()
        .map(|(p, (yp, xp))| {
            let l0 = (xp - rest[anchor]).norm();
            if p == anchor || l0 == 0.0 {
                0.0
            } else {
                ((yp - y[anchor]).norm() - l0) / l0
            }
        })
        .collect();
    DistanceChangeField { anchor, values }
}

/// Sag below the segment joining two pinned points, measured along gravity
/// `-y`. See [`sag_metric_along`].
pub fn sag_metric(y: &[Vec3], pin_a: usize, pin_b: usize) -> f64 {
    sag_metric_along(y, pin_a, pin_b, -Vec3::y())
}

/// Largest drop of any point below the segment `y[pin_a] y[pin_b]`.
///
/// Each point is compared with its closest point on the segment; the drop is
/// the offset along the part of `down` perpendicular to the segment. Points
/// above the segment contribute nothing, so a flat taut sheet reports zero.
pub fn sag_metric_along(y: &[Vec3], pin_a: usize, pin_b: usize, down: Vec3) -> f64 {
    let (a, b) = (y[pin_a], y[pin_b]);
    let axis = b - a;
    let len2 = axis.norm_squared();
    let perp = if len2 > 0.0 { down - axis * (down.dot(&axis) / len2) } else { down };
    let Some(dir) = perp.try_normalize(1e-12) else {
        return 0.0;
    };
    y.iter()
        .map(|p| {
            let t = if len2 > 0.0 { ((p - a).dot(&axis) / len2).clamp(0.0, 1.0) } else { 0.0 };
            (p - (a + axis * t)).dot(&dir)
        })
        .fold(0.0, f64::max)
}

/// Numeric rank of the isometry Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct RankProbe {
    /// `None` above [`DENSE_RANK_LIMIT`] points.
    pub rank: Option<usize>,
    /// `3N - rank`.
    pub nullity: Option<usize>,
    /// Largest difference between the trace and determinant rows of any
    /// neighborhood; zero at the strain-free state.
    pub max_paired_row_gap: f64,
}

/// Singular value rank with threshold `1e-8 σ_max` for up to 500 points;
/// above that only the paired-row comparison is reported.
pub fn jacobian_rank_probe(y: &[Vec3], isometry: &IsometryConstraints) -> RankProbe {
    let (jac, _) = assemble_jacobian(y, isometry);
    let mut gap = 0.0f64;
    for i in 0..jac.nrows() / 2 {
        let (pa, ba) = jac.row(2 * i);
        let (pb, bb) = jac.row(2 * i + 1);
        debug_assert_eq!(pa, pb);
        for (u, v) in ba.iter().zip(bb) {
            gap = gap.max((u - v).amax());
        }
    }
    let n = y.len();
    let (rank, nullity) = if n <= DENSE_RANK_LIMIT {
        let dense: DMatrix<f64> = jac.to_dense();
        let sv = dense.singular_values();
        let smax = sv.max();
        let rank = if smax > 0.0 {
            sv.iter().filter(|&&s| s > RANK_THRESHOLD * smax).count()
        } else {
            0
        };
        (Some(rank), Some(3 * n - rank))
    } else {
        (None, None)
    };
    RankProbe {
        rank,
        nullity,
        max_paired_row_gap: gap,
    }
}
