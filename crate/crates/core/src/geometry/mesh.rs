//! Planar test meshes: regular grids and irregular Delaunay samplings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Vec2, Vec3};

/// A triangulated region of the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarMesh {
    pub uv: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
}

impl PlanarMesh {
    pub fn len(&self) -> usize {
        self.uv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uv.is_empty()
    }

    /// Places the mesh in 3D as `origin + u * axis_u + v * axis_v`.
    pub fn embed(&self, origin: Vec3, axis_u: Vec3, axis_v: Vec3) -> Vec<Vec3> {
        self.uv.iter().map(|p| origin + axis_u * p.x + axis_v * p.y).collect()
    }

    pub fn embed_xy(&self) -> Vec<Vec3> {
        self.embed(Vec3::zeros(), Vec3::x(), Vec3::y())
    }

    /// Index of the vertex closest to `target`, lowest index on ties.
    pub fn nearest(&self, target: Vec2) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, p) in self.uv.iter().enumerate() {
            let d = (p - target).norm_squared();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

/// `nx` by `ny` vertices over `[0, width] x [0, height]`, row-major from the
/// origin, each quad split along the same diagonal.
pub fn grid(nx: usize, ny: usize, width: f64, height: f64) -> PlanarMesh {
    assert!(nx >= 2 && ny >= 2, "grid needs at least 2x2 vertices");
    let mut uv = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            uv.push(Vec2::new(
                width * i as f64 / (nx - 1) as f64,
                height * j as f64 / (ny - 1) as f64,
            ));
        }
    }
    let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = j * nx + i;
            let (b, c, d) = (a + 1, a + nx, a + nx + 1);
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    PlanarMesh { uv, triangles }
}

/// Exactly `count` points on the square `[0, side]²`: evenly spaced boundary
/// samples plus best-candidate interior samples, Delaunay triangulated.
pub fn irregular_square(count: usize, side: f64, seed: u64) -> PlanarMesh {
    let spacing = side / (count as f64).sqrt();
    let per_side = ((side / spacing).round() as usize).max(2);
    let mut boundary = Vec::with_capacity(4 * per_side);
    for k in 0..per_side {
        let t = side * k as f64 / per_side as f64;
        boundary.push(Vec2::new(t, 0.0));
        boundary.push(Vec2::new(side, t));
        boundary.push(Vec2::new(side - t, side));
        boundary.push(Vec2::new(0.0, side - t));
    }
    assert!(count > boundary.len(), "too few points for the boundary");
    let interior = count - boundary.len();
    let pts = best_candidate(boundary, interior, seed, |rng| {
        Vec2::new(rng.random::<f64>() * side, rng.random::<f64>() * side)
    });
    delaunay(pts)
}

/// Exactly `count` points on a disk of the given radius.
pub fn irregular_disk(count: usize, radius: f64, seed: u64) -> PlanarMesh {
    let spacing = radius * (std::f64::consts::PI / count as f64).sqrt();
    let ring = ((2.0 * std::f64::consts::PI * radius / spacing).round() as usize).max(3);
    let boundary = (0..ring)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / ring as f64;
            Vec2::new(radius * a.cos(), radius * a.sin())
        })
        .collect();
    let interior = count - ring;
    let pts = best_candidate(boundary, interior, seed, |rng| loop {
        let p = Vec2::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0);
        if p.norm() < 1.0 {
            return p * radius;
        }
    });
    delaunay(pts)
}

/// Mitchell's best-candidate sampling: each new point is the candidate
/// farthest from every point placed so far.
fn best_candidate(
    mut pts: Vec<Vec2>,
    extra: usize,
    seed: u64,
    mut sample: impl FnMut(&mut ChaCha8Rng) -> Vec2,
) -> Vec<Vec2> {
    const CANDIDATES: usize = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra {
        let mut best = (f64::NEG_INFINITY, Vec2::zeros());
        for _ in 0..CANDIDATES {
            let c = sample(&mut rng);
            let d = pts.iter().map(|p| (p - c).norm_squared()).fold(f64::INFINITY, f64::min);
            if d > best.0 {
                best = (d, c);
            }
        }
        pts.push(best.1);
    }
    pts
}

fn delaunay(uv: Vec<Vec2>) -> PlanarMesh {
    let points: Vec<delaunator::Point> = uv.iter().map(|p| delaunator::Point { x: p.x, y: p.y }).collect();
    let tri = delaunator::triangulate(&points);
    let mut triangles = Vec::with_capacity(tri.len());
    for t in tri.triangles.chunks_exact(3) {
        let (a, b, c) = (uv[t[0]], uv[t[1]], uv[t[2]]);
        let signed = (b - a).perp(&(c - a));
        // drop slivers along collinear hull runs
        if signed.abs() > 1e-12 {
            if signed > 0.0 {
                triangles.push([t[0], t[1], t[2]]);
            } else {
                triangles.push([t[0], t[2], t[1]]);
            }
        }
    }
    PlanarMesh { uv, triangles }
}
