//! Meshless discretization of a flat rest surface.
//!
//! Every sample point owns a neighborhood of other sample points together with
//! a flat local parameterization of that neighborhood. Lumped masses and the
//! cotangent Laplacian come from the (optional) input triangulation.

mod laplacian;
pub mod mesh;

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{Matrix3, SymmetricEigen, Vector2, Vector3};

use crate::error::{Error, Result};

pub use laplacian::{assemble_laplacian, LaplacianOperator};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

const MIN_TRIANGLE_AREA: f64 = 1e-12;
const MAX_CONDITION: f64 = 1e12;

/// Rest state of the plate: sample positions, an optional triangulation and
/// the area density (kg/m²).
#[derive(Debug, Clone, PartialEq)]
pub struct RestSurface {
    pub positions: Vec<Vec3>,
    pub triangles: Option<Vec<[usize; 3]>>,
    pub density: f64,
}

impl RestSurface {
    pub fn new(positions: Vec<Vec3>, triangles: Option<Vec<[usize; 3]>>, density: f64) -> Result<Self> {
        let surface = RestSurface {
            positions,
            triangles,
            density,
        };
        surface.validate()?;
        Ok(surface)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::InvalidSurface("no sample points".into()));
        }
        if let Some(i) = self.positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidSurface(format!("position {i} is not finite")));
        }
        if !(self.density.is_finite() && self.density > 0.0) {
            return Err(Error::InvalidSurface(format!("density must be > 0, got {}", self.density)));
        }
        if let Some(tris) = &self.triangles {
            let n = self.positions.len();
            for (t, tri) in tris.iter().enumerate() {
                if tri.iter().any(|&v| v >= n) {
                    return Err(Error::InvalidSurface(format!("triangle {t} references a missing vertex")));
                }
                let area = triangle_area(&self.positions, tri);
                if area <= MIN_TRIANGLE_AREA {
                    return Err(Error::InvalidSurface(format!("triangle {t} is degenerate (area {area:e})")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn triangles(&self) -> Result<&[[usize; 3]]> {
        match &self.triangles {
            Some(t) if !t.is_empty() => Ok(t),
            _ => Err(Error::MissingTriangulation),
        }
    }

    pub fn total_area(&self) -> Result<f64> {
        Ok(self
            .triangles()?
            .iter()
            .map(|t| triangle_area(&self.positions, t))
            .sum())
    }

    /// Unique undirected edges `[a, b]` with `a < b`, sorted.
    pub fn edges(&self) -> Result<Vec<[usize; 2]>> {
        let mut edges = BTreeSet::new();
        for t in self.triangles()? {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.insert([a.min(b), a.max(b)]);
            }
        }
        Ok(edges.into_iter().collect())
    }

    /// Vertex adjacency lists of the triangulation, each sorted ascending.
    pub fn adjacency(&self) -> Result<Vec<Vec<usize>>> {
        let mut adj = vec![Vec::new(); self.len()];
        for [a, b] in self.edges()? {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(adj)
    }

    /// Flags vertices lying on an edge with exactly one incident triangle.
    pub fn boundary_mask(&self) -> Result<Vec<bool>> {
        let mut count = std::collections::BTreeMap::<[usize; 2], usize>::new();
        for t in self.triangles()? {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry([a.min(b), a.max(b)]).or_default() += 1;
            }
        }
        let mut mask = vec![false; self.len()];
        for ([a, b], c) in count {
            if c == 1 {
                mask[a] = true;
                mask[b] = true;
            }
        }
        Ok(mask)
    }
}

pub(crate) fn triangle_area(positions: &[Vec3], t: &[usize; 3]) -> f64 {
    let (a, b, c) = (positions[t[0]], positions[t[1]], positions[t[2]]);
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// How neighborhoods are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeighborhoodStrategy {
    /// All points within a Euclidean rest distance (m).
    Radius(f64),
    /// The `k` nearest points, distance ties broken by ascending index.
    Knn(usize),
    /// Points within this many hops on the input triangulation.
    GraphDistance(usize),
}

/// Orthonormal tangent frame of a neighborhood's local parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub origin: Vec3,
    pub tangents: [Vec3; 2],
}

/// A sample point, its neighbors, and their flat coordinates relative to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub center: usize,
    pub members: Vec<usize>,
    /// `local_coords[k]` is the flat position of `members[k]` relative to the center.
    pub local_coords: Vec<Vec2>,
    pub frame: Frame,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Center first, then members in order.
    pub fn stencil(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.center).chain(self.members.iter().copied())
    }
}

/// Selects the member set of every neighborhood.
///
/// Members exclude the center. Radius and graph-distance members are listed by
/// ascending index; knn members by (distance, index).
pub fn select_members(surface: &RestSurface, strategy: NeighborhoodStrategy) -> Result<Vec<Vec<usize>>> {
    let p = &surface.positions;
    let n = p.len();
    let sets: Vec<Vec<usize>> = match strategy {
        NeighborhoodStrategy::Radius(r) => {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidSurface(format!("neighborhood radius must be > 0, got {r}")));
            }
            (0..n)
                .map(|i| (0..n).filter(|&j| j != i && (p[j] - p[i]).norm() <= r).collect())
                .collect()
        }
        NeighborhoodStrategy::Knn(k) => {
            if k == 0 {
                return Err(Error::InvalidSurface("knn k must be positive".into()));
            }
            (0..n)
                .map(|i| {
                    let mut others: Vec<(f64, usize)> = (0..n)
                        .filter(|&j| j != i)
                        .map(|j| ((p[j] - p[i]).norm_squared(), j))
                        .collect();
                    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    others.into_iter().take(k).map(|(_, j)| j).collect()
                })
                .collect()
        }
        NeighborhoodStrategy::GraphDistance(d) => {
            if d == 0 {
                return Err(Error::InvalidSurface("graph distance must be positive".into()));
            }
            let adj = surface.adjacency()?;
            (0..n).map(|i| graph_ball(&adj, i, d)).collect()
        }
    };
    if let Some(i) = sets.iter().position(|s| s.len() < 2) {
        return Err(Error::NeighborhoodTooSmall(i));
    }
    Ok(sets)
}

fn graph_ball(adj: &[Vec<usize>], start: usize, depth: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::from([start]);
    dist[start] = 0;
    let mut found = Vec::new();
    while let Some(v) = queue.pop_front() {
        if dist[v] == depth {
            continue;
        }
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                found.push(w);
                queue.push_back(w);
            }
        }
    }
    found.sort_unstable();
    found
}

/// Flattens a neighborhood by fitting a plane (PCA over center and members)
/// and projecting rest offsets onto its tangents.
pub fn local_parameterization(surface: &RestSurface, center: usize, members: Vec<usize>) -> Result<Neighborhood> {
    let p = &surface.positions;
    let count = (members.len() + 1) as f64;
    let centroid = members.iter().fold(p[center], |acc, &j| acc + p[j]) / count;
    let mut cov = Matrix3::zeros();
    for v in std::iter::once(center).chain(members.iter().copied()) {
        let d = p[v] - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let t1: Vec3 = eig.eigenvectors.column(order[0]).into_owned().normalize();
    let normal: Vec3 = eig.eigenvectors.column(order[2]).into_owned();
    let t2 = normal.cross(&t1).normalize();
    let t1 = t2.cross(&normal).normalize();

    let origin = p[center];
    let local_coords = members
        .iter()
        .map(|&j| {
            let d = p[j] - origin;
            Vec2::new(d.dot(&t1), d.dot(&t2))
        })
        .collect();
    let nbhd = Neighborhood {
        center,
        members,
        local_coords,
        frame: Frame {
            origin,
            tangents: [t1, t2],
        },
    };
    check_spread(&nbhd)?;
    Ok(nbhd)
}

/// Builds a neighborhood from explicit flat rest coordinates (e.g. a sewing
/// pattern), one 2D point per sample.
pub fn parameterization_from_uv(uv: &[Vec2], center: usize, members: Vec<usize>) -> Result<Neighborhood> {
    let local_coords = members.iter().map(|&j| uv[j] - uv[center]).collect();
    let nbhd = Neighborhood {
        center,
        members,
        local_coords,
        frame: Frame {
            origin: Vec3::new(uv[center].x, uv[center].y, 0.0),
            tangents: [Vec3::x(), Vec3::y()],
        },
    };
    check_spread(&nbhd)?;
    Ok(nbhd)
}

fn check_spread(nbhd: &Neighborhood) -> Result<()> {
    let cov = nbhd
        .local_coords
        .iter()
        .fold(nalgebra::Matrix2::zeros(), |acc, x| acc + x * x.transpose());
    let eig = cov.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0 && hi / lo <= MAX_CONDITION) {
        return Err(Error::DegenerateNeighborhood(nbhd.center));
    }
    Ok(())
}

/// Selects members and parameterizes every neighborhood.
pub fn build_neighborhoods(surface: &RestSurface, strategy: NeighborhoodStrategy) -> Result<Vec<Neighborhood>> {
    select_members(surface, strategy)?
        .into_iter()
        .enumerate()
        .map(|(i, members)| local_parameterization(surface, i, members))
        .collect()
}

/// Per-point lumped masses (kg).
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedMasses {
    pub masses: Vec<f64>,
}

impl LumpedMasses {
    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Density times one third of the area of every incident triangle.
pub fn compute_lumped_masses(surface: &RestSurface) -> Result<LumpedMasses> {
    let mut masses = vec![0.0; surface.len()];
    for t in surface.triangles()? {
        let share = surface.density * triangle_area(&surface.positions, t) / 3.0;
        for &v in t {
            masses[v] += share;
        }
    }
    if let Some(i) = masses.iter().position(|&m| m <= 0.0) {
        return Err(Error::InvalidSurface(format!("point {i} belongs to no triangle")));
    }
    Ok(LumpedMasses { masses })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line3() -> RestSurface {
        let pts = (0..3).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        RestSurface::new(pts, None, 1.0).unwrap()
    }

    #[test]
    fn radius_on_collinear_points() {
        let s = line3();
        match select_members(&s, NeighborhoodStrategy::Radius(1.5)) {
            Err(Error::NeighborhoodTooSmall(0)) => {}
            other => panic!("unexpected {other:?}"),
        }
        let sets = select_members(&s, NeighborhoodStrategy::Radius(2.0)).unwrap();
        assert_eq!(sets, vec![vec![1, 2], vec![0, 2], vec![0, 1]]);
    }

    #[test]
    fn knn_on_grid_is_the_3x3_stencil() {
        let m = mesh::grid(5, 5, 4.0, 4.0);
        let s = RestSurface::new(m.embed_xy(), Some(m.triangles.clone()), 1.0).unwrap();
        let sets = select_members(&s, NeighborhoodStrategy::Knn(8)).unwrap();
        // interior point (2,2) -> index 12
        let mut got = sets[12].clone();
        got.sort_unstable();
        assert_eq!(got, vec![6, 7, 8, 11, 13, 16, 17, 18]);
    }

    #[test]
    fn knn_ties_break_by_index() {
        let m = mesh::grid(3, 3, 2.0, 2.0);
        let s = RestSurface::new(m.embed_xy(), Some(m.triangles.clone()), 1.0).unwrap();
        let sets = select_members(&s, NeighborhoodStrategy::Knn(2)).unwrap();
        // center 4 has four neighbors at distance 1: 1, 3, 5, 7
        assert_eq!(sets[4], vec![1, 3]);
    }

    #[test]
    fn graph_distance_one_is_the_one_ring() {
        let m = mesh::irregular_square(120, 1.0, 7);
        let s = RestSurface::new(m.embed_xy(), Some(m.triangles.clone()), 1.0).unwrap();
        let sets = select_members(&s, NeighborhoodStrategy::GraphDistance(1)).unwrap();
        // independent oracle: scan triangles for co-occurring vertices
        for (i, set) in sets.iter().enumerate() {
            let mut ring = BTreeSet::new();
            for t in &m.triangles {
                if t.contains(&i) {
                    ring.extend(t.iter().copied().filter(|&v| v != i));
                }
            }
            assert_eq!(set, &ring.into_iter().collect::<Vec<_>>());
        }
    }

    #[test]
    fn flat_parameterization_is_isometric() {
        let pts = vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let s = RestSurface::new(pts, None, 1.0).unwrap();
        let n = local_parameterization(&s, 0, vec![1, 2]).unwrap();
        assert_close!(n.local_coords[0].norm(), 1.0, 1e-14);
        assert_close!(n.local_coords[1].norm(), 1.0, 1e-14);
        assert_close!(n.local_coords[0].dot(&n.local_coords[1]), 0.0, 1e-14);
        let [t1, t2] = n.frame.tangents;
        assert_close!(t1.dot(&t2), 0.0, 1e-14);
        assert_close!(t1.norm(), 1.0, 1e-14);
        assert_close!(t2.norm(), 1.0, 1e-14);
    }

    #[test]
    fn rotated_surface_gives_rotated_coords() {
        let m = mesh::irregular_square(40, 1.0, 3);
        let s = RestSurface::new(m.embed_xy(), Some(m.triangles.clone()), 1.0).unwrap();
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let moved: Vec<Vec3> = s.positions.iter().map(|p| rot * p + Vec3::new(1.0, 2.0, 3.0)).collect();
        let s2 = RestSurface::new(moved, s.triangles.clone(), 1.0).unwrap();
        let a = build_neighborhoods(&s, NeighborhoodStrategy::GraphDistance(1)).unwrap();
        let b = build_neighborhoods(&s2, NeighborhoodStrategy::GraphDistance(1)).unwrap();
        for (na, nb) in a.iter().zip(&b) {
            // Gram matrices of the local coordinates agree iff they differ by an orthogonal map.
            for i in 0..na.len() {
                for j in 0..na.len() {
                    let ga = na.local_coords[i].dot(&na.local_coords[j]);
                    let gb = nb.local_coords[i].dot(&nb.local_coords[j]);
                    assert_close!(ga, gb, 1e-12);
                }
            }
        }
    }

    #[test]
    fn cylinder_patch_matches_unrolled_lengths() {
        // 8 neighbors on a unit cylinder, angular extent at most 0.2 rad
        let on_cyl = |theta: f64, z: f64| Vec3::new(theta.cos(), theta.sin(), z);
        let params = [
            (0.0, 0.0),
            (0.1, 0.0),
            (-0.1, 0.0),
            (0.0, 0.1),
            (0.0, -0.1),
            (0.07, 0.07),
            (-0.07, 0.07),
            (0.07, -0.07),
            (-0.07, -0.07),
        ];
        let pts = params.iter().map(|&(t, z)| on_cyl(t, z)).collect();
        let s = RestSurface::new(pts, None, 1.0).unwrap();
        let n = local_parameterization(&s, 0, (1..9).collect()).unwrap();
        for (k, &(t, z)) in params[1..].iter().enumerate() {
            let geodesic = (t * t + z * z).sqrt();
            let rel = (n.local_coords[k].norm() - geodesic).abs() / geodesic;
            assert!(rel < 0.005, "member {k}: rel err {rel}");
        }
    }

    #[test]
    fn collinear_neighborhood_is_degenerate() {
        let s = line3();
        assert!(matches!(
            local_parameterization(&s, 1, vec![0, 2]),
            Err(Error::DegenerateNeighborhood(1))
        ));
    }

    #[test]
    fn lumped_masses_single_triangle() {
        let pts = vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let s = RestSurface::new(pts, Some(vec![[0, 1, 2]]), 0.1).unwrap();
        let m = compute_lumped_masses(&s).unwrap();
        for &mi in &m.masses {
            assert_close!(mi, 0.1 * 0.5 / 3.0, 1e-15);
        }
    }

    #[test]
    fn lumped_masses_unit_square() {
        let m = mesh::grid(2, 2, 1.0, 1.0);
        let s = RestSurface::new(m.embed_xy(), Some(m.triangles.clone()), 1.0).unwrap();
        assert_close!(compute_lumped_masses(&s).unwrap().total(), 1.0, 1e-15);
    }

    #[test]
    fn lumped_masses_match_per_triangle_accumulation() {
        let m = mesh::irregular_disk(200, 0.7, 11);
        let s = RestSurface::new(m.embed_xy(), Some(m.triangles.clone()), 0.3).unwrap();
        let masses = compute_lumped_masses(&s).unwrap();
        // oracle: for each vertex, scan all triangles and use Heron's formula
        for v in 0..s.len() {
            let mut acc = 0.0;
            for t in &m.triangles {
                if t.contains(&v) {
                    let [a, b, c] = t.map(|k| s.positions[k]);
                    let (x, y, z) = ((b - a).norm(), (c - b).norm(), (a - c).norm());
                    let sp = 0.5 * (x + y + z);
                    acc += 0.3 * (sp * (sp - x) * (sp - y) * (sp - z)).sqrt() / 3.0;
                }
            }
            assert_close!(masses.masses[v], acc, 1e-12);
        }
        let total = masses.total();
        let expected = 0.3 * s.total_area().unwrap();
        assert!((total - expected).abs() / expected < 1e-10);
    }

    #[test]
    fn invalid_surfaces_are_rejected() {
        let pts = vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        assert!(RestSurface::new(pts.clone(), Some(vec![[0, 1, 2]]), 1.0).is_err());
        assert!(RestSurface::new(pts.clone(), Some(vec![[0, 1, 5]]), 1.0).is_err());
        assert!(RestSurface::new(vec![Vec3::new(f64::NAN, 0.0, 0.0)], None, 1.0).is_err());
        let s = RestSurface::new(pts, None, 1.0).unwrap();
        assert!(matches!(compute_lumped_masses(&s), Err(Error::MissingTriangulation)));
    }
}
