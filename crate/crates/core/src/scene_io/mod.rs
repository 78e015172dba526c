//! Scene files, mesh input, frame and diagnostics output, and run drivers.
//!
//! Scenes are TOML documents. Unknown keys are rejected and every quantity is
//! in SI units.
//!
//! ```toml
//! [mesh]
//! generator = "irregular_square"   # or: path = "sheet.obj", format = "obj"
//! count = 662
//! size = [1.0, 1.0]
//! seed = 1
//! plane = "xz"
//!
//! [material]
//! k = 1e-4                         # or E, t, nu
//! area_density = 0.2
//!
//! [neighborhoods]
//! strategy = "graph"               # "radius" | "knn" | "graph"
//! parameter = 1
//!
//! [sim]
//! dt = 1e-3
//! duration = 5.0
//! tolerance = 0.01
//!
//! [pins]
//! nearest = [[0.0, 0.0, 0.0], [1.0, 0.0, 1.0]]
//!
//! [output]
//! directory = "out"
//! frame_stride = 100
//! ```

mod obj;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use obj::{format_obj, parse_obj, read_obj, write_obj, ObjMesh};
pub use output::{run, RunSummary, CSV_HEADER};

use crate::dynamics::{Collider, ConstraintModel, MaterialParams, Scene, Simulation};
use crate::error::{Error, Result};
use crate::geometry::{mesh, NeighborhoodStrategy, RestSurface, Vec3};
use crate::solver::ProjectionConfig;

/// Parsed scene document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub mesh: MeshSection,
    pub material: MaterialSection,
    #[serde(default)]
    pub neighborhoods: NeighborhoodSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub pins: PinSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coupling: Vec<CouplingSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loads: Vec<LoadSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub colliders: Vec<ColliderSpec>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    /// OBJ file, relative to the scene file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    /// `grid`, `irregular_square` or `irregular_disk`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    /// Point count of irregular generators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Vertex counts of the grid generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<[usize; 2]>,
    /// Width and height (m); the disk generator uses the first as diameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Plane spanned by the generator's (u, v) axes: `xy`, `xz` or `yz`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plane: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub youngs_modulus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    pub area_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborhoodSection {
    pub strategy: String,
    pub parameter: f64,
}

impl Default for NeighborhoodSection {
    fn default() -> Self {
        NeighborhoodSection {
            strategy: "graph".into(),
            parameter: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub dt: f64,
    pub duration: f64,
    pub tolerance: f64,
    pub max_fp_iters: usize,
    pub stall_iters: usize,
    pub fp_levenberg: f64,
    pub fp_backtracks: usize,
    pub gravity: [f64; 3],
    pub damping: f64,
    pub geometric_stiffness: bool,
    pub warm_start: bool,
    pub reproject_after_collision: bool,
    /// `isometry` or `edge`.
    pub constraints: String,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            dt: 1e-3,
            duration: 1.0,
            tolerance: 0.1,
            max_fp_iters: 20,
            stall_iters: 3,
            fp_levenberg: 1e-6,
            fp_backtracks: 4,
            gravity: [0.0, -9.81, 0.0],
            damping: 0.0,
            geometric_stiffness: false,
            warm_start: false,
            reproject_after_collision: false,
            constraints: "isometry".into(),
        }
    }
}

/// Points pinned at their starting positions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PinSection {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub indices: Vec<usize>,
    /// The rest point closest to each location.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub nearest: Vec<[f64; 3]>,
    /// Every rest point inside each axis-aligned box.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub boxes: Vec<BoxSelector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSelector {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

/// `Σ w_p y_p = target`. Without explicit weights, `points` share equal
/// weights summing to one (an average-position constraint).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<(usize, f64)>,
    pub target: [f64; 3],
}

/// Constant force on one point, chosen by index or nearest rest location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nearest: Option<[f64; 3]>,
    pub force: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ColliderSpec {
    Plane {
        point: [f64; 3],
        normal: [f64; 3],
        #[serde(default)]
        friction: f64,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
        #[serde(default)]
        friction: f64,
    },
    Box {
        min: [f64; 3],
        max: [f64; 3],
        #[serde(default)]
        friction: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub frame_stride: usize,
    pub frames: bool,
    pub diagnostics: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
            frame_stride: 100,
            frames: true,
            diagnostics: true,
        }
    }
}

/// A scene with its precomputation done.
#[derive(Debug)]
pub struct LoadedScene {
    pub file: SceneFile,
    pub simulation: Simulation,
    /// Triangles written to frame files.
    pub triangles: Vec<[usize; 3]>,
    /// Output directory resolved against the scene file.
    pub output_dir: PathBuf,
    pub output: OutputSection,
    pub setup_time: Duration,
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

/// Parses a scene document. `path` only labels errors.
pub fn parse_scene(text: &str, path: &Path) -> Result<SceneFile> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.message().to_string(),
        }
    })
}

/// Canonical text of a scene document.
pub fn serialize_scene(file: &SceneFile) -> String {
    toml::to_string(file).expect("scene documents always serialize")
}

/// Reads, validates and precomputes a scene.
pub fn load_scene(path: &Path) -> Result<LoadedScene> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = parse_scene(&text, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    build_scene(file, base)
}

/// Parses and validates without precomputation.
pub fn validate_scene(path: &Path) -> Result<(SceneFile, Scene)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = parse_scene(&text, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let (scene, _) = file.to_scene(base)?;
    scene.validate()?;
    Ok((file, scene))
}

/// Builds the simulation of a parsed document; relative paths are resolved
/// against `base`.
pub fn build_scene(file: SceneFile, base: &Path) -> Result<LoadedScene> {
    let (scene, triangles) = file.to_scene(base)?;
    let simulation = Simulation::new(scene)?;
    let output_dir = base.join(&file.output.directory);
    Ok(LoadedScene {
        setup_time: simulation.setup_time,
        output: file.output.clone(),
        file,
        simulation,
        triangles,
        output_dir,
    })
}

/// The same scene with one length constraint per mesh edge in place of the
/// isometry constraints.
pub fn baseline_edge_constraints(mut scene: Scene) -> Scene {
    scene.model = ConstraintModel::EdgeLength;
    scene
}

impl SceneFile {
    /// Scene and its triangle list.
    pub fn to_scene(&self, base: &Path) -> Result<(Scene, Vec<[usize; 3]>)> {
        let material = self.material.to_params()?;
        let (positions, triangles) = self.mesh.load(base)?;
        let surface = RestSurface::new(positions, Some(triangles.clone()), material.area_density)?;
        let n = surface.len();
        let mut scene = Scene::new(surface, material);

        let p = self.neighborhoods.parameter;
        scene.neighborhoods = match self.neighborhoods.strategy.as_str() {
            "radius" if p > 0.0 => NeighborhoodStrategy::Radius(p),
            "knn" if p >= 2.0 && p.fract() == 0.0 => NeighborhoodStrategy::Knn(p as usize),
            "graph" if p >= 1.0 && p.fract() == 0.0 => NeighborhoodStrategy::GraphDistance(p as usize),
            "radius" | "knn" | "graph" => {
                return Err(invalid(format!("neighborhoods.parameter {p} is invalid for this strategy")))
            }
            other => return Err(invalid(format!("neighborhoods.strategy '{other}' is not radius, knn or graph"))),
        };

        let sim = &self.sim;
        scene.dt = sim.dt;
        scene.duration = sim.duration;
        scene.gravity = v3(sim.gravity);
        scene.damping = sim.damping;
        scene.reproject_after_collision = sim.reproject_after_collision;
        scene.model = match sim.constraints.as_str() {
            "isometry" => ConstraintModel::Isometry,
            "edge" => ConstraintModel::EdgeLength,
            other => return Err(invalid(format!("sim.constraints '{other}' is not isometry or edge"))),
        };
        scene.projection = ProjectionConfig {
            tolerance: sim.tolerance,
            max_fp_iters: sim.max_fp_iters,
            stall_iters: sim.stall_iters,
            fp_levenberg: sim.fp_levenberg,
            fp_backtracks: sim.fp_backtracks,
            use_geometric_stiffness: sim.geometric_stiffness,
            warm_start: sim.warm_start,
            ..ProjectionConfig::default()
        };
        if !(sim.tolerance > 0.0) {
            return Err(invalid("sim.tolerance must be > 0"));
        }
        if sim.max_fp_iters == 0 {
            return Err(invalid("sim.max_fp_iters must be >= 1"));
        }

        let rest = scene.surface.positions.clone();
        let nearest = |q: [f64; 3]| -> usize {
            let q = v3(q);
            let mut best = (f64::INFINITY, 0);
            for (i, x) in rest.iter().enumerate() {
                let d = (x - q).norm_squared();
                if d < best.0 {
                    best = (d, i);
                }
            }
            best.1
        };
        let mut pinned: Vec<usize> = self.pins.indices.clone();
        pinned.extend(self.pins.nearest.iter().map(|&q| nearest(q)));
        for b in &self.pins.boxes {
            let before = pinned.len();
            pinned.extend(
                rest.iter()
                    .enumerate()
                    .filter(|(_, x)| (0..3).all(|k| x[k] >= b.min[k] && x[k] <= b.max[k]))
                    .map(|(i, _)| i),
            );
            if pinned.len() == before {
                return Err(invalid(format!("pins.boxes selector {:?}..{:?} contains no point", b.min, b.max)));
            }
        }
        if let Some(&bad) = pinned.iter().find(|&&i| i >= n) {
            return Err(invalid(format!("pins.indices: point {bad} out of range (N = {n})")));
        }
        pinned.sort_unstable();
        pinned.dedup();
        scene.pin_in_place(&pinned);

        for c in &self.coupling {
            let weights = if !c.weights.is_empty() {
                c.weights.clone()
            } else if !c.points.is_empty() {
                let w = 1.0 / c.points.len() as f64;
                c.points.iter().map(|&p| (p, w)).collect()
            } else {
                return Err(invalid("coupling needs points or weights"));
            };
            scene.coupling.push((weights, v3(c.target)));
        }
        for l in &self.loads {
            let p = match (l.point, l.nearest) {
                (Some(p), None) => p,
                (None, Some(q)) => nearest(q),
                _ => return Err(invalid("loads need exactly one of point or nearest")),
            };
            scene.loads.push((p, v3(l.force)));
        }
        for c in &self.colliders {
            scene.colliders.push(match *c {
                ColliderSpec::Plane { point, normal, friction } => {
                    if v3(normal).norm() == 0.0 {
                        return Err(invalid("colliders.normal must be nonzero"));
                    }
                    Collider::plane(v3(point), v3(normal), friction)
                }
                ColliderSpec::Sphere { center, radius, friction } => Collider::Sphere {
                    center: v3(center),
                    radius,
                    friction,
                },
                ColliderSpec::Box { min, max, friction } => Collider::Box {
                    min: v3(min),
                    max: v3(max),
                    friction,
                },
            });
        }
        scene.frame_stride = self.output.frame_stride;
        scene.validate()?;
        Ok((scene, triangles))
    }
}

impl MaterialSection {
    fn to_params(&self) -> Result<MaterialParams> {
        let m = match (self.k, self.youngs_modulus, self.t, self.nu) {
            (Some(k), None, None, None) => MaterialParams::new(k, self.area_density),
            (None, Some(e), Some(t), nu) => MaterialParams::from_elastic(e, t, nu.unwrap_or(0.0), self.area_density),
            _ => return Err(invalid("material needs either k or E and t (with optional nu)")),
        };
        m.validate()?;
        Ok(m)
    }
}

impl MeshSection {
    fn load(&self, base: &Path) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
        match (&self.path, &self.generator) {
            (Some(path), None) => {
                if let Some(f) = &self.format {
                    if !f.eq_ignore_ascii_case("obj") {
                        return Err(invalid(format!("mesh.format '{f}' is not supported (obj only)")));
                    }
                }
                let m = read_obj(&base.join(path))?;
                if m.triangles.is_empty() {
                    return Err(invalid("mesh file has no faces"));
                }
                Ok((m.positions, m.triangles))
            }
            (None, Some(generator)) => {
                let [w, h] = self.size.unwrap_or([1.0, 1.0]);
                if !(w > 0.0 && h > 0.0) {
                    return Err(invalid("mesh.size must be positive"));
                }
                let seed = self.seed.unwrap_or(0);
                let planar = match generator.as_str() {
                    "grid" => {
                        let [nx, ny] = self.resolution.ok_or_else(|| invalid("mesh.resolution is required for grid"))?;
                        if nx < 2 || ny < 2 {
                            return Err(invalid("mesh.resolution needs at least 2 x 2 vertices"));
                        }
                        mesh::grid(nx, ny, w, h)
                    }
                    "irregular_square" => {
                        let count = self.count.ok_or_else(|| invalid("mesh.count is required"))?;
                        if count < 20 {
                            return Err(invalid("mesh.count must be at least 20"));
                        }
                        if w != h {
                            return Err(invalid("irregular_square needs equal width and height"));
                        }
                        mesh::irregular_square(count, w, seed)
                    }
                    "irregular_disk" => {
                        let count = self.count.ok_or_else(|| invalid("mesh.count is required"))?;
                        if count < 20 {
                            return Err(invalid("mesh.count must be at least 20"));
                        }
                        mesh::irregular_disk(count, 0.5 * w, seed)
                    }
                    other => return Err(invalid(format!("mesh.generator '{other}' is unknown"))),
                };
                let (u, v) = match self.plane.as_deref().unwrap_or("xy") {
                    "xy" => (Vec3::x(), Vec3::y()),
                    "xz" => (Vec3::x(), Vec3::z()),
                    "yz" => (Vec3::y(), Vec3::z()),
                    other => return Err(invalid(format!("mesh.plane '{other}' is not xy, xz or yz"))),
                };
                let origin = v3(self.origin.unwrap_or([0.0; 3]));
                Ok((planar.embed(origin, u, v), planar.triangles))
            }
            _ => Err(invalid("mesh needs exactly one of path or generator")),
        }
    }
}
