use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Triangle mesh read from an OBJ file.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjMesh {
    pub positions: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

/// Reads `v` and `f` records. Faces must be triangles; texture and normal
/// indices (`f 1/2/3 ...`) and negative indices are accepted, other records
/// are ignored.
pub fn read_obj(path: &Path) -> Result<ObjMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

pub fn parse_obj(text: &str, path: &Path) -> Result<ObjMesh> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut positions = Vec::new();
    let mut triangles = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut fields = content.split_whitespace();
        match fields.next() {
            Some("v") => {
                let coords: Vec<f64> = fields
                    .take(3)
                    .map(|f| f.parse::<f64>().map_err(|_| err(line, format!("bad coordinate '{f}'"))))
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(err(line, "vertex needs three coordinates".into()));
                }
                positions.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = fields
                    .map(|f| {
                        let first = f.split('/').next().unwrap_or("");
                        let i: i64 = first.parse().map_err(|_| err(line, format!("bad face index '{f}'")))?;
                        let resolved = if i > 0 {
                            i - 1
                        } else {
                            positions.len() as i64 + i
                        };
                        if i == 0 || resolved < 0 || resolved >= positions.len() as i64 {
                            return Err(err(line, format!("face index {i} out of range")));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(err(line, format!("only triangles are supported, found {} vertices", idx.len())));
                }
                triangles.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    if positions.is_empty() {
        return Err(err(0, "no vertices".into()));
    }
    Ok(ObjMesh { positions, triangles })
}

pub fn format_obj(positions: &[Vec3], triangles: &[[usize; 3]]) -> String {
    let mut s = String::with_capacity(40 * positions.len() + 20 * triangles.len());
    for p in positions {
        let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
    }
    for t in triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

pub fn write_obj(path: &Path, positions: &[Vec3], triangles: &[[usize; 3]]) -> Result<()> {
    fs::write(path, format_obj(positions, triangles)).map_err(|e| Error::io(path, e))
}
