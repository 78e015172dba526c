use nalgebra_sparse::{CooMatrix, CsrMatrix};

use super::RestSurface;
use crate::error::Result;

/// Cotangent Laplacian of the rest triangulation.
///
/// Off-diagonal weights are `(cot a + cot b) / 2` for the two angles opposite
/// an edge, diagonals make rows sum to zero, and rows of boundary vertices are
/// zero so that every affine map of a flat sheet lies in the kernel.
#[derive(Debug, Clone)]
pub struct LaplacianOperator {
    pub matrix: CsrMatrix<f64>,
    pub interior: Vec<bool>,
}

impl LaplacianOperator {
    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.is_empty()
    }
}

pub fn assemble_laplacian(surface: &RestSurface) -> Result<LaplacianOperator> {
    let tris = surface.triangles()?;
    let interior: Vec<bool> = surface.boundary_mask()?.into_iter().map(|b| !b).collect();
    let p = &surface.positions;
    let n = surface.len();
    let mut coo = CooMatrix::new(n, n);
    for t in tris {
        for k in 0..3 {
            let (o, a, b) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            let (ea, eb) = (p[a] - p[o], p[b] - p[o]);
            let cot = ea.dot(&eb) / ea.cross(&eb).norm();
            let w = 0.5 * cot;
            for (row, col) in [(a, b), (b, a)] {
                if interior[row] {
                    coo.push(row, col, w);
                    coo.push(row, row, -w);
                }
            }
        }
    }
    Ok(LaplacianOperator {
        matrix: CsrMatrix::from(&coo),
        interior,
    })
}
