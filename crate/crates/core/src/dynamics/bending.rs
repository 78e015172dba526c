use nalgebra_sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::geometry::{LaplacianOperator, Vec3};
use crate::solver::{LowerPattern, SpdFactor};

/// Quadratic bending energy `(k/2) Σ_c (L y_c)ᵀ M⁻¹ (L y_c)` over the three
/// coordinates, with `L` the cotangent Laplacian and `M` the lumped masses.
///
/// Its Hessian `K = k Lᵀ M⁻¹ L` is constant, so the implicit velocity matrix
/// `M (1 + h γ) + h² K` is factored once.
#[derive(Debug, Clone)]
pub struct BendingSystem {
    laplacian: CsrMatrix<f64>,
    stiffness_matrix: CsrMatrix<f64>,
    masses: Vec<f64>,
    stiffness: f64,
    dt: f64,
    damping: f64,
    factor: SpdFactor,
}

fn csr_mul(m: &CsrMatrix<f64>, x: &[f64]) -> Vec<f64> {
    m.row_iter()
        .map(|row| row.col_indices().iter().zip(row.values()).map(|(&j, v)| v * x[j]).sum())
        .collect()
}

impl BendingSystem {
    /// `stiffness` is `k`, `damping` the mass-proportional damping rate `γ` (1/s).
    pub fn new(laplacian: &LaplacianOperator, masses: &[f64], stiffness: f64, dt: f64, damping: f64) -> Result<Self> {
        let n = masses.len();
        if laplacian.len() != n {
            return Err(Error::Validation("Laplacian and masses disagree in size".into()));
        }
        let l = laplacian.matrix.clone();
        let mut scaled = l.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            let w = stiffness / masses[i];
            row.values_mut().iter_mut().for_each(|v| *v *= w);
        }
        let k = &l.transpose() * &scaled;

        let mut pairs = Vec::with_capacity(k.nnz());
        for (i, j, _) in k.triplet_iter() {
            if i > j {
                pairs.push((i, j));
            }
        }
        let pattern = LowerPattern::from_pairs(n, pairs);
        let mut values = vec![0.0; pattern.nnz()];
        for (i, &m) in masses.iter().enumerate() {
            values[pattern.diag(i)] += m * (1.0 + dt * damping);
        }
        for (i, j, &v) in k.triplet_iter() {
            if i >= j {
                values[pattern.find(i, j).unwrap()] += dt * dt * v;
            }
        }
        let mut factor = SpdFactor::new(pattern)?;
        factor.factor(&values)?;
        Ok(BendingSystem {
            laplacian: l,
            stiffness_matrix: k,
            masses: masses.to_vec(),
            stiffness,
            dt,
            damping,
            factor,
        })
    }

    pub fn stiffness(&self) -> f64 {
        self.stiffness
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    /// `K = k Lᵀ M⁻¹ L`, applied to each coordinate separately.
    pub fn stiffness_matrix(&self) -> &CsrMatrix<f64> {
        &self.stiffness_matrix
    }

    pub fn energy(&self, y: &[Vec3]) -> f64 {
        let mut e = 0.0;
        for c in 0..3 {
            let coord: Vec<f64> = y.iter().map(|p| p[c]).collect();
            let ly = csr_mul(&self.laplacian, &coord);
            e += ly.iter().zip(&self.masses).map(|(v, m)| v * v / m).sum::<f64>();
        }
        0.5 * self.stiffness * e
    }

    /// `-K y`.
    pub fn force(&self, y: &[Vec3]) -> Vec<Vec3> {
        let mut out = vec![Vec3::zeros(); y.len()];
        for c in 0..3 {
            let coord: Vec<f64> = y.iter().map(|p| p[c]).collect();
            for (o, v) in out.iter_mut().zip(csr_mul(&self.stiffness_matrix, &coord)) {
                o[c] = -v;
            }
        }
        out
    }

    /// Solves `(M (1 + h γ) + h² K) v = rhs` per coordinate.
    pub fn solve(&self, rhs: &[Vec3]) -> Vec<Vec3> {
        let mut out = vec![Vec3::zeros(); rhs.len()];
        for c in 0..3 {
            let mut coord: Vec<f64> = rhs.iter().map(|p| p[c]).collect();
            self.factor.solve_in_place(&mut coord);
            for (o, v) in out.iter_mut().zip(coord) {
                o[c] = v;
            }
        }
        out
    }
}

/// Bending energy (J) and force (N).
pub fn bending_force_and_energy(y: &[Vec3], system: &BendingSystem) -> (f64, Vec<Vec3>) {
    (system.energy(y), system.force(y))
}
