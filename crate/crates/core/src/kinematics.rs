//! Moving least squares deformation gradients.
//!
//! For neighborhood `i` with flat member coordinates `X` (2 x n), current
//! offsets `Y_j - Y_i` stacked as `Y` (3 x n) and weights `W = diag(m_j)`, the
//! averaged deformation gradient minimizing `sum_j m_j |F X_j - (Y_j - Y_i)|²`
//! is `F = Y W Xᵀ (X W Xᵀ)⁻¹ = Y A`. `A` depends on rest data only and is
//! precomputed.

use nalgebra::{Matrix2, Matrix3x2};

use crate::error::{Error, Result};
use crate::geometry::{Neighborhood, Vec2, Vec3};

const MAX_GRAM_CONDITION: f64 = 1e12;

/// Precomputed least squares operator of one neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct MlsEntry {
    /// Row `k` of `A = W Xᵀ (X W Xᵀ)⁻¹`, i.e. the weight of member `k`'s offset.
    pub coeffs: Vec<Vec2>,
    /// `(X W Xᵀ)⁻¹`.
    pub gram_inv: Matrix2<f64>,
}

impl MlsEntry {
    /// Coefficient of the center position: `F` depends on `Y_i` through `-Σ_j A_j`.
    pub fn center_coeff(&self) -> Vec2 {
        -self.coeffs.iter().fold(Vec2::zeros(), |acc, a| acc + a)
    }

    /// Coefficients for the full stencil, center first.
    pub fn stencil_coeffs(&self) -> Vec<Vec2> {
        std::iter::once(self.center_coeff()).chain(self.coeffs.iter().copied()).collect()
    }
}

/// One [`MlsEntry`] per neighborhood, in neighborhood order.
#[derive(Debug, Clone, PartialEq)]
pub struct MlsOperator {
    pub entries: Vec<MlsEntry>,
}

/// Builds the operator of a neighborhood. `masses` is indexed by point; the
/// center's own mass does not enter.
pub fn precompute_mls(nbhd: &Neighborhood, masses: &[f64]) -> Result<MlsEntry> {
    let mut gram = Matrix2::zeros();
    for (x, &j) in nbhd.local_coords.iter().zip(&nbhd.members) {
        gram += masses[j] * x * x.transpose();
    }
    let eig = gram.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0 && hi / lo <= MAX_GRAM_CONDITION) {
        return Err(Error::SingularGram(nbhd.center));
    }
    let gram_inv = gram.try_inverse().ok_or(Error::SingularGram(nbhd.center))?;
    let gram_inv = 0.5 * (gram_inv + gram_inv.transpose());
    let coeffs = nbhd
        .local_coords
        .iter()
        .zip(&nbhd.members)
        .map(|(x, &j)| masses[j] * (gram_inv * x))
        .collect();
    Ok(MlsEntry { coeffs, gram_inv })
}

pub fn precompute_all(nbhds: &[Neighborhood], masses: &[f64]) -> Result<MlsOperator> {
    let entries = nbhds.iter().map(|n| precompute_mls(n, masses)).collect::<Result<_>>()?;
    Ok(MlsOperator { entries })
}

/// Averaged 3x2 deformation gradient of a neighborhood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformationGradient(pub Matrix3x2<f64>);

impl DeformationGradient {
    pub fn columns(&self) -> (Vec3, Vec3) {
        (self.0.column(0).into_owned(), self.0.column(1).into_owned())
    }
}

/// Green strain `FᵀF - I` (no factor one half).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainTensor(pub Matrix2<f64>);

/// `F = Σ_j (Y_j - Y_i) A_jᵀ`.
pub fn deformation_gradient(positions: &[Vec3], nbhd: &Neighborhood, entry: &MlsEntry) -> DeformationGradient {
    let yi = positions[nbhd.center];
    let mut f = Matrix3x2::zeros();
    for (a, &j) in entry.coeffs.iter().zip(&nbhd.members) {
        f += (positions[j] - yi) * a.transpose();
    }
    DeformationGradient(f)
}

pub fn strain(f: &DeformationGradient) -> StrainTensor {
    let (f1, f2) = f.columns();
    let off = f1.dot(&f2);
    StrainTensor(Matrix2::new(f1.norm_squared() - 1.0, off, off, f2.norm_squared() - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Frame, Neighborhood};

    fn nbhd(coords: &[Vec2]) -> Neighborhood {
        Neighborhood {
            center: 0,
            members: (1..=coords.len()).collect(),
            local_coords: coords.to_vec(),
            frame: Frame {
                origin: Vec3::zeros(),
                tangents: [Vec3::x(), Vec3::y()],
            },
        }
    }

    fn flat(coords: &[Vec2]) -> Vec<Vec3> {
        std::iter::once(Vec3::zeros())
            .chain(coords.iter().map(|x| Vec3::new(x.x, x.y, 0.0)))
            .collect()
    }

    #[test]
    fn orthonormal_members_pick_columns_directly() {
        let coords = [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        let n = nbhd(&coords);
        let e = precompute_mls(&n, &[1.0; 3]).unwrap();
        assert_eq!(e.coeffs[0], Vec2::new(1.0, 0.0));
        assert_eq!(e.coeffs[1], Vec2::new(0.0, 1.0));
        let y = vec![Vec3::zeros(), Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0)];
        let f = deformation_gradient(&y, &n, &e).0;
        assert_eq!(f.column(0).into_owned(), Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(f.column(1).into_owned(), Vec3::new(4.0, 5.0, 6.0));
    }

    #[test]
    fn weight_scale_does_not_matter() {
        let coords = [Vec2::new(1.0, 0.2), Vec2::new(-0.3, 0.9), Vec2::new(0.5, -0.7)];
        let n = nbhd(&coords);
        let m = [1.0, 0.3, 0.8, 1.7];
        let m10: Vec<f64> = m.iter().map(|x| 10.0 * x).collect();
        let a = precompute_mls(&n, &m).unwrap();
        let b = precompute_mls(&n, &m10).unwrap();
        for (x, y) in a.coeffs.iter().zip(&b.coeffs) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn right_inverse_and_spd_gram() {
        let coords = [Vec2::new(1.0, 0.2), Vec2::new(-0.3, 0.9), Vec2::new(0.5, -0.7)];
        let n = nbhd(&coords);
        let e = precompute_mls(&n, &[1.0, 2.0, 0.5, 1.5]).unwrap();
        let mut xa = Matrix2::zeros();
        for (x, a) in coords.iter().zip(&e.coeffs) {
            xa += x * a.transpose();
        }
        assert!((xa - Matrix2::identity()).norm() < 1e-12);
        assert_eq!(e.gram_inv, e.gram_inv.transpose());
        assert!(e.gram_inv.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn flat_embedding_gives_identity_and_dilation_scales() {
        let coords = [Vec2::new(1.0, 0.2), Vec2::new(-0.3, 0.9), Vec2::new(0.5, -0.7), Vec2::new(-0.6, -0.4)];
        let n = nbhd(&coords);
        let e = precompute_mls(&n, &[1.0, 2.0, 0.5, 1.5, 0.7]).unwrap();
        let y = flat(&coords);
        let f = deformation_gradient(&y, &n, &e);
        let id = Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        assert!((f.0 - id).norm() < 1e-14);
        let y2: Vec<Vec3> = y.iter().map(|p| 2.0 * p).collect();
        let f2 = deformation_gradient(&y2, &n, &e);
        assert!((f2.0 - 2.0 * id).norm() < 1e-14);
        let rot = nalgebra::Rotation3::from_euler_angles(0.4, 0.1, -0.9);
        let yr: Vec<Vec3> = y.iter().map(|p| rot * p).collect();
        let fr = deformation_gradient(&yr, &n, &e);
        assert!((fr.0 - rot.matrix() * id).norm() < 1e-14);
        assert!(strain(&fr).0.norm() < 1e-14);
    }

    #[test]
    fn strain_examples() {
        let id = DeformationGradient(Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0));
        assert_eq!(strain(&id).0, Matrix2::zeros());
        let two = DeformationGradient(2.0 * id.0);
        assert_eq!(strain(&two).0, 3.0 * Matrix2::identity());
    }

    #[test]
    fn collinear_members_have_singular_gram() {
        let coords = [Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0)];
        assert!(matches!(
            precompute_mls(&nbhd(&coords), &[1.0; 3]),
            Err(Error::SingularGram(0))
        ));
    }
}
