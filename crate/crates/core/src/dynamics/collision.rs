use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Distance kept between a corrected point and the collider surface (m).
pub const CONTACT_OFFSET: f64 = 1e-4;

/// Static rigid obstacle. `friction` is in `[0, 1]`; tangential velocity of a
/// contacting point is scaled by `1 - friction`.
#[derive(Debug, Clone, PartialEq)]
pub enum Collider {
    /// Half-space below the plane through `point` with unit `normal`.
    Plane { point: Vec3, normal: Vec3, friction: f64 },
    Sphere { center: Vec3, radius: f64, friction: f64 },
    /// Axis-aligned box.
    Box { min: Vec3, max: Vec3, friction: f64 },
}

impl Collider {
    pub fn plane(point: Vec3, normal: Vec3, friction: f64) -> Self {
        Collider::Plane {
            point,
            normal: normal.normalize(),
            friction,
        }
    }

    pub fn friction(&self) -> f64 {
        match self {
            Collider::Plane { friction, .. } | Collider::Sphere { friction, .. } | Collider::Box { friction, .. } => {
                *friction
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &Vec3| v.iter().all(|c| c.is_finite());
        let f = self.friction();
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Validation(format!("collider friction {f} is outside [0, 1]")));
        }
        match self {
            Collider::Plane { point, normal, .. } => {
                if !finite(point) || !finite(normal) || (normal.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::Validation("plane collider needs a finite point and unit normal".into()));
                }
            }
            Collider::Sphere { center, radius, .. } => {
                if !finite(center) || !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::Validation("sphere collider needs a finite center and positive radius".into()));
                }
            }
            Collider::Box { min, max, .. } => {
                if !finite(min) || !finite(max) || (0..3).any(|k| min[k] >= max[k]) {
                    return Err(Error::Validation("box collider needs min < max on every axis".into()));
                }
            }
        }
        Ok(())
    }

    /// Corrected position and outward normal when `p` is inside.
    pub fn resolve(&self, p: &Vec3) -> Option<(Vec3, Vec3)> {
        match self {
            Collider::Plane { point, normal, .. } => {
                let d = (p - point).dot(normal);
                (d < 0.0).then(|| ((p - normal * d) + normal * CONTACT_OFFSET, *normal))
            }
            Collider::Sphere { center, radius, .. } => {
                let r = (p - center).norm();
                if r >= *radius {
                    return None;
                }
                let dir = if r > 0.0 { (p - center) / r } else { Vec3::x() };
                Some((center + dir * (radius + CONTACT_OFFSET), dir))
            }
            Collider::Box { min, max, .. } => {
                if (0..3).any(|k| p[k] <= min[k] || p[k] >= max[k]) {
                    return None;
                }
                // exit through the nearest face; ties go to the lower axis, min side first
                let mut best = (f64::INFINITY, 0, -1.0);
                for k in 0..3 {
                    for (depth, sign) in [(p[k] - min[k], -1.0), (max[k] - p[k], 1.0)] {
                        if depth < best.0 {
                            best = (depth, k, sign);
                        }
                    }
                }
                let (_, k, sign) = best;
                let mut q = *p;
                q[k] = if sign < 0.0 { min[k] - CONTACT_OFFSET } else { max[k] + CONTACT_OFFSET };
                let mut n = Vec3::zeros();
                n[k] = sign;
                Some((q, n))
            }
        }
    }
}

/// Pushes points out of every collider and filters their velocities: the
/// normal component is clamped to be non-negative and the tangential part is
/// scaled by `1 - friction`. Returns the number of corrected points.
pub fn apply_collisions(y: &mut [Vec3], v: &mut [Vec3], colliders: &[Collider]) -> usize {
    let mut contacts = 0;
    for (p, vel) in y.iter_mut().zip(v.iter_mut()) {
        let mut hit = false;
        for c in colliders {
            if let Some((q, n)) = c.resolve(p) {
                *p = q;
                let vn = vel.dot(&n);
                let tangential = *vel - n * vn;
                *vel = n * vn.max(0.0) + tangential * (1.0 - c.friction());
                hit = true;
            }
        }
        contacts += hit as usize;
    }
    contacts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_at_sphere_center_leaves_along_x() {
        let c = Collider::Sphere {
            center: Vec3::new(1.0, 2.0, 3.0),
            radius: 0.5,
            friction: 0.0,
        };
        let mut y = vec![Vec3::new(1.0, 2.0, 3.0)];
        let mut v = vec![Vec3::new(-2.0, 0.0, 0.0)];
        assert_eq!(apply_collisions(&mut y, &mut v, &[c]), 1);
        assert_close!(y[0].x, 1.5 + CONTACT_OFFSET, 1e-15);
        assert_eq!((y[0].y, y[0].z), (2.0, 3.0));
        assert_eq!(v[0], Vec3::zeros());
    }

    #[test]
    fn outside_points_are_untouched() {
        let colliders = [
            Collider::Sphere {
                center: Vec3::zeros(),
                radius: 1.0,
                friction: 0.5,
            },
            Collider::Box {
                min: Vec3::new(3.0, 3.0, 3.0),
                max: Vec3::new(4.0, 4.0, 4.0),
                friction: 0.5,
            },
            Collider::plane(Vec3::new(0.0, -5.0, 0.0), Vec3::y(), 0.5),
        ];
        let mut y = vec![Vec3::new(2.0, 0.0, 0.0), Vec3::new(3.5, 5.0, 3.5)];
        let mut v = vec![Vec3::new(1.0, -1.0, 0.0); 2];
        let (y0, v0) = (y.clone(), v.clone());
        assert_eq!(apply_collisions(&mut y, &mut v, &colliders), 0);
        assert_eq!((y, v), (y0, v0));
    }

    #[test]
    fn plane_straddling_grid() {
        let c = Collider::plane(Vec3::zeros(), Vec3::y(), 0.0);
        let mut y: Vec<Vec3> = (0..5)
            .flat_map(|i| (0..5).map(move |j| Vec3::new(i as f64, j as f64 * 0.1 - 0.2, 0.0)))
            .collect();
        let before = y.clone();
        let mut v = vec![Vec3::new(0.3, -1.0, 0.0); y.len()];
        apply_collisions(&mut y, &mut v, &[c]);
        for ((a, b), vel) in before.iter().zip(&y).zip(&v) {
            if a.y < 0.0 {
                assert_eq!(b.y, CONTACT_OFFSET);
                assert_eq!(b.x, a.x);
                assert_eq!(*vel, Vec3::new(0.3, 0.0, 0.0));
            } else {
                assert_eq!(a, b);
                assert_eq!(*vel, Vec3::new(0.3, -1.0, 0.0));
            }
        }
    }

    #[test]
    fn box_exits_through_nearest_face_with_friction() {
        let c = Collider::Box {
            min: Vec3::zeros(),
            max: Vec3::new(1.0, 1.0, 1.0),
            friction: 0.25,
        };
        let mut y = vec![Vec3::new(0.5, 0.9, 0.4)];
        let mut v = vec![Vec3::new(1.0, -2.0, 0.0)];
        apply_collisions(&mut y, &mut v, &[c]);
        assert_close!(y[0].y, 1.0 + CONTACT_OFFSET, 1e-15);
        assert_eq!(v[0], Vec3::new(0.75, 0.0, 0.0));
    }

    #[test]
    fn invalid_colliders() {
        assert!(Collider::Sphere {
            center: Vec3::zeros(),
            radius: -1.0,
            friction: 0.0
        }
        .validate()
        .is_err());
        assert!(Collider::plane(Vec3::zeros(), Vec3::y(), 1.5).validate().is_err());
        assert!(Collider::Box {
            min: Vec3::zeros(),
            max: Vec3::new(1.0, 0.0, 1.0),
            friction: 0.0
        }
        .validate()
        .is_err());
    }
}
