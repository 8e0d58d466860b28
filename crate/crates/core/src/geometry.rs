//! Spherical geometry: radial projection, great-circle arcs and the target layout.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Cartesian point or vector, in meters when used as a position.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn from_f64(x: f64, y: f64, z: f64) -> Self {
        Self::new(T::lit(x), T::lit(y), T::lit(z))
    }

    pub fn dot(&self, o: &Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() && n.is_finite() {
            Some(*self / n)
        } else {
            None
        }
    }

    pub fn distance(&self, o: &Self) -> T {
        (*self - *o).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn component(&self, i: usize) -> T {
        match i {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("Vec3 component index {i} out of range"),
        }
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Real> From<Vec3<T>> for Vector3<T> {
    fn from(v: Vec3<T>) -> Self {
        Vector3::new(v.x, v.y, v.z)
    }
}

impl<T: Real> From<Vector3<T>> for Vec3<T> {
    fn from(v: Vector3<T>) -> Self {
        Vec3::new(v.x, v.y, v.z)
    }
}

/// The constraint sphere and its elastic rendering stiffness.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereSurface<T> {
    pub center: Vec3<T>,
    /// Radius in meters.
    pub radius: T,
    /// Bilateral contact stiffness in N/m.
    pub stiffness: T,
}

impl<T: Real> SphereSurface<T> {
    pub fn new(center: Vec3<T>, radius: T, stiffness: T) -> Result<Self> {
        if !center.is_finite() {
            return Err(Error::InvalidParameter("sphere center must be finite".into()));
        }
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sphere radius must be positive, got {}",
                radius.as_f64()
            )));
        }
        if !(stiffness >= T::zero()) || !stiffness.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "stiffness must be non-negative, got {}",
                stiffness.as_f64()
            )));
        }
        Ok(Self {
            center,
            radius,
            stiffness,
        })
    }

    /// Experiment defaults: 20 cm radius, 1 N/mm stiffness, centered at the origin.
    pub fn experiment() -> Self {
        Self {
            center: Vec3::zero(),
            radius: T::lit(0.20),
            stiffness: T::lit(1000.0),
        }
    }

    /// Signed radial offset `|p - c| - r` (positive outside).
    pub fn radial_offset(&self, p: &Vec3<T>) -> T {
        (*p - self.center).norm() - self.radius
    }

    /// Constraint value `|p - c|^2 - r^2`.
    pub fn constraint(&self, p: &Vec3<T>) -> T {
        (*p - self.center).norm_squared() - self.radius * self.radius
    }

    fn surface_tolerance(&self) -> T {
        T::surface_tolerance() * self.radius
    }

    fn check_on_surface(&self, p: &Vec3<T>) -> Result<()> {
        let offset = self.radial_offset(p);
        let tol = self.surface_tolerance();
        if offset.abs() > tol || !offset.is_finite() {
            return Err(Error::OffSurface {
                offset: offset.as_f64(),
                tolerance: tol.as_f64(),
            });
        }
        Ok(())
    }
}

/// Radial projection of `p` onto the sphere.
pub fn project_to_sphere<T: Real>(p: &Vec3<T>, s: &SphereSurface<T>) -> Result<Vec3<T>> {
    let dir = (*p - s.center).normalized().ok_or(Error::DegenerateProjection)?;
    Ok(s.center + dir * s.radius)
}

/// Central angle between two unit vectors, accurate near 0 and pi.
pub fn angle_between<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Great-circle arc between two surface points.
///
/// Besides the endpoint directions the arc keeps an orthonormal frame of its
/// plane: `start_dir`, `plane_dir` (in-plane, perpendicular to `start_dir`,
/// pointing toward the end) and `normal = start_dir x plane_dir`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeodesicArc<T> {
    pub sphere: SphereSurface<T>,
    pub start_dir: Vec3<T>,
    pub end_dir: Vec3<T>,
    pub plane_dir: Vec3<T>,
    pub normal: Vec3<T>,
    pub central_angle: T,
    pub arc_length: T,
}

impl<T: Real> GeodesicArc<T> {
    /// Surface point at angle `phi` from the start, measured along the arc's great circle.
    pub fn point_at_angle(&self, phi: T) -> Vec3<T> {
        self.sphere.center + self.direction_at_angle(phi) * self.sphere.radius
    }

    pub fn direction_at_angle(&self, phi: T) -> Vec3<T> {
        self.start_dir * phi.cos() + self.plane_dir * phi.sin()
    }

    pub fn start(&self) -> Vec3<T> {
        self.sphere.center + self.start_dir * self.sphere.radius
    }

    pub fn end(&self) -> Vec3<T> {
        self.sphere.center + self.end_dir * self.sphere.radius
    }

    /// Euclidean distance from `p` to the closest point of the arc.
    pub fn distance_to(&self, p: &Vec3<T>) -> T {
        let d = *p - self.sphere.center;
        let x = d.dot(&self.start_dir);
        let y = d.dot(&self.plane_dir);
        let h = d.dot(&self.normal);
        let rho = (x * x + y * y).sqrt();
        if rho == T::zero() {
            return (self.sphere.radius * self.sphere.radius + h * h).sqrt();
        }
        let phi = y.atan2(x);
        if phi >= T::zero() && phi <= self.central_angle {
            let dr = rho - self.sphere.radius;
            (dr * dr + h * h).sqrt()
        } else {
            let da = p.distance(&self.start());
            let db = p.distance(&self.end());
            if da < db {
                da
            } else {
                db
            }
        }
    }

    /// Geodesic (angular) distance, in meters along the surface, from the
    /// radial projection of `p` to the closest point of the arc.
    pub fn geodesic_distance_to(&self, p: &Vec3<T>) -> Result<T> {
        let d = (*p - self.sphere.center)
            .normalized()
            .ok_or(Error::DegenerateProjection)?;
        let x = d.dot(&self.start_dir);
        let y = d.dot(&self.plane_dir);
        let h = d.dot(&self.normal);
        let phi = y.atan2(x);
        let angle = if phi >= T::zero() && phi <= self.central_angle {
            let s = h.abs();
            let one = T::one();
            (if s > one { one } else { s }).asin()
        } else {
            let a = angle_between(&d, &self.start_dir);
            let b = angle_between(&d, &self.end_dir);
            if a < b {
                a
            } else {
                b
            }
        };
        Ok(angle * self.sphere.radius)
    }
}

/// Great-circle arc from `a` to `b`; both must lie on `s`.
pub fn geodesic_between<T: Real>(a: &Vec3<T>, b: &Vec3<T>, s: &SphereSurface<T>) -> Result<GeodesicArc<T>> {
    s.check_on_surface(a)?;
    s.check_on_surface(b)?;
    let start_dir = (*a - s.center).normalized().ok_or(Error::DegenerateProjection)?;
    let end_dir = (*b - s.center).normalized().ok_or(Error::DegenerateProjection)?;
    let angle = angle_between(&start_dir, &end_dir);
    if angle <= T::default_epsilon() * T::lit(16.0) {
        return Err(Error::CoincidentEndpoints);
    }
    if (T::PI() - angle).abs() <= T::lit(1e-6) {
        return Err(Error::AntipodalEndpoints { angle: angle.as_f64() });
    }
    let plane_dir = (end_dir - start_dir * start_dir.dot(&end_dir))
        .normalized()
        .ok_or(Error::CoincidentEndpoints)?;
    let normal = start_dir.cross(&plane_dir);
    Ok(GeodesicArc {
        sphere: *s,
        start_dir,
        end_dir,
        plane_dir,
        normal,
        central_angle: angle,
        arc_length: s.radius * angle,
    })
}

/// Point at fraction `u` of the arc length, moving at constant angular rate.
pub fn slerp<T: Real>(arc: &GeodesicArc<T>, u: T) -> Result<Vec3<T>> {
    if !(u >= T::zero() && u <= T::one()) {
        return Err(Error::OutOfRange {
            what: "arc fraction",
            value: u.as_f64(),
            min: 0.0,
            max: 1.0,
        });
    }
    if u == T::one() {
        return Ok(arc.end());
    }
    Ok(arc.point_at_angle(u * arc.central_angle))
}

/// The three targets: vertices of an equilateral triangle on the horizontal
/// plane `plane_height` above the sphere center.
///
/// Vertex 0 points toward +x; vertices 1 and 2 follow counter-clockwise
/// (seen from above) at 120 degree steps. The subject sits toward -y.
pub fn triangle_targets<T: Real>(s: &SphereSurface<T>, plane_height: T) -> Result<[Vec3<T>; 3]> {
    if !(plane_height.abs() < s.radius) {
        return Err(Error::NoIntersection {
            height: plane_height.as_f64(),
            radius: s.radius.as_f64(),
        });
    }
    let rho = (s.radius * s.radius - plane_height * plane_height).sqrt();
    let step = T::lit(2.0) * T::FRAC_PI_3();
    let vertex = |k: usize| {
        let az = step * T::lit(k as f64);
        s.center + Vec3::new(rho * az.cos(), rho * az.sin(), plane_height)
    };
    Ok([vertex(0), vertex(1), vertex(2)])
}
