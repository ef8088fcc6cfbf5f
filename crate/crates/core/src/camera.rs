//! Pinhole camera geometry.
//!
//! Conventions: the world is right-handed with +y up. The camera frame is
//! right-handed with +x to the image right, +y image-down and +z forward, so
//! the world "down" direction used by the projection mask is world -y. A
//! camera whose forward axis is world +z therefore sees world +x on the left
//! half of the image.
//!
//! Pixel coordinates are continuous; integer pixel `(i, j)` covers
//! `[i, i+1) x [j, j+1)` and is centred at `(i + 0.5, j + 0.5)`.

use std::marker::PhantomData;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Self {
        self * (T::one() / self.norm())
    }

    #[inline]
    pub fn scale(self, s: T) -> Self {
        self * s
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3<T> {
    pub rows: [Vec3<T>; 3],
}

impl<T: Real> Mat3<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self::from_rows(Vec3::new(o, z, z), Vec3::new(z, o, z), Vec3::new(z, z, o))
    }

    pub fn from_rows(r0: Vec3<T>, r1: Vec3<T>, r2: Vec3<T>) -> Self {
        Self { rows: [r0, r1, r2] }
    }

    #[inline]
    pub fn mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        Vec3::new(self.rows[0].dot(v), self.rows[1].dot(v), self.rows[2].dot(v))
    }

    pub fn transpose(&self) -> Self {
        let [a, b, c] = self.rows;
        Self::from_rows(Vec3::new(a.x, b.x, c.x), Vec3::new(a.y, b.y, c.y), Vec3::new(a.z, b.z, c.z))
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let t = o.transpose();
        let row = |r: Vec3<T>| Vec3::new(r.dot(t.rows[0]), r.dot(t.rows[1]), r.dot(t.rows[2]));
        Self::from_rows(row(self.rows[0]), row(self.rows[1]), row(self.rows[2]))
    }

    /// Largest absolute entry of `R Rᵀ - I`.
    pub fn orthonormality_error(&self) -> T {
        let p = self.mul_mat(&self.transpose());
        let id = Self::identity();
        let mut worst = T::zero();
        for (pr, ir) in p.rows.iter().zip(id.rows.iter()) {
            for d in [pr.x - ir.x, pr.y - ir.y, pr.z - ir.z] {
                worst = worst.max(d.abs());
            }
        }
        worst
    }

    pub fn determinant(&self) -> T {
        let [a, b, c] = self.rows;
        a.dot(b.cross(c))
    }
}

/// Frame marker for world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum World {}
/// Frame marker for camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Camera {}

/// A point tagged with the frame it is expressed in; mixing frames is a type
/// error.
#[derive(Debug, PartialEq)]
pub struct Point3<T, F> {
    pub coords: Vec3<T>,
    frame: PhantomData<F>,
}

impl<T: Copy, F> Clone for Point3<T, F> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<T: Copy, F> Copy for Point3<T, F> {}

impl<T: Real, F> Point3<T, F> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { coords: Vec3::new(x, y, z), frame: PhantomData }
    }

    #[inline]
    pub fn from_vec(v: Vec3<T>) -> Self {
        Self { coords: v, frame: PhantomData }
    }

    #[inline]
    pub fn x(&self) -> T {
        self.coords.x
    }
    #[inline]
    pub fn y(&self) -> T {
        self.coords.y
    }
    #[inline]
    pub fn z(&self) -> T {
        self.coords.z
    }
}

pub type WorldPoint<T> = Point3<T, World>;
pub type CameraPoint<T> = Point3<T, Camera>;

/// Continuous image coordinates in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pixel<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Pixel<T> {
    pub const fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    /// Centre of integer pixel `(i, j)`.
    pub fn center_of(i: usize, j: usize) -> Self {
        let half = T::lit(0.5);
        Self::new(T::from_usize(i).unwrap() + half, T::from_usize(j).unwrap() + half)
    }

    /// Integer pixel containing this point, if inside a `width x height`
    /// image.
    pub fn to_index(self, width: usize, height: usize) -> Option<(usize, usize)> {
        let (fx, fy) = (self.x.floor(), self.y.floor());
        if !(fx >= T::zero() && fy >= T::zero()) {
            return None;
        }
        let (ix, iy) = (fx.to_usize()?, fy.to_usize()?);
        (ix < width && iy < height).then_some((ix, iy))
    }
}

/// Pinhole intrinsics plus a world-to-camera rigid transform
/// `p_cam = R p_world + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraSpec<T>", into = "CameraSpec<T>")]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct CameraModel<T> {
    focal_px: T,
    principal: Pixel<T>,
    rotation: Mat3<T>,
    translation: Vec3<T>,
}

/// Serialized form of a camera: intrinsics plus the rotation rows and the
/// camera centre in world coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraSpec<T> {
    pub focal_px: T,
    pub principal: [T; 2],
    pub rotation: [[T; 3]; 3],
    pub center: [T; 3],
}

impl<T: Real> TryFrom<CameraSpec<T>> for CameraModel<T> {
    type Error = Error;
    fn try_from(s: CameraSpec<T>) -> Result<Self> {
        let r = |i: usize| Vec3::new(s.rotation[i][0], s.rotation[i][1], s.rotation[i][2]);
        let rotation = Mat3::from_rows(r(0), r(1), r(2));
        let center = Vec3::new(s.center[0], s.center[1], s.center[2]);
        CameraModel::new(s.focal_px, Pixel::new(s.principal[0], s.principal[1]), rotation, -rotation.mul_vec(center))
    }
}

impl<T: Real> From<CameraModel<T>> for CameraSpec<T> {
    fn from(c: CameraModel<T>) -> Self {
        let row = |v: Vec3<T>| [v.x, v.y, v.z];
        let center = c.center();
        CameraSpec {
            focal_px: c.focal_px,
            principal: [c.principal.x, c.principal.y],
            rotation: [row(c.rotation.rows[0]), row(c.rotation.rows[1]), row(c.rotation.rows[2])],
            center: [center.x(), center.y(), center.z()],
        }
    }
}

impl<T: Real> CameraModel<T> {
    pub fn new(focal_px: T, principal: Pixel<T>, rotation: Mat3<T>, translation: Vec3<T>) -> Result<Self> {
        if !(focal_px > T::zero()) || !focal_px.is_finite() {
            return Err(Error::InvalidParameter(format!("focal length in pixels must be > 0, got {focal_px}")));
        }
        let ortho = rotation.orthonormality_error();
        if !(ortho <= T::lit(1e-9)) {
            return Err(Error::InvalidParameter(format!("rotation is not orthonormal (|R Rᵀ - I| = {ortho})")));
        }
        if rotation.determinant() < T::zero() {
            return Err(Error::InvalidParameter("rotation has determinant -1 (reflection)".into()));
        }
        if !translation.is_finite() || !principal.x.is_finite() || !principal.y.is_finite() {
            return Err(Error::InvalidParameter("non-finite camera extrinsics or principal point".into()));
        }
        Ok(Self { focal_px, principal, rotation, translation })
    }

    /// Camera at `eye` looking at `target`, with world +y as the up hint.
    pub fn look_at(focal_px: T, principal: Pixel<T>, eye: Vec3<T>, target: Vec3<T>) -> Result<Self> {
        let forward = (target - eye).normalized();
        let up = Vec3::new(T::zero(), T::one(), T::zero());
        let side = forward.cross(up);
        if !(side.norm() > T::lit(1e-12)) {
            return Err(Error::InvalidParameter("look-at direction is parallel to world up".into()));
        }
        let right = side.normalized();
        let down = forward.cross(right);
        let rotation = Mat3::from_rows(right, down, forward);
        Self::new(focal_px, principal, rotation, -rotation.mul_vec(eye))
    }

    /// Un-pitched camera at `eye` looking along world +z.
    pub fn axis_aligned(focal_px: T, principal: Pixel<T>, eye: Vec3<T>) -> Result<Self> {
        let ahead = eye + Vec3::new(T::zero(), T::zero(), T::one());
        Self::look_at(focal_px, principal, eye, ahead)
    }

    /// Camera at `eye` looking along world +z tilted down by `pitch` radians.
    pub fn pitched(focal_px: T, principal: Pixel<T>, eye: Vec3<T>, pitch: T) -> Result<Self> {
        let dir = Vec3::new(T::zero(), -pitch.sin(), pitch.cos());
        Self::look_at(focal_px, principal, eye, eye + dir)
    }

    #[inline]
    pub fn focal_px(&self) -> T {
        self.focal_px
    }

    #[inline]
    pub fn principal(&self) -> Pixel<T> {
        self.principal
    }

    #[inline]
    pub fn rotation(&self) -> &Mat3<T> {
        &self.rotation
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> WorldPoint<T> {
        Point3::from_vec(-self.rotation.transpose().mul_vec(self.translation))
    }

    /// Viewing direction (camera +z) in world coordinates.
    pub fn forward(&self) -> Vec3<T> {
        self.rotation.rows[2]
    }

    #[inline]
    pub fn world_to_camera(&self, p: WorldPoint<T>) -> CameraPoint<T> {
        Point3::from_vec(self.rotation.mul_vec(p.coords) + self.translation)
    }

    #[inline]
    pub fn camera_to_world(&self, p: CameraPoint<T>) -> WorldPoint<T> {
        Point3::from_vec(self.rotation.transpose().mul_vec(p.coords - self.translation))
    }

    /// Rotates a camera-frame direction into the world frame.
    #[inline]
    pub fn direction_to_world(&self, d: Vec3<T>) -> Vec3<T> {
        self.rotation.transpose().mul_vec(d)
    }

    /// Pinhole projection of a camera-frame point.
    pub fn project_to_image(&self, p: CameraPoint<T>) -> Result<Pixel<T>> {
        if !(p.z() > T::zero()) {
            return Err(Error::NonPositiveDepth { depth: p.z().to_f64_lossy(), pixel: None });
        }
        let inv = T::one() / p.z();
        Ok(Pixel::new(
            self.principal.x + self.focal_px * p.x() * inv,
            self.principal.y + self.focal_px * p.y() * inv,
        ))
    }

    /// Camera-frame point at camera depth `depth` that projects onto `px`.
    pub fn unproject(&self, px: Pixel<T>, depth: T) -> Result<CameraPoint<T>> {
        if !(depth > T::zero()) {
            return Err(Error::NonPositiveDepth { depth: depth.to_f64_lossy(), pixel: None });
        }
        let dir = self.ray_direction(px);
        Ok(Point3::from_vec(dir * depth))
    }

    /// Camera-frame direction through `px`, scaled so that its z component
    /// is exactly one.
    #[inline]
    pub fn ray_direction(&self, px: Pixel<T>) -> Vec3<T> {
        let inv_f = T::one() / self.focal_px;
        Vec3::new((px.x - self.principal.x) * inv_f, (px.y - self.principal.y) * inv_f, T::one())
    }
}
