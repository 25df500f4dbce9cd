//! Geometric primitives: the cube illuminant, rigid motions, the pinhole
//! camera and the law of reflection.
//!
//! The world frame sits at the barycenter of the cube with axes orthogonal
//! to its faces. All lengths are in millimetres. Pixel coordinates put the
//! centre of pixel `(i, j)` at `(i, j)`, so the image covers
//! `[-0.5, width - 0.5] x [-0.5, height - 0.5]`.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Tolerance below which two directions are considered identical.
const DIRECTION_EPS: f64 = 1e-9;

/// Side length of the reference cube, 2h = 3048 mm.
pub const DEFAULT_HALF_EXTENT: f64 = 1524.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Axis> {
        Axis::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }

    pub fn unit(self) -> Vec3 {
        let mut e = Vec3::zeros();
        e[self.index()] = 1.0;
        e
    }
}

/// One of the six walls of the cube. The discriminant is the face id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Face {
    PosX = 0,
    NegX = 1,
    PosY = 2,
    NegY = 3,
    PosZ = 4,
    NegZ = 5,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::PosX,
        Face::NegX,
        Face::PosY,
        Face::NegY,
        Face::PosZ,
        Face::NegZ,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Face> {
        Face::ALL.get(id as usize).copied()
    }

    pub fn from_axis(axis: Axis, positive: bool) -> Face {
        Face::ALL[2 * axis.index() + usize::from(!positive)]
    }

    pub fn axis(self) -> Axis {
        Axis::ALL[self as usize / 2]
    }

    /// +1 for the positive wall along the axis, -1 otherwise.
    pub fn sign(self) -> f64 {
        if (self as usize).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    pub fn outward_normal(self) -> Vec3 {
        self.axis().unit() * self.sign()
    }

    /// The two world axes spanning this face, in increasing order.
    pub fn in_face_axes(self) -> (Axis, Axis) {
        match self.axis() {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::X, Axis::Z),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }

    /// Right-handed in-face frame `(e_u, e_v)` with `e_u x e_v` equal to the
    /// outward normal.
    pub fn frame(self) -> (Vec3, Vec3) {
        let (a, b) = self.in_face_axes();
        let (eu, ev) = (a.unit(), b.unit());
        if eu.cross(&ev).dot(&self.outward_normal()) > 0.0 {
            (eu, ev)
        } else {
            (ev, eu)
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Face::PosX => "+x",
            Face::NegX => "-x",
            Face::PosY => "+y",
            Face::NegY => "-y",
            Face::PosZ => "+z",
            Face::NegZ => "-z",
        }
    }
}

impl std::fmt::Display for Face {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Axis-aligned cube of half-extent `h` centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaveModel {
    half_extent: f64,
}

impl Default for CaveModel {
    fn default() -> Self {
        CaveModel {
            half_extent: DEFAULT_HALF_EXTENT,
        }
    }
}

impl CaveModel {
    pub fn new(half_extent: f64) -> Result<Self> {
        if !(half_extent > 0.0 && half_extent.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "cube half-extent must be positive, got {half_extent}"
            )));
        }
        Ok(CaveModel { half_extent })
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    pub fn face_center(&self, face: Face) -> Vec3 {
        face.outward_normal() * self.half_extent
    }

    /// True if `p` lies strictly inside the cube.
    pub fn contains(&self, p: &Vec3) -> bool {
        p.amax() < self.half_extent
    }

    /// Coordinates of `p` in the in-face frame of `face` (origin at the face centre).
    pub fn to_face_coords(&self, face: Face, p: &Vec3) -> (f64, f64) {
        let (eu, ev) = face.frame();
        (p.dot(&eu), p.dot(&ev))
    }

    pub fn from_face_coords(&self, face: Face, u: f64, v: f64) -> Vec3 {
        let (eu, ev) = face.frame();
        self.face_center(face) + eu * u + ev * v
    }

    /// True if `p` satisfies the wall invariant for `face` within `tol`.
    pub fn on_face(&self, face: Face, p: &Vec3, tol: f64) -> bool {
        let h = self.half_extent;
        let a = face.axis().index();
        if (p[a] - face.sign() * h).abs() > tol {
            return false;
        }
        (0..3)
            .filter(|&i| i != a)
            .all(|i| p[i] >= -h - tol && p[i] <= h + tol)
    }

    /// First exit point of the ray `origin + t dir`, `t > 0`, through the cube
    /// boundary. Ties at edges and corners go to the lowest axis (x < y < z).
    ///
    /// The returned point lies exactly on the face plane; the two in-face
    /// coordinates are clamped to `[-h, h]`.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> (Vec3, Face) {
        let h = self.half_extent;
        let mut best: Option<(f64, Axis)> = None;
        for axis in Axis::ALL {
            let d = dir[axis.index()];
            if d == 0.0 {
                continue;
            }
            let t = (h.copysign(d) - origin[axis.index()]) / d;
            match best {
                Some((tb, _)) if t >= tb => {}
                _ => best = Some((t, axis)),
            }
        }
        let (t, axis) = best.expect("direction must be non-zero");
        let face = Face::from_axis(axis, dir[axis.index()] > 0.0);
        let mut p = origin + dir * t;
        for i in 0..3 {
            p[i] = if i == axis.index() {
                face.sign() * h
            } else {
                p[i].clamp(-h, h)
            };
        }
        (p, face)
    }
}

/// Element of SE(3) acting as `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl Default for RigidMotion {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidMotion {
    pub fn identity() -> Self {
        RigidMotion {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a motion after checking `R^T R = I` and `det R = 1` within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "not a rotation matrix (orthogonality defect {ortho:.3e}, det {det})"
            )));
        }
        Ok(RigidMotion {
            rotation,
            translation,
        })
    }

    pub fn from_axis_angle(axis_angle: Vec3, translation: Vec3) -> Self {
        RigidMotion {
            rotation: Rotation3::new(axis_angle).into_inner(),
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        RigidMotion {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation about the origin; the matrix is re-orthonormalised.
    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        RigidMotion {
            rotation: nearest_rotation(&rotation),
            translation: Vec3::zeros(),
        }
    }

    /// Camera-to-world motion for a camera at `eye` whose optical axis points
    /// at `target`; `up` fixes the roll (image rows run along `-up`).
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let z = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidParameter("look-at target equals eye".into()))?;
        let x = z
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidParameter("up vector parallel to view".into()))?;
        let y = z.cross(&x);
        let rotation = Matrix3::from_columns(&[x, y, z]);
        Ok(RigidMotion {
            rotation,
            translation: eye,
        })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn axis_angle(&self) -> Vec3 {
        Rotation3::from_matrix_unchecked(self.rotation).scaled_axis()
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidMotion) -> RigidMotion {
        RigidMotion {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidMotion {
        let rt = self.rotation.transpose();
        RigidMotion {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Angle in radians of the relative rotation between two motions.
    pub fn rotation_angle_to(&self, other: &RigidMotion) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
    }
}

/// Projects a 3x3 matrix onto SO(3) (orthogonal Procrustes).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

/// Pinhole intrinsics in pixels. No lens distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid intrinsics {self:?}")))
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, 0.0, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    pub fn in_bounds(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && v >= -0.5 && u <= self.width as f64 - 0.5 && v <= self.height as f64 - 0.5
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Calibrated camera: intrinsics plus the camera-to-world pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub intrinsics: Intrinsics,
    pub pose: RigidMotion,
}

impl CameraModel {
    pub fn new(intrinsics: Intrinsics, pose: RigidMotion) -> Result<Self> {
        intrinsics.validate()?;
        Ok(CameraModel { intrinsics, pose })
    }

    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }

    /// Projection centre in world coordinates.
    pub fn center(&self) -> Vec3 {
        *self.pose.translation()
    }

    /// Unit optical axis in world coordinates.
    pub fn optical_axis(&self) -> Vec3 {
        self.pose.rotation().column(2).into_owned()
    }

    /// Unit viewing direction of a pixel, in the camera frame.
    pub fn pixel_to_direction(&self, u: f64, v: f64) -> Result<Vec3> {
        let k = &self.intrinsics;
        if !k.in_bounds(u, v) {
            return Err(Error::OutOfBounds {
                u,
                v,
                width: k.width,
                height: k.height,
            });
        }
        Ok(Vec3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0).normalize())
    }

    /// Canonical pinhole projection of a camera-frame point.
    pub fn project(&self, x: &Vec3) -> Result<(f64, f64)> {
        project_with(&self.intrinsics, x)
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.pose.rotation().transpose() * (p - self.pose.translation())
    }

    pub fn project_world(&self, p: &Vec3) -> Result<(f64, f64)> {
        self.project(&self.world_to_camera(p))
    }

    /// World-frame ray (origin, unit direction) through a pixel.
    pub fn ray(&self, u: f64, v: f64) -> Result<(Vec3, Vec3)> {
        let d = self.pixel_to_direction(u, v)?;
        Ok((self.center(), self.pose.apply_vector(&d)))
    }
}

pub(crate) fn project_with(k: &Intrinsics, x: &Vec3) -> Result<(f64, f64)> {
    if x.z <= 0.0 {
        return Err(Error::BehindCamera);
    }
    Ok((k.fx * x.x / x.z + k.cx, k.fy * x.y / x.z + k.cy))
}

/// Mirror reflection of direction `d` at a surface with unit normal `n`.
pub fn reflect(d: &Vec3, n: &Vec3) -> Vec3 {
    d - n * (2.0 * d.dot(n))
}

/// Normal that reflects the incoming direction `d_in` into `d_out`.
pub fn halfway_normal(d_in: &Vec3, d_out: &Vec3) -> Result<Vec3> {
    let diff = d_out - d_in;
    let norm = diff.norm();
    if norm < DIRECTION_EPS {
        return Err(Error::DegenerateDirection);
    }
    Ok(diff / norm)
}
