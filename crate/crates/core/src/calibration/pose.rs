//! Camera pose from a wall homography and the backprojection mask.

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{nearest_rotation, project_with, CaveModel, Face, Intrinsics, RigidMotion, Vec3};
use crate::lightmap::LightMap;
use crate::raster::{Label, SegmentationMask};

/// Wall-to-world frame: columns `e_u`, `e_v`, outward normal.
fn face_basis(face: Face) -> Matrix3<f64> {
    let (eu, ev) = face.frame();
    Matrix3::from_columns(&[eu, ev, face.outward_normal()])
}

/// Homography mapping in-face wall coordinates to pixels for a camera with
/// camera-to-world pose `pose`.
pub fn wall_homography(pose: &RigidMotion, k: &Intrinsics, face: Face, cave: &CaveModel) -> Matrix3<f64> {
    let rt = pose.rotation().transpose();
    let q = rt * face_basis(face);
    let s = rt * (cave.face_center(face) - pose.translation());
    let m = Matrix3::from_columns(&[q.column(0).into_owned(), q.column(1).into_owned(), s]);
    let h = k.matrix() * m;
    h / h.norm()
}

/// Decomposes a wall homography into the camera-to-world pose.
pub fn pose_from_homography(h: &Matrix3<f64>, k: &Intrinsics, face: Face, cave: &CaveModel) -> Result<RigidMotion> {
    let k_inv = k
        .matrix()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("singular intrinsics".into()))?;
    let m = k_inv * h;
    let (m1, m2, m3) = (m.column(0).into_owned(), m.column(1).into_owned(), m.column(2).into_owned());
    let lambda = 2.0 / (m1.norm() + m2.norm());
    let h_inv = h
        .try_inverse()
        .ok_or_else(|| Error::DegenerateConfiguration("singular homography".into()))?;
    // the wall point imaged at the principal point must be in front
    let w = h_inv * Vector3::new(k.cx, k.cy, 1.0);
    if w.z.abs() < f64::EPSILON * w.norm() {
        return Err(Error::DegenerateConfiguration("principal point maps to infinity".into()));
    }
    let probe = Vector3::new(w.x / w.z, w.y / w.z, 0.0);
    for sign in [1.0, -1.0] {
        let l = sign * lambda;
        let (r1, r2) = (m1 * l, m2 * l);
        let q = nearest_rotation(&Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]));
        let s = m3 * l;
        if (q * probe + s).z > 0.0 {
            let f = face_basis(face);
            let rotation = f * q.transpose();
            let translation = cave.face_center(face) - rotation * s;
            return RigidMotion::new(nearest_rotation(&rotation), translation);
        }
    }
    Err(Error::BehindCamera)
}

/// Pixel distance between `pixel` and the projection of wall point `l`, or
/// `None` when `l` is behind the camera.
#[inline]
pub fn backprojection_error(world_to_cam: &RigidMotion, k: &Intrinsics, l: &Vec3, pixel: (f64, f64)) -> Option<f64> {
    let (u, v) = project_with(k, &world_to_cam.apply(l)).ok()?;
    Some((u - pixel.0).hypot(v - pixel.1))
}

/// Background where the light-map point projects back within `theta` px of
/// its own pixel, foreground elsewhere; invalid light-map pixels stay invalid.
pub fn foreground_by_backprojection(lm: &LightMap, pose: &RigidMotion, k: &Intrinsics, theta: f64) -> SegmentationMask {
    let inv = pose.inverse();
    let w = lm.width();
    let labels = (0..lm.len())
        .into_par_iter()
        .map(|i| match lm.at(i) {
            None => Label::Invalid,
            Some((l, _)) => {
                let pixel = ((i as u32 % w) as f64, (i as u32 / w) as f64);
                match backprojection_error(&inv, k, &l, pixel) {
                    Some(e) if e < theta => Label::Background,
                    _ => Label::Foreground,
                }
            }
        })
        .collect();
    SegmentationMask {
        width: w,
        height: lm.height(),
        labels,
    }
}

/// In-face wall coordinates and pixel positions of all background pixels
/// that see `face`.
pub fn wall_correspondences(
    lm: &LightMap,
    mask: &SegmentationMask,
    face: Face,
    cave: &CaveModel,
) -> (Vec<Vector2<f64>>, Vec<Vector2<f64>>) {
    let w = lm.width();
    let mut walls = Vec::new();
    let mut pixels = Vec::new();
    for i in 0..lm.len() {
        if mask.labels[i] != Label::Background {
            continue;
        }
        if let Some((l, f)) = lm.at(i) {
            if f == face {
                let (u, v) = cave.to_face_coords(face, &l);
                walls.push(Vector2::new(u, v));
                pixels.push(Vector2::new((i as u32 % w) as f64, (i as u32 / w) as f64));
            }
        }
    }
    (walls, pixels)
}
