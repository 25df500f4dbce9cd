//! Discrete normal-field energy of a depth field and its derivative with
//! respect to the vertex depths.
//!
//! Per face `f` with edge cross product `N = (b - a) x (c - a)` and measured
//! normal `m` sampled at the face centre,
//! `E_f = A_f / 2 |N/|N| - m|^2 = (|N| - N.m) / 2`.
//!
//! The face centre is where the face plane meets the mean of its three
//! vertex rays. That ray is fixed, so a face keeps looking up the same
//! pixel while the depths change and `m` moves only with the reflected
//! direction.

use rayon::prelude::*;

use super::field::DepthField;
use super::sampler::NormalFieldSampler;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

const CHUNK: usize = 1024;

/// Face centre on the mean vertex ray; `None` for faces seen edge-on.
pub fn face_center(field: &DepthField, t: &[u32; 3]) -> Option<Vec3> {
    let (n, a, ..) = face_cross(field, t);
    let ray = field.rays[t[0] as usize] + field.rays[t[1] as usize] + field.rays[t[2] as usize];
    let den = ray.dot(&n);
    if den.abs() <= 1e-12 * ray.norm() * n.norm() {
        return None;
    }
    let s = (a - field.origin).dot(&n) / den;
    (s > 0.0).then(|| field.origin + ray * s)
}

/// Measured normals at the face centres; `None` is NO_DATA.
pub fn sample_normals(field: &DepthField, sampler: &NormalFieldSampler) -> Result<Vec<Option<Vec3>>> {
    let parts: Vec<Result<Vec<Option<Vec3>>>> = field
        .triangles
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|t| match face_center(field, t) {
                    Some(c) => sampler.measured_normal(&c),
                    None => Ok(None),
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(field.triangles.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn check_coverage(normals: &[Option<Vec3>]) -> Result<usize> {
    let valid = normals.iter().filter(|m| m.is_some()).count();
    if 2 * valid < normals.len() || valid == 0 {
        return Err(Error::NoValidFaces {
            valid,
            total: normals.len(),
        });
    }
    Ok(valid)
}

#[inline]
fn face_cross(field: &DepthField, t: &[u32; 3]) -> (Vec3, Vec3, Vec3, Vec3) {
    let a = field.position(t[0] as usize);
    let b = field.position(t[1] as usize);
    let c = field.position(t[2] as usize);
    ((b - a).cross(&(c - a)), a, b, c)
}

/// Energy with the measured normals held fixed.
pub fn frozen_energy(field: &DepthField, normals: &[Option<Vec3>]) -> f64 {
    let parts: Vec<f64> = field
        .triangles
        .par_chunks(CHUNK)
        .zip(normals.par_chunks(CHUNK))
        .map(|(tris, ms)| {
            tris.iter()
                .zip(ms)
                .filter_map(|(t, m)| {
                    m.map(|m| {
                        let (n, ..) = face_cross(field, t);
                        0.5 * (n.norm() - n.dot(&m))
                    })
                })
                .sum()
        })
        .collect();
    parts.iter().sum()
}

/// Depth derivative of [`frozen_energy`]; the anchor entry is zero.
pub fn frozen_gradient(field: &DepthField, normals: &[Option<Vec3>]) -> Vec<f64> {
    let mut grad = free_gradient(field, normals);
    grad[field.anchor] = 0.0;
    grad
}

/// Depth derivative including the anchor entry.
pub(crate) fn free_gradient(field: &DepthField, normals: &[Option<Vec3>]) -> Vec<f64> {
    let per_face: Vec<Option<[Vec3; 3]>> = field
        .triangles
        .par_iter()
        .zip(normals.par_iter())
        .map(|(t, m)| {
            let m = (*m)?;
            let (n, a, b, c) = face_cross(field, t);
            let len = n.norm();
            if len == 0.0 {
                return None;
            }
            let g = (n / len - m) * 0.5;
            Some([(b - c).cross(&g), (c - a).cross(&g), (a - b).cross(&g)])
        })
        .collect();
    let mut grad = vec![0.0; field.vertex_count()];
    for (t, d) in field.triangles.iter().zip(&per_face) {
        if let Some(d) = d {
            for k in 0..3 {
                let i = t[k] as usize;
                grad[i] += d[k].dot(&field.rays[i]);
            }
        }
    }
    grad
}

/// Energy of `field` against freshly sampled normals.
pub fn energy(field: &DepthField, sampler: &NormalFieldSampler) -> Result<f64> {
    let normals = sample_normals(field, sampler)?;
    check_coverage(&normals)?;
    Ok(frozen_energy(field, &normals))
}

/// Frozen-field gradient at the current sampling.
pub fn energy_gradient(field: &DepthField, sampler: &NormalFieldSampler) -> Result<Vec<f64>> {
    let normals = sample_normals(field, sampler)?;
    check_coverage(&normals)?;
    Ok(frozen_gradient(field, &normals))
}

/// Energy and the gradient with the anchor entry kept.
pub(crate) fn evaluate(field: &DepthField, sampler: &NormalFieldSampler) -> Result<(f64, Vec<f64>)> {
    let normals = sample_normals(field, sampler)?;
    check_coverage(&normals)?;
    Ok((frozen_energy(field, &normals), free_gradient(field, &normals)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstruction::field::init_surface;
    use crate::simulator::{plane_mirror_scene, sphere_scene, SceneConfig, Specimen};

    fn plane_field(scene: &SceneConfig, z: f64) -> DepthField {
        let gt = scene.ground_truth();
        init_surface(&gt.mask, &scene.camera, &Vec3::new(10.0, -20.0, z), 20).unwrap()
    }

    #[test]
    fn exact_plane_has_zero_energy_and_gradient() {
        let scene = plane_mirror_scene(400.0, 0.0, 1000.0);
        let gt = scene.ground_truth();
        let s = NormalFieldSampler::new(&gt.light_map, scene.camera, Some(&gt.mask));
        let f = plane_field(&scene, 0.0);
        let area = f.to_mesh().total_area();
        assert!(energy(&f, &s).unwrap() < 1e-8 * area);
        let g = energy_gradient(&f, &s).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-8), "{:?}", g.iter().fold(0.0f64, |a, b| a.max(b.abs())));
    }

    #[test]
    fn orthogonal_normals_cost_the_area() {
        let scene = plane_mirror_scene(400.0, 0.0, 1000.0);
        let f = plane_field(&scene, 0.0);
        let normals = vec![Some(Vec3::x()); f.triangles.len()];
        let area = f.to_mesh().total_area();
        assert!((frozen_energy(&f, &normals) - area).abs() < 1e-9 * area);
    }

    #[test]
    fn no_data_majority_is_rejected() {
        let scene = plane_mirror_scene(400.0, 0.0, 1000.0);
        let f = plane_field(&scene, 0.0);
        let mut normals = vec![None; f.triangles.len()];
        assert!(matches!(check_coverage(&normals), Err(Error::NoValidFaces { .. })));
        for m in normals.iter_mut().step_by(2) {
            *m = Some(Vec3::z());
        }
        assert!(check_coverage(&normals).is_ok());
        // NO_DATA faces add nothing
        let e = frozen_energy(&f, &normals);
        assert!(e < 1e-9);
    }

    /// Moves vertices onto the sphere; returns which rays hit it.
    fn sphere_depths(f: &mut DepthField, center: &Vec3, r: f64) -> Vec<bool> {
        let mut hit = vec![false; f.vertex_count()];
        for i in 0..f.vertex_count() {
            let d = f.rays[i];
            let oc = f.origin - center;
            let b = oc.dot(&d);
            let disc = b * b - (oc.norm_squared() - r * r);
            if disc >= 0.0 {
                f.depths[i] = -b - disc.sqrt();
                hit[i] = true;
            }
        }
        hit
    }

    #[test]
    fn true_sphere_beats_the_initial_plane() {
        let scene = sphere_scene(0.0, 0);
        let Some(Specimen::Sphere { center, radius }) = scene.specimen.clone() else { unreachable!() };
        let gt = scene.ground_truth();
        let s = NormalFieldSampler::new(&gt.light_map, scene.camera, Some(&gt.mask));
        let eye = scene.camera.center();
        let x0 = center + (eye - center).normalize() * radius;
        let mut plane = init_surface(&gt.mask, &scene.camera, &x0, 20).unwrap();
        let mut sphere = plane.clone();
        let hit = sphere_depths(&mut sphere, &center, radius);
        // compare on the faces whose corners all lie on the sphere
        let keep: Vec<[u32; 3]> = plane.triangles.iter().filter(|t| t.iter().all(|&i| hit[i as usize])).copied().collect();
        plane.triangles = keep.clone();
        sphere.triangles = keep;
        let (ep, es) = (energy(&plane, &s).unwrap(), energy(&sphere, &s).unwrap());
        assert!(es < 0.05 * ep, "{es} vs {ep}");
        let g = energy_gradient(&plane, &s).unwrap();
        assert_eq!(g[plane.anchor], 0.0);
        assert!(g.iter().any(|v| v.abs() > 1e-3));
    }
}
