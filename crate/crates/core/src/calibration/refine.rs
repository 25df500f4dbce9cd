//! Robust reprojection refinement of the camera pose over all background
//! pixels (Levenberg-Marquardt with a Huber loss).

use nalgebra::{Matrix3, Matrix6, Rotation3, Vector6};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, RigidMotion, Vec3};
use crate::lightmap::LightMap;
use crate::raster::{Label, SegmentationMask};

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineParams {
    /// Huber scale (px).
    pub huber: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the step norm.
    pub step_tol: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            huber: 1.0,
            max_iterations: 100,
            step_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    /// Camera-to-world pose.
    pub pose: RigidMotion,
    pub initial_rms: f64,
    pub rms: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Robust objective after the start and after every accepted step.
    pub objective_log: Vec<f64>,
}

fn huber(e: f64, delta: f64) -> f64 {
    if e <= delta {
        0.5 * e * e
    } else {
        delta * (e - 0.5 * delta)
    }
}

#[derive(Clone, Copy)]
struct Normal {
    jtj: Matrix6<f64>,
    jtr: Vector6<f64>,
    objective: f64,
    sq: f64,
    n: usize,
}

impl Normal {
    fn zero() -> Self {
        Normal {
            jtj: Matrix6::zeros(),
            jtr: Vector6::zeros(),
            objective: 0.0,
            sq: 0.0,
            n: 0,
        }
    }

    fn add(mut self, o: &Normal) -> Self {
        self.jtj += o.jtj;
        self.jtr += o.jtr;
        self.objective += o.objective;
        self.sq += o.sq;
        self.n += o.n;
        self
    }
}

/// Robust normal equations at world-to-camera `(r, t)`. Chunks are summed in
/// a fixed order so the result does not depend on scheduling.
fn accumulate(points: &[(Vec3, [f64; 2])], r: &Matrix3<f64>, t: &Vec3, k: &Intrinsics, delta: f64, jacobian: bool) -> Normal {
    let parts: Vec<Normal> = points
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Normal::zero();
            for (l, p) in chunk {
                let rl = r * l;
                let x = rl + t;
                if x.z <= 0.0 {
                    continue;
                }
                let iz = 1.0 / x.z;
                let res = [k.fx * x.x * iz + k.cx - p[0], k.fy * x.y * iz + k.cy - p[1]];
                let e = res[0].hypot(res[1]);
                acc.objective += huber(e, delta);
                acc.sq += e * e;
                acc.n += 1;
                if !jacobian {
                    continue;
                }
                let w = if e <= delta { 1.0 } else { delta / e };
                // d(u,v)/dx, then dx/d(omega) = -[rl]x and dx/dt = I
                let du = Vec3::new(k.fx * iz, 0.0, -k.fx * x.x * iz * iz);
                let dv = Vec3::new(0.0, k.fy * iz, -k.fy * x.y * iz * iz);
                for (d, ri) in [(du, res[0]), (dv, res[1])] {
                    let jw = rl.cross(&d);
                    let j = Vector6::new(jw.x, jw.y, jw.z, d.x, d.y, d.z);
                    acc.jtj += j * j.transpose() * w;
                    acc.jtr += j * (ri * w);
                }
            }
            acc
        })
        .collect();
    parts.iter().fold(Normal::zero(), |a, b| a.add(b))
}

/// Light-map points and pixel centres of all valid background pixels.
pub fn background_points(lm: &LightMap, mask: &SegmentationMask) -> Vec<(Vec3, [f64; 2])> {
    let w = lm.width();
    (0..lm.len())
        .filter(|&i| mask.labels[i] == Label::Background)
        .filter_map(|i| lm.at(i).map(|(l, _)| (l, [(i as u32 % w) as f64, (i as u32 / w) as f64])))
        .collect()
}

/// RMS reprojection error (px) of `points` under a camera-to-world pose.
pub fn reprojection_rms(points: &[(Vec3, [f64; 2])], pose: &RigidMotion, k: &Intrinsics) -> f64 {
    let inv = pose.inverse();
    let n = accumulate(points, inv.rotation(), inv.translation(), k, f64::INFINITY, false);
    if n.n == 0 {
        0.0
    } else {
        (n.sq / n.n as f64).sqrt()
    }
}

pub fn refine_pose(
    lm: &LightMap,
    mask: &SegmentationMask,
    initial: &RigidMotion,
    k: &Intrinsics,
    params: &RefineParams,
) -> Result<RefineResult> {
    let points = background_points(lm, mask);
    refine_points(&points, initial, k, params)
}

pub fn refine_points(
    points: &[(Vec3, [f64; 2])],
    initial: &RigidMotion,
    k: &Intrinsics,
    params: &RefineParams,
) -> Result<RefineResult> {
    if points.is_empty() {
        return Err(Error::EmptyBackground);
    }
    if points.len() < 6 {
        return Err(Error::DegenerateConfiguration(format!(
            "{} background pixels, need at least 6",
            points.len()
        )));
    }
    let inv = initial.inverse();
    let (mut r, mut t) = (*inv.rotation(), *inv.translation());
    let delta = params.huber;
    let mut cur = accumulate(points, &r, &t, k, delta, true);
    let initial_rms = (cur.sq / cur.n.max(1) as f64).sqrt();
    let mut log = vec![cur.objective];
    let mut mu = 1e-3 * (0..6).map(|i| cur.jtj[(i, i)]).fold(0.0, f64::max).max(1e-12);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        let mut a = cur.jtj;
        for i in 0..6 {
            a[(i, i)] += mu * cur.jtj[(i, i)].max(1e-12);
        }
        let Some(step) = a.cholesky().map(|c| c.solve(&(-cur.jtr))) else {
            mu *= 10.0;
            continue;
        };
        if step.norm() < params.step_tol {
            converged = true;
            break;
        }
        let rot = Rotation3::new(Vec3::new(step[0], step[1], step[2])).into_inner();
        let r_new = rot * r;
        let t_new = t + Vec3::new(step[3], step[4], step[5]);
        let trial = accumulate(points, &r_new, &t_new, k, delta, true);
        if trial.n == cur.n && trial.objective < cur.objective {
            r = r_new;
            t = t_new;
            cur = trial;
            log.push(cur.objective);
            mu = (mu / 3.0).max(1e-15);
        } else {
            mu *= 4.0;
            if mu > 1e16 {
                // no descent direction left at this precision
                converged = true;
                break;
            }
        }
    }
    let pose = RigidMotion::new(crate::geometry::nearest_rotation(&r), t)?.inverse();
    Ok(RefineResult {
        pose,
        initial_rms,
        rms: (cur.sq / cur.n.max(1) as f64).sqrt(),
        iterations,
        converged,
        objective_log: log,
    })
}
