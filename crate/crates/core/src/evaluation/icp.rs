//! Point-to-surface ICP: each source vertex pairs with its closest point on
//! the target surface, then a closed-form rigid fit (Kabsch).

use nalgebra::{Matrix3, SVD};
use rayon::prelude::*;

use crate::bvh::Bvh;
use crate::error::{Error, Result};
use crate::geometry::{RigidMotion, Vec3};
use crate::mesh::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Converged once the relative RMS change drops below this.
    pub tolerance: f64,
    /// Also required for convergence: the last update moved no source
    /// vertex by more than this (mm). The RMS is flat near the optimum, so
    /// its change alone stops early.
    pub step_tolerance: f64,
    /// Minimum fraction of source vertices near the target.
    pub min_overlap: f64,
    /// "Near" is within this many source median edge lengths.
    pub overlap_edges: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            max_iterations: 100,
            tolerance: 1e-9,
            step_tolerance: 1e-8,
            min_overlap: 0.3,
            overlap_edges: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps source coordinates onto the target.
    pub motion: RigidMotion,
    /// RMS point-to-surface distance at each pairing, starting with the
    /// identity.
    pub rms_log: Vec<f64>,
    pub converged: bool,
}

impl IcpResult {
    pub fn rms(&self) -> f64 {
        *self.rms_log.last().unwrap_or(&0.0)
    }
}

/// Rigid motion minimising `sum |R p + t - q|^2`.
pub fn kabsch(src: &[Vec3], dst: &[Vec3]) -> Result<RigidMotion> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(Error::DegenerateConfiguration(format!("kabsch needs 3+ pairs, got {}", src.len())));
    }
    let n = src.len() as f64;
    let cs: Vec3 = src.iter().sum::<Vec3>() / n;
    let cd: Vec3 = dst.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (p, q) in src.iter().zip(dst) {
        h += (p - cs) * (q - cd).transpose();
    }
    let svd = SVD::new(h, true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (vt.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = vt.transpose() * d * u.transpose();
    RigidMotion::new(r, cd - r * cs)
}

fn pair(points: &[Vec3], bvh: &Bvh) -> Vec<(Vec3, f64)> {
    points
        .par_iter()
        .map(|p| {
            let c = bvh.closest_point(p).expect("non-empty target");
            (c.point, c.distance)
        })
        .collect()
}

const ACCEL_COS: f64 = 0.985; // about 10 degrees
const MAX_EXTRAPOLATION: f64 = 64.0;

fn moved(mesh: &TriangleMesh, g: &RigidMotion) -> Vec<Vec3> {
    mesh.vertices.iter().map(|p| g.apply(p)).collect()
}

fn params6(g: &RigidMotion) -> [f64; 6] {
    let (w, t) = (g.axis_angle(), g.translation());
    [w.x, w.y, w.z, t.x, t.y, t.z]
}

fn from_params6(p: &[f64; 6]) -> RigidMotion {
    RigidMotion::from_axis_angle(Vec3::new(p[0], p[1], p[2]), Vec3::new(p[3], p[4], p[5]))
}

fn add(a: &[f64; 6], b: &[f64; 6]) -> [f64; 6] {
    std::array::from_fn(|i| a[i] + b[i])
}

fn sub(a: &[f64; 6], b: &[f64; 6]) -> [f64; 6] {
    std::array::from_fn(|i| a[i] - b[i])
}

fn scale(a: &[f64; 6], k: f64) -> [f64; 6] {
    a.map(|x| x * k)
}

fn cosine(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn rms(pairs: &[(Vec3, f64)]) -> f64 {
    (pairs.iter().map(|(_, d)| d * d).sum::<f64>() / pairs.len().max(1) as f64).sqrt()
}

pub fn icp_align(source: &TriangleMesh, target: &TriangleMesh, params: &IcpParams) -> Result<IcpResult> {
    if source.vertices.len() < 3 || target.triangles.is_empty() {
        return Err(Error::InsufficientOverlap {
            matched: 0,
            total: source.vertices.len(),
        });
    }
    let bvh = Bvh::build(target);
    let mut pairs = pair(&source.vertices, &bvh);
    let reach = params.overlap_edges * source.median_edge_length();
    let matched = pairs.iter().filter(|(_, d)| *d <= reach).count();
    if (matched as f64) < params.min_overlap * source.vertices.len() as f64 {
        return Err(Error::InsufficientOverlap {
            matched,
            total: source.vertices.len(),
        });
    }
    let mut motion = RigidMotion::identity();
    let mut rms_log = vec![rms(&pairs)];
    let mut converged = rms_log[0] == 0.0;
    let mut last_delta: Option<[f64; 6]> = None;
    for _ in 0..params.max_iterations {
        if converged {
            break;
        }
        let dst: Vec<Vec3> = pairs.iter().map(|(q, _)| *q).collect();
        let step = kabsch(&source.vertices, &dst)?;
        let mut next = pair(&moved(source, &step), &bvh);
        let mut r = rms(&next);
        let prev = *rms_log.last().unwrap();
        if r > prev {
            // rounding at the fixed point; keep the better iterate
            converged = true;
            break;
        }
        let delta = sub(&params6(&step), &params6(&motion));
        let mut accepted = step;
        // Consecutive steps pointing the same way mean slow linear
        // convergence along a valley: extrapolate while it pays.
        if last_delta.is_some_and(|d| cosine(&d, &delta) > ACCEL_COS) {
            let base = params6(&step);
            let mut k = 1.0;
            while k < MAX_EXTRAPOLATION {
                k *= 2.0;
                let trial = from_params6(&add(&base, &scale(&delta, k)));
                let tp = pair(&moved(source, &trial), &bvh);
                let tr = rms(&tp);
                if tr >= r {
                    break;
                }
                (accepted, next, r) = (trial, tp, tr);
            }
        }
        let shift = source
            .vertices
            .iter()
            .map(|p| (accepted.apply(p) - motion.apply(p)).norm())
            .fold(0.0, f64::max);
        last_delta = Some(sub(&params6(&accepted), &params6(&motion)));
        motion = accepted;
        pairs = next;
        rms_log.push(r);
        converged = r == 0.0 || ((prev - r) <= params.tolerance * prev && shift <= params.step_tolerance);
    }
    Ok(IcpResult {
        motion,
        rms_log,
        converged,
    })
}
