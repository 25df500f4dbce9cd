//! Multilevel descent on vertex depths with Loop refinement between levels.

use std::collections::VecDeque;
use std::io::Write;

use super::energy::evaluate;
use super::field::DepthField;
use super::sampler::NormalFieldSampler;
use super::subdivide::loop_subdivide;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::TriangleMesh;

/// Gradients below this many edge lengths count as stationary (a normal
/// mismatch of about a nanoradian).
const STATIONARY: f64 = 1e-9;

/// Steps over which the relative decrease is averaged. Single quasi-Newton
/// steps can be tiny while the surface still drifts along the nearly flat
/// depth direction.
pub const STOP_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationSchedule {
    /// Number of subdivisions (levels are `0..=levels`).
    pub levels: usize,
    /// Descent iterations per level.
    pub max_iterations: usize,
    /// Stop a level once the relative energy decrease per step, averaged
    /// over the last [`STOP_WINDOW`] steps, falls below this.
    pub tolerance: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Consecutive halvings before the line search gives up.
    pub max_backtracks: usize,
    /// Curvature pairs kept for the quasi-Newton direction; 0 is plain
    /// steepest descent.
    pub memory: usize,
}

impl Default for IntegrationSchedule {
    fn default() -> Self {
        IntegrationSchedule {
            levels: 3,
            max_iterations: 200,
            tolerance: 1e-7,
            armijo: 1e-4,
            max_backtracks: 60,
            memory: 8,
        }
    }
}

impl IntegrationSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || !(self.armijo > 0.0 && self.armijo < 1.0) || self.max_backtracks == 0 {
            return Err(Error::InvalidParameter(format!("invalid integration schedule {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub level: usize,
    /// 0 is the state entering the level.
    pub iteration: usize,
    pub energy: f64,
    /// Accepted step length (0 on entry).
    pub step: f64,
}

pub fn write_energy_log<W: Write>(mut w: W, log: &[EnergyRecord]) -> Result<()> {
    writeln!(w, "level,iteration,energy,step")?;
    for r in log {
        writeln!(w, "{},{},{:e},{:e}", r.level, r.iteration, r.energy, r.step)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Integration {
    pub field: DepthField,
    pub mesh: TriangleMesh,
    pub log: Vec<EnergyRecord>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-loop recursion over the stored `(s, y)` pairs.
fn quasi_newton(grad: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alpha = Vec::with_capacity(pairs.len());
    for (s, y) in pairs.iter().rev() {
        let a = dot(s, &q) / dot(y, s);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alpha.push(a);
    }
    if let Some((s, y)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y), a) in pairs.iter().zip(alpha.iter().rev()) {
        let b = dot(y, &q) / dot(y, s);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Descent on one level. Returns the number of accepted steps.
fn descend(
    field: &mut DepthField,
    sampler: &NormalFieldSampler,
    schedule: &IntegrationSchedule,
    level: usize,
    log: &mut Vec<EnergyRecord>,
) -> Result<usize> {
    // Optimise F(d) = E(d * d0 / d_anchor): the energy is homogeneous of
    // degree 2 in the depths, so on d_anchor = d0 the gradient of F is that
    // of E with 2E/d0 taken off the anchor entry. F does not change under a
    // common scaling, which removes the slow mode where everything but the
    // anchor drifts along the rays.
    let (anchor, anchor_depth) = (field.anchor, field.depths[field.anchor]);
    let gauge_gradient = |e: f64, mut g: Vec<f64>| {
        g[anchor] -= 2.0 * e / anchor_depth;
        g
    };
    let (mut e, g0) = evaluate(field, sampler)?;
    let mut g = gauge_gradient(e, g0);
    log.push(EnergyRecord {
        level,
        iteration: 0,
        energy: e,
        step: 0.0,
    });
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::new();
    // first steepest step moves the largest depth by a tenth of an edge
    let edge = field.to_mesh().median_edge_length();
    let scale = 0.1 * edge;
    let mut steepest_alpha = f64::NAN;
    for it in 1..=schedule.max_iterations {
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm <= STATIONARY * edge {
            return Ok(it - 1);
        }
        let (dir, mut alpha) = if pairs.is_empty() {
            let a = if steepest_alpha.is_finite() { steepest_alpha } else { scale / gnorm };
            (g.iter().map(|v| -v).collect::<Vec<_>>(), a)
        } else {
            (quasi_newton(&g, &pairs), 1.0)
        };
        let mut slope = dot(&g, &dir);
        let dir = if slope >= 0.0 {
            // lost descent: restart from the gradient
            pairs.clear();
            slope = -dot(&g, &g);
            alpha = scale / gnorm;
            g.iter().map(|v| -v).collect()
        } else {
            dir
        };
        let mut trial = field.clone();
        let mut accepted = None;
        for _ in 0..schedule.max_backtracks {
            let gauge = anchor_depth / (anchor_depth + alpha * dir[field.anchor]);
            let mut moved = false;
            for (i, d) in trial.depths.iter_mut().enumerate() {
                let nd = (field.depths[i] + alpha * dir[i]) * gauge;
                moved |= nd != field.depths[i];
                *d = nd;
            }
            trial.depths[field.anchor] = anchor_depth;
            if !moved {
                // step below the depth resolution: nothing left to gain
                return Ok(it - 1);
            }
            if gauge.is_finite() && trial.depths.iter().all(|d| *d > 0.0) {
                if let Ok((te, tg)) = evaluate(&trial, sampler) {
                    if te <= e + schedule.armijo * alpha * slope {
                        accepted = Some((te, gauge_gradient(te, tg)));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some((te, tg)) = accepted else {
            return Err(Error::Diverged(schedule.max_backtracks));
        };
        if schedule.memory > 0 {
            let s: Vec<f64> = trial.depths.iter().zip(&field.depths).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = tg.iter().zip(&g).map(|(a, b)| a - b).collect();
            if dot(&s, &y) > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                pairs.push_back((s, y));
                if pairs.len() > schedule.memory {
                    pairs.pop_front();
                }
            }
        } else {
            steepest_alpha = alpha * 2.0;
        }
        let step = alpha * dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        *field = trial;
        e = te;
        g = tg;
        log.push(EnergyRecord {
            level,
            iteration: it,
            energy: e,
            step,
        });
        let w = it.min(STOP_WINDOW);
        let decrease = log[log.len() - 1 - w].energy - e;
        if decrease <= w as f64 * schedule.tolerance * e.abs().max(f64::MIN_POSITIVE) {
            return Ok(it);
        }
    }
    Ok(schedule.max_iterations)
}

/// Drops faces without a measured normal (except those at the anchor) and
/// unreferenced vertices.
fn prune_no_data(field: &DepthField, sampler: &NormalFieldSampler) -> Result<DepthField> {
    let normals = super::energy::sample_normals(field, sampler)?;
    let anchor = field.anchor as u32;
    let mut mesh = field.to_mesh();
    mesh.triangles = field
        .triangles
        .iter()
        .zip(&normals)
        .filter(|(t, m)| m.is_some() || t.contains(&anchor))
        .map(|(t, _)| *t)
        .collect();
    let map = mesh.compact();
    let keep: Vec<usize> = {
        let mut k = vec![0; mesh.vertices.len()];
        for (old, new) in map.iter().enumerate() {
            if let Some(n) = new {
                k[*n as usize] = old;
            }
        }
        k
    };
    Ok(DepthField {
        origin: field.origin,
        rays: keep.iter().map(|&i| field.rays[i]).collect(),
        depths: keep.iter().map(|&i| field.depths[i]).collect(),
        triangles: mesh.triangles,
        anchor: map[field.anchor].ok_or(Error::AnchorOutsideForeground)? as usize,
    })
}

/// Subdivides and puts every vertex back on the ray through its position.
/// Loop smoothing pulls the anchor off `x0`; all depths are scaled so it
/// lands back on its ray depth, which keeps face normals and restores the
/// gauge without leaving a spike at the anchor.
fn refine(field: &DepthField) -> Result<DepthField> {
    let fine = loop_subdivide(&field.to_mesh())?;
    let mut out = DepthField::from_mesh(&fine, field.origin, field.anchor)?;
    let scale = field.depths[field.anchor] / out.depths[field.anchor];
    out.depths.iter_mut().for_each(|d| *d *= scale);
    out.rays[field.anchor] = field.rays[field.anchor];
    out.depths[field.anchor] = field.depths[field.anchor];
    Ok(out)
}

pub fn integrate(field0: &DepthField, sampler: &NormalFieldSampler, schedule: &IntegrationSchedule) -> Result<Integration> {
    schedule.validate()?;
    let mut field = field0.clone();
    let mut log = Vec::new();
    for level in 0..=schedule.levels {
        if level > 0 {
            field = refine(&prune_no_data(&field, sampler)?)?;
        }
        descend(&mut field, sampler, schedule, level, &mut log)?;
    }
    let field = if schedule.levels > 0 { prune_no_data(&field, sampler)? } else { field };
    Ok(Integration {
        mesh: field.to_mesh(),
        field,
        log,
    })
}

/// Position of the anchor vertex.
pub fn anchor_point(field: &DepthField) -> Vec3 {
    field.position(field.anchor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstruction::field::init_surface;
    use crate::simulator::plane_mirror_scene;

    #[test]
    fn plane_is_a_fixed_point() {
        let scene = plane_mirror_scene(400.0, 0.0, 1000.0);
        let gt = scene.ground_truth();
        let s = NormalFieldSampler::new(&gt.light_map, scene.camera, Some(&gt.mask));
        let f = init_surface(&gt.mask, &scene.camera, &Vec3::new(30.0, 40.0, 0.0), 10).unwrap();
        let sched = IntegrationSchedule {
            levels: 0,
            ..Default::default()
        };
        let r = integrate(&f, &s, &sched).unwrap();
        assert_eq!(r.log.len(), 1);
        assert_eq!(r.field, f);
    }

    #[test]
    fn tilted_start_converges_to_the_mirror() {
        let scene = plane_mirror_scene(400.0, 0.0, 1000.0);
        let gt = scene.ground_truth();
        let s = NormalFieldSampler::new(&gt.light_map, scene.camera, Some(&gt.mask));
        let mut f = init_surface(&gt.mask, &scene.camera, &Vec3::new(30.0, 40.0, 0.0), 10).unwrap();
        for i in 0..f.vertex_count() {
            if i != f.anchor {
                let p = f.position(i);
                f.depths[i] += 0.05 * (p.x - 30.0) + 0.02 * (p.y - 40.0);
            }
        }
        let anchor = anchor_point(&f);
        let start = f.to_mesh().vertices.iter().map(|p| p.z.abs()).fold(0.0, f64::max);
        // plain steepest descent is slow on this problem; it only has to make progress
        for (memory, target) in [(0, 0.1 * start), (8, 1e-2)] {
            let sched = IntegrationSchedule {
                levels: 1,
                memory,
                max_iterations: 400,
                ..Default::default()
            };
            let r = integrate(&f, &s, &sched).unwrap();
            assert_eq!(anchor_point(&r.field), anchor);
            let worst = r.mesh.vertices.iter().map(|p| p.z.abs()).fold(0.0, f64::max);
            assert!(worst < target, "memory {memory}: {worst} (start {start})");
            for w in r.log.windows(2) {
                if w[1].level == w[0].level {
                    assert!(w[1].energy <= w[0].energy);
                }
            }
        }
    }

    #[test]
    fn energy_log_csv() {
        let log = [EnergyRecord {
            level: 1,
            iteration: 2,
            energy: 0.5,
            step: 0.25,
        }];
        let mut buf = Vec::new();
        write_energy_log(&mut buf, &log).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "level,iteration,energy,step\n1,2,5e-1,2.5e-1\n");
    }
}
