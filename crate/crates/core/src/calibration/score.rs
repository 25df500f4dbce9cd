//! Local colinearity score of a light map.
//!
//! Directly seen walls map pixel rows and columns to straight lines, so the
//! difference vectors to the left/right (up/down) neighbours are parallel.
//! Seen via a curved mirror they generally are not. With `r` the numerical
//! rank of each 3x2 difference matrix, `s = |1 - r_x r_y|` is 0 on walls and
//! 1 or 3 elsewhere.

use rayon::prelude::*;

use crate::lightmap::LightMap;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreParams {
    /// Relative singular value threshold.
    pub rho: f64,
    /// Absolute floor on the smaller singular value (mm) below which a
    /// difference matrix counts as rank 1. `None` estimates it from the data.
    pub noise_floor: Option<f64>,
    /// Multiplier applied to the estimated noise level.
    pub noise_factor: f64,
}

impl Default for ScoreParams {
    fn default() -> Self {
        ScoreParams {
            rho: 1e-3,
            noise_floor: None,
            noise_factor: 4.0,
        }
    }
}

/// Per-pixel score; `None` where the neighbourhood is incomplete, contains
/// invalid pixels or spans several walls.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreImage {
    pub width: u32,
    pub height: u32,
    pub values: Vec<Option<f64>>,
    /// Absolute singular value floor that was applied (mm).
    pub floor: f64,
}

impl ScoreImage {
    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Option<f64> {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Score with undefined pixels replaced by the maximum value 3.
    pub fn filled(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.unwrap_or(3.0)).collect()
    }
}

/// Largest and smallest singular value of the 3x2 matrix `[a b]`, in
/// closed form from its Gram matrix.
pub fn singular_values_3x2(a: &crate::geometry::Vec3, b: &crate::geometry::Vec3) -> (f64, f64) {
    let (aa, bb, ab) = (a.norm_squared(), b.norm_squared(), a.dot(b));
    let tr = aa + bb;
    let disc = ((aa - bb) * (aa - bb) + 4.0 * ab * ab).sqrt();
    let s_max = (0.5 * (tr + disc)).sqrt();
    if s_max == 0.0 {
        return (0.0, 0.0);
    }
    // product of singular values is |a x b|; avoids cancellation in tr - disc
    (s_max, a.cross(b).norm() / s_max)
}

/// Numerical rank with rank 0 promoted to 1.
fn rank(s_max: f64, s_min: f64, rho: f64, floor: f64) -> u32 {
    if s_max > 0.0 && s_min > rho * s_max && s_min > floor {
        2
    } else {
        1
    }
}

/// Per-pixel `(sigma_max, sigma_min)` along rows and columns, or `None`.
fn local_singular_values(lm: &LightMap) -> Vec<Option<[(f64, f64); 2]>> {
    let (w, h) = (lm.width(), lm.height());
    (0..lm.len())
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i as u32 % w, i as u32 / w);
            if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
                return None;
            }
            let (c, f) = lm.at(i)?;
            let mut out = [(0.0, 0.0); 2];
            for (k, (p, q)) in [(i - 1, i + 1), (i - w as usize, i + w as usize)].into_iter().enumerate() {
                let (lp, fp) = lm.at(p)?;
                let (lq, fq) = lm.at(q)?;
                if fp != f || fq != f {
                    return None;
                }
                out[k] = singular_values_3x2(&(lp - c), &(lq - c));
            }
            Some(out)
        })
        .collect()
}

/// Noise level of the light map in mm: lower quartile of the smaller
/// singular values, where walls seen directly dominate.
fn estimate_noise(sv: &[Option<[(f64, f64); 2]>]) -> f64 {
    let mut mins: Vec<f64> = sv.iter().flatten().flat_map(|p| [p[0].1, p[1].1]).collect();
    if mins.is_empty() {
        return 0.0;
    }
    let k = mins.len() / 4;
    *mins.select_nth_unstable_by(k, f64::total_cmp).1
}

pub fn colinearity_score(lm: &LightMap, params: &ScoreParams) -> ScoreImage {
    let sv = local_singular_values(lm);
    let floor = params
        .noise_floor
        .unwrap_or_else(|| params.noise_factor * estimate_noise(&sv));
    let values = sv
        .par_iter()
        .map(|p| {
            p.map(|[row, col]| {
                let rx = rank(row.0, row.1, params.rho, floor);
                let ry = rank(col.0, col.1, params.rho, floor);
                (1.0 - (rx * ry) as f64).abs()
            })
        })
        .collect();
    ScoreImage {
        width: lm.width(),
        height: lm.height(),
        values,
        floor,
    }
}
