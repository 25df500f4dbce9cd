use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, CaveModel, Face};
use crate::lightmap::LightMap;
use crate::raster::{Label, SegmentationMask};

/// Cumulative share of image pixels whose light-map point lies within `d`
/// of the barycentre of the wall behind the camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCurve {
    pub back_wall: Face,
    /// Upper bin edges in mm, ending at `2h`.
    pub d: Vec<f64>,
    pub fraction: Vec<f64>,
    /// Same as `fraction`, split by the wall the point lies on (face id order).
    pub per_face: Vec<[f64; 6]>,
}

/// The wall whose outward normal points most against the optical axis.
pub fn back_wall(camera: &CameraModel) -> Face {
    let axis = camera.optical_axis();
    Face::ALL
        .into_iter()
        .min_by(|a, b| a.outward_normal().dot(&axis).total_cmp(&b.outward_normal().dot(&axis)))
        .unwrap()
}

/// With a mask, only foreground pixels count; fractions are always of the
/// whole image.
pub fn coverage_curve(lm: &LightMap, camera: &CameraModel, cave: &CaveModel, mask: Option<&SegmentationMask>, bins: usize) -> Result<CoverageCurve> {
    if bins == 0 {
        return Err(Error::InvalidParameter("coverage needs at least one bin".into()));
    }
    if mask.is_some_and(|m| m.labels.len() != lm.len()) {
        return Err(Error::InvalidParameter("mask size differs from light map".into()));
    }
    let wall = back_wall(camera);
    let center = cave.face_center(wall);
    let limit = 2.0 * cave.half_extent();
    let mut counts = vec![[0usize; 6]; bins];
    for i in 0..lm.len() {
        if mask.is_some_and(|m| m.labels[i] != Label::Foreground) {
            continue;
        }
        let Some((p, f)) = lm.at(i) else { continue };
        let d = (p - center).norm();
        if d > limit {
            continue;
        }
        // bin k holds (d_{k-1}, d_k]
        let k = ((d / limit * bins as f64).ceil() as usize).clamp(1, bins) - 1;
        counts[k][f.id() as usize] += 1;
    }
    let total = lm.len().max(1) as f64;
    let mut acc = [0usize; 6];
    let mut curve = CoverageCurve {
        back_wall: wall,
        d: Vec::with_capacity(bins),
        fraction: Vec::with_capacity(bins),
        per_face: Vec::with_capacity(bins),
    };
    for (k, c) in counts.iter().enumerate() {
        for j in 0..6 {
            acc[j] += c[j];
        }
        curve.d.push(limit * (k + 1) as f64 / bins as f64);
        curve.fraction.push(acc.iter().sum::<usize>() as f64 / total);
        curve.per_face.push(acc.map(|a| a as f64 / total));
    }
    Ok(curve)
}

impl CoverageCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "d_mm,cumulative_fraction")?;
        for f in Face::ALL {
            write!(w, ",face_{}", f.id())?;
        }
        writeln!(w)?;
        for ((d, c), pf) in self.d.iter().zip(&self.fraction).zip(&self.per_face) {
            write!(w, "{d},{c:e}")?;
            for v in pf {
                write!(w, ",{v:e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
