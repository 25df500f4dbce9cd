use std::io::Write;

use rayon::prelude::*;

use super::icp::{icp_align, IcpParams, IcpResult};
use crate::bvh::Bvh;
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

/// Recon-to-truth surface distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    /// Per recon vertex in mm; `None` for vertices left out of the statistics.
    pub distances: Vec<Option<f64>>,
    pub mean: f64,
    pub max: f64,
    /// Reconstructed surface area in m².
    pub area_m2: f64,
    pub face_count: usize,
    pub view_count: usize,
    /// ICP pre-alignment applied to the recon, if requested.
    pub alignment: Option<IcpResult>,
}

impl DeviationReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "mean_mm,max_mm,area_m2,faces,views,vertices_evaluated")?;
        let n = self.distances.iter().flatten().count();
        writeln!(w, "{:e},{:e},{:e},{},{},{}", self.mean, self.max, self.area_m2, self.face_count, self.view_count, n)?;
        Ok(())
    }

    /// One distance per line in vertex order; `nan` for excluded vertices.
    pub fn write_sidecar<W: Write>(&self, mut w: W) -> Result<()> {
        for d in &self.distances {
            match d {
                Some(d) => writeln!(w, "{d:e}")?,
                None => writeln!(w, "nan")?,
            }
        }
        Ok(())
    }
}

/// ICP settings used for pre-alignment.
pub const PRE_ALIGN: IcpParams = IcpParams {
    max_iterations: 2000,
    tolerance: 1e-12,
    step_tolerance: 1e-10,
    min_overlap: 0.3,
    overlap_edges: 10.0,
};

pub fn mesh_deviation(recon: &TriangleMesh, truth: &TriangleMesh, pre_align: bool) -> Result<DeviationReport> {
    mesh_deviation_masked(recon, truth, pre_align, None)
}

/// As [`mesh_deviation`], with statistics restricted to vertices where
/// `include` is true. Alignment always uses the whole mesh.
pub fn mesh_deviation_masked(recon: &TriangleMesh, truth: &TriangleMesh, pre_align: bool, include: Option<&[bool]>) -> Result<DeviationReport> {
    recon.validate()?;
    truth.validate()?;
    if truth.triangles.is_empty() || recon.vertices.is_empty() {
        return Err(Error::InvalidMesh("empty mesh in deviation".into()));
    }
    if include.is_some_and(|m| m.len() != recon.vertices.len()) {
        return Err(Error::InvalidParameter("vertex filter length differs from vertex count".into()));
    }
    let aligned;
    let mut alignment = None;
    let recon = if pre_align {
        let fit = icp_align(recon, truth, &PRE_ALIGN)?;
        aligned = recon.transformed(|p| fit.motion.apply(p));
        alignment = Some(fit);
        &aligned
    } else {
        recon
    };
    let bvh = Bvh::build(truth);
    let distances: Vec<Option<f64>> = recon
        .vertices
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            if include.is_some_and(|m| !m[i]) {
                return None;
            }
            bvh.closest_point(p).map(|c| c.distance)
        })
        .collect();
    let used: Vec<f64> = distances.iter().flatten().copied().collect();
    if used.is_empty() {
        return Err(Error::InvalidParameter("no vertex selected for deviation".into()));
    }
    Ok(DeviationReport {
        mean: used.iter().sum::<f64>() / used.len() as f64,
        max: used.iter().copied().fold(0.0, f64::max),
        distances,
        area_m2: recon.total_area() * 1e-6,
        face_count: recon.triangles.len(),
        view_count: 1,
        alignment,
    })
}
