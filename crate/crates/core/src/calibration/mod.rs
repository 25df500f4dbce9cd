//! Foreground segmentation and camera pose from directly seen walls.
//!
//! Pipeline: colinearity score, threshold and watershed, DLT homography on
//! the most frequent background wall, pose extraction, backprojection mask,
//! robust refinement on all background pixels, final backprojection mask.

pub mod homography;
pub mod pose;
pub mod refine;
pub mod score;
pub mod segment;

use std::io::{BufRead, Write};

use nalgebra::Matrix3;

pub use homography::homography_dlt;
pub use pose::{foreground_by_backprojection, pose_from_homography, wall_correspondences};
pub use refine::{refine_pose, RefineParams, RefineResult};
pub use score::{colinearity_score, ScoreImage, ScoreParams};
pub use segment::{dominant_wall, segment_initial, SegmentParams};

use crate::error::{Error, Result};
use crate::geometry::{CaveModel, Face, Intrinsics, RigidMotion, Vec3};
use crate::lightmap::LightMap;
use crate::raster::{Label, SegmentationMask};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationParams {
    pub score: ScoreParams,
    pub segment: SegmentParams,
    /// Backprojection threshold (px).
    pub theta: f64,
    pub refine: RefineParams,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        CalibrationParams {
            score: ScoreParams::default(),
            segment: SegmentParams::default(),
            theta: 2.0,
            refine: RefineParams::default(),
        }
    }
}

/// Camera-to-world pose with fit statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    pub pose: RigidMotion,
    pub wall_face: Face,
    pub rms_reproj: f64,
    pub inlier_count: usize,
    pub converged: bool,
}

impl PoseEstimate {
    /// Rotation rows, translation and RMS, one group per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        write_pose_text(&mut w, &self.pose, self.rms_reproj)
    }
}

pub fn write_pose_text<W: Write>(w: &mut W, pose: &RigidMotion, rms: f64) -> Result<()> {
    let r = pose.rotation();
    let t = pose.translation();
    writeln!(w, "# camera-to-world rotation (row-major), translation (mm), rms (px)")?;
    for i in 0..3 {
        writeln!(w, "{:e} {:e} {:e}", r[(i, 0)], r[(i, 1)], r[(i, 2)])?;
    }
    writeln!(w, "{:e} {:e} {:e}", t.x, t.y, t.z)?;
    writeln!(w, "{rms:e}")?;
    Ok(())
}

/// Reads a pose file written by [`write_pose_text`]; returns pose and RMS.
pub fn read_pose_text<R: BufRead>(r: R) -> Result<(RigidMotion, f64)> {
    let mut numbers = Vec::new();
    for line in r.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for tok in line.split_whitespace() {
            numbers.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::format("pose", format!("bad number `{tok}`")))?,
            );
        }
    }
    if numbers.len() != 13 {
        return Err(Error::format("pose", format!("expected 13 numbers, found {}", numbers.len())));
    }
    let rot = Matrix3::from_row_slice(&numbers[..9]);
    let pose = RigidMotion::new(rot, Vec3::new(numbers[9], numbers[10], numbers[11]))
        .map_err(|e| Error::format("pose", e.to_string()))?;
    Ok((pose, numbers[12]))
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub score: ScoreImage,
    pub initial_mask: SegmentationMask,
    /// Pose decomposed from the dominant-wall homography.
    pub initial_pose: RigidMotion,
    pub pose: PoseEstimate,
    pub final_mask: SegmentationMask,
    pub refine: RefineResult,
}

/// Full calibration of one view.
pub fn calibrate(lm: &LightMap, k: &Intrinsics, cave: &CaveModel, params: &CalibrationParams) -> Result<Calibration> {
    let score = colinearity_score(lm, &params.score);
    let initial_mask = segment_initial(&score, Some(lm), &params.segment);
    let wall = dominant_wall(&initial_mask, lm)?;
    let (walls, pixels) = wall_correspondences(lm, &initial_mask, wall, cave);
    let h = homography_dlt(&walls, &pixels)?;
    let initial_pose = pose_from_homography(&h, k, wall, cave)?;
    let chi = foreground_by_backprojection(lm, &initial_pose, k, params.theta);
    let refine = refine_pose(lm, &chi, &initial_pose, k, &params.refine)?;
    let final_mask = foreground_by_backprojection(lm, &refine.pose, k, params.theta);
    let inliers = final_mask.count(Label::Background);
    let rms = refine::reprojection_rms(&refine::background_points(lm, &final_mask), &refine.pose, k);
    Ok(Calibration {
        score,
        initial_mask,
        initial_pose,
        pose: PoseEstimate {
            pose: refine.pose,
            wall_face: wall,
            rms_reproj: rms,
            inlier_count: inliers,
            converged: refine.converged,
        },
        final_mask,
        refine,
    })
}
