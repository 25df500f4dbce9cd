//! Surface from the measured normal field: a depth-parametrised mesh is
//! driven towards agreement between its face normals and the normals the
//! light map implies, with Loop refinement between levels.

pub mod energy;
pub mod field;
pub mod integrate;
pub mod sampler;
pub mod subdivide;

pub use energy::{energy, energy_gradient, face_center, frozen_energy, frozen_gradient, sample_normals};
pub use field::{init_surface, DepthField, DEFAULT_GRID_CELLS};
pub use integrate::{integrate, write_energy_log, EnergyRecord, Integration, IntegrationSchedule};
pub use sampler::NormalFieldSampler;
pub use subdivide::loop_subdivide;

use crate::error::Result;
use crate::geometry::{CameraModel, Vec3};
use crate::lightmap::LightMap;
use crate::raster::SegmentationMask;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionParams {
    /// Grid cells across the silhouette bounding box.
    pub grid_cells: u32,
    /// Foreground pixels this close to the background give no normal (px).
    pub boundary_margin: u32,
    pub schedule: IntegrationSchedule,
}

impl Default for ReconstructionParams {
    fn default() -> Self {
        ReconstructionParams {
            grid_cells: DEFAULT_GRID_CELLS,
            boundary_margin: 3,
            schedule: IntegrationSchedule::default(),
        }
    }
}

/// Initial plane through `x0` over the silhouette, integrated against the
/// normals measured with `camera` (the calibrated pose).
pub fn reconstruct(
    lm: &LightMap,
    camera: &CameraModel,
    mask: &SegmentationMask,
    x0: &Vec3,
    params: &ReconstructionParams,
) -> Result<Integration> {
    let field = init_surface(mask, camera, x0, params.grid_cells)?;
    let sampler = NormalFieldSampler::with_margin(lm, *camera, Some(mask), params.boundary_margin);
    integrate(&field, &sampler, &params.schedule)
}
