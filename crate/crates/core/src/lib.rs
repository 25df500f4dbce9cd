pub mod bvh;
pub mod calibration;
pub mod codec;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod lightmap;
pub mod mesh;
pub mod raster;
pub mod reconstruction;
pub mod simulator;
