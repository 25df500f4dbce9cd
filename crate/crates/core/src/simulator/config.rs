//! Scene description as a TOML file.
//!
//! ```toml
//! half_extent = 1524.0
//! seed = 7
//! [camera]
//! fx = 1000.0
//! fy = 1000.0
//! cx = 256.0
//! cy = 256.0
//! width = 512
//! height = 512
//! [pose]          # camera to world
//! axis_angle = [0.0, 0.0, 0.0]
//! translation = [0.0, 0.0, 0.0]
//! [noise]
//! sigma = 0.0
//! [specimen]
//! kind = "sphere"
//! center = [-750.0, 0.0, 0.0]
//! radius = 300.0
//! ```
//!
//! A mesh specimen is `kind = "mesh"` with `path` to an OBJ file, relative to
//! the config file.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{SceneConfig, Specimen};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, CaveModel, Intrinsics, RigidMotion, Vec3, DEFAULT_HALF_EXTENT};
use crate::mesh::TriangleMesh;

fn default_half_extent() -> f64 {
    DEFAULT_HALF_EXTENT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseConfig {
    pub axis_angle: [f64; 3],
    pub translation: [f64; 3],
}

impl From<&RigidMotion> for PoseConfig {
    fn from(g: &RigidMotion) -> Self {
        PoseConfig {
            axis_angle: g.axis_angle().into(),
            translation: (*g.translation()).into(),
        }
    }
}

impl From<&PoseConfig> for RigidMotion {
    fn from(p: &PoseConfig) -> Self {
        RigidMotion::from_axis_angle(Vec3::from(p.axis_angle), Vec3::from(p.translation))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseConfig {
    #[serde(default)]
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpecimenConfig {
    Sphere { center: [f64; 3], radius: f64 },
    Mesh { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    #[serde(default = "default_half_extent")]
    pub half_extent: f64,
    #[serde(default)]
    pub seed: u64,
    pub camera: Intrinsics,
    pub pose: PoseConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub specimen: Option<SpecimenConfig>,
}

impl SceneFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Builds the scene; mesh paths resolve against `base_dir`.
    pub fn to_scene(&self, base_dir: &Path) -> Result<SceneConfig> {
        let cave = CaveModel::new(self.half_extent).map_err(|e| Error::Config(e.to_string()))?;
        let camera = CameraModel::new(self.camera, RigidMotion::from(&self.pose))
            .map_err(|e| Error::Config(e.to_string()))?;
        let specimen = match &self.specimen {
            None => None,
            Some(SpecimenConfig::Sphere { center, radius }) => {
                if !(*radius > 0.0) {
                    return Err(Error::Config(format!("sphere radius {radius}")));
                }
                Some(Specimen::sphere(Vec3::from(*center), *radius))
            }
            Some(SpecimenConfig::Mesh { path }) => {
                let full = base_dir.join(path);
                let file = fs::File::open(&full).map_err(|e| Error::Config(format!("{}: {e}", full.display())))?;
                Some(Specimen::mesh(TriangleMesh::read_obj(BufReader::new(file))?)?)
            }
        };
        SceneConfig::new(cave, camera, specimen, self.noise.sigma, self.seed).map_err(|e| match e {
            Error::InvalidParameter(m) => Error::Config(m),
            other => other,
        })
    }

    /// Description of an in-memory scene. Mesh specimens are referenced by
    /// `mesh_path`, which the caller is responsible for writing.
    pub fn describe(scene: &SceneConfig, mesh_path: Option<PathBuf>) -> Result<Self> {
        let specimen = match (&scene.specimen, mesh_path) {
            (None, _) => None,
            (Some(Specimen::Sphere { center, radius }), _) => Some(SpecimenConfig::Sphere {
                center: (*center).into(),
                radius: *radius,
            }),
            (Some(Specimen::Mesh { .. }), Some(path)) => Some(SpecimenConfig::Mesh { path }),
            (Some(Specimen::Mesh { .. }), None) => {
                return Err(Error::Config("mesh specimen needs a file path".into()))
            }
        };
        Ok(SceneFile {
            half_extent: scene.cave.half_extent(),
            seed: scene.seed,
            camera: scene.camera.intrinsics,
            pose: PoseConfig::from(&scene.camera.pose),
            noise: NoiseConfig {
                sigma: scene.noise_sigma,
            },
            specimen,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::sphere_scene;

    #[test]
    fn sphere_scene_roundtrips_through_toml() {
        let scene = sphere_scene(0.005, 11);
        let file = SceneFile::describe(&scene, None).unwrap();
        let text = file.to_toml().unwrap();
        let back = SceneFile::from_toml(&text).unwrap();
        assert_eq!(back, file);
        let rebuilt = back.to_scene(Path::new(".")).unwrap();
        assert!(rebuilt.camera.pose.rotation_angle_to(&scene.camera.pose) < 1e-12);
        assert!((rebuilt.camera.center() - scene.camera.center()).norm() < 1e-9);
        assert_eq!(rebuilt.seed, 11);
    }

    #[test]
    fn empty_cave_and_bad_configs() {
        let text = "[camera]\nfx = 100.0\nfy = 100.0\ncx = 10.0\ncy = 10.0\nwidth = 20\nheight = 20\n[pose]\naxis_angle = [0.0, 0.0, 0.0]\ntranslation = [0.0, 0.0, 0.0]\n";
        let f = SceneFile::from_toml(text).unwrap();
        assert_eq!(f.half_extent, 1524.0);
        assert!(f.to_scene(Path::new(".")).unwrap().specimen.is_none());
        let outside = text.replace("translation = [0.0, 0.0, 0.0]", "translation = [2000.0, 0.0, 0.0]");
        assert!(matches!(
            SceneFile::from_toml(&outside).unwrap().to_scene(Path::new(".")),
            Err(Error::Config(_))
        ));
        assert!(SceneFile::from_toml("[pose]\n").is_err());
        let missing = format!("{text}[specimen]\nkind = \"mesh\"\npath = \"nope.obj\"\n");
        assert!(SceneFile::from_toml(&missing).unwrap().to_scene(Path::new("/nonexistent")).is_err());
    }
}
