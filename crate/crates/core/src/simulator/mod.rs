//! Ray-traced synthetic captures of a mirror specimen inside the cube.
//!
//! Each pixel is traced once; every pattern frame is then a lookup at the
//! traced wall point. Sensor noise is drawn from a counter-based stream keyed
//! by (seed, frame, pixel), so the output does not depend on thread order.

mod config;
mod specimen;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

pub use config::{NoiseConfig, PoseConfig, SceneFile, SpecimenConfig};
pub use specimen::{Specimen, SurfaceHit, SPHERE_EXPORT_LEVELS};

use crate::codec::{pattern_intensity, PatternSpec, PatternSuite, SuiteManifest};
use crate::error::{Error, Result};
use crate::geometry::{reflect, CameraModel, CaveModel, Face, Intrinsics, RigidMotion, Vec3};
use crate::lightmap::LightMap;
use crate::mesh::TriangleMesh;
use crate::raster::{Image16, Label, SegmentationMask};

/// Offset along secondary rays to step off the surface (mm).
const RAY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvalidReason {
    /// The reflected ray hits the specimen again.
    MultiBounce,
    /// The camera ray meets the back side of a triangle.
    BackFace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trace {
    Direct { point: Vec3, face: Face },
    Reflected { hit: Vec3, normal: Vec3, point: Vec3, face: Face },
    Invalid(InvalidReason),
}

impl Trace {
    /// Wall point and face seen by the pixel.
    pub fn exit(&self) -> Option<(Vec3, Face)> {
        match *self {
            Trace::Direct { point, face } | Trace::Reflected { point, face, .. } => Some((point, face)),
            Trace::Invalid(_) => None,
        }
    }

    pub fn label(&self) -> Label {
        match self {
            Trace::Direct { .. } => Label::Background,
            Trace::Reflected { .. } => Label::Foreground,
            Trace::Invalid(_) => Label::Invalid,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneConfig {
    pub cave: CaveModel,
    pub camera: CameraModel,
    pub specimen: Option<Specimen>,
    /// Gaussian sensor noise, fraction of full scale.
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Exact per-pixel correspondences and labels of a scene.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub light_map: LightMap,
    pub mask: SegmentationMask,
    pub pose: RigidMotion,
    pub specimen: Option<TriangleMesh>,
}

impl SceneConfig {
    pub fn new(
        cave: CaveModel,
        camera: CameraModel,
        specimen: Option<Specimen>,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        let h = cave.half_extent();
        if camera.center().amax() >= h {
            return Err(Error::InvalidParameter("camera centre must lie strictly inside the cube".into()));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise sigma {noise_sigma}")));
        }
        if let Some(s) = &specimen {
            let (lo, hi) = s.bounds();
            if lo.min() <= -h || hi.max() >= h {
                return Err(Error::InvalidParameter("specimen must lie inside the cube".into()));
            }
        }
        Ok(SceneConfig {
            cave,
            camera,
            specimen,
            noise_sigma,
            seed,
        })
    }

    pub fn width(&self) -> u32 {
        self.camera.width()
    }

    pub fn height(&self) -> u32 {
        self.camera.height()
    }

    /// Follows a world ray from the camera centre.
    pub fn trace_ray(&self, origin: &Vec3, dir: &Vec3) -> Trace {
        let Some(hit) = self.specimen.as_ref().and_then(|s| s.intersect(origin, dir, 0.0, None)) else {
            let (point, face) = self.cave.intersect(origin, dir);
            return Trace::Direct { point, face };
        };
        if hit.geometric_normal.dot(dir) >= 0.0 {
            return Trace::Invalid(InvalidReason::BackFace);
        }
        let r = reflect(dir, &hit.normal).normalize();
        // a shading normal can send the ray into the surface
        if r.dot(&hit.geometric_normal) <= 0.0 {
            return Trace::Invalid(InvalidReason::MultiBounce);
        }
        let specimen = self.specimen.as_ref().unwrap();
        if specimen.intersect(&hit.point, &r, RAY_EPS, hit.primitive).is_some() {
            return Trace::Invalid(InvalidReason::MultiBounce);
        }
        let (point, face) = self.cave.intersect(&hit.point, &r);
        Trace::Reflected {
            hit: hit.point,
            normal: hit.normal,
            point,
            face,
        }
    }

    pub fn trace_pixel(&self, u: f64, v: f64) -> Result<Trace> {
        let (o, d) = self.camera.ray(u, v)?;
        Ok(self.trace_ray(&o, &d))
    }

    /// Traces every pixel centre, row-major.
    pub fn trace_all(&self) -> Vec<Trace> {
        let w = self.width();
        (0..self.camera.intrinsics.pixel_count())
            .into_par_iter()
            .map(|i| {
                let (x, y) = (i as u32 % w, i as u32 / w);
                self.trace_pixel(x as f64, y as f64).expect("pixel centres are in bounds")
            })
            .collect()
    }

    /// Renders an arbitrary wall texture; invalid pixels are 0. `stream`
    /// selects the noise sequence and should differ between frames.
    pub fn render_with<F>(&self, traces: &[Trace], stream: u64, texture: F) -> Image16
    where
        F: Fn(&Vec3, Face) -> f64 + Sync,
    {
        let (w, h) = (self.width(), self.height());
        let sigma = self.noise_sigma;
        let base = ChaCha8Rng::seed_from_u64(self.seed);
        let data = traces
            .par_chunks(w as usize)
            .enumerate()
            .flat_map_iter(|(row, line)| {
                let mut rng = base.clone();
                rng.set_stream(stream);
                let texture = &texture;
                line.iter().enumerate().map(move |(col, t)| {
                    let Some((p, f)) = t.exit() else { return 0 };
                    let mut value = texture(&p, f);
                    if sigma > 0.0 {
                        let pixel = row as u128 * w as u128 + col as u128;
                        rng.set_word_pos(pixel << 8);
                        let n: f64 = StandardNormal.sample(&mut rng);
                        value += sigma * n;
                    }
                    (value.clamp(0.0, 1.0) * u16::MAX as f64).round() as u16
                })
            })
            .collect();
        Image16 {
            width: w,
            height: h,
            data,
        }
    }

    pub fn render_frame(&self, traces: &[Trace], spec: &PatternSpec, stream: u64) -> Image16 {
        self.render_with(traces, stream, |p, f| pattern_intensity(&self.cave, spec, p, f))
    }

    /// Renders `suite` in order; frame `i` uses noise stream `i`.
    pub fn render_sequence(&self, suite: &PatternSuite) -> (Vec<Image16>, SuiteManifest) {
        let traces = self.trace_all();
        let images = suite
            .frames()
            .iter()
            .enumerate()
            .map(|(i, spec)| self.render_frame(&traces, spec, i as u64))
            .collect();
        let manifest = SuiteManifest::for_suite(suite, self.cave.half_extent(), self.width(), self.height());
        (images, manifest)
    }

    pub fn ground_truth(&self) -> GroundTruth {
        self.ground_truth_from(&self.trace_all())
    }

    pub fn ground_truth_from(&self, traces: &[Trace]) -> GroundTruth {
        let (w, h) = (self.width(), self.height());
        let light_map = LightMap::from_samples(w, h, traces.iter().map(Trace::exit).collect())
            .expect("one trace per pixel");
        GroundTruth {
            light_map,
            mask: SegmentationMask {
                width: w,
                height: h,
                labels: traces.iter().map(Trace::label).collect(),
            },
            pose: self.camera.pose,
            specimen: self.specimen.as_ref().map(Specimen::to_mesh),
        }
    }
}

/// Intrinsics of the reference scenes: 512 x 512, f = 1000 px, centred.
pub fn reference_intrinsics() -> Intrinsics {
    Intrinsics {
        fx: 1000.0,
        fy: 1000.0,
        cx: 256.0,
        cy: 256.0,
        width: 512,
        height: 512,
    }
}

pub const SPHERE_RADIUS: f64 = 300.0;
pub const SPHERE_DISTANCE: f64 = 2000.0;

/// Sphere of radius 300 mm in the default cube, seen from 2000 mm by a
/// slightly rolled, off-axis camera; the background is the -x wall.
pub fn sphere_scene(noise_sigma: f64, seed: u64) -> SceneConfig {
    let center = Vec3::new(-750.0, 0.0, 0.0);
    let eye = Vec3::new(1230.0, 180.0, 220.0);
    let eye = center + (eye - center).normalize() * SPHERE_DISTANCE;
    let target = center + Vec3::new(0.0, 25.0, -20.0);
    let pose = RigidMotion::look_at(eye, target, Vec3::new(0.0, 0.08, 1.0)).expect("non-degenerate view");
    let camera = CameraModel::new(reference_intrinsics(), pose).expect("valid intrinsics");
    SceneConfig::new(
        CaveModel::default(),
        camera,
        Some(Specimen::sphere(center, SPHERE_RADIUS)),
        noise_sigma,
        seed,
    )
    .expect("reference scene is valid")
}

/// Mirror plane `z = height` of half-size `half` facing +z, viewed straight
/// down from `camera_height`.
pub fn plane_mirror_scene(half: f64, height: f64, camera_height: f64) -> SceneConfig {
    let pose = RigidMotion::look_at(
        Vec3::new(0.0, 0.0, camera_height),
        Vec3::new(0.0, 0.0, height),
        Vec3::y(),
    )
    .expect("non-degenerate view");
    let camera = CameraModel::new(reference_intrinsics(), pose).expect("valid intrinsics");
    let mirror = Specimen::mesh(TriangleMesh::square_z(half, height, 4)).expect("valid mesh");
    SceneConfig::new(CaveModel::default(), camera, Some(mirror), 0.0, 0).expect("valid scene")
}
