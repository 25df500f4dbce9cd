use crate::calibration::segment::Binary;
use crate::error::Result;
use crate::geometry::{halfway_normal, CameraModel, Vec3};
use crate::lightmap::LightMap;
use crate::raster::{Label, SegmentationMask};

/// Measured normal field: the normal a mirror at `x` would need to send the
/// camera ray through `x` to the wall point recorded at its pixel.
#[derive(Debug, Clone)]
pub struct NormalFieldSampler<'a> {
    pub lm: &'a LightMap,
    /// Camera with the estimated (or true) pose.
    pub camera: CameraModel,
    /// Pixels whose light-map entry may be used.
    usable: Vec<bool>,
}

impl<'a> NormalFieldSampler<'a> {
    /// Lookups are restricted to valid pixels, and to foreground pixels when
    /// a mask is given.
    pub fn new(lm: &'a LightMap, camera: CameraModel, mask: Option<&SegmentationMask>) -> Self {
        Self::with_margin(lm, camera, mask, 0)
    }

    /// As [`new`](Self::new), additionally dropping foreground pixels within
    /// `margin` px of the background. Normals there graze the view rays and
    /// their errors leak into the whole surface.
    pub fn with_margin(lm: &'a LightMap, camera: CameraModel, mask: Option<&SegmentationMask>, margin: u32) -> Self {
        let mut usable: Vec<bool> = (0..lm.len()).map(|i| lm.is_valid(i)).collect();
        if let Some(m) = mask {
            let fg = Binary {
                width: m.width,
                height: m.height,
                bits: m.labels.iter().map(|l| *l == Label::Foreground).collect(),
            };
            let fg = if margin > 0 { fg.erode(margin) } else { fg };
            usable.iter_mut().zip(&fg.bits).for_each(|(u, f)| *u &= *f);
        }
        NormalFieldSampler { lm, camera, usable }
    }

    #[inline]
    fn usable(&self, i: usize) -> bool {
        self.usable[i]
    }

    /// Wall point seen at sub-pixel position `(u, v)`: bilinear when the four
    /// surrounding pixels are usable, otherwise the nearest usable one of the
    /// four. Neighbours on adjacent walls are blended too, the light map is
    /// continuous across cube edges.
    pub fn lookup(&self, u: f64, v: f64) -> Option<Vec3> {
        let (w, h) = (self.lm.width() as i64, self.lm.height() as i64);
        let (x0, y0) = (u.floor() as i64, v.floor() as i64);
        let (fx, fy) = (u - x0 as f64, v - y0 as f64);
        let mut corners = [None; 4];
        for (k, (dx, dy)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
            let (x, y) = (x0 + dx, y0 + dy);
            if x < 0 || y < 0 || x >= w || y >= h {
                continue;
            }
            let i = (y * w + x) as usize;
            if self.usable(i) {
                corners[k] = self.lm.at(i);
            }
        }
        if let [Some(a), Some(b), Some(c), Some(d)] = corners {
            let top = a.0 * (1.0 - fx) + b.0 * fx;
            let bottom = c.0 * (1.0 - fx) + d.0 * fx;
            return Some(top * (1.0 - fy) + bottom * fy);
        }
        let weights = [(fx, fy), (1.0 - fx, fy), (fx, 1.0 - fy), (1.0 - fx, 1.0 - fy)];
        corners
            .iter()
            .zip(weights)
            .filter_map(|(c, (a, b))| c.map(|c| (a * a + b * b, c.0)))
            .min_by(|p, q| p.0.total_cmp(&q.0))
            .map(|(_, l)| l)
    }

    /// `Ok(None)` is NO_DATA: behind the camera, outside the image or the
    /// usable foreground.
    pub fn measured_normal(&self, x: &Vec3) -> Result<Option<Vec3>> {
        let Ok((u, v)) = self.camera.project_world(x) else {
            return Ok(None);
        };
        let Some(l) = self.lookup(u, v) else {
            return Ok(None);
        };
        let d_in = (x - self.camera.center()).normalize();
        let d_out = (l - x).normalize();
        halfway_normal(&d_in, &d_out).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{plane_mirror_scene, sphere_scene, Specimen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn plane_mirror_normals() {
        let scene = plane_mirror_scene(400.0, 0.0, 1000.0);
        let gt = scene.ground_truth();
        let s = NormalFieldSampler::new(&gt.light_map, scene.camera, Some(&gt.mask));
        for (x, y) in [(0.0, 0.0), (120.0, -33.0), (-250.0, 180.0)] {
            let n = s.measured_normal(&Vec3::new(x, y, 0.0)).unwrap().unwrap();
            assert!((n - Vec3::z()).norm() < 1e-6, "{n}");
        }
        assert_eq!(s.measured_normal(&Vec3::new(0.0, 0.0, 2000.0)).unwrap(), None);
    }

    #[test]
    fn sphere_normals_on_true_surface() {
        let scene = sphere_scene(0.0, 0);
        let Some(Specimen::Sphere { center, radius }) = scene.specimen.clone() else { unreachable!() };
        let gt = scene.ground_truth();
        let s = NormalFieldSampler::new(&gt.light_map, scene.camera, Some(&gt.mask));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let eye = scene.camera.center();
        let mut checked = 0;
        while checked < 500 {
            // random visible point at most 45 degrees from the view direction
            let dir = (eye - center).normalize();
            let mut n = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            n = (n.normalize() * 0.9 + dir).normalize();
            if n.dot(&dir) < std::f64::consts::FRAC_1_SQRT_2 {
                continue;
            }
            let x = center + n * radius;
            let m = s.measured_normal(&x).unwrap().unwrap();
            assert!((m - n).norm() < 1e-4, "{}", (m - n).norm());
            checked += 1;
        }
        // moving off the surface along the ray changes the hypothesis
        let n = ((eye - center).normalize() + Vec3::z() * 0.5).normalize();
        let x = center + n * radius;
        let a = s.measured_normal(&x).unwrap().unwrap();
        let b = s.measured_normal(&(x + (x - eye).normalize() * 50.0)).unwrap().unwrap();
        assert!((a - b).norm() > 1e-3, "{}", (a - b).norm());
    }
}
