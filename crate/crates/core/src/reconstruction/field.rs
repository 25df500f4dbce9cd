use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Vec3};
use crate::mesh::TriangleMesh;
use crate::raster::{Label, SegmentationMask};

/// Triangle mesh whose vertices slide along fixed rays from the camera
/// centre. The anchor vertex is held at its depth to fix the gauge.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthField {
    pub origin: Vec3,
    /// Unit ray direction per vertex (world frame).
    pub rays: Vec<Vec3>,
    pub depths: Vec<f64>,
    pub triangles: Vec<[u32; 3]>,
    pub anchor: usize,
}

impl DepthField {
    pub fn vertex_count(&self) -> usize {
        self.rays.len()
    }

    #[inline]
    pub fn position(&self, i: usize) -> Vec3 {
        self.origin + self.rays[i] * self.depths[i]
    }

    pub fn positions(&self) -> Vec<Vec3> {
        (0..self.rays.len()).map(|i| self.position(i)).collect()
    }

    pub fn anchor_depth(&self) -> f64 {
        self.depths[self.anchor]
    }

    pub fn to_mesh(&self) -> TriangleMesh {
        TriangleMesh {
            vertices: self.positions(),
            triangles: self.triangles.clone(),
        }
    }

    /// Field through the vertices of `mesh`; each vertex gets the ray from
    /// `origin` through its position.
    pub fn from_mesh(mesh: &TriangleMesh, origin: Vec3, anchor: usize) -> Result<DepthField> {
        let mut rays = Vec::with_capacity(mesh.vertices.len());
        let mut depths = Vec::with_capacity(mesh.vertices.len());
        for v in &mesh.vertices {
            let d = v - origin;
            let n = d.norm();
            if !(n > 0.0) {
                return Err(Error::InvalidMesh("vertex at the camera centre".into()));
            }
            rays.push(d / n);
            depths.push(n);
        }
        if anchor >= rays.len() {
            return Err(Error::InvalidParameter(format!("anchor {anchor} out of range")));
        }
        Ok(DepthField {
            origin,
            rays,
            depths,
            triangles: mesh.triangles.clone(),
            anchor,
        })
    }
}

/// Default number of grid cells across the silhouette bounding box.
pub const DEFAULT_GRID_CELLS: u32 = 20;

/// 4-connected foreground component containing `seed`.
fn component(mask: &SegmentationMask, seed: usize) -> Vec<bool> {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut inside = vec![false; mask.labels.len()];
    let mut stack = vec![seed];
    inside[seed] = true;
    while let Some(i) = stack.pop() {
        let (x, y) = (i % w, i / w);
        let around = [
            (x > 0).then(|| i - 1),
            (x + 1 < w).then(|| i + 1),
            (y > 0).then(|| i - w),
            (y + 1 < h).then(|| i + w),
        ];
        for j in around.into_iter().flatten() {
            if !inside[j] && mask.labels[j] == Label::Foreground {
                inside[j] = true;
                stack.push(j);
            }
        }
    }
    inside
}

/// Fronto-parallel plane through `x0`, triangulated over a grid of `cells`
/// cells spanning the bounding box of the silhouette that contains `x0`.
/// The grid is shifted so that the projection of `x0` is a grid node; that
/// node becomes the anchor. Cells without silhouette pixels are dropped.
pub fn init_surface(mask: &SegmentationMask, camera: &CameraModel, x0: &Vec3, cells: u32) -> Result<DepthField> {
    let (u0, v0) = camera.project_world(x0).map_err(|_| Error::AnchorOutsideForeground)?;
    let (w, h) = (mask.width as i64, mask.height as i64);
    let (px, py) = (u0.round() as i64, v0.round() as i64);
    if px < 0 || py < 0 || px >= w || py >= h || mask.labels[(py * w + px) as usize] != Label::Foreground {
        return Err(Error::AnchorOutsideForeground);
    }
    if cells == 0 {
        return Err(Error::InvalidParameter("grid needs at least one cell".into()));
    }
    let inside = component(mask, (py * w + px) as usize);
    let (mut x_min, mut x_max, mut y_min, mut y_max) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    for (i, _) in inside.iter().enumerate().filter(|p| *p.1) {
        let (x, y) = (i as i64 % w, i as i64 / w);
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    // pixel squares span +-0.5 around the centres
    let (bx0, bx1, by0, by1) = (x_min as f64 - 0.5, x_max as f64 + 0.5, y_min as f64 - 0.5, y_max as f64 + 0.5);
    let (sx, sy) = ((bx1 - bx0) / cells as f64, (by1 - by0) / cells as f64);
    let (i0, i1) = (((bx0 - u0) / sx).floor() as i64, ((bx1 - u0) / sx).ceil() as i64);
    let (j0, j1) = (((by0 - v0) / sy).floor() as i64, ((by1 - v0) / sy).ceil() as i64);
    let (nx, ny) = ((i1 - i0) as usize, (j1 - j0) as usize);

    // summed-area table of the component for cell occupancy
    let stride = w as usize + 1;
    let mut sat = vec![0u32; stride * (h as usize + 1)];
    for y in 0..h as usize {
        for x in 0..w as usize {
            sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + sat[(y + 1) * stride + x]
                - sat[y * stride + x]
                + u32::from(inside[y * w as usize + x]);
        }
    }
    let occupied = |ua: f64, ub: f64, va: f64, vb: f64| {
        // pixel centres strictly inside the cell rectangle
        let xa = (ua.ceil() as i64).clamp(0, w);
        let xb = ((ub.floor() as i64) + 1).clamp(0, w);
        let ya = (va.ceil() as i64).clamp(0, h);
        let yb = ((vb.floor() as i64) + 1).clamp(0, h);
        if xa >= xb || ya >= yb {
            return false;
        }
        let (xa, xb, ya, yb) = (xa as usize, xb as usize, ya as usize, yb as usize);
        sat[yb * stride + xb] + sat[ya * stride + xa] > sat[ya * stride + xb] + sat[yb * stride + xa]
    };

    let node_uv = |i: usize, j: usize| (u0 + (i0 + i as i64) as f64 * sx, v0 + (j0 + j as i64) as f64 * sy);
    let mut node_index = vec![u32::MAX; (nx + 1) * (ny + 1)];
    let mut uv = Vec::new();
    let mut triangles = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (ua, va) = node_uv(i, j);
            let (ub, vb) = node_uv(i + 1, j + 1);
            if !occupied(ua, ub, va, vb) {
                continue;
            }
            let mut id = |ii: usize, jj: usize| {
                let slot = &mut node_index[jj * (nx + 1) + ii];
                if *slot == u32::MAX {
                    *slot = uv.len() as u32;
                    uv.push(node_uv(ii, jj));
                }
                *slot
            };
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            // in image coordinates (v down) this winding faces the camera
            triangles.push([a, c, b]);
            triangles.push([b, c, d]);
        }
    }
    let anchor_node = ((-j0) as usize) * (nx + 1) + (-i0) as usize;
    let anchor = node_index[anchor_node];
    if anchor == u32::MAX {
        return Err(Error::AnchorOutsideForeground);
    }

    let k = &camera.intrinsics;
    let origin = camera.center();
    let axis = camera.optical_axis();
    let plane = (x0 - origin).dot(&axis);
    let mut rays: Vec<Vec3> = uv
        .iter()
        .map(|&(u, v)| camera.pose.apply_vector(&Vec3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0).normalize()))
        .collect();
    let mut depths: Vec<f64> = rays.iter().map(|r| plane / r.dot(&axis)).collect();
    // the anchor sits exactly on the ray through x0
    let to_x0 = x0 - origin;
    rays[anchor as usize] = to_x0.normalize();
    depths[anchor as usize] = to_x0.norm();
    Ok(DepthField {
        origin,
        rays,
        depths,
        triangles,
        anchor: anchor as usize,
    })
}
