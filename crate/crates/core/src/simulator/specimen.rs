use crate::bvh::Bvh;
use crate::error::Result;
use crate::geometry::Vec3;
use crate::mesh::TriangleMesh;

/// Mirror specimen placed inside the cube.
#[derive(Debug, Clone)]
pub enum Specimen {
    /// Triangle mesh with smooth (interpolated vertex) normals.
    Mesh {
        mesh: TriangleMesh,
        bvh: Bvh,
        normals: Vec<Vec3>,
    },
    /// Exact sphere; normals and silhouettes are analytic.
    Sphere { center: Vec3, radius: f64 },
}

/// First surface hit along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub t: f64,
    pub point: Vec3,
    /// Shading normal used for reflection.
    pub normal: Vec3,
    /// True surface orientation (triangle normal for meshes).
    pub geometric_normal: Vec3,
    /// Triangle index for meshes.
    pub primitive: Option<u32>,
}

/// Tessellation depth used when a sphere specimen has to be exported.
pub const SPHERE_EXPORT_LEVELS: u32 = 6;

impl Specimen {
    pub fn mesh(mesh: TriangleMesh) -> Result<Specimen> {
        mesh.validate()?;
        let bvh = Bvh::build(&mesh);
        let normals = mesh.vertex_normals();
        Ok(Specimen::Mesh { mesh, bvh, normals })
    }

    pub fn sphere(center: Vec3, radius: f64) -> Specimen {
        Specimen::Sphere { center, radius }
    }

    /// Nearest hit with `t > t_min`, skipping primitive `skip`.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, t_min: f64, skip: Option<u32>) -> Option<SurfaceHit> {
        match self {
            Specimen::Mesh { mesh, bvh, normals } => {
                let hit = bvh.intersect(origin, dir, t_min, f64::INFINITY, skip)?;
                let [a, b, c] = mesh.triangles[hit.triangle as usize];
                let w = 1.0 - hit.u - hit.v;
                let n = normals[a as usize] * w + normals[b as usize] * hit.u + normals[c as usize] * hit.v;
                Some(SurfaceHit {
                    t: hit.t,
                    point: origin + dir * hit.t,
                    normal: n.normalize(),
                    geometric_normal: mesh.triangle_normal(hit.triangle as usize),
                    primitive: Some(hit.triangle),
                })
            }
            Specimen::Sphere { center, radius } => {
                let oc = origin - center;
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = [-b - sq, -b + sq].into_iter().find(|&t| t > t_min)?;
                let point = origin + dir * t;
                let normal = (point - center) / *radius;
                Some(SurfaceHit {
                    t,
                    point,
                    normal,
                    geometric_normal: normal,
                    primitive: None,
                })
            }
        }
    }

    /// Triangle mesh of the specimen; spheres are tessellated.
    pub fn to_mesh(&self) -> TriangleMesh {
        match self {
            Specimen::Mesh { mesh, .. } => mesh.clone(),
            Specimen::Sphere { center, radius } => TriangleMesh::icosphere(*center, *radius, SPHERE_EXPORT_LEVELS),
        }
    }

    /// Axis-aligned bounds.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        match self {
            Specimen::Mesh { mesh, .. } => mesh.vertices.iter().fold(
                (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
                |(lo, hi), v| (lo.inf(v), hi.sup(v)),
            ),
            Specimen::Sphere { center, radius } => (center.add_scalar(-radius), center.add_scalar(*radius)),
        }
    }
}
