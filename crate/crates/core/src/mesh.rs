//! Indexed triangle meshes and Wavefront OBJ I/O.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Smallest triangle area accepted by [`TriangleMesh::validate`], in mm².
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

/// Undirected edge key with the smaller index first.
pub(crate) fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriangleMesh {
    /// Builds a mesh and checks the structural invariants.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = TriangleMesh {
            vertices,
            triangles,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Checks index ranges, triangle areas and consistent winding: every
    /// directed edge occurs at most once.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
        for (fi, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!("triangle {fi} has index out of range")));
            }
            if self.triangle_area(fi) <= MIN_TRIANGLE_AREA {
                return Err(Error::InvalidMesh(format!("triangle {fi} is degenerate")));
            }
            for k in 0..3 {
                let e = (t[k], t[(k + 1) % 3]);
                if let Some(other) = directed.insert(e, fi) {
                    return Err(Error::InvalidMesh(format!(
                        "triangles {other} and {fi} share edge {e:?} with the same orientation"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn corners(&self, fi: usize) -> [Vec3; 3] {
        let t = self.triangles[fi];
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    /// Area-weighted normal vector (length = 2 x area).
    pub fn triangle_cross(&self, fi: usize) -> Vec3 {
        let [a, b, c] = self.corners(fi);
        (b - a).cross(&(c - a))
    }

    pub fn triangle_area(&self, fi: usize) -> f64 {
        0.5 * self.triangle_cross(fi).norm()
    }

    pub fn triangle_normal(&self, fi: usize) -> Vec3 {
        self.triangle_cross(fi).normalize()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|f| self.triangle_area(f)).sum()
    }

    /// Vertex normals as area-weighted averages of incident face normals.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::zeros(); self.vertices.len()];
        for fi in 0..self.triangles.len() {
            let c = self.triangle_cross(fi);
            for &i in &self.triangles[fi] {
                acc[i as usize] += c;
            }
        }
        acc.into_iter()
            .map(|n| n.try_normalize(0.0).unwrap_or_else(Vec3::zeros))
            .collect()
    }

    /// Undirected edges mapped to their incident faces.
    pub fn edge_faces(&self) -> HashMap<(u32, u32), Vec<usize>> {
        let mut map: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
        for (fi, t) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                map.entry(edge_key(t[k], t[(k + 1) % 3])).or_default().push(fi);
            }
        }
        map
    }

    pub fn edge_count(&self) -> usize {
        self.edge_faces().len()
    }

    /// Edges with exactly one incident face.
    pub fn boundary_edges(&self) -> Vec<(u32, u32)> {
        let mut edges: Vec<_> = self
            .edge_faces()
            .into_iter()
            .filter(|(_, f)| f.len() == 1)
            .map(|(e, _)| e)
            .collect();
        edges.sort_unstable();
        edges
    }

    /// V - E + F counted over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_count() as i64 + self.triangles.len() as i64
    }

    pub fn centroid(&self) -> Vec3 {
        let sum: Vec3 = self.vertices.iter().sum();
        sum / self.vertices.len().max(1) as f64
    }

    pub fn transformed(&self, f: impl Fn(&Vec3) -> Vec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Median edge length, used as a resolution scale.
    pub fn median_edge_length(&self) -> f64 {
        let mut lengths: Vec<f64> = self
            .edge_faces()
            .keys()
            .map(|&(a, b)| (self.vertices[a as usize] - self.vertices[b as usize]).norm())
            .collect();
        if lengths.is_empty() {
            return 0.0;
        }
        lengths.sort_by(f64::total_cmp);
        lengths[lengths.len() / 2]
    }

    /// Drops vertices not referenced by any triangle. Returns the old-to-new
    /// index map (`None` for removed vertices).
    pub fn compact(&mut self) -> Vec<Option<u32>> {
        let mut map = vec![None; self.vertices.len()];
        let mut vertices = Vec::new();
        for t in &mut self.triangles {
            for i in t.iter_mut() {
                let slot = &mut map[*i as usize];
                let new = *slot.get_or_insert_with(|| {
                    vertices.push(self.vertices[*i as usize]);
                    (vertices.len() - 1) as u32
                });
                *i = new;
            }
        }
        self.vertices = vertices;
        map
    }

    /// Regular icosahedron inscribed in a sphere.
    pub fn icosahedron(center: Vec3, radius: f64) -> TriangleMesh {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let raw = [
            (-1.0, phi, 0.0),
            (1.0, phi, 0.0),
            (-1.0, -phi, 0.0),
            (1.0, -phi, 0.0),
            (0.0, -1.0, phi),
            (0.0, 1.0, phi),
            (0.0, -1.0, -phi),
            (0.0, 1.0, -phi),
            (phi, 0.0, -1.0),
            (phi, 0.0, 1.0),
            (-phi, 0.0, -1.0),
            (-phi, 0.0, 1.0),
        ];
        let vertices = raw
            .iter()
            .map(|&(x, y, z)| center + Vec3::new(x, y, z).normalize() * radius)
            .collect();
        let triangles = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        TriangleMesh {
            vertices,
            triangles,
        }
    }

    /// Sphere tessellation by repeated midpoint splitting of an icosahedron,
    /// with all vertices projected onto the sphere. Outward winding.
    pub fn icosphere(center: Vec3, radius: f64, levels: u32) -> TriangleMesh {
        let mut mesh = TriangleMesh::icosahedron(center, radius);
        for _ in 0..levels {
            let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
            let mut triangles = Vec::with_capacity(mesh.triangles.len() * 4);
            let mut mid = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
                *midpoints.entry(edge_key(a, b)).or_insert_with(|| {
                    let m = (verts[a as usize] + verts[b as usize]) * 0.5;
                    verts.push(center + (m - center).normalize() * radius);
                    (verts.len() - 1) as u32
                })
            };
            for &[a, b, c] in &mesh.triangles {
                let ab = mid(a, b, &mut mesh.vertices);
                let bc = mid(b, c, &mut mesh.vertices);
                let ca = mid(c, a, &mut mesh.vertices);
                triangles.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            mesh.triangles = triangles;
        }
        mesh
    }

    /// Axis-aligned square in the plane `z = height`, split into `n x n`
    /// cells, facing +z.
    pub fn square_z(half_size: f64, height: f64, n: u32) -> TriangleMesh {
        let mut vertices = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                let x = -half_size + 2.0 * half_size * i as f64 / n as f64;
                let y = -half_size + 2.0 * half_size * j as f64 / n as f64;
                vertices.push(Vec3::new(x, y, height));
            }
        }
        let idx = |i: u32, j: u32| j * (n + 1) + i;
        let mut triangles = Vec::new();
        for j in 0..n {
            for i in 0..n {
                triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        TriangleMesh {
            vertices,
            triangles,
        }
    }

    pub fn write_obj<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    /// Reads `v` and `f` records; polygons are fan-triangulated and texture
    /// or normal references (`i/j/k`) are ignored.
    pub fn read_obj<R: BufRead>(r: R) -> Result<TriangleMesh> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let coords: Vec<f64> = parts
                        .take(3)
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::format("OBJ", format!("line {}: {e}", lineno + 1)))?;
                    if coords.len() != 3 {
                        return Err(Error::format("OBJ", format!("line {}: short vertex", lineno + 1)));
                    }
                    vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let idx: Vec<u32> = parts
                        .map(|p| {
                            let first = p.split('/').next().unwrap_or("");
                            let i: i64 = first.parse().map_err(|e| {
                                Error::format("OBJ", format!("line {}: {e}", lineno + 1))
                            })?;
                            let resolved = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                            u32::try_from(resolved).map_err(|_| {
                                Error::format("OBJ", format!("line {}: bad index {i}", lineno + 1))
                            })
                        })
                        .collect::<Result<_>>()?;
                    if idx.len() < 3 {
                        return Err(Error::format("OBJ", format!("line {}: short face", lineno + 1)));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        TriangleMesh::new(vertices, triangles)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_is_closed_and_outward() {
        let c = Vec3::new(1.0, 2.0, 3.0);
        for level in 0..3 {
            let m = TriangleMesh::icosphere(c, 10.0, level);
            m.validate().unwrap();
            assert_eq!(m.euler_characteristic(), 2);
            assert!(m.boundary_edges().is_empty());
            for f in 0..m.triangles.len() {
                let [a, b, cc] = m.corners(f);
                let centroid = (a + b + cc) / 3.0;
                assert!(m.triangle_normal(f).dot(&(centroid - c)) > 0.0);
            }
        }
    }

    #[test]
    fn obj_roundtrip() {
        let m = TriangleMesh::icosphere(Vec3::zeros(), 3.5, 1);
        let mut buf = Vec::new();
        m.write_obj(&mut buf).unwrap();
        let back = TriangleMesh::read_obj(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn obj_with_quads_and_slashes() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n";
        let m = TriangleMesh::read_obj(text.as_bytes()).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn validation_rejects_bad_meshes() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 1]]).is_err());
        let v4 = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::new(1.0, 1.0, 0.0)];
        // both triangles traverse edge 0->1... inconsistent winding
        assert!(TriangleMesh::new(v4, vec![[0, 1, 2], [0, 1, 3]]).is_err());
    }

    #[test]
    fn compact_drops_unused() {
        let mut m = TriangleMesh {
            vertices: vec![Vec3::zeros(), Vec3::z(), Vec3::x(), Vec3::y()],
            triangles: vec![[0, 2, 3]],
        };
        let map = m.compact();
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(map, vec![Some(0), None, Some(1), Some(2)]);
    }
}
