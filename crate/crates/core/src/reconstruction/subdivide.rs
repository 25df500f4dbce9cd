//! Loop subdivision with boundary rules.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::{edge_key, TriangleMesh};

struct Edge {
    ends: (u32, u32),
    /// Vertices opposite the edge in its incident faces.
    wings: Vec<u32>,
}

/// One Loop step: every triangle becomes four. Old vertices keep their
/// indices; the vertex of edge `e` (numbered by first appearance in face
/// order) gets index `V + e`.
pub fn loop_subdivide(mesh: &TriangleMesh) -> Result<TriangleMesh> {
    let nv = mesh.vertices.len();
    if let Some(t) = mesh.triangles.iter().find(|t| t.iter().any(|&i| i as usize >= nv)) {
        return Err(Error::InvalidMesh(format!("triangle {t:?} has index out of range")));
    }
    let mut index: HashMap<(u32, u32), usize> = HashMap::with_capacity(mesh.triangles.len() * 3 / 2 + 1);
    let mut edges: Vec<Edge> = Vec::with_capacity(mesh.triangles.len() * 3 / 2 + 1);
    let mut face_edges = Vec::with_capacity(mesh.triangles.len());
    for t in &mesh.triangles {
        let mut fe = [0usize; 3];
        for k in 0..3 {
            let (a, b, opp) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            let key = edge_key(a, b);
            let e = *index.entry(key).or_insert_with(|| {
                edges.push(Edge { ends: key, wings: Vec::new() });
                edges.len() - 1
            });
            edges[e].wings.push(opp);
            if edges[e].wings.len() > 2 {
                return Err(Error::NonManifoldInput(format!("edge {}-{} has more than two faces", key.0, key.1)));
            }
            fe[k] = e;
        }
        face_edges.push(fe);
    }
    mesh.validate()?;

    let v = &mesh.vertices;
    let mut neighbours: Vec<Vec<u32>> = vec![Vec::new(); nv];
    let mut boundary: Vec<Vec<u32>> = vec![Vec::new(); nv];
    for e in &edges {
        let (a, b) = e.ends;
        neighbours[a as usize].push(b);
        neighbours[b as usize].push(a);
        if e.wings.len() == 1 {
            boundary[a as usize].push(b);
            boundary[b as usize].push(a);
        }
    }

    let mut out = Vec::with_capacity(nv + edges.len());
    for i in 0..nv {
        let p = v[i];
        let nb = &neighbours[i];
        let pos = match boundary[i].len() {
            0 if nb.is_empty() => p,
            0 => {
                let n = nb.len() as f64;
                let s = 3.0 / 8.0 + 0.25 * (2.0 * PI / n).cos();
                let beta = (5.0 / 8.0 - s * s) / n;
                let sum: Vec3 = nb.iter().map(|&j| v[j as usize]).sum();
                p * (1.0 - n * beta) + sum * beta
            }
            2 => p * 0.75 + (v[boundary[i][0] as usize] + v[boundary[i][1] as usize]) * 0.125,
            // corner where several boundary loops touch: keep in place
            _ => p,
        };
        out.push(pos);
    }
    for e in &edges {
        let (a, b) = (v[e.ends.0 as usize], v[e.ends.1 as usize]);
        out.push(match e.wings[..] {
            [c, d] => (a + b) * 0.375 + (v[c as usize] + v[d as usize]) * 0.125,
            _ => (a + b) * 0.5,
        });
    }

    let mut triangles = Vec::with_capacity(mesh.triangles.len() * 4);
    for (t, fe) in mesh.triangles.iter().zip(&face_edges) {
        let [ab, bc, ca] = fe.map(|e| (nv + e) as u32);
        triangles.push([t[0], ab, ca]);
        triangles.push([ab, t[1], bc]);
        triangles.push([ca, bc, t[2]]);
        triangles.push([ab, bc, ca]);
    }
    Ok(TriangleMesh {
        vertices: out,
        triangles,
    })
}
