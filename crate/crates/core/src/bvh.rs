//! Axis-aligned bounding-volume hierarchy over the triangles of a mesh.
//!
//! Built top-down with median splits along the longest axis of the centroid
//! bounds. Immutable after construction, so one instance can be shared by
//! any number of rendering or query threads.

use crate::geometry::Vec3;
use crate::mesh::TriangleMesh;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    /// Slab test; returns the entry distance if the ray overlaps `[t_min, t_max]`.
    fn hit(&self, origin: &Vec3, inv_dir: &Vec3, t_min: f64, t_max: f64) -> Option<f64> {
        let mut t0 = t_min;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut near = (self.min[a] - origin[a]) * inv_dir[a];
            let mut far = (self.max[a] - origin[a]) * inv_dir[a];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN from 0 * inf keeps the previous bound
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }

    fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d2 = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.min[a] {
                self.min[a] - p[a]
            } else if p[a] > self.max[a] {
                p[a] - self.max[a]
            } else {
                0.0
            };
            d2 += v * v;
        }
        d2
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bounds: Aabb,
    /// Leaf: first index into `order`; interior: index of the left child
    /// (the right child follows the left subtree).
    start: u32,
    /// Leaf: primitive count; interior: 0.
    count: u32,
    right: u32,
}

/// Ray hit with barycentric coordinates `(u, v)` of corners 1 and 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub triangle: u32,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: Vec3,
    pub distance: f64,
    pub triangle: u32,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
    triangles: Vec<[Vec3; 3]>,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Bvh {
        let triangles: Vec<[Vec3; 3]> = (0..mesh.triangles.len()).map(|f| mesh.corners(f)).collect();
        let centroids: Vec<Vec3> = triangles.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut order: Vec<u32> = (0..triangles.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1);
        if !triangles.is_empty() {
            build_node(&triangles, &centroids, &mut order, 0, triangles.len(), &mut nodes);
        }
        Bvh {
            nodes,
            order,
            triangles,
        }
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Nearest hit with `t` in `(t_min, t_max)`, ignoring triangle `skip`.
    pub fn intersect(
        &self,
        origin: &Vec3,
        dir: &Vec3,
        t_min: f64,
        t_max: f64,
        skip: Option<u32>,
    ) -> Option<RayHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<RayHit> = None;
        let mut limit = t_max;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if node.bounds.hit(origin, &inv, t_min, limit).is_none() {
                continue;
            }
            if node.count > 0 {
                for &tri in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    if Some(tri) == skip {
                        continue;
                    }
                    if let Some((t, u, v)) = intersect_triangle(origin, dir, &self.triangles[tri as usize]) {
                        if t > t_min && t < limit {
                            limit = t;
                            best = Some(RayHit { t, triangle: tri, u, v });
                        }
                    }
                }
            } else {
                let left = node.start;
                let right = node.right;
                let dl = self.nodes[left as usize].bounds.hit(origin, &inv, t_min, limit);
                let dr = self.nodes[right as usize].bounds.hit(origin, &inv, t_min, limit);
                match (dl, dr) {
                    (Some(a), Some(b)) => {
                        // visit the nearer child first
                        if a <= b {
                            stack.push(right);
                            stack.push(left);
                        } else {
                            stack.push(left);
                            stack.push(right);
                        }
                    }
                    (Some(_), None) => stack.push(left),
                    (None, Some(_)) => stack.push(right),
                    (None, None) => {}
                }
            }
        }
        best
    }

    /// Closest point on the mesh surface to `p`.
    pub fn closest_point(&self, p: &Vec3) -> Option<ClosestPoint> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = ClosestPoint {
            point: Vec3::zeros(),
            distance: f64::INFINITY,
            triangle: u32::MAX,
        };
        let mut best_d2 = f64::INFINITY;
        let mut stack: Vec<(u32, f64)> = vec![(0, self.nodes[0].bounds.distance_squared(p))];
        while let Some((ni, d2)) = stack.pop() {
            if d2 >= best_d2 {
                continue;
            }
            let node = &self.nodes[ni as usize];
            if node.count > 0 {
                for &tri in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let q = closest_point_on_triangle(p, &self.triangles[tri as usize]);
                    let qd2 = (q - p).norm_squared();
                    if qd2 < best_d2 {
                        best_d2 = qd2;
                        best = ClosestPoint {
                            point: q,
                            distance: 0.0,
                            triangle: tri,
                        };
                    }
                }
            } else {
                let l = node.start;
                let r = node.right;
                let dl = self.nodes[l as usize].bounds.distance_squared(p);
                let dr = self.nodes[r as usize].bounds.distance_squared(p);
                if dl <= dr {
                    stack.push((r, dr));
                    stack.push((l, dl));
                } else {
                    stack.push((l, dl));
                    stack.push((r, dr));
                }
            }
        }
        best.distance = best_d2.sqrt();
        Some(best)
    }
}

fn build_node(
    triangles: &[[Vec3; 3]],
    centroids: &[Vec3],
    order: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &i in &order[start..end] {
        for p in &triangles[i as usize] {
            bounds.grow(p);
        }
        cbounds.grow(&centroids[i as usize]);
    }
    let index = nodes.len() as u32;
    nodes.push(Node {
        bounds,
        start: start as u32,
        count: (end - start) as u32,
        right: 0,
    });
    if end - start <= LEAF_SIZE {
        return index;
    }
    let extent = cbounds.max - cbounds.min;
    let axis = extent.imax();
    if extent[axis] <= 0.0 {
        return index;
    }
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis])
    });
    let left = build_node(triangles, centroids, order, start, mid, nodes);
    let right = build_node(triangles, centroids, order, mid, end, nodes);
    let node = &mut nodes[index as usize];
    node.start = left;
    node.count = 0;
    node.right = right;
    index
}

/// Möller–Trumbore ray/triangle intersection; returns `(t, u, v)`.
pub fn intersect_triangle(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<(f64, f64, f64)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = origin - tri[0];
    let u = tvec.dot(&pvec) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some((e2.dot(&qvec) * inv_det, u, v))
}

/// Closest point on a triangle (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, tri: &[Vec3; 3]) -> Vec3 {
    let [a, b, c] = *tri;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}
