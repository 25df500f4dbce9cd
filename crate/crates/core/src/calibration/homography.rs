//! Normalised direct linear transform for plane-to-image homographies.

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

/// Smallest admissible ratio of the 8th to the 1st singular value.
const RANK_TOL: f64 = 1e-8;

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn normalizer(points: &[Vector2<f64>]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let c = points.iter().sum::<Vector2<f64>>() / n;
    let mean = points.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if mean > 0.0 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

fn apply(t: &Matrix3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    let q = t * Vector3::new(p.x, p.y, 1.0);
    Vector2::new(q.x / q.z, q.y / q.z)
}

/// Maps `src` to `dst` (`dst ~ H src`). The result has unit Frobenius norm
/// and a non-negative bottom-right entry.
pub fn homography_dlt(src: &[Vector2<f64>], dst: &[Vector2<f64>]) -> Result<Matrix3<f64>> {
    if src.len() != dst.len() || src.len() < 4 {
        return Err(Error::DegenerateConfiguration(format!(
            "need at least 4 correspondences, got {}",
            src.len().min(dst.len())
        )));
    }
    let (ts, td) = (normalizer(src), normalizer(dst));
    let n = src.len();
    // a zero row keeps the system square for exactly four pairs
    let mut a = DMatrix::<f64>::zeros((2 * n).max(9), 9);
    for (k, (p, q)) in src.iter().zip(dst).enumerate() {
        let p = apply(&ts, p);
        let q = apply(&td, q);
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let r0 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        let r1 = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u];
        for j in 0..9 {
            a[(2 * k, j)] = r0[j];
            a[(2 * k + 1, j)] = r1[j];
        }
    }
    let svd = a.svd(false, true);
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    if sv.len() < 9 || sv[order[7]] < RANK_TOL * sv[order[0]] {
        return Err(Error::DegenerateConfiguration(
            "correspondences do not determine a homography".into(),
        ));
    }
    let v_t = svd.v_t.expect("requested");
    let h = v_t.row(order[8]);
    let hn = Matrix3::from_row_iterator(h.iter().copied());
    let td_inv = td.try_inverse().expect("similarity");
    let mut hm = td_inv * hn * ts;
    hm /= hm.norm();
    if hm[(2, 2)] < 0.0 {
        hm = -hm;
    }
    Ok(hm)
}

/// Image of `p` under `h`.
pub fn transfer(h: &Matrix3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    apply(h, p)
}
