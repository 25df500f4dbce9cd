//! Property tests for the invariants each module promises.

use std::f64::consts::TAU;

use cavl::calibration::{colinearity_score, ScoreParams};
use cavl::codec::{decode_phase, face_code, pattern_intensity, uniform_shifts, PatternSpec, PatternSuite};
use cavl::geometry::{halfway_normal, reflect, Axis, CameraModel, CaveModel, Face, RigidMotion, Vec3};
use cavl::lightmap::LightMap;
use cavl::reconstruction::{init_surface, integrate, IntegrationSchedule, NormalFieldSampler};
use cavl::simulator::{plane_mirror_scene, reference_intrinsics};
use nalgebra::Matrix3;
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("not too short", |(x, y, z)| x * x + y * y + z * z > 1e-3)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn reflect_is_an_involution(d in unit(), n in unit()) {
        let back = reflect(&reflect(&d, &n), &n);
        prop_assert!((back - d).norm() < 1e-12);
    }

    #[test]
    fn halfway_inverts_reflect(d in unit(), n in unit()) {
        prop_assume!(d.dot(&n).abs() > 1e-6);
        let n = if d.dot(&n) < 0.0 { n } else { -n };
        let h = halfway_normal(&d, &reflect(&d, &n)).unwrap();
        prop_assert!((h - n).norm() < 1e-9);
        prop_assert!(h.dot(&d) < 0.0);
    }

    #[test]
    fn cube_exit_lies_on_its_wall(o in (-0.99f64..0.99, -0.99f64..0.99, -0.99f64..0.99), d in unit()) {
        let cave = CaveModel::default();
        let h = cave.half_extent();
        let origin = Vec3::new(o.0, o.1, o.2) * h;
        let (p, face) = cave.intersect(&origin, &d);
        prop_assert_eq!(p[face.axis().index()], face.sign() * h);
        prop_assert!(cave.on_face(face, &p, 0.0));
    }

    #[test]
    fn projection_inverts_pixel_directions(u in 0.0f64..511.0, v in 0.0f64..511.0, depth in 1.0f64..5000.0) {
        let cam = CameraModel::new(reference_intrinsics(), RigidMotion::identity()).unwrap();
        let dir = cam.pixel_to_direction(u, v).unwrap();
        let (pu, pv) = cam.project(&(dir * depth)).unwrap();
        prop_assert!((pu - u).abs() < 1e-9 && (pv - v).abs() < 1e-9);
    }

    #[test]
    fn sine_patterns_agree_across_edges(a in 0usize..3, sb in proptest::bool::ANY, sc in proptest::bool::ANY, x in -1.0f64..1.0, d in 0.0f64..400.0) {
        let cave = CaveModel::default();
        let h = cave.half_extent();
        let axis = Axis::from_index(a).unwrap();
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let (sgn_b, sgn_c) = (if sb { 1.0 } else { -1.0 }, if sc { 1.0 } else { -1.0 });
        let mut p = Vec3::zeros();
        p[a] = x * h;
        p[b] = sgn_b * h;
        p[c] = sgn_c * (h - d);
        let mut q = Vec3::zeros();
        q[a] = x * h;
        q[b] = sgn_b * (h - d);
        q[c] = sgn_c * h;
        let (fp, fq) = (Face::from_axis(Axis::from_index(b).unwrap(), sb), Face::from_axis(Axis::from_index(c).unwrap(), sc));
        for spec in PatternSuite::default().frames() {
            if let PatternSpec::Sine { axis: sa, .. } = spec {
                if *sa == axis {
                    prop_assert_eq!(pattern_intensity(&cave, spec, &p, fp), pattern_intensity(&cave, spec, &q, fq));
                }
            }
        }
    }

    #[test]
    fn phase_ignores_gain_and_offset(p in 3usize..12, phi in 0.0f64..TAU, g in 0.01f64..20.0, b in -5.0f64..5.0) {
        let shifts = uniform_shifts(p);
        let base: Vec<f64> = shifts.iter().map(|s| 0.5 + 0.5 * (phi - s).cos()).collect();
        let scaled: Vec<f64> = base.iter().map(|i| g * i + b).collect();
        let (e0, e1) = (decode_phase(&base, &shifts), decode_phase(&scaled, &shifts));
        prop_assert!(angle_diff(e0.phase, e1.phase) < 1e-9);
    }
}

#[test]
fn face_codes_distinct_and_opposites_differ() {
    for (i, a) in Face::ALL.iter().enumerate() {
        for b in &Face::ALL[i + 1..] {
            assert_ne!(face_code(*a), face_code(*b));
        }
        let opposite = Face::from_axis(a.axis(), a.sign() < 0.0);
        assert!((face_code(*a) ^ face_code(opposite)).count_ones() >= 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_homography_scores_zero(a in -0.3f64..0.3, b in -0.3f64..0.3, c in -0.3f64..0.3, d in -0.3f64..0.3, g in -2e-4f64..2e-4, k in -2e-4f64..2e-4) {
        let hm = Matrix3::new(2.0 + a, b, -400.0, c, 2.0 + d, -350.0, g, k, 1.0);
        let (w, ht) = (24u32, 18u32);
        let mut lm = LightMap::new(w, ht);
        for y in 0..ht {
            for x in 0..w {
                let p = hm * Vec3::new(x as f64, y as f64, 1.0);
                lm.set(x, y, Some((Vec3::new(p.x / p.z, p.y / p.z, -1524.0), Face::NegZ)));
            }
        }
        let s = colinearity_score(&lm, &ScoreParams::default());
        for y in 1..ht - 1 {
            for x in 1..w - 1 {
                prop_assert_eq!(s.get(x, y), Some(0.0));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn integration_is_monotone_and_keeps_the_anchor(tx in -0.08f64..0.08, ty in -0.08f64..0.08, bump in 0.0f64..20.0) {
        let scene = plane_mirror_scene(400.0, 0.0, 1000.0);
        let gt = scene.ground_truth();
        let s = NormalFieldSampler::new(&gt.light_map, scene.camera, Some(&gt.mask));
        let mut f = init_surface(&gt.mask, &scene.camera, &Vec3::new(-20.0, 35.0, 0.0), 8).unwrap();
        for i in 0..f.vertex_count() {
            if i != f.anchor {
                let p = f.position(i);
                f.depths[i] += tx * (p.x + 20.0) + ty * (p.y - 35.0) + bump * (p.x / 150.0).sin();
            }
        }
        let anchor = f.position(f.anchor);
        let r = integrate(&f, &s, &IntegrationSchedule { levels: 1, max_iterations: 60, ..Default::default() }).unwrap();
        prop_assert_eq!(r.field.position(r.field.anchor), anchor);
        for w in r.log.windows(2) {
            if w[1].level == w[0].level {
                prop_assert!(w[1].energy <= w[0].energy);
            }
        }
    }
}
