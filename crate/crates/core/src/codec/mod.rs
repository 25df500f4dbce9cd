//! Cube-aware structured-light coding.
//!
//! Sine patterns along a world axis are shown only on the four walls that
//! contain that axis, as a function of the world coordinate alone, so two
//! walls meeting at an edge parallel to the axis display identical values on
//! either side of it. Walls orthogonal to the axis stay dark. The missing
//! wall sign is supplied by six face-identification frames carrying a 3-bit
//! code in transition form: bit value 1 is a white-to-black pair, 0 a
//! black-to-white pair.

mod manifest;

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rayon::prelude::*;

pub use manifest::{FrameRecord, SuiteManifest};

use crate::error::{Error, Result};
use crate::geometry::{Axis, CaveModel, Face, Vec3};
use crate::lightmap::LightMap;
use crate::raster::Image16;

/// Number of face-identification frames (3 bits x 2 frames).
pub const FACE_FRAMES: u8 = 6;

/// One displayed frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PatternSpec {
    /// `I = 1/2 + 1/2 cos(2π k (p_a + h) / 2h - phase)` on walls containing `axis`.
    Sine { axis: Axis, frequency: u32, phase: f64 },
    /// Face-identification frame `m` in `0..6`.
    FaceId { frame: u8 },
}

/// Ordered capture sequence: per axis, frequencies x phases of sine frames,
/// followed by the six face frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSuite {
    frames: Vec<PatternSpec>,
}

impl Default for PatternSuite {
    /// Frequencies 1, 8, 64 at four phases: 36 sine frames plus 6 face frames.
    fn default() -> Self {
        PatternSuite::new(&[1, 8, 64], 4).expect("default suite is valid")
    }
}

impl PatternSuite {
    pub fn new(frequencies: &[u32], phases: usize) -> Result<Self> {
        if phases < 3 {
            return Err(Error::InvalidParameter(format!(
                "at least three phase shifts are needed, got {phases}"
            )));
        }
        if frequencies.first() != Some(&1) {
            return Err(Error::InvalidParameter(
                "frequency ladder must start at 1 period per wall".into(),
            ));
        }
        if frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("frequencies must be strictly increasing".into()));
        }
        let mut frames = Vec::new();
        for axis in Axis::ALL {
            for &frequency in frequencies {
                for p in 0..phases {
                    frames.push(PatternSpec::Sine {
                        axis,
                        frequency,
                        phase: TAU * p as f64 / phases as f64,
                    });
                }
            }
        }
        frames.extend((0..FACE_FRAMES).map(|frame| PatternSpec::FaceId { frame }));
        Ok(PatternSuite { frames })
    }

    pub fn frames(&self) -> &[PatternSpec] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// 3-bit code of a face: +x 001, -x 010, +y 011, -y 100, +z 101, -z 110.
pub fn face_code(face: Face) -> u8 {
    face.id() + 1
}

pub fn face_from_code(code: u8) -> Option<Face> {
    match code {
        1..=6 => Face::from_id(code - 1),
        _ => None,
    }
}

/// Brightness (0 or 1) that `face` shows in face frame `frame`.
pub fn face_id_bit(face: Face, frame: u8) -> u8 {
    let bit = (face_code(face) >> (frame / 2)) & 1;
    let first = frame.is_multiple_of(2);
    // bit 1: (white, black); bit 0: (black, white)
    u8::from((bit == 1) == first)
}

/// Displayed intensity at wall point `p` on `face`.
pub fn pattern_intensity(cave: &CaveModel, spec: &PatternSpec, p: &Vec3, face: Face) -> f64 {
    match *spec {
        PatternSpec::Sine {
            axis,
            frequency,
            phase,
        } => {
            if face.axis() == axis {
                return 0.0;
            }
            let h = cave.half_extent();
            let s = (p[axis.index()] + h) / (2.0 * h);
            0.5 + 0.5 * (TAU * frequency as f64 * s - phase).cos()
        }
        PatternSpec::FaceId { frame } => face_id_bit(face, frame) as f64,
    }
}

/// Wrapped phase in `[0, 2π)` and modulation amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEstimate {
    pub phase: f64,
    pub amplitude: f64,
}

/// Phase-shift estimate from samples taken at uniformly spaced `shifts`.
pub fn decode_phase(samples: &[f64], shifts: &[f64]) -> PhaseEstimate {
    debug_assert_eq!(samples.len(), shifts.len());
    let (mut s, mut c) = (0.0, 0.0);
    for (&i, &phi) in samples.iter().zip(shifts) {
        s += i * phi.sin();
        c += i * phi.cos();
    }
    let mut phase = s.atan2(c);
    if phase < 0.0 {
        phase += TAU;
    }
    if phase >= TAU {
        phase -= TAU;
    }
    PhaseEstimate {
        phase,
        amplitude: 2.0 / samples.len() as f64 * s.hypot(c),
    }
}

/// Shifts `2πp/P`, `p = 0..P`.
pub fn uniform_shifts(count: usize) -> Vec<f64> {
    (0..count).map(|p| TAU * p as f64 / count as f64).collect()
}

/// Temporal hierarchical unwrapping of wrapped phases measured at increasing
/// frequencies (the first must be 1). Returns the wall coordinate in mm.
pub fn unwrap_multifrequency(phases: &[f64], frequencies: &[u32], half_extent: f64) -> Result<f64> {
    if phases.is_empty() || phases.len() != frequencies.len() || frequencies[0] != 1 {
        return Err(Error::InvalidParameter(
            "unwrapping needs matching phase/frequency lists starting at frequency 1".into(),
        ));
    }
    let span = 2.0 * half_extent;
    let mut c = phases[0] / TAU * span - half_extent;
    for (level, (&phase, &k)) in phases.iter().zip(frequencies).enumerate().skip(1) {
        let k = k as f64;
        let order = (k * (c + half_extent) / span - phase / TAU).round();
        let next = (phase / TAU + order) * span / k - half_extent;
        let jump = (next - c).abs();
        if jump > span / k / 2.0 {
            return Err(Error::UnwrapInconsistent { level, jump });
        }
        c = next;
    }
    Ok(c)
}

/// Face from the six face frames of one pixel, or `None` when any bit pair
/// lacks a clear transition or the code is unused.
pub fn decode_face_id(samples: &[f64; 6], min_transition: f64) -> Option<Face> {
    let mut code = 0u8;
    for b in 0..3 {
        let diff = samples[2 * b] - samples[2 * b + 1];
        if diff > min_transition {
            code |= 1 << b;
        } else if -diff <= min_transition {
            return None;
        }
    }
    face_from_code(code)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeParams {
    /// Minimum modulation amplitude (fraction of full scale).
    pub min_amplitude: f64,
    /// Minimum intensity step of a face-code transition.
    pub min_transition: f64,
    /// Coordinates closer than this to a cube edge (mm) are rejected: the
    /// phase of `-h` and `+h` coincides at every integer frequency.
    pub edge_guard: f64,
    /// Slack when checking assembled coordinates against `[-h, h]` (mm).
    pub wall_tolerance: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            min_amplitude: 0.05,
            min_transition: 0.1,
            edge_guard: 0.25,
            wall_tolerance: 1.0,
        }
    }
}

/// Per-pixel world coordinates recovered from the sine sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedAxes {
    pub width: u32,
    pub height: u32,
    pub coords: Vec<[Option<f64>; 3]>,
    /// Smallest modulation amplitude across frequency levels, per axis.
    pub amplitudes: Vec<[f64; 3]>,
}

/// Sine frames of one axis grouped by frequency: `(k, [(shift, frame)])`.
type AxisLadder<'a> = Vec<(u32, Vec<(f64, &'a Image16)>)>;

fn check_uniform(shifts: &[f64]) -> bool {
    let mut sorted: Vec<f64> = shifts.iter().map(|s| s.rem_euclid(TAU)).collect();
    sorted.sort_by(f64::total_cmp);
    let step = TAU / sorted.len() as f64;
    sorted.windows(2).all(|w| ((w[1] - w[0]) - step).abs() < 1e-6)
}

/// Groups captured frames by what they encode. Order of `frames` is
/// irrelevant; the spec attached to each image is authoritative.
fn organize<'a>(frames: &[(PatternSpec, &'a Image16)]) -> Result<([AxisLadder<'a>; 3], [&'a Image16; 6])> {
    let first = frames
        .first()
        .ok_or_else(|| Error::ManifestMismatch("empty image stack".into()))?
        .1;
    let (w, h) = (first.width, first.height);
    let mut sine: [BTreeMap<u32, Vec<(f64, &Image16)>>; 3] = Default::default();
    let mut face: [Option<&Image16>; 6] = [None; 6];
    for (spec, img) in frames {
        if img.width != w || img.height != h || img.data.len() != (w * h) as usize {
            return Err(Error::ManifestMismatch("frames differ in size".into()));
        }
        match *spec {
            PatternSpec::Sine {
                axis,
                frequency,
                phase,
            } => sine[axis.index()].entry(frequency).or_default().push((phase, *img)),
            PatternSpec::FaceId { frame } => {
                let slot = face
                    .get_mut(frame as usize)
                    .ok_or_else(|| Error::ManifestMismatch(format!("face frame index {frame}")))?;
                if slot.replace(*img).is_some() {
                    return Err(Error::ManifestMismatch(format!("duplicate face frame {frame}")));
                }
            }
        }
    }
    let mut ladders: [AxisLadder; 3] = Default::default();
    for axis in Axis::ALL {
        let levels = std::mem::take(&mut sine[axis.index()]);
        if levels.keys().next() != Some(&1) {
            return Err(Error::ManifestMismatch(format!(
                "axis {} lacks the unit-frequency sequence",
                axis.name()
            )));
        }
        for (k, shots) in levels {
            let shifts: Vec<f64> = shots.iter().map(|s| s.0).collect();
            if shots.len() < 3 || !check_uniform(&shifts) {
                return Err(Error::ManifestMismatch(format!(
                    "axis {} frequency {k}: need >= 3 uniformly spaced phases",
                    axis.name()
                )));
            }
            ladders[axis.index()].push((k, shots));
        }
    }
    let mut faces = Vec::with_capacity(6);
    for (m, f) in face.iter().enumerate() {
        faces.push(f.ok_or_else(|| Error::ManifestMismatch(format!("missing face frame {m}")))?);
    }
    Ok((ladders, faces.try_into().unwrap()))
}

fn decode_axis_pixel(ladder: &AxisLadder, i: usize, half_extent: f64, params: &DecodeParams) -> (Option<f64>, f64) {
    let mut phases = Vec::with_capacity(ladder.len());
    let mut freqs = Vec::with_capacity(ladder.len());
    let mut min_amp = f64::INFINITY;
    let mut samples = Vec::new();
    let mut shifts = Vec::new();
    for (k, shots) in ladder {
        samples.clear();
        shifts.clear();
        for (shift, img) in shots {
            samples.push(img.intensity(i));
            shifts.push(*shift);
        }
        let est = decode_phase(&samples, &shifts);
        min_amp = min_amp.min(est.amplitude);
        phases.push(est.phase);
        freqs.push(*k);
    }
    if min_amp < params.min_amplitude {
        return (None, min_amp);
    }
    let coord = unwrap_multifrequency(&phases, &freqs, half_extent).ok().and_then(|c| {
        // bring into [-h, h): c and c + 2h encode identically
        let span = 2.0 * half_extent;
        let c = c - span * ((c + half_extent) / span).floor();
        (half_extent - c.abs() >= params.edge_guard).then_some(c)
    });
    (coord, min_amp)
}

/// Decodes the three coordinate sequences of a captured stack.
pub fn decode_axes(frames: &[(PatternSpec, &Image16)], cave: &CaveModel, params: &DecodeParams) -> Result<DecodedAxes> {
    let (ladders, _) = organize(frames)?;
    let (w, h) = (frames[0].1.width, frames[0].1.height);
    let half = cave.half_extent();
    let (coords, amplitudes): (Vec<_>, Vec<_>) = (0..(w * h) as usize)
        .into_par_iter()
        .map(|i| {
            let mut c = [None; 3];
            let mut a = [0.0; 3];
            for axis in 0..3 {
                (c[axis], a[axis]) = decode_axis_pixel(&ladders[axis], i, half, params);
            }
            (c, a)
        })
        .unzip();
    Ok(DecodedAxes {
        width: w,
        height: h,
        coords,
        amplitudes,
    })
}

pub fn decode_faces(frames: &[(PatternSpec, &Image16)], params: &DecodeParams) -> Result<Vec<Option<Face>>> {
    let (_, face_frames) = organize(frames)?;
    let n = face_frames[0].data.len();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let s: [f64; 6] = std::array::from_fn(|m| face_frames[m].intensity(i));
            decode_face_id(&s, params.min_transition)
        })
        .collect())
}

/// Combines axis coordinates with face ids: the face fixes the coordinate
/// along its own axis, the other two come from the sine sequences.
pub fn assemble_light_map(axes: &DecodedAxes, faces: &[Option<Face>], cave: &CaveModel, params: &DecodeParams) -> LightMap {
    let h = cave.half_extent();
    let samples = axes
        .coords
        .par_iter()
        .zip(faces)
        .map(|(coords, face)| {
            let face = (*face)?;
            let a = face.axis().index();
            let mut p = Vec3::zeros();
            p[a] = face.sign() * h;
            for i in (0..3).filter(|&i| i != a) {
                let c = coords[i]?;
                if c.abs() > h + params.wall_tolerance {
                    return None;
                }
                p[i] = c.clamp(-h, h);
            }
            Some((p, face))
        })
        .collect();
    LightMap::from_samples(axes.width, axes.height, samples).expect("pixel-aligned inputs")
}

/// Full decode of a captured stack into a light map.
pub fn decode_stack(frames: &[(PatternSpec, &Image16)], cave: &CaveModel, params: &DecodeParams) -> Result<LightMap> {
    let axes = decode_axes(frames, cave, params)?;
    let faces = decode_faces(frames, params)?;
    Ok(assemble_light_map(&axes, &faces, cave, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H: f64 = 1524.0;

    fn angle_diff(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(TAU);
        d.min(TAU - d)
    }

    #[test]
    fn sine_examples() {
        let cave = CaveModel::default();
        let spec = PatternSpec::Sine {
            axis: Axis::X,
            frequency: 1,
            phase: 0.0,
        };
        let p = Vec3::new(-H, 0.0, H);
        assert_eq!(pattern_intensity(&cave, &spec, &p, Face::PosZ), 1.0);
        let on_x = Vec3::new(H, 3.0, 4.0);
        for k in [1, 8, 64] {
            let s = PatternSpec::Sine {
                axis: Axis::X,
                frequency: k,
                phase: 1.3,
            };
            assert_eq!(pattern_intensity(&cave, &s, &on_x, Face::PosX), 0.0);
            assert_eq!(pattern_intensity(&cave, &s, &-on_x, Face::NegX), 0.0);
        }
    }

    #[test]
    fn straddling_edge_points_agree() {
        let cave = CaveModel::default();
        let suite = PatternSuite::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = rng.random_range(-H..H);
            let d = rng.random_range(0.0..50.0);
            // +y wall near the +y/+z edge and its mirror on the +z wall
            let on_y = Vec3::new(x, H, H - d);
            let on_z = Vec3::new(x, H - d, H);
            for spec in suite.frames() {
                if let PatternSpec::Sine { axis: Axis::X, .. } = spec {
                    assert_eq!(
                        pattern_intensity(&cave, spec, &on_y, Face::PosY),
                        pattern_intensity(&cave, spec, &on_z, Face::PosZ)
                    );
                }
            }
        }
    }

    #[test]
    fn face_code_table() {
        assert_eq!((face_id_bit(Face::NegY, 4), face_id_bit(Face::NegY, 5)), (1, 0));
        assert_eq!((face_id_bit(Face::PosX, 4), face_id_bit(Face::PosX, 5)), (0, 1));
        let codes: Vec<u8> = Face::ALL.iter().map(|&f| face_code(f)).collect();
        assert_eq!(codes, vec![0b001, 0b010, 0b011, 0b100, 0b101, 0b110]);
    }

    #[test]
    fn face_codes_are_distinct_and_always_toggle() {
        for (i, &a) in Face::ALL.iter().enumerate() {
            for b in 0..3u8 {
                let pair = (face_id_bit(a, 2 * b), face_id_bit(a, 2 * b + 1));
                assert!(pair == (1, 0) || pair == (0, 1));
            }
            for &other in &Face::ALL[i + 1..] {
                assert_ne!(face_code(a), face_code(other));
            }
            let opposite = Face::from_axis(a.axis(), a.sign() < 0.0);
            assert!((face_code(a) ^ face_code(opposite)).count_ones() >= 1);
            let frames: [f64; 6] = std::array::from_fn(|m| face_id_bit(a, m as u8) as f64);
            assert_eq!(decode_face_id(&frames, 0.1), Some(a));
        }
    }

    #[test]
    fn face_decode_rejects_static_pixels() {
        assert_eq!(decode_face_id(&[0.4; 6], 0.1), None);
        assert_eq!(decode_face_id(&[1.0, 0.0, 1.0, 0.0, 1.0, 0.0], 0.1), None); // code 111
        let neg_z = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        assert_eq!(decode_face_id(&neg_z, 0.1), Some(Face::NegZ));
    }

    #[test]
    fn phase_examples() {
        let shifts = uniform_shifts(4);
        let est = decode_phase(&[1.0, 0.5, 0.0, 0.5], &shifts);
        assert!(angle_diff(est.phase, 0.0) < 1e-15);
        assert!((est.amplitude - 0.5).abs() < 1e-15);
        let flat = decode_phase(&[0.3; 4], &shifts);
        assert!(flat.amplitude < 1e-15);
    }

    #[test]
    fn phase_is_invariant_to_gain_and_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for p in [3usize, 4, 5, 8] {
            let shifts = uniform_shifts(p);
            for _ in 0..2500 {
                let phi = rng.random_range(0.0..TAU);
                let g = rng.random_range(0.01..10.0);
                let b = rng.random_range(0.0..5.0);
                let samples: Vec<f64> = shifts.iter().map(|s| g * (0.5 + 0.5 * (phi - s).cos()) + b).collect();
                let est = decode_phase(&samples, &shifts);
                assert!(angle_diff(est.phase, phi) < 1e-9, "P={p} phi={phi} got {}", est.phase);
                assert!((est.amplitude - 0.5 * g).abs() < 1e-9 * g.max(1.0));
                assert!((0.0..TAU).contains(&est.phase));
            }
        }
    }

    fn wrapped(c: f64, k: u32) -> f64 {
        (TAU * k as f64 * (c + H) / (2.0 * H)).rem_euclid(TAU)
    }

    #[test]
    fn unwrap_examples() {
        assert!((unwrap_multifrequency(&[std::f64::consts::PI], &[1], H).unwrap()).abs() < 1e-12);
        let c = 0.3 * H;
        let got = unwrap_multifrequency(&[wrapped(c, 1), wrapped(c, 8)], &[1, 8], H).unwrap();
        assert!((got - c).abs() < 1e-9);
    }

    #[test]
    fn unwrap_tolerates_fine_phase_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let bound = (2.0 * H / 8.0) * 0.3 / TAU;
        for _ in 0..1000 {
            let c = rng.random_range(-0.99 * H..0.99 * H);
            let noise = rng.random_range(-0.3..0.3);
            let fine = (wrapped(c, 8) + noise).rem_euclid(TAU);
            let got = unwrap_multifrequency(&[wrapped(c, 1), fine], &[1, 8], H).unwrap();
            assert!((got - c).abs() <= bound + 1e-9, "c={c} got={got}");
        }
    }

    #[test]
    fn suite_layout() {
        let s = PatternSuite::default();
        assert_eq!(s.len(), 42);
        assert!(matches!(s.frames()[36], PatternSpec::FaceId { frame: 0 }));
        assert!(PatternSuite::new(&[1, 8], 2).is_err());
        assert!(PatternSuite::new(&[2, 8], 4).is_err());
        assert!(PatternSuite::new(&[1, 8, 8], 4).is_err());
    }

    fn render(cave: &CaveModel, suite: &PatternSuite, points: &[(Vec3, Face)]) -> Vec<Image16> {
        suite
            .frames()
            .iter()
            .map(|spec| Image16 {
                width: points.len() as u32,
                height: 1,
                data: points
                    .iter()
                    .map(|(p, f)| (pattern_intensity(cave, spec, p, *f) * 65535.0).round() as u16)
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn quantized_roundtrip_recovers_wall_points() {
        let cave = CaveModel::default();
        let suite = PatternSuite::default();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let points: Vec<(Vec3, Face)> = (0..2000)
            .map(|_| {
                let face = Face::ALL[rng.random_range(0..6)];
                let u = rng.random_range(-1500.0..1500.0);
                let v = rng.random_range(-1500.0..1500.0);
                (cave.from_face_coords(face, u, v), face)
            })
            .collect();
        let images = render(&cave, &suite, &points);
        let frames: Vec<(PatternSpec, &Image16)> = suite.frames().iter().copied().zip(images.iter()).collect();
        let lm = decode_stack(&frames, &cave, &DecodeParams::default()).unwrap();
        for (i, (p, f)) in points.iter().enumerate() {
            let (q, g) = lm.at(i).expect("decoded");
            assert_eq!(g, *f);
            // 16-bit quantization at 64 fringes across 3048 mm
            assert!((q - p).norm() < 0.01, "{p:?} -> {q:?}");
        }
    }

    #[test]
    fn decode_is_keyed_by_spec_not_order() {
        let cave = CaveModel::default();
        let suite = PatternSuite::default();
        let points = vec![(Vec3::new(100.0, -H, 250.0), Face::NegY)];
        let images = render(&cave, &suite, &points);
        let mut frames: Vec<(PatternSpec, &Image16)> = suite.frames().iter().copied().zip(images.iter()).collect();
        let ordered = decode_stack(&frames, &cave, &DecodeParams::default()).unwrap();
        frames.reverse();
        frames.swap(3, 17);
        let shuffled = decode_stack(&frames, &cave, &DecodeParams::default()).unwrap();
        assert_eq!(ordered, shuffled);
        assert!(decode_stack(&[], &cave, &DecodeParams::default()).is_err());
        assert!(decode_stack(&frames[1..], &cave, &DecodeParams::default()).is_err());
    }

    #[test]
    fn assembly_uses_face_axis() {
        let cave = CaveModel::default();
        let axes = DecodedAxes {
            width: 2,
            height: 1,
            coords: vec![[Some(77.0), Some(100.0), Some(-200.0)], [None, Some(1.0), Some(2.0)]],
            amplitudes: vec![[0.5; 3]; 2],
        };
        let lm = assemble_light_map(&axes, &[Some(Face::PosX), None], &cave, &DecodeParams::default());
        assert_eq!(lm.get(0, 0), Some((Vec3::new(H, 100.0, -200.0), Face::PosX)));
        assert_eq!(lm.get(1, 0), None);
    }
}
