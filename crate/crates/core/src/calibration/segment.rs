//! Initial foreground/background split of the score image: threshold,
//! binary opening and closing, then a marker-based watershed on the
//! morphological gradient of the score.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::geometry::Face;
use crate::lightmap::LightMap;
use crate::raster::{Label, SegmentationMask};

use super::score::ScoreImage;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentParams {
    pub threshold: f64,
    /// Disk radius of the opening and closing (px).
    pub morph_radius: u32,
    /// Disk radius of the erosion producing watershed markers (px).
    pub marker_radius: u32,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            threshold: 0.5,
            morph_radius: 2,
            marker_radius: 5,
        }
    }
}

/// Row offsets `(dy, half_width)` of a digital disk.
fn disk(radius: u32) -> Vec<(i64, i64)> {
    let r = radius as i64;
    (-r..=r)
        .map(|dy| (dy, (((r * r - dy * dy) as f64).sqrt()).floor() as i64))
        .collect()
}

/// Binary image over a `w x h` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binary {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl Binary {
    fn complement(&self) -> Binary {
        Binary {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Dilation by a disk; pixels outside the image are unset.
    pub fn dilate(&self, radius: u32) -> Binary {
        let (w, h) = (self.width as i64, self.height as i64);
        // horizontal run lengths via prefix sums make each disk row O(1)
        let prefix: Vec<Vec<u32>> = (0..h)
            .map(|y| {
                let mut acc = vec![0u32; w as usize + 1];
                for x in 0..w {
                    acc[x as usize + 1] = acc[x as usize] + u32::from(self.bits[(y * w + x) as usize]);
                }
                acc
            })
            .collect();
        let shape = disk(radius);
        let mut bits = vec![false; self.bits.len()];
        for y in 0..h {
            for x in 0..w {
                bits[(y * w + x) as usize] = shape.iter().any(|&(dy, hw)| {
                    let yy = y + dy;
                    if yy < 0 || yy >= h {
                        return false;
                    }
                    let (a, b) = ((x - hw).max(0) as usize, (x + hw + 1).min(w) as usize);
                    prefix[yy as usize][b] > prefix[yy as usize][a]
                });
            }
        }
        Binary {
            width: self.width,
            height: self.height,
            bits,
        }
    }

    /// Erosion by a disk; pixels outside the image count as set.
    pub fn erode(&self, radius: u32) -> Binary {
        self.complement().dilate(radius).complement()
    }

    pub fn open(&self, radius: u32) -> Binary {
        self.erode(radius).dilate(radius)
    }

    pub fn close(&self, radius: u32) -> Binary {
        self.dilate(radius).erode(radius)
    }
}

/// 4-connected components of set pixels; 0 means unset, labels from 1.
pub fn connected_components(b: &Binary) -> (Vec<u32>, u32) {
    let (w, h) = (b.width as usize, b.height as usize);
    let mut labels = vec![0u32; b.bits.len()];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..labels.len() {
        if !b.bits[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if b.bits[j] && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
    }
    (labels, next)
}

/// 3x3 morphological gradient (max - min) of a scalar image.
pub fn morphological_gradient(values: &[f64], width: u32, height: u32) -> Vec<f64> {
    let (w, h) = (width as i64, height as i64);
    let mut out = vec![0.0; values.len()];
    for y in 0..h {
        for x in 0..w {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for yy in (y - 1).max(0)..=(y + 1).min(h - 1) {
                for xx in (x - 1).max(0)..=(x + 1).min(w - 1) {
                    let v = values[(yy * w + xx) as usize];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            out[(y * w + x) as usize] = hi - lo;
        }
    }
    out
}

/// Priority-flood watershed. `markers` holds 0 for unlabelled pixels; the
/// result assigns every pixel reachable from a marker. Ties in elevation
/// are broken by insertion order, which keeps the flood deterministic.
pub fn watershed(elevation: &[f64], markers: &[u32], width: u32, height: u32) -> Vec<u32> {
    #[derive(PartialEq)]
    struct Key(f64);
    impl Eq for Key {}
    impl PartialOrd for Key {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Key {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }
    let (w, h) = (width as usize, height as usize);
    let mut labels = markers.to_vec();
    let mut heap = BinaryHeap::new();
    let mut counter = 0u64;
    let mut queued = vec![false; labels.len()];
    let neighbours = |i: usize| {
        let (x, y) = (i % w, i / w);
        [
            (x > 0).then(|| i - 1),
            (x + 1 < w).then(|| i + 1),
            (y > 0).then(|| i - w),
            (y + 1 < h).then(|| i + w),
        ]
    };
    for i in 0..labels.len() {
        if labels[i] == 0 {
            continue;
        }
        for j in neighbours(i).into_iter().flatten() {
            if labels[j] == 0 && !queued[j] {
                queued[j] = true;
                heap.push(Reverse((Key(elevation[j]), counter, j, labels[i])));
                counter += 1;
            }
        }
    }
    while let Some(Reverse((_, _, i, label))) = heap.pop() {
        labels[i] = label;
        for j in neighbours(i).into_iter().flatten() {
            if labels[j] == 0 && !queued[j] {
                queued[j] = true;
                heap.push(Reverse((Key(elevation[j].max(elevation[i])), counter, j, label)));
                counter += 1;
            }
        }
    }
    labels
}

/// Threshold, morphology and watershed refinement of a score image.
/// Undefined scores act as the maximum score 3. Pixels invalid in `lm` are
/// labelled invalid when a light map is given.
pub fn segment_initial(score: &ScoreImage, lm: Option<&LightMap>, params: &SegmentParams) -> SegmentationMask {
    let (w, h) = (score.width, score.height);
    let filled = score.filled();
    let binary = Binary {
        width: w,
        height: h,
        bits: filled.iter().map(|&s| s > params.threshold).collect(),
    };
    let fg = binary.open(params.morph_radius).close(params.morph_radius);
    let fg_seed = fg.erode(params.marker_radius);
    let bg_seed = fg.complement().erode(params.marker_radius);
    let (fg_cc, n_fg) = connected_components(&fg_seed);
    let (bg_cc, _) = connected_components(&bg_seed);
    // foreground components keep labels 1..=n_fg, background ones follow
    let markers: Vec<u32> = fg_cc
        .iter()
        .zip(&bg_cc)
        .map(|(&f, &b)| if f > 0 { f } else if b > 0 { n_fg + b } else { 0 })
        .collect();
    let labels = if markers.iter().any(|&m| m > 0) {
        let grad = morphological_gradient(&filled, w, h);
        watershed(&grad, &markers, w, h)
    } else {
        // nothing survives the marker erosion: keep the morphological result
        fg.bits.iter().map(|&b| if b { 1 } else { n_fg + 1 }).collect()
    };
    let labels = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if lm.is_some_and(|lm| !lm.is_valid(i)) {
                Label::Invalid
            } else if l >= 1 && l <= n_fg {
                Label::Foreground
            } else if l > n_fg {
                Label::Background
            } else if fg.bits[i] {
                Label::Foreground
            } else {
                Label::Background
            }
        })
        .collect();
    SegmentationMask {
        width: w,
        height: h,
        labels,
    }
}

/// Wall seen most often among background pixels; ties go to the smaller id.
pub fn dominant_wall(mask: &SegmentationMask, lm: &LightMap) -> Result<Face> {
    let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
    for (label, face) in mask.labels.iter().zip(lm.faces()) {
        if let (Label::Background, Some(f)) = (label, face) {
            *counts.entry(f.id()).or_default() += 1;
        }
    }
    let best = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .ok_or(Error::EmptyBackground)?;
    Ok(Face::from_id(*best.0).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score_image(w: u32, h: u32, f: impl Fn(u32, u32) -> Option<f64>) -> ScoreImage {
        ScoreImage {
            width: w,
            height: h,
            values: (0..w * h).map(|i| f(i % w, i / w)).collect(),
            floor: 0.0,
        }
    }

    #[test]
    fn constant_scores() {
        let zero = segment_initial(&score_image(30, 20, |_, _| Some(0.0)), None, &SegmentParams::default());
        assert_eq!(zero.count(Label::Background), 600);
        let three = segment_initial(&score_image(30, 20, |_, _| Some(3.0)), None, &SegmentParams::default());
        assert_eq!(three.count(Label::Foreground), 600);
    }

    #[test]
    fn disk_blob_with_speckle() {
        let (w, h) = (80u32, 60u32);
        let inside = |x: u32, y: u32| (x as f64 - 40.0).powi(2) + (y as f64 - 30.0).powi(2) < 400.0;
        let s = score_image(w, h, |x, y| {
            if inside(x, y) {
                Some(if (x * 7 + y * 3) % 29 == 0 { 0.0 } else { 3.0 })
            } else if (x, y) == (5, 5) {
                Some(3.0)
            } else {
                Some(0.0)
            }
        });
        let m = segment_initial(&s, None, &SegmentParams::default());
        for y in 0..h {
            for x in 0..w {
                // a step edge is a gradient plateau two pixels wide
                let r = ((x as f64 - 40.0).powi(2) + (y as f64 - 30.0).powi(2)).sqrt();
                if (r - 20.0).abs() < 1.5 {
                    continue;
                }
                let expected = if inside(x, y) { Label::Foreground } else { Label::Background };
                assert_eq!(m.get(x, y), expected, "({x},{y})");
            }
        }
    }

    #[test]
    fn morphology_basics() {
        let mut b = Binary {
            width: 9,
            height: 9,
            bits: vec![false; 81],
        };
        b.bits[40] = true;
        let d = b.dilate(2);
        assert_eq!(d.bits.iter().filter(|&&v| v).count(), 13);
        assert_eq!(d.erode(2), b);
        assert_eq!(b.open(1).bits.iter().filter(|&&v| v).count(), 0);
        let full = Binary {
            width: 4,
            height: 4,
            bits: vec![true; 16],
        };
        assert_eq!(full.erode(3), full);
    }

    #[test]
    fn watershed_splits_at_ridge() {
        let elev = [0.0, 0.0, 5.0, 0.0, 0.0];
        let markers = [1, 0, 0, 0, 2];
        let l = watershed(&elev, &markers, 5, 1);
        assert_eq!(&l[..2], &[1, 1]);
        assert_eq!(&l[3..], &[2, 2]);
    }

    #[test]
    fn dominant_wall_ties_and_empty() {
        let mut lm = LightMap::new(3, 1);
        lm.set_at(0, Some((Default::default(), Face::NegY)));
        lm.set_at(1, Some((Default::default(), Face::PosX)));
        lm.set_at(2, Some((Default::default(), Face::NegZ)));
        let mut mask = SegmentationMask::filled(3, 1, Label::Background);
        assert_eq!(dominant_wall(&mask, &lm).unwrap(), Face::PosX);
        mask.labels[1] = Label::Foreground;
        assert_eq!(dominant_wall(&mask, &lm).unwrap(), Face::NegY);
        let fg = SegmentationMask::filled(3, 1, Label::Foreground);
        assert!(matches!(dominant_wall(&fg, &lm), Err(Error::EmptyBackground)));
    }
}
