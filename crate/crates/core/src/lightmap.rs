//! Dense pixel-to-wall correspondence and its binary file format.
//!
//! File layout (little-endian): magic `CAVL`, `u32` version, `u32` width,
//! `u32` height, then per pixel in row-major order three `f32` coordinates
//! in mm, a `u8` face id (255 when invalid) and a `u8` validity flag.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geometry::{CaveModel, Face, Vec3};

pub const MAGIC: &[u8; 4] = b"CAVL";
pub const FORMAT_VERSION: u32 = 1;
pub const INVALID_FACE: u8 = 255;

/// Per-pixel wall point and face id; a pixel is valid iff it has a face.
#[derive(Debug, Clone, PartialEq)]
pub struct LightMap {
    width: u32,
    height: u32,
    points: Vec<Vec3>,
    faces: Vec<Option<Face>>,
}

impl LightMap {
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        LightMap {
            width,
            height,
            points: vec![Vec3::zeros(); n],
            faces: vec![None; n],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Option<(Vec3, Face)> {
        self.at(self.index(x, y))
    }

    #[inline]
    pub fn at(&self, i: usize) -> Option<(Vec3, Face)> {
        self.faces[i].map(|f| (self.points[i], f))
    }

    pub fn set(&mut self, x: u32, y: u32, value: Option<(Vec3, Face)>) {
        let i = self.index(x, y);
        self.set_at(i, value);
    }

    pub fn set_at(&mut self, i: usize, value: Option<(Vec3, Face)>) {
        match value {
            Some((p, f)) => {
                self.points[i] = p;
                self.faces[i] = Some(f);
            }
            None => {
                self.points[i] = Vec3::zeros();
                self.faces[i] = None;
            }
        }
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.faces[i].is_some()
    }

    pub fn faces(&self) -> &[Option<Face>] {
        &self.faces
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn valid_count(&self) -> usize {
        self.faces.iter().filter(|f| f.is_some()).count()
    }

    /// Builds a light map from per-pixel values in row-major order.
    pub fn from_samples(width: u32, height: u32, samples: Vec<Option<(Vec3, Face)>>) -> Result<Self> {
        if samples.len() != width as usize * height as usize {
            return Err(Error::InvalidParameter(format!(
                "{} samples for a {width}x{height} light map",
                samples.len()
            )));
        }
        let mut lm = LightMap::new(width, height);
        for (i, s) in samples.into_iter().enumerate() {
            lm.set_at(i, s);
        }
        Ok(lm)
    }

    /// Index of the first valid pixel violating the wall invariant, if any.
    pub fn find_wall_violation(&self, cave: &CaveModel, tol: f64) -> Option<usize> {
        (0..self.len()).find(|&i| match self.at(i) {
            Some((p, f)) => !cave.on_face(f, &p, tol),
            None => false,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + self.len() * 14);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.width.to_le_bytes());
        buf.extend_from_slice(&self.height.to_le_bytes());
        for (p, f) in self.points.iter().zip(&self.faces) {
            for c in p.iter() {
                buf.extend_from_slice(&(*c as f32).to_le_bytes());
            }
            buf.push(f.map_or(INVALID_FACE, Face::id));
            buf.push(u8::from(f.is_some()));
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if &header[0..4] != MAGIC {
            return Err(Error::format("light map", "bad magic"));
        }
        let word = |k: usize| u32::from_le_bytes(header[k..k + 4].try_into().unwrap());
        let version = word(4);
        if version != FORMAT_VERSION {
            return Err(Error::format("light map", format!("unsupported version {version}")));
        }
        let (width, height) = (word(8), word(12));
        let n = width as usize * height as usize;
        let mut body = vec![0u8; n * 14];
        r.read_exact(&mut body)?;
        let mut lm = LightMap::new(width, height);
        for (i, rec) in body.chunks_exact(14).enumerate() {
            let c = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap()) as f64;
            let (face, valid) = (rec[12], rec[13]);
            let value = match valid {
                0 => None,
                1 => {
                    let f = Face::from_id(face).ok_or_else(|| {
                        Error::format("light map", format!("pixel {i}: valid flag with face id {face}"))
                    })?;
                    Some((Vec3::new(c(0), c(1), c(2)), f))
                }
                other => {
                    return Err(Error::format("light map", format!("pixel {i}: validity flag {other}")))
                }
            };
            lm.set_at(i, value);
        }
        Ok(lm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_layout_is_exact() {
        let mut lm = LightMap::new(2, 1);
        lm.set(0, 0, Some((Vec3::new(1524.0, 1.5, -2.0), Face::PosX)));
        let mut buf = Vec::new();
        lm.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 2 * 14);
        assert_eq!(&buf[0..4], b"CAVL");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(&buf[12..16], &1u32.to_le_bytes());
        assert_eq!(&buf[16..20], &1524f32.to_le_bytes());
        assert_eq!(&buf[20..24], &1.5f32.to_le_bytes());
        assert_eq!(&buf[24..28], &(-2f32).to_le_bytes());
        assert_eq!(buf[28], 0);
        assert_eq!(buf[29], 1);
        assert_eq!(buf[16 + 14 + 12], 255);
        assert_eq!(buf[16 + 14 + 13], 0);
        assert_eq!(LightMap::read_from(buf.as_slice()).unwrap(), lm);
    }

    #[test]
    fn rejects_corrupt_files() {
        let lm = LightMap::new(1, 1);
        let mut buf = Vec::new();
        lm.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(LightMap::read_from(bad.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[16 + 13] = 1; // valid flag with invalid face id
        assert!(LightMap::read_from(bad.as_slice()).is_err());
        assert!(LightMap::read_from(&buf[..20]).is_err());
    }
}
