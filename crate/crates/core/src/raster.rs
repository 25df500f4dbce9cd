//! Grayscale rasters: 16-bit captured frames and 8-bit segmentation masks,
//! both stored as binary PNM (P5).

use std::io::{BufRead, Seek, Write};

use image::codecs::pnm::{PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};

/// Single-channel 16-bit frame; intensity `1.0` maps to 65535.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image16 {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u16>,
}

impl Image16 {
    pub fn new(width: u32, height: u32) -> Self {
        Image16 {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    /// Sample at linear index `i` scaled to `[0, 1]`.
    #[inline]
    pub fn intensity(&self, i: usize) -> f64 {
        self.data[i] as f64 / u16::MAX as f64
    }

    /// P5 with maxval 65535, samples big-endian. Written directly since the
    /// PNM encoder in `image` only emits 8-bit graymaps.
    pub fn write_pnm<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        buf.reserve(self.data.len() * 2);
        buf.extend(self.data.iter().flat_map(|v| v.to_be_bytes()));
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_pnm<R: BufRead + Seek>(r: R) -> Result<Self> {
        match decode_pnm(r)? {
            DynamicImage::ImageLuma16(img) => Ok(Image16 {
                width: img.width(),
                height: img.height(),
                data: img.into_raw(),
            }),
            other => Err(Error::format(
                "PNM",
                format!("expected 16-bit graymap, got {:?}", other.color()),
            )),
        }
    }
}

fn decode_pnm<R: BufRead + Seek>(r: R) -> Result<DynamicImage> {
    let decoder = PnmDecoder::new(r).map_err(|e| Error::format("PNM", e.to_string()))?;
    DynamicImage::from_decoder(decoder).map_err(|e| Error::format("PNM", e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Background,
    Foreground,
    Invalid,
}

impl Label {
    pub fn to_byte(self) -> u8 {
        match self {
            Label::Background => 0,
            Label::Foreground => 255,
            Label::Invalid => 128,
        }
    }

    pub fn from_byte(b: u8) -> Option<Label> {
        match b {
            0 => Some(Label::Background),
            255 => Some(Label::Foreground),
            128 => Some(Label::Invalid),
            _ => None,
        }
    }
}

/// Per-pixel foreground/background/invalid labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMask {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<Label>,
}

impl SegmentationMask {
    pub fn filled(width: u32, height: u32, label: Label) -> Self {
        SegmentationMask {
            width,
            height,
            labels: vec![label; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Label {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Fraction of pixels that are valid in `reference` and carry the same
    /// label here. Pixels invalid only here count as disagreement.
    pub fn agreement(&self, reference: &SegmentationMask) -> f64 {
        let mut total = 0usize;
        let mut same = 0usize;
        for (a, b) in self.labels.iter().zip(&reference.labels) {
            if *b == Label::Invalid {
                continue;
            }
            total += 1;
            same += usize::from(a == b);
        }
        if total == 0 {
            1.0
        } else {
            same as f64 / total as f64
        }
    }

    /// Fraction of all pixels whose label differs from `other`.
    pub fn churn(&self, other: &SegmentationMask) -> f64 {
        let diff = self.labels.iter().zip(&other.labels).filter(|(a, b)| a != b).count();
        diff as f64 / self.labels.len().max(1) as f64
    }

    pub fn write_pnm<W: Write>(&self, w: W) -> Result<()> {
        let bytes: Vec<u8> = self.labels.iter().map(|l| l.to_byte()).collect();
        PnmEncoder::new(w)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(&bytes, self.width, self.height, ExtendedColorType::L8)
            .map_err(|e| Error::format("PNM", e.to_string()))
    }

    pub fn read_pnm<R: BufRead + Seek>(r: R) -> Result<Self> {
        let img = match decode_pnm(r)? {
            DynamicImage::ImageLuma8(img) => img,
            other => {
                return Err(Error::format(
                    "mask",
                    format!("expected 8-bit graymap, got {:?}", other.color()),
                ))
            }
        };
        let (width, height) = (img.width(), img.height());
        let labels = img
            .into_raw()
            .into_iter()
            .map(|b| Label::from_byte(b).ok_or_else(|| Error::format("mask", format!("pixel value {b}"))))
            .collect::<Result<_>>()?;
        Ok(SegmentationMask {
            width,
            height,
            labels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn pgm16_is_big_endian_p5() {
        let img = Image16 {
            width: 2,
            height: 1,
            data: vec![0x0102, 0xffff],
        };
        let mut buf = Vec::new();
        img.write_pnm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5"));
        let header_end = buf.len() - 4;
        let header = std::str::from_utf8(&buf[..header_end]).unwrap();
        assert!(header.contains("65535"), "{header}");
        assert_eq!(&buf[header_end..], &[0x01, 0x02, 0xff, 0xff]);
        assert_eq!(Image16::read_pnm(Cursor::new(buf)).unwrap(), img);
    }

    #[test]
    fn mask_roundtrip_and_values() {
        let m = SegmentationMask {
            width: 3,
            height: 1,
            labels: vec![Label::Background, Label::Invalid, Label::Foreground],
        };
        let mut buf = Vec::new();
        m.write_pnm(&mut buf).unwrap();
        assert_eq!(&buf[buf.len() - 3..], &[0, 128, 255]);
        assert_eq!(SegmentationMask::read_pnm(Cursor::new(buf)).unwrap(), m);
    }

    #[test]
    fn agreement_ignores_reference_invalid() {
        let r = SegmentationMask {
            width: 3,
            height: 1,
            labels: vec![Label::Background, Label::Invalid, Label::Foreground],
        };
        let m = SegmentationMask {
            width: 3,
            height: 1,
            labels: vec![Label::Background, Label::Foreground, Label::Background],
        };
        assert_eq!(m.agreement(&r), 0.5);
        assert!((m.churn(&r) - 2.0 / 3.0).abs() < 1e-15);
    }
}
