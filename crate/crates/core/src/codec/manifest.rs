//! TOML manifest naming each frame file of a captured stack and the pattern
//! it shows. Decoding is keyed by this manifest, never by file order.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PatternSpec, PatternSuite, FACE_FRAMES};
use crate::error::{Error, Result};
use crate::geometry::Axis;
use crate::raster::Image16;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub file: String,
    /// `"sine"` or `"face"`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Axis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<u32>,
    /// Phase shift in radians.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<u8>,
}

impl FrameRecord {
    pub fn new(file: String, spec: &PatternSpec) -> Self {
        let mut r = FrameRecord {
            file,
            kind: String::new(),
            axis: None,
            frequency: None,
            phase: None,
            index: None,
        };
        match *spec {
            PatternSpec::Sine {
                axis,
                frequency,
                phase,
            } => {
                r.kind = "sine".into();
                r.axis = Some(axis);
                r.frequency = Some(frequency);
                r.phase = Some(phase);
            }
            PatternSpec::FaceId { frame } => {
                r.kind = "face".into();
                r.index = Some(frame);
            }
        }
        r
    }

    pub fn spec(&self) -> Result<PatternSpec> {
        let missing = |field: &str| Error::ManifestMismatch(format!("{}: missing `{field}`", self.file));
        match self.kind.as_str() {
            "sine" => Ok(PatternSpec::Sine {
                axis: self.axis.ok_or_else(|| missing("axis"))?,
                frequency: self.frequency.ok_or_else(|| missing("frequency"))?,
                phase: self.phase.ok_or_else(|| missing("phase"))?,
            }),
            "face" => {
                let frame = self.index.ok_or_else(|| missing("index"))?;
                if frame >= FACE_FRAMES {
                    return Err(Error::ManifestMismatch(format!("{}: face index {frame}", self.file)));
                }
                Ok(PatternSpec::FaceId { frame })
            }
            other => Err(Error::ManifestMismatch(format!("{}: unknown kind `{other}`", self.file))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub half_extent: f64,
    pub width: u32,
    pub height: u32,
    #[serde(rename = "frame")]
    pub frames: Vec<FrameRecord>,
}

impl SuiteManifest {
    /// Manifest for `suite` with files named `frame_000.pgm`, `frame_001.pgm`, ...
    pub fn for_suite(suite: &PatternSuite, half_extent: f64, width: u32, height: u32) -> Self {
        SuiteManifest {
            half_extent,
            width,
            height,
            frames: suite
                .frames()
                .iter()
                .enumerate()
                .map(|(i, s)| FrameRecord::new(format!("frame_{i:03}.pgm"), s))
                .collect(),
        }
    }

    pub fn specs(&self) -> Result<Vec<PatternSpec>> {
        self.frames.iter().map(FrameRecord::spec).collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format("manifest", e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ManifestMismatch(e.to_string()))
    }

    /// Writes the manifest and every frame into `dir`.
    pub fn write_stack(&self, dir: &Path, images: &[Image16]) -> Result<()> {
        if images.len() != self.frames.len() {
            return Err(Error::ManifestMismatch(format!(
                "{} images for {} manifest entries",
                images.len(),
                self.frames.len()
            )));
        }
        fs::create_dir_all(dir)?;
        for (rec, img) in self.frames.iter().zip(images) {
            img.write_pnm(std::io::BufWriter::new(fs::File::create(dir.join(&rec.file))?))?;
        }
        fs::write(dir.join(MANIFEST_FILE), self.to_toml()?)?;
        Ok(())
    }

    /// Reads `dir/manifest.toml` and all referenced frames.
    pub fn read_stack(dir: &Path) -> Result<(SuiteManifest, Vec<(PatternSpec, Image16)>)> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::ManifestMismatch(format!("{}: {e}", path.display())))?;
        let manifest = SuiteManifest::from_toml(&text)?;
        let mut out = Vec::with_capacity(manifest.frames.len());
        for rec in &manifest.frames {
            let spec = rec.spec()?;
            let file = fs::File::open(dir.join(&rec.file))
                .map_err(|e| Error::ManifestMismatch(format!("{}: {e}", rec.file)))?;
            let img = Image16::read_pnm(BufReader::new(file))?;
            if img.width != manifest.width || img.height != manifest.height {
                return Err(Error::ManifestMismatch(format!(
                    "{} is {}x{}, manifest says {}x{}",
                    rec.file, img.width, img.height, manifest.width, manifest.height
                )));
            }
            out.push((spec, img));
        }
        Ok((manifest, out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip_preserves_specs() {
        let suite = PatternSuite::default();
        let m = SuiteManifest::for_suite(&suite, 1524.0, 4, 3);
        let text = m.to_toml().unwrap();
        assert!(text.contains("[[frame]]"));
        let back = SuiteManifest::from_toml(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.specs().unwrap(), suite.frames());
    }

    #[test]
    fn rejects_bad_records() {
        let text = "half_extent = 1524.0\nwidth = 1\nheight = 1\n[[frame]]\nfile = \"a.pgm\"\nkind = \"sine\"\naxis = \"x\"\n";
        let m = SuiteManifest::from_toml(text).unwrap();
        assert!(matches!(m.specs(), Err(Error::ManifestMismatch(_))));
        let text = "half_extent = 1524.0\nwidth = 1\nheight = 1\n[[frame]]\nfile = \"a.pgm\"\nkind = \"face\"\nindex = 6\n";
        assert!(SuiteManifest::from_toml(text).unwrap().specs().is_err());
    }

    #[test]
    fn stack_files_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let suite = PatternSuite::new(&[1, 4], 3).unwrap();
        let m = SuiteManifest::for_suite(&suite, 1000.0, 2, 2);
        let images: Vec<Image16> = (0..suite.len())
            .map(|i| Image16 {
                width: 2,
                height: 2,
                data: vec![i as u16 * 1000; 4],
            })
            .collect();
        m.write_stack(dir.path(), &images).unwrap();
        let (back, frames) = SuiteManifest::read_stack(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(frames.len(), suite.len());
        assert_eq!(frames[5].1, images[5]);
        assert_eq!(frames[5].0, suite.frames()[5]);
    }
}
