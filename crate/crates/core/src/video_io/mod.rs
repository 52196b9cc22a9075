//! Decoded video sequences, raw/Y4M readers and writers, spatio-temporal
//! patch extraction and the on-disk patch store.

mod patches;
mod raw;
mod store;
mod y4m;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use patches::{
    check_codimension, extract_patch, sample_colocated_patches, sample_origins, tile_layout,
    tile_patches, tile_positions, Patch, PatchGeometry, PatchOrigin, PatchPairing, TileLayout,
    TileStride, Triplet,
};
pub use raw::{read_raw, write_raw, RawGeometry};
pub use store::{PatchStore, PatchStoreWriter, StoreMeta};
pub use y4m::{probe_y4m, read_y4m, write_y4m, StreamInfo};

/// Position of a sequence in the capture → upload → platform chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Reference,
    Transcoded,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Source => "source",
            Role::Reference => "reference",
            Role::Transcoded => "transcoded",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "source" => Some(Role::Source),
            "reference" => Some(Role::Reference),
            "transcoded" => Some(Role::Transcoded),
            _ => None,
        }
    }

    /// The role a parent of this role must have.
    pub fn parent_role(self) -> Option<Role> {
        match self {
            Role::Source => None,
            Role::Reference => Some(Role::Source),
            Role::Transcoded => Some(Role::Reference),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChromaFormat {
    Mono,
    #[default]
    C420,
    C422,
    C444,
}

impl ChromaFormat {
    /// Chroma plane dimensions for a luma plane of `width`×`height`.
    pub fn chroma_dims(self, width: usize, height: usize) -> Option<(usize, usize)> {
        match self {
            ChromaFormat::Mono => None,
            ChromaFormat::C420 => Some((width.div_ceil(2), height.div_ceil(2))),
            ChromaFormat::C422 => Some((width.div_ceil(2), height)),
            ChromaFormat::C444 => Some((width, height)),
        }
    }

    /// Samples in one frame, all planes.
    pub fn samples_per_frame(self, width: usize, height: usize) -> usize {
        let luma = width * height;
        match self.chroma_dims(width, height) {
            Some((cw, ch)) => luma + 2 * cw * ch,
            None => luma,
        }
    }

    pub fn parse(s: &str) -> Option<ChromaFormat> {
        match s.to_ascii_lowercase().as_str() {
            "mono" | "400" | "gray" => Some(ChromaFormat::Mono),
            "420" | "c420" | "yuv420p" => Some(ChromaFormat::C420),
            "422" | "c422" | "yuv422p" => Some(ChromaFormat::C422),
            "444" | "c444" | "yuv444p" => Some(ChromaFormat::C444),
            _ => None,
        }
    }
}

pub(crate) fn check_bit_depth(bit_depth: u32) -> Result<()> {
    match bit_depth {
        8 | 10 | 12 => Ok(()),
        other => Err(Error::UnsupportedBitDepth(other)),
    }
}

pub(crate) fn bytes_per_sample(bit_depth: u32) -> usize {
    if bit_depth > 8 {
        2
    } else {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Plane {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: u16) -> Self {
        Plane::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }
}

/// One decoded picture: the luma plane followed by chroma planes, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub planes: Vec<Plane>,
}

impl Frame {
    pub fn luma(&self) -> &Plane {
        &self.planes[0]
    }

    /// A frame carrying `luma` with mid-grey chroma for `chroma`.
    pub fn from_luma(luma: Plane, chroma: ChromaFormat, bit_depth: u32) -> Frame {
        let mut planes = Vec::with_capacity(3);
        let dims = chroma.chroma_dims(luma.width, luma.height);
        planes.push(luma);
        if let Some((cw, ch)) = dims {
            let mid = 1u16 << (bit_depth - 1);
            planes.push(Plane::filled(cw, ch, mid));
            planes.push(Plane::filled(cw, ch, mid));
        }
        Frame { planes }
    }
}

/// Frame rate as an exact ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRate {
    pub num: u32,
    pub den: u32,
}

impl FrameRate {
    pub const fn new(num: u32, den: u32) -> Self {
        FrameRate { num, den }
    }

    pub fn fps(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Default for FrameRate {
    fn default() -> Self {
        FrameRate::new(30, 1)
    }
}

/// Identity of a sequence within a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lineage {
    pub id: String,
    pub role: Role,
    pub parent_id: Option<String>,
}

impl Lineage {
    pub fn source(id: impl Into<String>) -> Self {
        Lineage {
            id: id.into(),
            role: Role::Source,
            parent_id: None,
        }
    }

    pub fn child(id: impl Into<String>, role: Role, parent: impl Into<String>) -> Self {
        Lineage {
            id: id.into(),
            role,
            parent_id: Some(parent.into()),
        }
    }
}

/// A decoded planar video with its place in the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    pub id: String,
    pub role: Role,
    pub parent_id: Option<String>,
    pub frames: Vec<Frame>,
    pub frame_rate: FrameRate,
    pub width: usize,
    pub height: usize,
    pub bit_depth: u32,
    pub chroma: ChromaFormat,
}

impl VideoSequence {
    pub fn new(
        lineage: Lineage,
        frames: Vec<Frame>,
        frame_rate: FrameRate,
        bit_depth: u32,
        chroma: ChromaFormat,
    ) -> Result<Self> {
        check_bit_depth(bit_depth)?;
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidInput(format!("sequence `{}` has no frames", lineage.id)))?;
        let (width, height) = (first.luma().width, first.luma().height);
        let expected_planes = if chroma == ChromaFormat::Mono { 1 } else { 3 };
        let chroma_dims = chroma.chroma_dims(width, height);
        for (i, frame) in frames.iter().enumerate() {
            if frame.planes.len() != expected_planes {
                return Err(Error::Geometry(format!(
                    "frame {i} of `{}` has {} planes, expected {expected_planes}",
                    lineage.id,
                    frame.planes.len()
                )));
            }
            let luma = frame.luma();
            if (luma.width, luma.height) != (width, height) {
                return Err(Error::Geometry(format!(
                    "frame {i} of `{}` is {}x{}, expected {width}x{height}",
                    lineage.id, luma.width, luma.height
                )));
            }
            if let Some(dims) = chroma_dims {
                if frame.planes[1..].iter().any(|p| (p.width, p.height) != dims) {
                    return Err(Error::Geometry(format!(
                        "chroma planes of frame {i} in `{}` do not match {chroma:?}",
                        lineage.id
                    )));
                }
            }
        }
        match (lineage.role, &lineage.parent_id) {
            (Role::Source, Some(p)) => {
                return Err(Error::InvalidInput(format!(
                    "source `{}` cannot have a parent (`{p}`)",
                    lineage.id
                )))
            }
            (Role::Reference | Role::Transcoded, None) => {
                return Err(Error::InvalidInput(format!(
                    "{} `{}` needs a parent id",
                    lineage.role, lineage.id
                )))
            }
            _ => {}
        }
        Ok(VideoSequence {
            id: lineage.id,
            role: lineage.role,
            parent_id: lineage.parent_id,
            frames,
            frame_rate,
            width,
            height,
            bit_depth,
            chroma,
        })
    }

    /// Builds a sequence from luma planes only; chroma is set to mid-grey.
    pub fn from_luma(
        lineage: Lineage,
        luma: Vec<Plane>,
        bit_depth: u32,
        chroma: ChromaFormat,
    ) -> Result<Self> {
        let frames = luma
            .into_iter()
            .map(|p| Frame::from_luma(p, chroma, bit_depth))
            .collect();
        VideoSequence::new(lineage, frames, FrameRate::default(), bit_depth, chroma)
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn max_sample(&self) -> u16 {
        ((1u32 << self.bit_depth) - 1) as u16
    }

    pub fn lineage(&self) -> Lineage {
        Lineage {
            id: self.id.clone(),
            role: self.role,
            parent_id: self.parent_id.clone(),
        }
    }

    /// Replaces the lineage, keeping the samples.
    pub fn with_lineage(mut self, lineage: Lineage) -> Self {
        self.id = lineage.id;
        self.role = lineage.role;
        self.parent_id = lineage.parent_id;
        self
    }
}

/// Loads a sequence from disk.
///
/// Streams starting with the `YUV4MPEG2` signature describe their own
/// geometry and `geometry` may be `None`. Anything else is treated as
/// headerless planar video and requires `geometry`.
pub fn load_sequence(
    path: &Path,
    geometry: Option<&RawGeometry>,
    lineage: Lineage,
) -> Result<VideoSequence> {
    use crate::error::IoContext;
    use std::io::Read;

    let mut head = [0u8; 9];
    let n = std::fs::File::open(path)
        .and_then(|mut f| f.read(&mut head))
        .at(path)?;
    if n == 9 && &head == b"YUV4MPEG2" {
        read_y4m(path, lineage)
    } else {
        let geometry = geometry.ok_or_else(|| {
            Error::InvalidInput(format!(
                "{} has no stream header; raw geometry must be supplied",
                path.display()
            ))
        })?;
        read_raw(path, geometry, lineage)
    }
}

/// Writes `seq` as Y4M or headerless raw depending on the file extension.
pub fn save_sequence(seq: &VideoSequence, path: &Path) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("y4m") => write_y4m(seq, path),
        _ => write_raw(seq, path),
    }
}
