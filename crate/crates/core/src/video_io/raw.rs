use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{bytes_per_sample, check_bit_depth, ChromaFormat, Frame, FrameRate, Lineage, Plane, VideoSequence};
use crate::error::{Error, IoContext, Result};

/// Geometry of a headerless planar file: frame-major, planes Y then U then V,
/// little-endian 16-bit words for depths above 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawGeometry {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u32,
    #[serde(default)]
    pub chroma: ChromaFormat,
}

impl RawGeometry {
    pub fn new(width: usize, height: usize, bit_depth: u32, chroma: ChromaFormat) -> Self {
        RawGeometry {
            width,
            height,
            bit_depth,
            chroma,
        }
    }

    pub fn frame_bytes(&self) -> usize {
        self.chroma.samples_per_frame(self.width, self.height) * bytes_per_sample(self.bit_depth)
    }

    fn plane_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![(self.width, self.height)];
        if let Some(c) = self.chroma.chroma_dims(self.width, self.height) {
            dims.push(c);
            dims.push(c);
        }
        dims
    }
}

pub(crate) fn decode_planes(
    bytes: &[u8],
    dims: &[(usize, usize)],
    bit_depth: u32,
) -> Result<Vec<Plane>> {
    let bps = bytes_per_sample(bit_depth);
    let max = (1u32 << bit_depth) - 1;
    let mut offset = 0;
    let mut planes = Vec::with_capacity(dims.len());
    for &(w, h) in dims {
        let n = w * h;
        let chunk = &bytes[offset..offset + n * bps];
        offset += n * bps;
        let data: Vec<u16> = if bps == 1 {
            chunk.iter().map(|&b| b as u16).collect()
        } else {
            chunk
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect()
        };
        if bps == 2 {
            if let Some(v) = data.iter().find(|&&v| v as u32 > max) {
                return Err(Error::InvalidInput(format!(
                    "sample {v} exceeds {bit_depth}-bit range"
                )));
            }
        }
        planes.push(Plane::new(w, h, data));
    }
    Ok(planes)
}

pub(crate) fn encode_planes(frame: &Frame, bit_depth: u32, out: &mut Vec<u8>) {
    for plane in &frame.planes {
        if bytes_per_sample(bit_depth) == 1 {
            out.extend(plane.data.iter().map(|&v| v as u8));
        } else {
            for &v in &plane.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
}

/// Reads a headerless planar file.
pub fn read_raw(path: &Path, geometry: &RawGeometry, lineage: Lineage) -> Result<VideoSequence> {
    check_bit_depth(geometry.bit_depth)?;
    if geometry.width == 0 || geometry.height == 0 {
        return Err(Error::Geometry("zero frame dimension".into()));
    }
    let bytes = fs::read(path).at(path)?;
    let frame_bytes = geometry.frame_bytes();
    if bytes.is_empty() || bytes.len() % frame_bytes != 0 {
        return Err(Error::Geometry(format!(
            "{} is {} bytes, not a whole number of {}x{} {:?} {}-bit frames ({frame_bytes} bytes each)",
            path.display(),
            bytes.len(),
            geometry.width,
            geometry.height,
            geometry.chroma,
            geometry.bit_depth
        )));
    }
    let dims = geometry.plane_dims();
    let frames = bytes
        .chunks_exact(frame_bytes)
        .map(|chunk| decode_planes(chunk, &dims, geometry.bit_depth).map(|planes| Frame { planes }))
        .collect::<Result<Vec<_>>>()?;
    VideoSequence::new(
        lineage,
        frames,
        FrameRate::default(),
        geometry.bit_depth,
        geometry.chroma,
    )
}

/// Writes all planes of `seq` as headerless planar video.
pub fn write_raw(seq: &VideoSequence, path: &Path) -> Result<()> {
    let file = fs::File::create(path).at(path)?;
    let mut w = BufWriter::new(file);
    let mut buf = Vec::new();
    for frame in &seq.frames {
        buf.clear();
        encode_planes(frame, seq.bit_depth, &mut buf);
        w.write_all(&buf).at(path)?;
    }
    w.flush().at(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video_io::{load_sequence, Role};

    #[test]
    fn headerless_420_size_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.yuv");
        // 64*64*1.5 bytes per frame, 12 frames
        fs::write(&path, vec![100u8; 64 * 64 * 3 / 2 * 12]).unwrap();
        let g = RawGeometry::new(64, 64, 8, ChromaFormat::C420);
        let seq = load_sequence(&path, Some(&g), Lineage::source("clip")).unwrap();
        assert_eq!(seq.num_frames(), 12);
        assert_eq!((seq.width, seq.height), (64, 64));
        assert_eq!(seq.role, Role::Source);

        // 73728 bytes is exactly three 128x128 4:2:0 frames
        let larger = RawGeometry::new(128, 128, 8, ChromaFormat::C420);
        let seq = load_sequence(&path, Some(&larger), Lineage::source("clip")).unwrap();
        assert_eq!(seq.num_frames(), 3);

        let wrong = RawGeometry::new(96, 96, 8, ChromaFormat::C420);
        let err = load_sequence(&path, Some(&wrong), Lineage::source("clip")).unwrap_err();
        assert!(matches!(err, Error::Geometry(_)), "{err}");
    }

    #[test]
    fn unsupported_bit_depth_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.yuv");
        fs::write(&path, vec![0u8; 16]).unwrap();
        let g = RawGeometry::new(4, 4, 9, ChromaFormat::Mono);
        assert!(matches!(
            read_raw(&path, &g, Lineage::source("x")),
            Err(Error::UnsupportedBitDepth(9))
        ));
    }

    #[test]
    fn ten_bit_little_endian() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.yuv");
        let mut bytes = Vec::new();
        for v in [1023u16, 0, 512, 3] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&path, &bytes).unwrap();
        let g = RawGeometry::new(2, 2, 10, ChromaFormat::Mono);
        let seq = read_raw(&path, &g, Lineage::source("x")).unwrap();
        assert_eq!(seq.frames[0].luma().data, vec![1023, 0, 512, 3]);

        fs::write(&path, [0xff, 0xff, 0, 0, 0, 0, 0, 0]).unwrap();
        assert!(read_raw(&path, &g, Lineage::source("x")).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let g = RawGeometry::new(2, 2, 8, ChromaFormat::Mono);
        let err = read_raw(Path::new("/nonexistent/clip.yuv"), &g, Lineage::source("x")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
