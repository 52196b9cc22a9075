//! YUV4MPEG2 streams: a plain-text header line followed by `FRAME`-delimited
//! planar pictures.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::raw::{decode_planes, encode_planes};
use super::{bytes_per_sample, check_bit_depth, ChromaFormat, Frame, FrameRate, Lineage, VideoSequence};
use crate::error::{Error, IoContext, Result};

const SIGNATURE: &str = "YUV4MPEG2";

/// Geometry read from a stream header without decoding samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamInfo {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u32,
    pub chroma: ChromaFormat,
    pub frame_rate: FrameRate,
    pub frames: usize,
}

fn parse_colorspace(tag: &str) -> Result<(ChromaFormat, u32)> {
    let (base, depth) = match tag.find('p') {
        Some(i) if tag[i + 1..].chars().all(|c| c.is_ascii_digit()) && i + 1 < tag.len() => {
            let depth: u32 = tag[i + 1..]
                .parse()
                .map_err(|_| Error::Header(format!("bad colorspace `{tag}`")))?;
            (&tag[..i], depth)
        }
        _ => (tag, 8),
    };
    let chroma = match base {
        "420" | "420jpeg" | "420mpeg2" | "420paldv" => ChromaFormat::C420,
        "422" => ChromaFormat::C422,
        "444" => ChromaFormat::C444,
        "mono" => ChromaFormat::Mono,
        _ if base.starts_with("mono") => {
            let depth: u32 = base[4..]
                .parse()
                .map_err(|_| Error::Header(format!("bad colorspace `{tag}`")))?;
            return Ok((ChromaFormat::Mono, depth));
        }
        _ => return Err(Error::Header(format!("unsupported colorspace `{tag}`"))),
    };
    Ok((chroma, depth))
}

fn colorspace_tag(chroma: ChromaFormat, bit_depth: u32) -> String {
    let base = match chroma {
        ChromaFormat::Mono => "mono",
        ChromaFormat::C420 => "420",
        ChromaFormat::C422 => "422",
        ChromaFormat::C444 => "444",
    };
    match (chroma, bit_depth) {
        (ChromaFormat::C420, 8) => "420jpeg".to_string(),
        (_, 8) => base.to_string(),
        (ChromaFormat::Mono, d) => format!("mono{d}"),
        (_, d) => format!("{base}p{d}"),
    }
}

struct Header {
    width: usize,
    height: usize,
    chroma: ChromaFormat,
    bit_depth: u32,
    frame_rate: FrameRate,
    len: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Header("missing header terminator".into()))?;
    let line = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::Header("header is not ASCII".into()))?;
    let mut tokens = line.split_ascii_whitespace();
    if tokens.next() != Some(SIGNATURE) {
        return Err(Error::Header("missing YUV4MPEG2 signature".into()));
    }
    let (mut width, mut height) = (None, None);
    let mut chroma = (ChromaFormat::C420, 8);
    let mut frame_rate = FrameRate::default();
    for tok in tokens {
        let (key, val) = tok.split_at(1);
        let bad = || Error::Header(format!("bad header token `{tok}`"));
        match key {
            "W" => width = Some(val.parse::<usize>().map_err(|_| bad())?),
            "H" => height = Some(val.parse::<usize>().map_err(|_| bad())?),
            "C" => chroma = parse_colorspace(val)?,
            "F" => {
                let (n, d) = val.split_once(':').ok_or_else(bad)?;
                let num = n.parse().map_err(|_| bad())?;
                let den = d.parse().map_err(|_| bad())?;
                if den == 0 {
                    return Err(bad());
                }
                frame_rate = FrameRate::new(num, den);
            }
            // interlacing, aspect and extension tags do not affect decoding
            _ => {}
        }
    }
    let width = width.ok_or_else(|| Error::Header("missing W".into()))?;
    let height = height.ok_or_else(|| Error::Header("missing H".into()))?;
    if width == 0 || height == 0 {
        return Err(Error::Header("zero frame dimension".into()));
    }
    check_bit_depth(chroma.1)?;
    Ok(Header {
        width,
        height,
        chroma: chroma.0,
        bit_depth: chroma.1,
        frame_rate,
        len: end + 1,
    })
}

fn frame_bytes(h: &Header) -> usize {
    h.chroma.samples_per_frame(h.width, h.height) * bytes_per_sample(h.bit_depth)
}

/// Splits the payload after the stream header into frame sample slices.
fn frame_slices<'a>(bytes: &'a [u8], h: &Header) -> Result<Vec<&'a [u8]>> {
    let fb = frame_bytes(h);
    let mut pos = h.len;
    let mut out = Vec::new();
    while pos < bytes.len() {
        let rest = &bytes[pos..];
        if !rest.starts_with(b"FRAME") {
            return Err(Error::Header(format!("expected FRAME marker at byte {pos}")));
        }
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Header("unterminated FRAME line".into()))?;
        let start = pos + nl + 1;
        if start + fb > bytes.len() {
            return Err(Error::Geometry(format!(
                "truncated frame {}: need {fb} bytes, {} available",
                out.len(),
                bytes.len() - start
            )));
        }
        out.push(&bytes[start..start + fb]);
        pos = start + fb;
    }
    Ok(out)
}

/// Reads header geometry and counts frames without decoding samples.
pub fn probe_y4m(path: &Path) -> Result<StreamInfo> {
    let bytes = fs::read(path).at(path)?;
    let h = parse_header(&bytes)?;
    let frames = frame_slices(&bytes, &h)?.len();
    Ok(StreamInfo {
        width: h.width,
        height: h.height,
        bit_depth: h.bit_depth,
        chroma: h.chroma,
        frame_rate: h.frame_rate,
        frames,
    })
}

pub fn read_y4m(path: &Path, lineage: Lineage) -> Result<VideoSequence> {
    let bytes = fs::read(path).at(path)?;
    let h = parse_header(&bytes)?;
    let mut dims = vec![(h.width, h.height)];
    if let Some(c) = h.chroma.chroma_dims(h.width, h.height) {
        dims.push(c);
        dims.push(c);
    }
    let frames = frame_slices(&bytes, &h)?
        .into_iter()
        .map(|s| decode_planes(s, &dims, h.bit_depth).map(|planes| Frame { planes }))
        .collect::<Result<Vec<_>>>()?;
    VideoSequence::new(lineage, frames, h.frame_rate, h.bit_depth, h.chroma)
}

pub fn write_y4m(seq: &VideoSequence, path: &Path) -> Result<()> {
    let file = fs::File::create(path).at(path)?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "{SIGNATURE} W{} H{} F{}:{} Ip A1:1 C{}",
        seq.width,
        seq.height,
        seq.frame_rate.num,
        seq.frame_rate.den,
        colorspace_tag(seq.chroma, seq.bit_depth)
    )
    .at(path)?;
    let mut buf = Vec::new();
    for frame in &seq.frames {
        buf.clear();
        encode_planes(frame, seq.bit_depth, &mut buf);
        w.write_all(b"FRAME\n").at(path)?;
        w.write_all(&buf).at(path)?;
    }
    w.flush().at(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video_io::{load_sequence, Plane};

    #[test]
    fn header_geometry_is_used() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.y4m");
        let mut bytes = b"YUV4MPEG2 W256 H256 F25:1 Ip A1:1 C420jpeg\n".to_vec();
        for _ in 0..2 {
            bytes.extend_from_slice(b"FRAME\n");
            bytes.extend(std::iter::repeat_n(7u8, 256 * 256 * 3 / 2));
        }
        fs::write(&path, bytes).unwrap();
        let seq = load_sequence(&path, None, Lineage::source("a")).unwrap();
        assert_eq!((seq.width, seq.height, seq.num_frames()), (256, 256, 2));
        assert_eq!(seq.frame_rate, FrameRate::new(25, 1));

        let info = probe_y4m(&path).unwrap();
        assert_eq!(info.frames, 2);
        assert_eq!(info.bit_depth, 8);
    }

    #[test]
    fn colorspace_tags() {
        assert_eq!(parse_colorspace("420p10").unwrap(), (ChromaFormat::C420, 10));
        assert_eq!(parse_colorspace("420paldv").unwrap(), (ChromaFormat::C420, 8));
        assert_eq!(parse_colorspace("mono10").unwrap(), (ChromaFormat::Mono, 10));
        assert!(parse_colorspace("411").is_err());
        for chroma in [ChromaFormat::Mono, ChromaFormat::C420, ChromaFormat::C422, ChromaFormat::C444] {
            for depth in [8, 10, 12] {
                assert_eq!(parse_colorspace(&colorspace_tag(chroma, depth)).unwrap(), (chroma, depth));
            }
        }
    }

    #[test]
    fn truncated_stream_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.y4m");
        let mut bytes = b"YUV4MPEG2 W4 H4 Cmono\nFRAME\n".to_vec();
        bytes.extend([0u8; 10]);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_y4m(&path, Lineage::source("t")),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn ten_bit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.y4m");
        let luma: Vec<u16> = (0..16).map(|i| i * 60).collect();
        let seq = VideoSequence::from_luma(
            Lineage::source("h"),
            vec![Plane::new(4, 4, luma)],
            10,
            ChromaFormat::C420,
        )
        .unwrap();
        write_y4m(&seq, &path).unwrap();
        let back = read_y4m(&path, Lineage::source("h")).unwrap();
        assert_eq!(back, seq);
    }
}
