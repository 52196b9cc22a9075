use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::VideoSequence;
use crate::error::{Error, Result};

/// Extent of a spatio-temporal patch (luma samples).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchGeometry {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl PatchGeometry {
    pub const fn new(frames: usize, height: usize, width: usize) -> Self {
        PatchGeometry {
            frames,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.frames * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn fits(&self, seq: &VideoSequence) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidInput("patch geometry has a zero extent".into()));
        }
        if seq.num_frames() < self.frames || seq.height < self.height || seq.width < self.width {
            return Err(Error::Geometry(format!(
                "sequence `{}` ({}x{}x{} HxWxT) cannot host a {}x{}x{} patch",
                seq.id,
                seq.height,
                seq.width,
                seq.num_frames(),
                self.height,
                self.width,
                self.frames
            )));
        }
        Ok(())
    }
}

impl Default for PatchGeometry {
    /// 256×256 pixels over 12 frames.
    fn default() -> Self {
        PatchGeometry::new(12, 256, 256)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchOrigin {
    pub sequence_id: String,
    pub frame_offset: usize,
    pub x: usize,
    pub y: usize,
}

impl PatchOrigin {
    pub fn position(&self) -> (usize, usize, usize) {
        (self.frame_offset, self.y, self.x)
    }
}

/// A luma crop of `geometry`, stored frame-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub data: Vec<u16>,
    pub origin: PatchOrigin,
    pub geometry: PatchGeometry,
    pub bit_depth: u32,
}

impl Patch {
    pub fn frame(&self, t: usize) -> &[u16] {
        let n = self.geometry.height * self.geometry.width;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn max_sample(&self) -> f64 {
        ((1u32 << self.bit_depth) - 1) as f64
    }

    /// Wraps the patch as a single-role sequence, e.g. for tools that only
    /// accept whole videos.
    pub fn to_sequence(&self, lineage: super::Lineage) -> Result<VideoSequence> {
        let g = self.geometry;
        let planes = (0..g.frames)
            .map(|t| super::Plane::new(g.width, g.height, self.frame(t).to_vec()))
            .collect();
        VideoSequence::from_luma(lineage, planes, self.bit_depth, super::ChromaFormat::C420)
    }
}

/// Co-located crops from a reference and its transcode, plus the pristine
/// source crop while labels are being generated.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPairing {
    pub id: String,
    pub ref_patch: Patch,
    pub dist_patch: Patch,
    pub src_patch: Option<Patch>,
}

impl PatchPairing {
    pub fn make_id(dist_id: &str, t: usize, y: usize, x: usize) -> String {
        format!("{dist_id}@{t}_{y}_{x}")
    }
}

/// The sequences a pairing is cut from. `source` is only needed for labeling.
#[derive(Debug, Clone, Copy)]
pub struct Triplet<'a> {
    pub source: Option<&'a VideoSequence>,
    pub reference: &'a VideoSequence,
    pub transcoded: &'a VideoSequence,
}

fn same_volume(a: &VideoSequence, b: &VideoSequence) -> bool {
    a.width == b.width && a.height == b.height && a.num_frames() == b.num_frames()
}

/// Checks that `dist` is a transcode of `reference` with identical extent.
pub fn check_codimension(reference: &VideoSequence, dist: &VideoSequence) -> Result<()> {
    if !same_volume(reference, dist) {
        return Err(Error::Geometry(format!(
            "`{}` is {}x{}x{} but `{}` is {}x{}x{} (WxHxT)",
            reference.id,
            reference.width,
            reference.height,
            reference.num_frames(),
            dist.id,
            dist.width,
            dist.height,
            dist.num_frames()
        )));
    }
    if reference.bit_depth != dist.bit_depth {
        return Err(Error::Geometry(format!(
            "`{}` is {}-bit but `{}` is {}-bit",
            reference.id, reference.bit_depth, dist.id, dist.bit_depth
        )));
    }
    Ok(())
}

fn check_triplet(triplet: &Triplet<'_>) -> Result<()> {
    check_codimension(triplet.reference, triplet.transcoded)?;
    if let Some(src) = triplet.source {
        check_codimension(src, triplet.reference)?;
    }
    Ok(())
}

pub fn extract_patch(
    seq: &VideoSequence,
    geometry: PatchGeometry,
    frame_offset: usize,
    x: usize,
    y: usize,
) -> Result<Patch> {
    geometry.fits(seq)?;
    if frame_offset + geometry.frames > seq.num_frames()
        || x + geometry.width > seq.width
        || y + geometry.height > seq.height
    {
        return Err(Error::Geometry(format!(
            "patch at t={frame_offset} x={x} y={y} leaves `{}`",
            seq.id
        )));
    }
    let mut data = Vec::with_capacity(geometry.len());
    for frame in &seq.frames[frame_offset..frame_offset + geometry.frames] {
        let luma = frame.luma();
        for row in y..y + geometry.height {
            let start = row * luma.width + x;
            data.extend_from_slice(&luma.data[start..start + geometry.width]);
        }
    }
    Ok(Patch {
        data,
        origin: PatchOrigin {
            sequence_id: seq.id.clone(),
            frame_offset,
            x,
            y,
        },
        geometry,
        bit_depth: seq.bit_depth,
    })
}

fn pairing_at(triplet: &Triplet<'_>, geometry: PatchGeometry, t: usize, y: usize, x: usize) -> Result<PatchPairing> {
    Ok(PatchPairing {
        id: PatchPairing::make_id(&triplet.transcoded.id, t, y, x),
        ref_patch: extract_patch(triplet.reference, geometry, t, x, y)?,
        dist_patch: extract_patch(triplet.transcoded, geometry, t, x, y)?,
        src_patch: triplet
            .source
            .map(|s| extract_patch(s, geometry, t, x, y))
            .transpose()?,
    })
}

/// Draws `count` patch origins `(frame_offset, y, x)` uniformly over the valid
/// positions of a `frames`×`height`×`width` volume.
pub fn sample_origins(
    dims: (usize, usize, usize),
    count: usize,
    seed: u64,
    geometry: PatchGeometry,
) -> Result<Vec<(usize, usize, usize)>> {
    let (frames, height, width) = dims;
    if frames < geometry.frames || height < geometry.height || width < geometry.width {
        return Err(Error::Geometry(format!(
            "{height}x{width}x{frames} volume cannot host a {}x{}x{} patch",
            geometry.height, geometry.width, geometry.frames
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let t = rng.random_range(0..=frames - geometry.frames);
            let y = rng.random_range(0..=height - geometry.height);
            let x = rng.random_range(0..=width - geometry.width);
            (t, y, x)
        })
        .collect())
}

/// Random co-located crops from a reference/transcode pair (and its source,
/// when given). Origins depend only on the volume, `count`, `seed` and
/// `geometry`.
pub fn sample_colocated_patches(
    triplet: &Triplet<'_>,
    count: usize,
    seed: u64,
    geometry: PatchGeometry,
) -> Result<Vec<PatchPairing>> {
    check_triplet(triplet)?;
    geometry.fits(triplet.reference)?;
    let r = triplet.reference;
    sample_origins((r.num_frames(), r.height, r.width), count, seed, geometry)?
        .into_iter()
        .map(|(t, y, x)| pairing_at(triplet, geometry, t, y, x))
        .collect()
}

/// Spatial and temporal step between tile anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileStride {
    pub spatial: usize,
    pub temporal: usize,
}

impl TileStride {
    /// Non-overlapping tiles.
    pub fn of(geometry: PatchGeometry) -> Self {
        TileStride {
            spatial: geometry.width.min(geometry.height),
            temporal: geometry.frames,
        }
    }
}

/// Anchors along one axis. The final anchor is pulled back so the last tile
/// ends exactly at the boundary.
pub fn tile_positions(extent: usize, size: usize, stride: usize) -> Result<Vec<usize>> {
    if size == 0 || extent < size {
        return Err(Error::Geometry(format!(
            "extent {extent} cannot host a tile of {size}"
        )));
    }
    if stride == 0 || stride > size {
        return Err(Error::InvalidInput(format!(
            "stride {stride} must be in 1..={size} for full coverage"
        )));
    }
    let mut out: Vec<usize> = (0..).map(|i| i * stride).take_while(|p| p + size <= extent).collect();
    let last = extent - size;
    if *out.last().unwrap() != last {
        out.push(last);
    }
    Ok(out)
}

/// Anchor grid produced by tiling a volume.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileLayout {
    pub geometry: PatchGeometry,
    pub frame_offsets: Vec<usize>,
    pub ys: Vec<usize>,
    pub xs: Vec<usize>,
}

impl TileLayout {
    /// (temporal windows, rows, columns)
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.frame_offsets.len(), self.ys.len(), self.xs.len())
    }

    pub fn len(&self) -> usize {
        let (t, r, c) = self.shape();
        t * r * c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Anchors in raster order: temporal window, then row, then column.
    pub fn anchors(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.frame_offsets.iter().flat_map(move |&t| {
            self.ys
                .iter()
                .flat_map(move |&y| self.xs.iter().map(move |&x| (t, y, x)))
        })
    }
}

pub fn tile_layout(
    dims: (usize, usize, usize),
    geometry: PatchGeometry,
    stride: TileStride,
) -> Result<TileLayout> {
    let (frames, height, width) = dims;
    Ok(TileLayout {
        geometry,
        frame_offsets: tile_positions(frames, geometry.frames, stride.temporal)?,
        ys: tile_positions(height, geometry.height, stride.spatial)?,
        xs: tile_positions(width, geometry.width, stride.spatial)?,
    })
}

/// Deterministic raster tiling of a reference/transcode pair.
pub fn tile_patches(
    reference: &VideoSequence,
    dist: &VideoSequence,
    geometry: PatchGeometry,
    stride: TileStride,
) -> Result<Vec<PatchPairing>> {
    let triplet = Triplet {
        source: None,
        reference,
        transcoded: dist,
    };
    check_triplet(&triplet)?;
    geometry.fits(reference)?;
    let layout = tile_layout(
        (reference.num_frames(), reference.height, reference.width),
        geometry,
        stride,
    )?;
    layout
        .anchors()
        .map(|(t, y, x)| pairing_at(&triplet, geometry, t, y, x))
        .collect()
}
