//! Sequence scoring: tile, score every tile pair, pool.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate, AggregatorModel, PatchScoreField};
use crate::error::Result;
use crate::model::PatchQuality;
use crate::video_io::{check_codimension, extract_patch, tile_layout, TileStride, VideoSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    /// Degradation of the transcode relative to its reference: larger is worse.
    pub sequence_score: f64,
    pub field: PatchScoreField,
}

/// Scores `dist` against `reference`.
///
/// Tiles are extracted and scored in parallel, then gathered in raster order,
/// so the result does not depend on the thread count.
pub fn score_sequence(
    reference: &VideoSequence,
    dist: &VideoSequence,
    pqanet: &dyn PatchQuality,
    aggregator: &AggregatorModel,
    stride: TileStride,
) -> Result<SequenceScore> {
    check_codimension(reference, dist)?;
    let geometry = pqanet.geometry();
    let layout = tile_layout(
        (reference.num_frames(), reference.height, reference.width),
        geometry,
        stride,
    )?;
    let anchors: Vec<_> = layout.anchors().collect();
    let scores = anchors
        .par_iter()
        .map(|&(t, y, x)| {
            let r = extract_patch(reference, geometry, t, x, y)?;
            let d = extract_patch(dist, geometry, t, x, y)?;
            pqanet.quality(&r, &d)
        })
        .collect::<Result<Vec<f64>>>()?;
    let field = PatchScoreField::new(layout, scores)?;
    let sequence_score = aggregate(&field, aggregator)?;
    Ok(SequenceScore { sequence_score, field })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BackboneConfig, PatchQualityModel};
    use crate::video_io::{ChromaFormat, Lineage, Patch, PatchGeometry, Plane, Role};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        geometry: PatchGeometry,
        calls: AtomicUsize,
    }

    impl PatchQuality for Counting {
        fn geometry(&self) -> PatchGeometry {
            self.geometry
        }
        fn quality(&self, r: &Patch, _d: &Patch) -> Result<f64> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(r.origin.x as f64 + 1000.0 * r.origin.y as f64)
        }
    }

    fn video(id: &str, role: Role, parent: &str, w: usize, h: usize, t: usize, offset: u16) -> VideoSequence {
        let planes = (0..t)
            .map(|f| Plane::new(w, h, (0..w * h).map(|i| ((i * 13 + f * 5) % 200) as u16 + offset).collect()))
            .collect();
        VideoSequence::from_luma(Lineage::child(id, role, parent), planes, 8, ChromaFormat::Mono).unwrap()
    }

    #[test]
    fn four_tiles_four_forwards() {
        let g = PatchGeometry::new(12, 256, 256);
        let r = video("r", Role::Reference, "s", 512, 512, 12, 0);
        let d = video("d", Role::Transcoded, "r", 512, 512, 12, 3);
        let model = Counting { geometry: g, calls: AtomicUsize::new(0) };
        let out = score_sequence(&r, &d, &model, &AggregatorModel::Mean, TileStride::of(g)).unwrap();
        assert_eq!(out.field.shape(), (1, 2, 2));
        assert_eq!(model.calls.load(Ordering::SeqCst), 4);
        assert_eq!(out.field.scores, vec![0.0, 256.0, 256_000.0, 256_256.0]);
    }

    #[test]
    fn identical_inputs_score_zero() {
        let g = PatchGeometry::new(4, 16, 16);
        let r = video("r", Role::Reference, "s", 40, 24, 9, 0);
        let d = r.clone().with_lineage(Lineage::child("d", Role::Transcoded, "r"));
        let model = PatchQualityModel::new(BackboneConfig::toy(g, 8), 11);
        let out = score_sequence(&r, &d, &model, &AggregatorModel::Mean, TileStride::of(g)).unwrap();
        assert_eq!(out.sequence_score, 0.0);
        assert_eq!(out.field.shape(), (3, 2, 3));
    }

    #[test]
    fn mean_pooling_equals_mean_of_tiles() {
        let g = PatchGeometry::new(2, 8, 8);
        let r = video("r", Role::Reference, "s", 20, 16, 4, 0);
        let d = video("d", Role::Transcoded, "r", 20, 16, 4, 9);
        let model = PatchQualityModel::new(BackboneConfig::toy(g, 8), 2);
        let stride = TileStride { spatial: 4, temporal: 1 };
        let out = score_sequence(&r, &d, &model, &AggregatorModel::Mean, stride).unwrap();
        let mean = out.field.scores.iter().sum::<f64>() / out.field.scores.len() as f64;
        assert!((out.sequence_score - mean).abs() < 1e-6);
        let again = score_sequence(&r, &d, &model, &AggregatorModel::Mean, stride).unwrap();
        assert_eq!(again.sequence_score.to_bits(), out.sequence_score.to_bits());
    }

    #[test]
    fn size_mismatch_propagates() {
        let g = PatchGeometry::new(2, 8, 8);
        let r = video("r", Role::Reference, "s", 16, 16, 2, 0);
        let d = video("d", Role::Transcoded, "r", 24, 16, 2, 0);
        let model = PatchQualityModel::new(BackboneConfig::toy(g, 8), 2);
        assert!(score_sequence(&r, &d, &model, &AggregatorModel::Mean, TileStride::of(g)).is_err());
    }
}
