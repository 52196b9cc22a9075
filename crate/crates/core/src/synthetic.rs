//! Synthetic corpora with known degradation.
//!
//! Sources are procedural: a drifting sinusoidal gradient plus a box-filtered
//! noise texture that scrolls over time. Each reference adds Gaussian noise
//! to its source. Each transcode adds one shared Gaussian field to the
//! reference, scaled by its grid level, so realized degradation is monotone
//! in the level for every reference.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec_pipeline::{CorpusManifest, ManifestEntry, MANIFEST_FILE};
use crate::error::{Error, IoContext, Result};
use crate::util::derive_seed;
use crate::video_io::{save_sequence, ChromaFormat, Lineage, Plane, Role, VideoSequence};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const BENCHMARK_FILE: &str = "benchmark.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_sources: usize,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub bit_depth: u32,
    /// Noise std of each reference relative to its source, in 8-bit units.
    /// One reference per level and source.
    pub reference_noise: Vec<f64>,
    /// Extra noise std of each transcode relative to its reference.
    pub distortion_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_sources: 4,
            width: 64,
            height: 64,
            frames: 8,
            bit_depth: 8,
            reference_noise: vec![2.0],
            distortion_grid: vec![2.0, 5.0, 10.0],
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_sources == 0 {
            return Err(Error::InvalidInput("synthetic corpus needs at least one source".into()));
        }
        if self.width == 0 || self.height == 0 || self.frames == 0 {
            return Err(Error::InvalidInput("synthetic video extent must be positive".into()));
        }
        crate::video_io::check_bit_depth(self.bit_depth)?;
        if self.reference_noise.is_empty() || self.distortion_grid.is_empty() {
            return Err(Error::InvalidInput("reference and distortion levels must be non-empty".into()));
        }
        if self
            .reference_noise
            .iter()
            .chain(&self.distortion_grid)
            .any(|l| !l.is_finite() || *l < 0.0)
        {
            return Err(Error::InvalidInput("noise levels must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub distorted_id: String,
    pub true_degradation: f64,
}

fn box_blur_wrap(field: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let n = (2 * r + 1) as f64;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (0..=2 * r).map(|k| field[y * w + (x + w * (r + 1) + k - r) % w]).sum::<f64>() / n;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (0..=2 * r).map(|k| tmp[((y + h * (r + 1) + k - r) % h) * w + x]).sum::<f64>() / n;
        }
    }
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    let sd = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / out.len() as f64).sqrt();
    if sd > 0.0 {
        out.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
    out
}

/// Procedural luma planes in floating point (8-bit scale).
fn procedural_source(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let (w, h) = (spec.width, spec.height);
    let level = rng.random_range(80.0..170.0);
    let grad_amp = rng.random_range(15.0..50.0);
    let tex_amp = rng.random_range(4.0..35.0);
    let period_x = rng.random_range(0.5..2.0) * w as f64;
    let period_y = rng.random_range(0.5..2.0) * h as f64;
    let omega = rng.random_range(0.05..0.4);
    let (vx, vy) = (rng.random_range(-2i64..=2), rng.random_range(-2i64..=2));
    let radius = rng.random_range(1..=3usize);
    let noise: Vec<f64> = (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect();
    let texture = box_blur_wrap(&noise, w, h, radius);
    let tau = std::f64::consts::TAU;
    (0..spec.frames)
        .map(|t| {
            let mut plane = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    let tx = (x as i64 - vx * t as i64).rem_euclid(w as i64) as usize;
                    let ty = (y as i64 - vy * t as i64).rem_euclid(h as i64) as usize;
                    let g = (tau * (x as f64 / period_x + y as f64 / period_y) + omega * t as f64).sin();
                    plane.push(level + grad_amp * g + tex_amp * texture[ty * w + tx]);
                }
            }
            plane
        })
        .collect()
}

fn quantize(values: &[f64], w: usize, h: usize, bit_depth: u32) -> Plane {
    let max = ((1u32 << bit_depth) - 1) as f64;
    Plane::new(w, h, values.iter().map(|v| v.round().clamp(0.0, max) as u16).collect())
}

fn to_sequence(lineage: Lineage, planes: &[Vec<f64>], spec: &SyntheticSpec) -> Result<VideoSequence> {
    let luma = planes.iter().map(|p| quantize(p, spec.width, spec.height, spec.bit_depth)).collect();
    VideoSequence::from_luma(lineage, luma, spec.bit_depth, ChromaFormat::C420)
}

fn luma_f64(seq: &VideoSequence) -> Vec<Vec<f64>> {
    seq.frames.iter().map(|f| f.luma().data.iter().map(|&v| v as f64).collect()).collect()
}

/// Mean squared luma difference over the whole sequence.
pub fn sequence_mse(a: &VideoSequence, b: &VideoSequence) -> f64 {
    let (mut sse, mut n) = (0.0, 0usize);
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        for (&x, &y) in fa.luma().data.iter().zip(&fb.luma().data) {
            sse += (x as f64 - y as f64).powi(2);
            n += 1;
        }
    }
    sse / n as f64
}

fn noisy(base: &[Vec<f64>], sigma: f64, field: &[Vec<f64>]) -> Vec<Vec<f64>> {
    base.iter()
        .zip(field)
        .map(|(p, z)| p.iter().zip(z).map(|(v, n)| v + sigma * n).collect())
        .collect()
}

fn gaussian_field(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..spec.frames)
        .map(|_| (0..spec.width * spec.height).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

/// Generates sources, references and transcodes under `out_dir` and writes
/// `manifest.jsonl`, `ground_truth.csv` (degradation of each transcode
/// against its reference, as realized MSE) and `benchmark.csv` (the same
/// values as a DMOS-style database).
pub fn make_synthetic_corpus(out_dir: &Path, spec: &SyntheticSpec) -> Result<CorpusManifest> {
    spec.validate()?;
    for sub in ["sources", "references", "transcoded"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).at(&d)?;
    }
    let scale = (1u32 << (spec.bit_depth - 8)) as f64;
    let per_source = (0..spec.n_sources)
        .into_par_iter()
        .map(|i| -> Result<Vec<ManifestEntry>> {
            let src_id = format!("src{i:03}");
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &src_id));
            let src_f: Vec<Vec<f64>> = procedural_source(spec, &mut rng)
                .into_iter()
                .map(|p| p.into_iter().map(|v| v * scale).collect())
                .collect();
            let source = to_sequence(Lineage::source(&src_id), &src_f, spec)?;
            let src_path = Path::new("sources").join(format!("{src_id}.y4m"));
            save_sequence(&source, &out_dir.join(&src_path))?;
            let mut entries = vec![ManifestEntry::source(&src_id, src_path)];

            for (k, &ref_sigma) in spec.reference_noise.iter().enumerate() {
                let ref_id = format!("{src_id}__ref{k}");
                let z = gaussian_field(spec, &mut rng);
                let reference = to_sequence(
                    Lineage::child(&ref_id, Role::Reference, &src_id),
                    &noisy(&luma_f64(&source), ref_sigma * scale, &z),
                    spec,
                )?;
                let ref_path = Path::new("references").join(format!("{ref_id}.y4m"));
                save_sequence(&reference, &out_dir.join(&ref_path))?;
                entries.push(ManifestEntry {
                    id: ref_id.clone(),
                    role: Role::Reference,
                    path: ref_path,
                    codec: Some("noise".into()),
                    quality_param: None,
                    preset: Some(format!("sigma={ref_sigma}")),
                    parent_id: Some(src_id.clone()),
                    size_bytes: None,
                    true_degradation: Some(sequence_mse(&source, &reference)),
                });

                let z = gaussian_field(spec, &mut rng);
                let ref_f = luma_f64(&reference);
                for (j, &level) in spec.distortion_grid.iter().enumerate() {
                    let dist_id = format!("{ref_id}__noise{j}");
                    let dist = to_sequence(
                        Lineage::child(&dist_id, Role::Transcoded, &ref_id),
                        &noisy(&ref_f, level * scale, &z),
                        spec,
                    )?;
                    let dist_path = Path::new("transcoded").join(format!("{dist_id}.y4m"));
                    save_sequence(&dist, &out_dir.join(&dist_path))?;
                    entries.push(ManifestEntry {
                        id: dist_id,
                        role: Role::Transcoded,
                        path: dist_path,
                        codec: Some("noise".into()),
                        quality_param: None,
                        preset: Some(format!("sigma={level}")),
                        parent_id: Some(ref_id.clone()),
                        size_bytes: None,
                        true_degradation: Some(sequence_mse(&reference, &dist)),
                    });
                }
            }
            Ok(entries)
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = CorpusManifest {
        corpus_root: out_dir.to_path_buf(),
        entries: per_source.into_iter().flatten().collect(),
    };
    manifest.validate()?;
    manifest.write(&out_dir.join(MANIFEST_FILE))?;

    let mut gt = csv::Writer::from_path(out_dir.join(GROUND_TRUTH_FILE))?;
    let mut bench = csv::Writer::from_path(out_dir.join(BENCHMARK_FILE))?;
    bench.write_record(["reference_path", "distorted_path", "score", "polarity"])?;
    for e in manifest.with_role(Role::Transcoded) {
        let degradation = e.true_degradation.expect("set above");
        gt.serialize(GroundTruthRow {
            distorted_id: e.id.clone(),
            true_degradation: degradation,
        })?;
        let parent = manifest.get(e.parent_id.as_deref().expect("validated")).expect("validated");
        bench.write_record([
            parent.path.display().to_string(),
            e.path.display().to_string(),
            degradation.to_string(),
            "dmos".into(),
        ])?;
    }
    gt.flush().at(out_dir.join(GROUND_TRUTH_FILE))?;
    bench.flush().at(out_dir.join(BENCHMARK_FILE))?;
    Ok(manifest)
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthRow>> {
    csv::Reader::from_path(path)?
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(grid: Vec<f64>) -> SyntheticSpec {
        SyntheticSpec {
            n_sources: 3,
            width: 24,
            height: 16,
            frames: 3,
            distortion_grid: grid,
            seed: 5,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn zero_grid_means_zero_degradation() {
        let dir = tempfile::tempdir().unwrap();
        let m = make_synthetic_corpus(dir.path(), &small(vec![0.0])).unwrap();
        assert_eq!(m.count(Role::Transcoded), 3);
        assert!(m.with_role(Role::Transcoded).all(|e| e.true_degradation == Some(0.0)));
        let gt = read_ground_truth(&dir.path().join(GROUND_TRUTH_FILE)).unwrap();
        assert_eq!(gt.len(), 3);
    }

    #[test]
    fn larger_level_is_strictly_worse() {
        let dir = tempfile::tempdir().unwrap();
        let m = make_synthetic_corpus(dir.path(), &small(vec![2.0, 8.0])).unwrap();
        for r in m.with_role(Role::Reference) {
            let kids: Vec<f64> = m.children(&r.id).map(|c| c.true_degradation.unwrap()).collect();
            assert_eq!(kids.len(), 2);
            assert!(kids[1] > kids[0], "{kids:?}");
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        make_synthetic_corpus(a.path(), &small(vec![3.0])).unwrap();
        make_synthetic_corpus(b.path(), &small(vec![3.0])).unwrap();
        for f in ["manifest.jsonl", "ground_truth.csv", "transcoded/src001__ref0__noise0.y4m"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn rejects_empty_corpus() {
        let spec = SyntheticSpec { n_sources: 0, ..SyntheticSpec::default() };
        assert!(make_synthetic_corpus(Path::new("/nonexistent"), &spec).is_err());
    }
}
