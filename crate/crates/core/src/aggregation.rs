//! Sequence-level pooling of patch scores.
//!
//! Two aggregators exist: plain mean pooling, and a small learned pooling
//! head. The head is permutation-invariant over tiles:
//!
//! `y = w_mean·mean(s) + Σₖ wₖ·mean(tanh(aₖ·s + bₖ)) + bias`
//!
//! It starts at `w_mean = 1` with every other output weight zero, so an
//! untrained head equals mean pooling.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::evaluation::srocc;
use crate::inference::score_sequence;
use crate::model::{is_heldout, softplus, sigmoid, PatchQuality};
use crate::util::{derive_seed, mean};
use crate::video_io::{TileLayout, TileStride, VideoSequence};

pub const AGGREGATOR_VERSION: u32 = 1;

/// Per-tile scores over a tiling, in raster order (window, row, column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchScoreField {
    pub layout: TileLayout,
    pub scores: Vec<f64>,
}

impl PatchScoreField {
    pub fn new(layout: TileLayout, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != layout.len() {
            return Err(Error::Geometry(format!(
                "{} scores for a {:?} tile grid",
                scores.len(),
                layout.shape()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("patch score field holds a non-finite score".into()));
        }
        Ok(PatchScoreField { layout, scores })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.layout.shape()
    }

    pub fn get(&self, window: usize, row: usize, col: usize) -> f64 {
        let (_, rows, cols) = self.shape();
        self.scores[(window * rows + row) * cols + col]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingHead {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub w: Vec<f64>,
    pub w_mean: f64,
    pub bias: f64,
}

impl PoolingHead {
    /// Neutral head with `units` random embedding units.
    pub fn neutral(units: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PoolingHead {
            a: (0..units).map(|_| rng.random_range(-1.0..1.0)).collect(),
            b: (0..units).map(|_| rng.random_range(-1.0..1.0)).collect(),
            w: vec![0.0; units],
            w_mean: 1.0,
            bias: 0.0,
        }
    }

    fn units(&self) -> usize {
        self.a.len()
    }

    fn to_params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(3 * self.units() + 2);
        p.extend(&self.a);
        p.extend(&self.b);
        p.extend(&self.w);
        p.push(self.w_mean);
        p.push(self.bias);
        p
    }

    fn from_params(units: usize, p: &[f64]) -> Result<Self> {
        if p.len() != 3 * units + 2 {
            return Err(Error::InvalidInput(format!(
                "pooling head with {units} units needs {} parameters, got {}",
                3 * units + 2,
                p.len()
            )));
        }
        Ok(PoolingHead {
            a: p[..units].to_vec(),
            b: p[units..2 * units].to_vec(),
            w: p[2 * units..3 * units].to_vec(),
            w_mean: p[3 * units],
            bias: p[3 * units + 1],
        })
    }

    pub fn forward(&self, scores: &[f64]) -> f64 {
        let mut y = self.w_mean * mean(scores) + self.bias;
        for k in 0..self.units() {
            if self.w[k] != 0.0 {
                let m = scores.iter().map(|&s| (self.a[k] * s + self.b[k]).tanh()).sum::<f64>() / scores.len() as f64;
                y += self.w[k] * m;
            }
        }
        y
    }

    /// Output and its gradient in `to_params` order.
    fn forward_grad(&self, scores: &[f64]) -> (f64, Vec<f64>) {
        let u = self.units();
        let n = scores.len() as f64;
        let mut g = vec![0.0; 3 * u + 2];
        let m = mean(scores);
        let mut y = self.w_mean * m + self.bias;
        g[3 * u] = m;
        g[3 * u + 1] = 1.0;
        for k in 0..u {
            let (mut t_sum, mut da, mut db) = (0.0, 0.0, 0.0);
            for &s in scores {
                let t = (self.a[k] * s + self.b[k]).tanh();
                let d = 1.0 - t * t;
                t_sum += t;
                da += d * s;
                db += d;
            }
            let t_mean = t_sum / n;
            y += self.w[k] * t_mean;
            g[k] = self.w[k] * da / n;
            g[u + k] = self.w[k] * db / n;
            g[2 * u + k] = t_mean;
        }
        (y, g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AggregatorModel {
    Mean,
    Learned(PoolingHead),
}

#[derive(Debug, Serialize, Deserialize)]
struct AggregatorFile {
    kind: String,
    version: u32,
    variant: String,
    units: usize,
}

impl AggregatorModel {
    pub fn save(&self, dir: &Path, log: &[AggregatorEpoch]) -> Result<()> {
        let (variant, units, params) = match self {
            AggregatorModel::Mean => ("mean", 0, Vec::new()),
            AggregatorModel::Learned(h) => ("learned", h.units(), h.to_params()),
        };
        let file = AggregatorFile {
            kind: "aggregator".into(),
            version: AGGREGATOR_VERSION,
            variant: variant.into(),
            units,
        };
        checkpoint::write_checkpoint(dir, &file, &params, log)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (file, params): (AggregatorFile, Vec<f64>) = checkpoint::read_checkpoint(dir)?;
        if file.kind != "aggregator" {
            return Err(Error::InvalidInput(format!(
                "{} holds a `{}` checkpoint, not an aggregator",
                dir.display(),
                file.kind
            )));
        }
        match file.variant.as_str() {
            "mean" => Ok(AggregatorModel::Mean),
            "learned" => Ok(AggregatorModel::Learned(PoolingHead::from_params(file.units, &params)?)),
            other => Err(Error::InvalidInput(format!("unknown aggregator variant `{other}`"))),
        }
    }
}

/// Pools a field into one sequence score.
pub fn aggregate(field: &PatchScoreField, model: &AggregatorModel) -> Result<f64> {
    if field.scores.is_empty() {
        return Err(Error::InvalidInput("cannot aggregate an empty patch score field".into()));
    }
    let y = match model {
        AggregatorModel::Mean => mean(&field.scores),
        AggregatorModel::Learned(head) => head.forward(&field.scores),
    };
    if !y.is_finite() {
        return Err(Error::Degenerate("aggregator produced a non-finite score".into()));
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregatorConfig {
    pub units: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub stride: Option<TileStride>,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        AggregatorConfig {
            units: 4,
            epochs: 200,
            learning_rate: 1e-2,
            seed: 0,
            stride: None,
        }
    }
}

/// One sequence with its subjective degradation (larger = worse).
#[derive(Debug, Clone)]
pub struct AggregatorSample {
    pub id: String,
    pub field: PatchScoreField,
    pub subjective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorEpoch {
    pub epoch: usize,
    pub mean_loss: f64,
    pub heldout_srocc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AggregatorOutcome {
    pub model: AggregatorModel,
    pub log: Vec<AggregatorEpoch>,
    pub heldout_srocc: Option<f64>,
}

pub const MIN_SEQUENCES: usize = 10;

fn heldout_srocc(head: &PoolingHead, samples: &[&AggregatorSample]) -> Option<f64> {
    if samples.len() < 3 {
        return None;
    }
    let pred: Vec<f64> = samples.iter().map(|s| head.forward(&s.field.scores)).collect();
    let subj: Vec<f64> = samples.iter().map(|s| s.subjective).collect();
    srocc(&pred, &subj).ok()
}

/// Fits the pooling head with a pairwise logistic surrogate for rank
/// correlation: every ordered pair of training sequences contributes
/// `softplus(−(yᵢ − yⱼ)/τ)` when `i` is subjectively worse than `j`.
pub fn train_aggregator_on_fields(samples: &[AggregatorSample], cfg: &AggregatorConfig) -> Result<AggregatorOutcome> {
    if samples.len() < MIN_SEQUENCES {
        return Err(Error::EmptyDataset(format!(
            "aggregator training needs at least {MIN_SEQUENCES} sequences, got {}",
            samples.len()
        )));
    }
    if cfg.epochs == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidInput("aggregator epochs and learning rate must be positive".into()));
    }
    let (heldout, train): (Vec<&AggregatorSample>, Vec<&AggregatorSample>) =
        samples.iter().partition(|s| is_heldout(&s.id));
    let train = if train.len() < 2 { samples.iter().collect() } else { train };

    let mut head = PoolingHead::neutral(cfg.units, derive_seed(cfg.seed, "pooling-head"));
    let pooled: Vec<f64> = train.iter().map(|s| mean(&s.field.scores)).collect();
    let spread = crate::util::sample_variance(&pooled).sqrt();
    let tau = if spread > 0.0 { spread } else { 1.0 };

    let mut pairs = Vec::new();
    for i in 0..train.len() {
        for j in 0..train.len() {
            if train[i].subjective > train[j].subjective {
                pairs.push((i, j));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Degenerate("all training sequences share one subjective score".into()));
    }

    let mut params = head.to_params();
    let (mut m, mut v) = (vec![0.0; params.len()], vec![0.0; params.len()]);
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let outputs: Vec<(f64, Vec<f64>)> = train.iter().map(|s| head.forward_grad(&s.field.scores)).collect();
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        for &(i, j) in &pairs {
            let x = (outputs[i].0 - outputs[j].0) / tau;
            loss += softplus(-x);
            let dx = -sigmoid(-x) / tau;
            for (g, (gi, gj)) in grad.iter_mut().zip(outputs[i].1.iter().zip(&outputs[j].1)) {
                *g += dx * (gi - gj);
            }
        }
        let scale = 1.0 / pairs.len() as f64;
        loss *= scale;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        for k in 0..params.len() {
            let g = grad[k] * scale;
            m[k] = b1 * m[k] + (1.0 - b1) * g;
            v[k] = b2 * v[k] + (1.0 - b2) * g * g;
            let mh = m[k] / (1.0 - b1.powi(epoch as i32));
            let vh = v[k] / (1.0 - b2.powi(epoch as i32));
            params[k] -= cfg.learning_rate * mh / (vh.sqrt() + eps);
        }
        head = PoolingHead::from_params(cfg.units, &params)?;
        log.push(AggregatorEpoch {
            epoch,
            mean_loss: loss,
            heldout_srocc: heldout_srocc(&head, &heldout),
        });
    }
    let heldout_srocc = heldout_srocc(&head, &heldout);
    Ok(AggregatorOutcome {
        model: AggregatorModel::Learned(head),
        log,
        heldout_srocc,
    })
}

/// A training sequence for the pooling head.
pub struct SubjectiveSequence {
    pub id: String,
    pub reference: VideoSequence,
    pub dist: VideoSequence,
    pub subjective: f64,
}

/// Scores every sequence with the frozen patch model, then fits the head.
pub fn train_aggregator(
    sequences: &[SubjectiveSequence],
    pqanet: &dyn PatchQuality,
    cfg: &AggregatorConfig,
) -> Result<AggregatorOutcome> {
    if sequences.len() < MIN_SEQUENCES {
        return Err(Error::EmptyDataset(format!(
            "aggregator training needs at least {MIN_SEQUENCES} sequences, got {}",
            sequences.len()
        )));
    }
    let stride = cfg.stride.unwrap_or_else(|| TileStride::of(pqanet.geometry()));
    let samples = sequences
        .iter()
        .map(|s| {
            let scored = score_sequence(&s.reference, &s.dist, pqanet, &AggregatorModel::Mean, stride)?;
            Ok(AggregatorSample {
                id: s.id.clone(),
                field: scored.field,
                subjective: s.subjective,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    train_aggregator_on_fields(&samples, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video_io::{tile_layout, PatchGeometry};

    fn field(scores: Vec<f64>) -> PatchScoreField {
        let g = PatchGeometry::new(1, 1, 1);
        let layout = tile_layout((1, 1, scores.len()), g, TileStride { spatial: 1, temporal: 1 }).unwrap();
        PatchScoreField::new(layout, scores).unwrap()
    }

    #[test]
    fn mean_pooling() {
        assert_eq!(aggregate(&field(vec![1.0, 2.0, 3.0, 6.0]), &AggregatorModel::Mean).unwrap(), 3.0);
        assert_eq!(aggregate(&field(vec![2.5; 7]), &AggregatorModel::Mean).unwrap(), 2.5);
    }

    #[test]
    fn neutral_head_is_mean() {
        let head = AggregatorModel::Learned(PoolingHead::neutral(4, 1));
        let y = aggregate(&field(vec![-3.25; 9]), &head).unwrap();
        assert!((y + 3.25).abs() < 1e-6);
    }

    #[test]
    fn field_length_must_match_layout() {
        let g = PatchGeometry::new(1, 1, 1);
        let layout = tile_layout((1, 1, 3), g, TileStride { spatial: 1, temporal: 1 }).unwrap();
        assert!(PatchScoreField::new(layout, vec![1.0]).is_err());
    }

    #[test]
    fn head_gradient_matches_finite_differences() {
        let mut head = PoolingHead::neutral(3, 7);
        head.w = vec![0.4, -0.2, 0.9];
        let s = [0.3, -1.2, 2.0, 0.7];
        let (_, g) = head.forward_grad(&s);
        let p = head.to_params();
        for i in 0..p.len() {
            let mut q = p.clone();
            q[i] += 1e-6;
            let up = PoolingHead::from_params(3, &q).unwrap().forward(&s);
            q[i] -= 2e-6;
            let down = PoolingHead::from_params(3, &q).unwrap().forward(&s);
            assert!(((up - down) / 2e-6 - g[i]).abs() < 1e-7, "param {i}");
        }
    }

    #[test]
    fn too_few_sequences_are_refused() {
        let samples: Vec<_> = (0..5)
            .map(|i| AggregatorSample { id: format!("s{i}"), field: field(vec![i as f64]), subjective: i as f64 })
            .collect();
        assert!(matches!(
            train_aggregator_on_fields(&samples, &AggregatorConfig::default()),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut head = PoolingHead::neutral(2, 3);
        head.w = vec![0.5, 0.25];
        let model = AggregatorModel::Learned(head);
        model.save(dir.path(), &[]).unwrap();
        assert_eq!(AggregatorModel::load(dir.path()).unwrap(), model);
        let mean_dir = dir.path().join("mean");
        AggregatorModel::Mean.save(&mean_dir, &[]).unwrap();
        assert_eq!(AggregatorModel::load(&mean_dir).unwrap(), AggregatorModel::Mean);
    }
}
