//! Layered configuration: built-in defaults, then the TOML file, then flags.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use transvqa::aggregation::AggregatorConfig;
use transvqa::calibration::Polarity;
use transvqa::codec_pipeline::{default_reference_configs, default_transcode_configs, CodecConfig, CodecSpec, EncoderRegistry};
use transvqa::evaluation::MetricSpec;
use transvqa::model::{BackboneConfig, TrainingConfig};
use transvqa::proxy::{LabelingConfig, VmafScorer};
use transvqa::synthetic::SyntheticSpec;
use transvqa::PatchGeometry;

use crate::UsageError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed applied to every stage unless `--seed` is given.
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub corpus: CorpusSection,
    pub synthetic: SyntheticSpec,
    pub proxy: ProxySection,
    pub label: LabelingConfig,
    pub calibrate: CalibrateSection,
    pub train: TrainingConfig,
    pub backbone: BackboneSection,
    pub stanet: AggregatorConfig,
    pub score: ScoreSection,
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    External,
    Stub,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub encoder: EncoderKind,
    pub references: Vec<CodecConfig>,
    pub transcodes: Vec<CodecConfig>,
    /// Merged over the built-in ffmpeg templates, replacing same-named codecs.
    pub codecs: BTreeMap<String, CodecSpec>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            encoder: EncoderKind::External,
            references: default_reference_configs(),
            transcodes: default_transcode_configs(),
            codecs: BTreeMap::new(),
        }
    }
}

impl CorpusSection {
    pub fn registry(&self) -> EncoderRegistry {
        let mut r = EncoderRegistry::with_defaults();
        r.codecs.extend(self.codecs.clone());
        r
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProxyKind {
    #[default]
    Psnr,
    Vmaf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxySection {
    pub kind: ProxyKind,
    pub psnr_cap_db: f64,
    pub vmaf_command: String,
}

impl Default for ProxySection {
    fn default() -> Self {
        ProxySection {
            kind: ProxyKind::Psnr,
            psnr_cap_db: 100.0,
            vmaf_command: VmafScorer::DEFAULT_COMMAND.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub target: f64,
    pub polarity: Polarity,
    /// Defaults to width-2 bins over [0, 30) plus an overflow bin.
    pub bin_edges: Option<Vec<f64>>,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        CalibrateSection {
            target: 0.96,
            polarity: Polarity::Dmos,
            bin_edges: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneSection {
    pub channels: [usize; 2],
    pub diff_scale: f64,
}

impl Default for BackboneSection {
    fn default() -> Self {
        let toy = BackboneConfig::toy(PatchGeometry::default(), 8);
        BackboneSection {
            channels: toy.channels,
            diff_scale: toy.diff_scale,
        }
    }
}

impl BackboneSection {
    pub fn build(&self, geometry: PatchGeometry, bit_depth: u32) -> BackboneConfig {
        BackboneConfig {
            channels: self.channels,
            diff_scale: self.diff_scale,
            ..BackboneConfig::toy(geometry, bit_depth)
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreSection {
    /// Spatial tile step; defaults to the patch size.
    pub stride: Option<usize>,
    pub temporal_stride: Option<usize>,
    /// Patch extent for a neutral model.
    pub patch: Option<PatchGeometry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub alpha: f64,
    pub anchor: Option<String>,
    pub metrics: Vec<MetricSpec>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            alpha: 0.05,
            anchor: None,
            metrics: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, UsageError> {
        let Some(path) = path else {
            return Ok(PipelineConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())))
    }

    /// Pushes one seed into every stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.synthetic.seed = seed;
        self.label.seed = seed;
        self.train.seed = seed;
        self.stanet.seed = seed;
    }

    pub fn seeds(&self) -> BTreeMap<&'static str, u64> {
        BTreeMap::from([
            ("synthetic", self.synthetic.seed),
            ("label", self.label.seed),
            ("train", self.train.seed),
            ("stanet", self.stanet.seed),
        ])
    }
}

/// Parses `FxHxW`, e.g. `12x256x256`.
pub fn parse_geometry(s: &str) -> Result<PatchGeometry, String> {
    let parts: Vec<&str> = s.split('x').collect();
    let nums: Vec<usize> = parts.iter().filter_map(|p| p.trim().parse().ok()).collect();
    match nums[..] {
        [f, h, w] if parts.len() == 3 && f > 0 && h > 0 && w > 0 => Ok(PatchGeometry::new(f, h, w)),
        _ => Err(format!("expected FRAMESxHEIGHTxWIDTH with positive sizes, got `{s}`")),
    }
}
