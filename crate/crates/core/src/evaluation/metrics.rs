//! Quality metrics that can appear as benchmark rows.
//!
//! Built in: luma PSNR, single-scale luma SSIM and the trained model. Anything
//! else is plugged in as an executable that prints one number.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::AggregatorModel;
use crate::codec_pipeline::run_command;
use crate::error::{Error, Result};
use crate::inference::score_sequence;
use crate::model::PatchQualityModel;
use crate::proxy::psnr_from_mse;
use crate::video_io::{check_codimension, Plane, TileStride, VideoSequence};

/// Direction of a metric's scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MetricPolarity {
    /// Larger is better (PSNR, SSIM, VMAF, most NR metrics).
    #[default]
    Quality,
    /// Larger is worse.
    Degradation,
}

impl MetricPolarity {
    /// Maps a score onto the degradation scale.
    pub fn orient(self, score: f64) -> f64 {
        match self {
            MetricPolarity::Quality => -score,
            MetricPolarity::Degradation => score,
        }
    }
}

/// A decoded video together with the file it came from.
#[derive(Debug, Clone, Copy)]
pub struct VideoInput<'a> {
    pub path: &'a Path,
    pub video: &'a VideoSequence,
}

pub trait FrMetric: Sync {
    fn name(&self) -> &str;
    fn polarity(&self) -> MetricPolarity;
    fn score(&self, reference: VideoInput<'_>, dist: VideoInput<'_>) -> Result<f64>;
}

pub trait NrMetric: Sync {
    fn name(&self) -> &str;
    fn score(&self, video: VideoInput<'_>) -> Result<f64>;
}

/// `nr(R) − nr(D)`: the drop in a quality-valued no-reference score caused by
/// transcoding.
pub fn nr_difference_adapter(nr: &dyn NrMetric, reference: VideoInput<'_>, dist: VideoInput<'_>) -> Result<f64> {
    let a = nr.score(reference)?;
    let b = nr.score(dist)?;
    Ok(a - b)
}

/// Turns a no-reference metric into a full-reference benchmark row.
pub struct NrDifference {
    pub inner: Box<dyn NrMetric>,
    /// Scale of the wrapped NR metric. Degradation-valued metrics have the
    /// difference negated so the row is always degradation-oriented.
    pub nr_polarity: MetricPolarity,
}

impl FrMetric for NrDifference {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn polarity(&self) -> MetricPolarity {
        MetricPolarity::Degradation
    }

    fn score(&self, reference: VideoInput<'_>, dist: VideoInput<'_>) -> Result<f64> {
        let d = nr_difference_adapter(self.inner.as_ref(), reference, dist)?;
        Ok(match self.nr_polarity {
            MetricPolarity::Quality => d,
            MetricPolarity::Degradation => -d,
        })
    }
}

fn luma_pairs<'a>(
    name: &str,
    reference: &'a VideoSequence,
    dist: &'a VideoSequence,
) -> Result<impl Iterator<Item = (&'a Plane, &'a Plane)>> {
    check_codimension(reference, dist).map_err(|e| Error::Metric {
        name: name.into(),
        reason: e.to_string(),
    })?;
    Ok(reference.frames.iter().zip(&dist.frames).map(|(a, b)| (a.luma(), b.luma())))
}

/// Mean over frames of luma PSNR, capped at `cap_db` for identical frames.
#[derive(Debug, Clone)]
pub struct Psnr {
    pub cap_db: f64,
}

impl Default for Psnr {
    fn default() -> Self {
        Psnr { cap_db: 100.0 }
    }
}

impl FrMetric for Psnr {
    fn name(&self) -> &str {
        "PSNR"
    }

    fn polarity(&self) -> MetricPolarity {
        MetricPolarity::Quality
    }

    fn score(&self, reference: VideoInput<'_>, dist: VideoInput<'_>) -> Result<f64> {
        let max = reference.video.max_sample() as f64;
        let frames: Vec<f64> = luma_pairs("PSNR", reference.video, dist.video)?
            .map(|(a, b)| {
                let sse: f64 = a
                    .data
                    .iter()
                    .zip(&b.data)
                    .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
                    .sum();
                psnr_from_mse(sse / a.data.len() as f64, max, self.cap_db)
            })
            .collect();
        Ok(frames.iter().sum::<f64>() / frames.len() as f64)
    }
}

/// Single-scale SSIM on luma with an 11×11 Gaussian window (σ = 1.5),
/// evaluated over valid window positions and averaged over frames.
#[derive(Debug, Clone, Default)]
pub struct Ssim;

const SSIM_WIN: usize = 11;

fn gaussian_window() -> [f64; SSIM_WIN] {
    let mut w = [0.0; SSIM_WIN];
    let c = (SSIM_WIN / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * 1.5 * 1.5)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable valid-mode filtering of a `w`×`h` image.
fn filter_valid(img: &[f64], w: usize, h: usize, k: &[f64; SSIM_WIN]) -> Vec<f64> {
    let (wo, ho) = (w - SSIM_WIN + 1, h - SSIM_WIN + 1);
    let mut rows = vec![0.0; wo * h];
    for y in 0..h {
        for x in 0..wo {
            rows[y * wo + x] = (0..SSIM_WIN).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; wo * ho];
    for y in 0..ho {
        for x in 0..wo {
            out[y * wo + x] = (0..SSIM_WIN).map(|i| k[i] * rows[(y + i) * wo + x]).sum();
        }
    }
    out
}

pub(crate) fn ssim_plane(a: &Plane, b: &Plane, max: f64) -> f64 {
    let (w, h) = (a.width, a.height);
    let k = gaussian_window();
    let x: Vec<f64> = a.data.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.data.iter().map(|&v| v as f64).collect();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<f64>>();
    let mx = filter_valid(&x, w, h, &k);
    let my = filter_valid(&y, w, h, &k);
    let sxx = filter_valid(&prod(&x, &x), w, h, &k);
    let syy = filter_valid(&prod(&y, &y), w, h, &k);
    let sxy = filter_valid(&prod(&x, &y), w, h, &k);
    let c1 = (0.01 * max).powi(2);
    let c2 = (0.03 * max).powi(2);
    let n = mx.len() as f64;
    (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum::<f64>()
        / n
}

impl FrMetric for Ssim {
    fn name(&self) -> &str {
        "SSIM"
    }

    fn polarity(&self) -> MetricPolarity {
        MetricPolarity::Quality
    }

    fn score(&self, reference: VideoInput<'_>, dist: VideoInput<'_>) -> Result<f64> {
        let r = reference.video;
        if r.width < SSIM_WIN || r.height < SSIM_WIN {
            return Err(Error::Metric {
                name: "SSIM".into(),
                reason: format!("{}x{} frames are smaller than the {SSIM_WIN}x{SSIM_WIN} window", r.width, r.height),
            });
        }
        let max = r.max_sample() as f64;
        let frames: Vec<f64> = luma_pairs("SSIM", r, dist.video)?
            .map(|(a, b)| ssim_plane(a, b, max))
            .collect();
        Ok(frames.iter().sum::<f64>() / frames.len() as f64)
    }
}

/// The trained patch model plus pooling, as a benchmark row.
pub struct ModelMetric {
    pub name: String,
    pub pqanet: PatchQualityModel,
    pub aggregator: AggregatorModel,
    pub stride: TileStride,
}

impl FrMetric for ModelMetric {
    fn name(&self) -> &str {
        &self.name
    }

    fn polarity(&self) -> MetricPolarity {
        MetricPolarity::Degradation
    }

    fn score(&self, reference: VideoInput<'_>, dist: VideoInput<'_>) -> Result<f64> {
        Ok(score_sequence(reference.video, dist.video, &self.pqanet, &self.aggregator, self.stride)?.sequence_score)
    }
}

/// Mean luma sample value; a trivial no-reference metric.
#[derive(Debug, Clone, Default)]
pub struct MeanLuma;

impl NrMetric for MeanLuma {
    fn name(&self) -> &str {
        "mean-luma"
    }

    fn score(&self, video: VideoInput<'_>) -> Result<f64> {
        let (sum, n) = video.video.frames.iter().fold((0.0, 0usize), |(s, n), f| {
            let l = f.luma();
            (s + l.data.iter().map(|&v| v as f64).sum::<f64>(), n + l.data.len())
        });
        Ok(sum / n as f64)
    }
}

fn parse_plugin_output(name: &str, stdout: &str) -> Result<f64> {
    let line = stdout.lines().map(str::trim).rfind(|l| !l.is_empty()).unwrap_or("");
    match line.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Metric {
            name: name.into(),
            reason: format!("expected one real number on stdout, got {:?}", stdout.trim()),
        }),
    }
}

fn run_plugin(name: &str, command: &[String], paths: &[&Path]) -> Result<f64> {
    let mut argv = command.to_vec();
    argv.extend(paths.iter().map(|p| p.display().to_string()));
    let stdout = run_command(&argv).map_err(|e| Error::Metric {
        name: name.into(),
        reason: e.to_string(),
    })?;
    parse_plugin_output(name, &stdout)
}

/// External full-reference metric: `command… <reference> <distorted>`.
#[derive(Debug, Clone)]
pub struct FrPlugin {
    pub name: String,
    pub command: Vec<String>,
    pub polarity: MetricPolarity,
}

impl FrMetric for FrPlugin {
    fn name(&self) -> &str {
        &self.name
    }

    fn polarity(&self) -> MetricPolarity {
        self.polarity
    }

    fn score(&self, reference: VideoInput<'_>, dist: VideoInput<'_>) -> Result<f64> {
        run_plugin(&self.name, &self.command, &[reference.path, dist.path])
    }
}

/// External no-reference metric: `command… <video>`.
#[derive(Debug, Clone)]
pub struct NrPlugin {
    pub name: String,
    pub command: Vec<String>,
}

impl NrMetric for NrPlugin {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, video: VideoInput<'_>) -> Result<f64> {
        run_plugin(&self.name, &self.command, &[video.path])
    }
}

/// Declarative metric list entry, as read from a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum MetricSpec {
    Psnr,
    Ssim,
    Model {
        #[serde(default)]
        name: Option<String>,
        pqanet: PathBuf,
        /// Checkpoint directory, or absent for mean pooling.
        #[serde(default)]
        aggregator: Option<PathBuf>,
        #[serde(default)]
        stride: Option<usize>,
    },
    FrPlugin {
        name: String,
        command: Vec<String>,
        #[serde(default)]
        polarity: MetricPolarity,
    },
    NrPlugin {
        name: String,
        command: Vec<String>,
        #[serde(default)]
        polarity: MetricPolarity,
    },
}

impl MetricSpec {
    pub fn build(&self) -> Result<Box<dyn FrMetric>> {
        Ok(match self {
            MetricSpec::Psnr => Box::new(Psnr::default()),
            MetricSpec::Ssim => Box::new(Ssim),
            MetricSpec::Model {
                name,
                pqanet,
                aggregator,
                stride,
            } => {
                let pqanet = PatchQualityModel::load(pqanet)?;
                let g = pqanet.config().geometry;
                let stride = match stride {
                    Some(s) => TileStride {
                        spatial: *s,
                        temporal: g.frames,
                    },
                    None => TileStride::of(g),
                };
                let aggregator = match aggregator {
                    Some(dir) => AggregatorModel::load(dir)?,
                    None => AggregatorModel::Mean,
                };
                Box::new(ModelMetric {
                    name: name.clone().unwrap_or_else(|| "model".into()),
                    pqanet,
                    aggregator,
                    stride,
                })
            }
            MetricSpec::FrPlugin { name, command, polarity } => {
                check_command(name, command)?;
                Box::new(FrPlugin {
                    name: name.clone(),
                    command: command.clone(),
                    polarity: *polarity,
                })
            }
            MetricSpec::NrPlugin { name, command, polarity } => {
                check_command(name, command)?;
                Box::new(NrDifference {
                    inner: Box::new(NrPlugin {
                        name: name.clone(),
                        command: command.clone(),
                    }),
                    nr_polarity: *polarity,
                })
            }
        })
    }
}

fn check_command(name: &str, command: &[String]) -> Result<()> {
    if command.is_empty() {
        return Err(Error::InvalidInput(format!("plugin `{name}` has an empty command")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video_io::{ChromaFormat, Lineage};

    fn flat(id: &str, w: usize, h: usize, v: u16) -> VideoSequence {
        VideoSequence::from_luma(Lineage::source(id), vec![Plane::filled(w, h, v); 2], 8, ChromaFormat::Mono).unwrap()
    }

    fn input(v: &VideoSequence) -> VideoInput<'_> {
        VideoInput { path: Path::new("unused"), video: v }
    }

    #[test]
    fn ssim_of_flat_frames_is_the_luminance_term() {
        let (a, b) = (flat("a", 16, 12, 120), flat("b", 16, 12, 100));
        let c1 = (0.01f64 * 255.0).powi(2);
        let expected = (2.0 * 120.0 * 100.0 + c1) / (120.0f64.powi(2) + 100.0f64.powi(2) + c1);
        let got = Ssim.score(input(&a), input(&b)).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        assert!((Ssim.score(input(&a), input(&a)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_matches_direct_window_sum() {
        let w = 14;
        let h = 13;
        let pa = Plane::new(w, h, (0..w * h).map(|i| ((i * 37) % 251) as u16).collect());
        let pb = Plane::new(w, h, (0..w * h).map(|i| ((i * 37 + i % 5 * 9) % 251) as u16).collect());
        let k = gaussian_window();
        let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
        let mut total = 0.0;
        let mut count = 0.0;
        for oy in 0..=h - SSIM_WIN {
            for ox in 0..=w - SSIM_WIN {
                let (mut ux, mut uy, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for j in 0..SSIM_WIN {
                    for i in 0..SSIM_WIN {
                        let wt = k[i] * k[j];
                        let x = pa.at(ox + i, oy + j) as f64;
                        let y = pb.at(ox + i, oy + j) as f64;
                        ux += wt * x;
                        uy += wt * y;
                        xx += wt * x * x;
                        yy += wt * y * y;
                        xy += wt * x * y;
                    }
                }
                let (vx, vy, cov) = (xx - ux * ux, yy - uy * uy, xy - ux * uy);
                total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
                count += 1.0;
            }
        }
        assert!((ssim_plane(&pa, &pb, 255.0) - total / count).abs() < 1e-10);
    }

    #[test]
    fn psnr_of_uniform_offset() {
        let (a, b) = (flat("a", 8, 8, 100), flat("b", 8, 8, 102));
        let expected = 10.0 * (255.0f64 * 255.0 / 4.0).log10();
        assert!((Psnr::default().score(input(&a), input(&b)).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn nr_adapter_examples() {
        let (r, d) = (flat("r", 8, 8, 120), flat("d", 8, 8, 100));
        assert_eq!(nr_difference_adapter(&MeanLuma, input(&r), input(&d)).unwrap(), 20.0);
        assert_eq!(nr_difference_adapter(&MeanLuma, input(&r), input(&r)).unwrap(), 0.0);
    }

    #[test]
    fn plugin_output_parsing() {
        assert_eq!(parse_plugin_output("m", "log line\n 4.5 \n\n").unwrap(), 4.5);
        assert!(parse_plugin_output("m", "nan").is_err());
        assert!(parse_plugin_output("m", "").is_err());
    }
}
