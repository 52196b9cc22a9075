//! Weak rank labels from a proxy metric.
//!
//! Every transcoded patch is scored against its pristine source, as is the
//! reference patch it was cut alongside. The drop between the two,
//! `Q̂ = proxy(S, R) − proxy(S, D)`, is the degradation the transcode added.
//! Two pairings become a training instance when their `Q̂` values differ by
//! more than a mode-specific threshold.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec_pipeline::{run_command, CorpusManifest};
use crate::error::{Error, IoContext, Result};
use crate::util::derive_seed;
use crate::video_io::{
    load_sequence, sample_origins, Lineage, Patch, PatchGeometry, PatchPairing, PatchStore,
    PatchStoreWriter, Role, StoreMeta, Triplet, VideoSequence,
};

/// A full-reference metric used only to generate labels.
pub trait ProxyScorer: Sync {
    fn name(&self) -> &str;

    /// Score of a perfect reproduction.
    fn perfect_score(&self) -> f64;

    /// Per-frame scores of `test` against `reference`, higher is better.
    fn frame_scores(&self, reference: &Patch, test: &Patch) -> Result<Vec<f64>>;
}

/// Luma PSNR per frame, capped so identical frames score the cap.
#[derive(Debug, Clone, Copy)]
pub struct PsnrScorer {
    pub cap_db: f64,
}

impl Default for PsnrScorer {
    fn default() -> Self {
        PsnrScorer { cap_db: 100.0 }
    }
}

pub(crate) fn psnr_from_mse(mse: f64, max: f64, cap: f64) -> f64 {
    if mse <= 0.0 {
        cap
    } else {
        (10.0 * (max * max / mse).log10()).min(cap)
    }
}

impl ProxyScorer for PsnrScorer {
    fn name(&self) -> &str {
        "psnr"
    }

    fn perfect_score(&self) -> f64 {
        self.cap_db
    }

    fn frame_scores(&self, reference: &Patch, test: &Patch) -> Result<Vec<f64>> {
        let max = reference.max_sample();
        Ok((0..reference.geometry.frames)
            .map(|t| {
                let (a, b) = (reference.frame(t), test.frame(t));
                let sse: f64 = a
                    .iter()
                    .zip(b)
                    .map(|(&x, &y)| {
                        let d = x as f64 - y as f64;
                        d * d
                    })
                    .sum();
                psnr_from_mse(sse / a.len() as f64, max, self.cap_db)
            })
            .collect())
    }
}

/// Runs the libvmaf command-line tool on patches written out as standalone
/// Y4M clips.
#[derive(Debug, Clone)]
pub struct VmafScorer {
    /// Whitespace-separated argv with `{reference}`, `{distorted}` and
    /// `{output}` placeholders; the tool must write its JSON log to `{output}`.
    pub command: String,
    pub work_dir: PathBuf,
}

impl VmafScorer {
    pub const DEFAULT_COMMAND: &'static str =
        "vmaf --reference {reference} --distorted {distorted} --output {output} --json --quiet";

    pub fn new(work_dir: PathBuf) -> Self {
        VmafScorer {
            command: Self::DEFAULT_COMMAND.to_string(),
            work_dir,
        }
    }
}

/// Extracts `frames[*].metrics.vmaf` from a libvmaf JSON log.
pub fn parse_vmaf_json(text: &str) -> Result<Vec<f64>> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    let frames = v
        .get("frames")
        .and_then(|f| f.as_array())
        .ok_or_else(|| Error::Scorer("VMAF log has no `frames` array".into()))?;
    frames
        .iter()
        .map(|f| {
            f.pointer("/metrics/vmaf")
                .and_then(|s| s.as_f64())
                .ok_or_else(|| Error::Scorer("VMAF frame without metrics.vmaf".into()))
        })
        .collect()
}

impl ProxyScorer for VmafScorer {
    fn name(&self) -> &str {
        "vmaf"
    }

    fn perfect_score(&self) -> f64 {
        100.0
    }

    fn frame_scores(&self, reference: &Patch, test: &Patch) -> Result<Vec<f64>> {
        fs::create_dir_all(&self.work_dir).at(&self.work_dir)?;
        let stem = format!(
            "{}_{}_{}_{}_{:x}",
            test.origin.sequence_id.replace(['/', '\\'], "_"),
            test.origin.frame_offset,
            test.origin.y,
            test.origin.x,
            crate::util::stable_hash(&reference.origin.sequence_id)
        );
        let ref_path = self.work_dir.join(format!("{stem}_ref.y4m"));
        let dist_path = self.work_dir.join(format!("{stem}_dist.y4m"));
        let out_path = self.work_dir.join(format!("{stem}.json"));
        crate::video_io::write_y4m(&reference.to_sequence(Lineage::source("ref"))?, &ref_path)?;
        crate::video_io::write_y4m(&test.to_sequence(Lineage::source("dist"))?, &dist_path)?;
        let argv: Vec<String> = self
            .command
            .split_whitespace()
            .map(|t| {
                t.replace("{reference}", &ref_path.display().to_string())
                    .replace("{distorted}", &dist_path.display().to_string())
                    .replace("{output}", &out_path.display().to_string())
            })
            .collect();
        let result = run_command(&argv)
            .map_err(|e| Error::Scorer(e.to_string()))
            .and_then(|_| fs::read_to_string(&out_path).at(&out_path))
            .and_then(|text| parse_vmaf_json(&text));
        for p in [&ref_path, &dist_path, &out_path] {
            let _ = fs::remove_file(p);
        }
        result
    }
}

/// Proxy score of `test` against the co-located pristine `src` patch, mean
/// pooled over the patch's frames.
pub fn compute_proxy(src: &Patch, test: &Patch, scorer: &dyn ProxyScorer) -> Result<f64> {
    if src.geometry != test.geometry || src.bit_depth != test.bit_depth {
        return Err(Error::Geometry(format!(
            "proxy inputs differ: {:?}/{}-bit vs {:?}/{}-bit",
            src.geometry, src.bit_depth, test.geometry, test.bit_depth
        )));
    }
    if src.origin.position() != test.origin.position() {
        return Err(Error::Geometry("proxy inputs are not co-located".into()));
    }
    let scores = scorer.frame_scores(src, test)?;
    if scores.is_empty() || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Scorer(format!("{} returned no usable frame scores", scorer.name())));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Degradation added by transcoding, in proxy units.
#[inline]
pub fn delta_quality(score_src_ref: f64, score_src_dist: f64) -> f64 {
    score_src_ref - score_src_dist
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyAnnotation {
    pub pairing_id: String,
    pub score_src_ref: f64,
    pub score_src_dist: f64,
    pub delta: f64,
}

impl ProxyAnnotation {
    pub fn new(pairing_id: &str, score_src_ref: f64, score_src_dist: f64) -> Self {
        ProxyAnnotation {
            pairing_id: pairing_id.to_string(),
            score_src_ref,
            score_src_dist,
            delta: delta_quality(score_src_ref, score_src_dist),
        }
    }
}

/// Scores both halves of a pairing against its source crop.
pub fn annotate(pairing: &PatchPairing, scorer: &dyn ProxyScorer) -> Result<ProxyAnnotation> {
    let src = pairing.src_patch.as_ref().ok_or_else(|| {
        Error::InvalidInput(format!("pairing `{}` has no source patch to label against", pairing.id))
    })?;
    Ok(ProxyAnnotation::new(
        &pairing.id,
        compute_proxy(src, &pairing.ref_patch, scorer)?,
        compute_proxy(src, &pairing.dist_patch, scorer)?,
    ))
}

/// Outcome of gating a pair of `Q̂` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankOutcome {
    /// The first pairing is more degraded.
    One,
    /// The second pairing is more degraded.
    Zero,
    Excluded,
}

impl RankOutcome {
    pub fn label(self) -> Option<u8> {
        match self {
            RankOutcome::One => Some(1),
            RankOutcome::Zero => Some(0),
            RankOutcome::Excluded => None,
        }
    }
}

/// 1 when `delta_1 − delta_2 > sigma`, 0 when it is `< −sigma`, excluded
/// otherwise.
pub fn rank_label(delta_1: f64, delta_2: f64, sigma: f64) -> RankOutcome {
    let d = delta_1 - delta_2;
    if d > sigma {
        RankOutcome::One
    } else if d < -sigma {
        RankOutcome::Zero
    } else {
        RankOutcome::Excluded
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankThresholds {
    pub sigma_ss: f64,
    pub sigma_ds: f64,
}

impl RankThresholds {
    pub fn new(sigma_ss: f64, sigma_ds: f64) -> Result<Self> {
        if !(sigma_ss >= 0.0 && sigma_ds >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "thresholds must be non-negative (got {sigma_ss}, {sigma_ds})"
            )));
        }
        Ok(RankThresholds { sigma_ss, sigma_ds })
    }

    pub fn for_mode(&self, mode: PairingMode) -> f64 {
        match mode {
            PairingMode::SingleSource => self.sigma_ss,
            PairingMode::DualSource => self.sigma_ds,
        }
    }
}

impl Default for RankThresholds {
    /// 0 for single-source pairs, 6 for dual-source pairs (VMAF units).
    fn default() -> Self {
        RankThresholds {
            sigma_ss: 0.0,
            sigma_ds: 6.0,
        }
    }
}

/// Whether both pairings of an instance share a distorted reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairingMode {
    #[serde(rename = "SS")]
    SingleSource,
    #[serde(rename = "DS")]
    DualSource,
}

impl PairingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PairingMode::SingleSource => "SS",
            PairingMode::DualSource => "DS",
        }
    }
}

/// What the model sees: reference and transcoded crops, never the source.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPairing {
    pub id: String,
    pub ref_patch: Patch,
    pub dist_patch: Patch,
}

impl From<PatchPairing> for TrainingPairing {
    fn from(p: PatchPairing) -> Self {
        TrainingPairing {
            id: p.id,
            ref_patch: p.ref_patch,
            dist_patch: p.dist_patch,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingInstance {
    pub id: String,
    pub pairing_1: Arc<TrainingPairing>,
    pub pairing_2: Arc<TrainingPairing>,
    /// 1 when pairing 1 is the more degraded of the two.
    pub rank_label: u8,
    pub mode: PairingMode,
    pub delta_1: f64,
    pub delta_2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelingConfig {
    pub geometry: PatchGeometry,
    pub patches_per_sequence: usize,
    pub thresholds: RankThresholds,
    pub ss_fraction: f64,
    pub seed: u64,
    /// Candidate instances drawn per labeled pairing.
    pub candidates_per_pairing: usize,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig {
            geometry: PatchGeometry::default(),
            patches_per_sequence: 8,
            thresholds: RankThresholds::default(),
            ss_fraction: 0.8,
            seed: 0,
            candidates_per_pairing: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelingReport {
    pub pairings: usize,
    pub candidates: usize,
    pub candidate_ss_fraction: f64,
    pub excluded: usize,
    pub instances: usize,
    pub realized_ss_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub meta: StoreMeta,
    pub instances: Vec<TrainingInstance>,
    pub report: LabelingReport,
}

struct Annotated {
    pairing: Arc<TrainingPairing>,
    delta: f64,
}

/// Labeled pairings of one reference: `grid[origin][transcode]`.
struct RefGroup {
    grid: Vec<Vec<Annotated>>,
}

impl RefGroup {
    fn transcodes(&self) -> usize {
        self.grid.first().map_or(0, Vec::len)
    }
}

fn load_entry(manifest: &CorpusManifest, id: &str, role: Role) -> Result<VideoSequence> {
    let entry = manifest
        .get(id)
        .ok_or_else(|| Error::InvalidInput(format!("`{id}` is not in the manifest")))?;
    let lineage = match &entry.parent_id {
        Some(p) => Lineage::child(&entry.id, role, p),
        None => Lineage::source(&entry.id),
    };
    let path = manifest.resolve(entry);
    if !path.exists() {
        return Err(Error::InvalidInput(format!(
            "{role} `{id}` is missing at {}",
            path.display()
        )));
    }
    load_sequence(&path, None, lineage)
}

fn label_reference(
    manifest: &CorpusManifest,
    ref_id: &str,
    cfg: &LabelingConfig,
    scorer: &dyn ProxyScorer,
) -> Result<RefGroup> {
    let r_entry = manifest.get(ref_id).expect("reference comes from the manifest");
    let src_id = r_entry
        .parent_id
        .as_deref()
        .ok_or_else(|| Error::InvalidInput(format!("reference `{ref_id}` has no source")))?;
    let source = load_entry(manifest, src_id, Role::Source)?;
    let reference = load_entry(manifest, ref_id, Role::Reference)?;
    let transcodes = manifest
        .children(ref_id)
        .map(|d| load_entry(manifest, &d.id, Role::Transcoded))
        .collect::<Result<Vec<_>>>()?;
    let origins = sample_origins(
        (reference.num_frames(), reference.height, reference.width),
        cfg.patches_per_sequence,
        derive_seed(cfg.seed, ref_id),
        cfg.geometry,
    )?;
    let mut grid = Vec::with_capacity(origins.len());
    for &(t, y, x) in &origins {
        let mut row = Vec::with_capacity(transcodes.len());
        for dist in &transcodes {
            let triplet = Triplet {
                source: Some(&source),
                reference: &reference,
                transcoded: dist,
            };
            crate::video_io::check_codimension(&source, &reference)?;
            crate::video_io::check_codimension(&reference, dist)?;
            let pairing = PatchPairing {
                id: PatchPairing::make_id(&dist.id, t, y, x),
                ref_patch: crate::video_io::extract_patch(triplet.reference, cfg.geometry, t, x, y)?,
                dist_patch: crate::video_io::extract_patch(dist, cfg.geometry, t, x, y)?,
                src_patch: Some(crate::video_io::extract_patch(&source, cfg.geometry, t, x, y)?),
            };
            let ann = annotate(&pairing, scorer)?;
            row.push(Annotated {
                pairing: Arc::new(pairing.into()),
                delta: ann.delta,
            });
        }
        grid.push(row);
    }
    Ok(RefGroup { grid })
}

/// Labels a corpus into Siamese training instances.
///
/// Candidates are drawn with probability `ss_fraction` of being single-source
/// (two transcodes of one reference at the same crop position) and otherwise
/// dual-source (crops from two different references). Each candidate is gated
/// with the threshold for its mode and dropped when excluded.
pub fn build_training_set(
    manifest: &CorpusManifest,
    cfg: &LabelingConfig,
    scorer: &dyn ProxyScorer,
) -> Result<TrainingSet> {
    manifest.validate()?;
    if !(0.0..=1.0).contains(&cfg.ss_fraction) {
        return Err(Error::InvalidInput(format!("ss_fraction {} outside [0, 1]", cfg.ss_fraction)));
    }
    RankThresholds::new(cfg.thresholds.sigma_ss, cfg.thresholds.sigma_ds)?;
    let ref_ids: Vec<&str> = manifest
        .with_role(Role::Reference)
        .filter(|r| manifest.children(&r.id).next().is_some())
        .map(|r| r.id.as_str())
        .collect();
    let groups = ref_ids
        .par_iter()
        .map(|id| label_reference(manifest, id, cfg, scorer))
        .collect::<Result<Vec<_>>>()?;
    let groups: Vec<RefGroup> = groups.into_iter().filter(|g| !g.grid.is_empty()).collect();

    let bit_depth = groups
        .first()
        .and_then(|g| g.grid.first())
        .and_then(|row| row.first())
        .map(|a| a.pairing.ref_patch.bit_depth)
        .ok_or_else(|| Error::EmptyDataset("the manifest yields no labeled pairings".into()))?;
    let pairings: usize = groups.iter().map(|g| g.grid.len() * g.transcodes()).sum();

    let ss_groups: Vec<usize> = (0..groups.len()).filter(|&i| groups[i].transcodes() >= 2).collect();
    let ds_possible = groups.len() >= 2;
    if ss_groups.is_empty() && !ds_possible {
        return Err(Error::EmptyDataset(
            "need a reference with two transcodes or two references to form instances".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "candidates"));
    let n_candidates = pairings * cfg.candidates_per_pairing;
    let mut instances = Vec::new();
    let mut ss_candidates = 0usize;
    let mut seen = HashSet::new();
    for _ in 0..n_candidates {
        let want_ss = rng.random::<f64>() < cfg.ss_fraction;
        let mode = match (want_ss, ss_groups.is_empty(), ds_possible) {
            (true, false, _) | (false, false, false) => PairingMode::SingleSource,
            _ => PairingMode::DualSource,
        };
        let (a, b) = match mode {
            PairingMode::SingleSource => {
                ss_candidates += 1;
                let g = &groups[ss_groups[rng.random_range(0..ss_groups.len())]];
                let row = &g.grid[rng.random_range(0..g.grid.len())];
                let i = rng.random_range(0..row.len());
                let mut j = rng.random_range(0..row.len() - 1);
                if j >= i {
                    j += 1;
                }
                (&row[i], &row[j])
            }
            PairingMode::DualSource => {
                let gi = rng.random_range(0..groups.len());
                let mut gj = rng.random_range(0..groups.len() - 1);
                if gj >= gi {
                    gj += 1;
                }
                let mut pick = |g: &'_ RefGroup| {
                    let row = rng.random_range(0..g.grid.len());
                    let col = rng.random_range(0..g.transcodes());
                    (row, col)
                };
                let (ri, ci) = pick(&groups[gi]);
                let (rj, cj) = pick(&groups[gj]);
                (&groups[gi].grid[ri][ci], &groups[gj].grid[rj][cj])
            }
        };
        let Some(label) = rank_label(a.delta, b.delta, cfg.thresholds.for_mode(mode)).label() else {
            continue;
        };
        if !seen.insert((a.pairing.id.clone(), b.pairing.id.clone())) {
            continue;
        }
        instances.push(TrainingInstance {
            id: format!("inst{:07}", instances.len()),
            pairing_1: Arc::clone(&a.pairing),
            pairing_2: Arc::clone(&b.pairing),
            rank_label: label,
            mode,
            delta_1: a.delta,
            delta_2: b.delta,
        });
    }

    let kept_ss = instances
        .iter()
        .filter(|i| i.mode == PairingMode::SingleSource)
        .count();
    let report = LabelingReport {
        pairings,
        candidates: n_candidates,
        candidate_ss_fraction: ss_candidates as f64 / n_candidates.max(1) as f64,
        excluded: n_candidates - instances.len(),
        instances: instances.len(),
        realized_ss_fraction: kept_ss as f64 / instances.len().max(1) as f64,
    };
    info!(
        "labeling: {} pairings, {} candidates, {} instances (SS fraction {:.3})",
        report.pairings, report.candidates, report.instances, report.realized_ss_fraction
    );
    if instances.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "all {n_candidates} candidates excluded by thresholds (σ_ss = {}, σ_ds = {})",
            cfg.thresholds.sigma_ss, cfg.thresholds.sigma_ds
        )));
    }
    Ok(TrainingSet {
        meta: StoreMeta {
            geometry: cfg.geometry,
            bit_depth,
        },
        instances,
        report,
    })
}

pub const INSTANCES_FILE: &str = "instances.csv";
pub const REPORT_FILE: &str = "labeling.json";

#[derive(Debug, Serialize, Deserialize)]
struct InstanceRow {
    instance_id: String,
    pairing_1_id: String,
    pairing_2_id: String,
    mode: PairingMode,
    r: u8,
    delta_1: f64,
    delta_2: f64,
}

/// Persists a training set as a patch store plus `instances.csv`.
pub fn write_training_set(dir: &Path, set: &TrainingSet) -> Result<()> {
    let mut store = PatchStoreWriter::create(dir, set.meta)?;
    let mut written = HashSet::new();
    let mut index = csv::Writer::from_path(dir.join(INSTANCES_FILE))?;
    for inst in &set.instances {
        for p in [&inst.pairing_1, &inst.pairing_2] {
            if written.insert(p.id.clone()) {
                store.push(&PatchPairing {
                    id: p.id.clone(),
                    ref_patch: p.ref_patch.clone(),
                    dist_patch: p.dist_patch.clone(),
                    src_patch: None,
                })?;
            }
        }
        index.serialize(InstanceRow {
            instance_id: inst.id.clone(),
            pairing_1_id: inst.pairing_1.id.clone(),
            pairing_2_id: inst.pairing_2.id.clone(),
            mode: inst.mode,
            r: inst.rank_label,
            delta_1: inst.delta_1,
            delta_2: inst.delta_2,
        })?;
    }
    index.flush().at(dir.join(INSTANCES_FILE))?;
    store.finish()?;
    let report = dir.join(REPORT_FILE);
    fs::write(&report, serde_json::to_vec_pretty(&set.report)?).at(&report)
}

pub fn read_training_set(dir: &Path) -> Result<TrainingSet> {
    let store = PatchStore::open(dir)?;
    let mut cache: std::collections::HashMap<String, Arc<TrainingPairing>> = Default::default();
    let mut get = |id: &str| -> Result<Arc<TrainingPairing>> {
        if let Some(p) = cache.get(id) {
            return Ok(Arc::clone(p));
        }
        let p = Arc::new(TrainingPairing::from(store.pairing(id)?));
        cache.insert(id.to_string(), Arc::clone(&p));
        Ok(p)
    };
    let mut instances = Vec::new();
    for row in csv::Reader::from_path(dir.join(INSTANCES_FILE))?.deserialize() {
        let row: InstanceRow = row?;
        if row.r > 1 {
            return Err(Error::InvalidInput(format!("instance `{}` has label {}", row.instance_id, row.r)));
        }
        instances.push(TrainingInstance {
            pairing_1: get(&row.pairing_1_id)?,
            pairing_2: get(&row.pairing_2_id)?,
            id: row.instance_id,
            rank_label: row.r,
            mode: row.mode,
            delta_1: row.delta_1,
            delta_2: row.delta_2,
        });
    }
    let report_path = dir.join(REPORT_FILE);
    let report = if report_path.exists() {
        serde_json::from_slice(&fs::read(&report_path).at(&report_path)?)?
    } else {
        LabelingReport::default()
    };
    Ok(TrainingSet {
        meta: store.meta,
        instances,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video_io::PatchOrigin;
    use proptest::prelude::*;

    fn patch(values: Vec<u16>, g: PatchGeometry) -> Patch {
        Patch {
            data: values,
            origin: PatchOrigin { sequence_id: "x".into(), frame_offset: 0, x: 0, y: 0 },
            geometry: g,
            bit_depth: 8,
        }
    }

    #[test]
    fn identical_patch_scores_perfect() {
        let g = PatchGeometry::new(2, 4, 4);
        let p = patch((0..32).map(|i| i * 7).collect(), g);
        let s = PsnrScorer::default();
        assert_eq!(compute_proxy(&p, &p, &s).unwrap(), s.perfect_score());
    }

    #[test]
    fn constant_offset_psnr() {
        let g = PatchGeometry::new(3, 8, 8);
        let src = patch(vec![100; g.len()], g);
        let test = patch(vec![102; g.len()], g);
        let score = compute_proxy(&src, &test, &PsnrScorer::default()).unwrap();
        let expected = 20.0 * (255.0f64 / 2.0).log10();
        assert!((score - expected).abs() < 1e-12);
        assert!((score - 42.11).abs() < 0.01);
    }

    #[test]
    fn dimension_mismatch() {
        let src = patch(vec![0; 32], PatchGeometry::new(2, 4, 4));
        let test = patch(vec![0; 16], PatchGeometry::new(1, 4, 4));
        assert!(matches!(compute_proxy(&src, &test, &PsnrScorer::default()), Err(Error::Geometry(_))));
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta_quality(90.0, 70.0), 20.0);
        assert_eq!(delta_quality(55.5, 55.5), 0.0);
        assert_eq!(delta_quality(70.0, 90.0), -20.0);
    }

    #[test]
    fn rank_label_examples() {
        assert_eq!(rank_label(10.0, 3.0, 6.0), RankOutcome::One);
        assert_eq!(rank_label(5.0, 5.0, 0.0), RankOutcome::Excluded);
        assert_eq!(rank_label(3.0, 10.0, 6.0), RankOutcome::Zero);
        assert_eq!(rank_label(3.0, 9.0, 6.0), RankOutcome::Excluded);
    }

    #[test]
    fn negative_thresholds_rejected() {
        assert!(RankThresholds::new(-1.0, 6.0).is_err());
        assert!(RankThresholds::new(0.0, f64::NAN).is_err());
    }

    #[test]
    fn vmaf_log_parsing() {
        let text = r#"{"version":"2.3.1","frames":[{"frameNum":0,"metrics":{"integer_adm2":0.9,"vmaf":97.5}},
            {"frameNum":1,"metrics":{"vmaf":95.5}}],"pooled_metrics":{"vmaf":{"mean":96.5}}}"#;
        assert_eq!(parse_vmaf_json(text).unwrap(), vec![97.5, 95.5]);
        assert!(parse_vmaf_json(r#"{"frames":[{"metrics":{}}]}"#).is_err());
    }

    proptest! {
        #[test]
        fn labels_are_antisymmetric(a in -200.0f64..200.0, b in -200.0f64..200.0, s in 0.0f64..20.0) {
            let ab = rank_label(a, b, s);
            let ba = rank_label(b, a, s);
            prop_assert_eq!(ab == RankOutcome::One, ba == RankOutcome::Zero);
            prop_assert_eq!(ab == RankOutcome::Excluded, ba == RankOutcome::Excluded);
        }

        #[test]
        fn per_source_offset_leaves_label_unchanged(
            s in (0.0f64..100.0, 0.0f64..100.0, 0.0f64..100.0, 0.0f64..100.0),
            c1 in -50.0f64..50.0, c2 in -50.0f64..50.0, sigma in 0.0f64..10.0,
        ) {
            let (r1, d1, r2, d2) = s;
            // integer-valued scores keep the shifted subtraction exact
            let (r1, d1, r2, d2, c1, c2) = (r1.round(), d1.round(), r2.round(), d2.round(), c1.round(), c2.round());
            let base = rank_label(delta_quality(r1, d1), delta_quality(r2, d2), sigma);
            let shifted = rank_label(delta_quality(r1 + c1, d1 + c1), delta_quality(r2 + c2, d2 + c2), sigma);
            prop_assert_eq!(base, shifted);
        }
    }
}
