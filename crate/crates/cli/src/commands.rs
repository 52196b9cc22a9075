use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use transvqa::aggregation::{train_aggregator, AggregatorModel, SubjectiveSequence};
use transvqa::calibration::{
    default_bin_edges, ranking_accuracy_curve, select_threshold, Polarity, SubjectiveEntry,
};
use transvqa::codec_pipeline::{
    build_corpus, CorpusManifest, Encoder, ExternalEncoder, PipelineContext, StubEncoder, FAILURE_LOG, MANIFEST_FILE,
};
use transvqa::evaluation::{read_benchmark_csv, run_benchmark, BenchmarkConfig, FrMetric, MetricSpec};
use transvqa::inference::score_sequence;
use transvqa::model::{train, PatchQualityModel};
use transvqa::plot::line_svg;
use transvqa::proxy::{
    build_training_set, compute_proxy, read_training_set, write_training_set, ProxyScorer, PsnrScorer, VmafScorer,
};
use transvqa::synthetic::{make_synthetic_corpus, SyntheticSpec, BENCHMARK_FILE, GROUND_TRUTH_FILE};
use transvqa::video_io::{extract_patch, tile_layout, Patch};
use transvqa::{load_sequence, Lineage, PatchGeometry, RawGeometry, Role, TileStride, VideoSequence};

use crate::config::{EncoderKind, ProxyKind, ProxySection};
use crate::run::RUN_MANIFEST_FILE;
use crate::{
    CalibrateArgs, Context, EvaluateArgs, LabelArgs, PolarityArg, ScoreArgs, SelftestArgs, SynthCorpusArgs,
    TrainPqanetArgs, TrainStanetArgs, UsageError,
};

/// What a command produced and where its run manifest goes.
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub run_manifest: Option<PathBuf>,
}

impl Outcome {
    fn in_dir(dir: &Path, outputs: Vec<PathBuf>) -> Self {
        Outcome {
            outputs,
            run_manifest: Some(dir.join(RUN_MANIFEST_FILE)),
        }
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn read_source_list(list: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(list).with_context(|| format!("cannot read {}", list.display()))?;
    let base = list.parent().unwrap_or(Path::new("."));
    let sources: Vec<PathBuf> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = PathBuf::from(l);
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        })
        .collect();
    if sources.is_empty() {
        bail!("{} lists no sources", list.display());
    }
    Ok(sources)
}

pub fn synth_corpus(ctx: &Context, a: &SynthCorpusArgs) -> Result<Outcome> {
    create_dir(&a.out)?;
    if a.synthetic {
        let m = make_synthetic_corpus(&a.out, &ctx.cfg.synthetic)?;
        println!(
            "{} sources, {} references, {} transcodes in {}",
            m.count(Role::Source),
            m.count(Role::Reference),
            m.count(Role::Transcoded),
            a.out.display()
        );
        let outputs = [MANIFEST_FILE, GROUND_TRUTH_FILE, BENCHMARK_FILE].map(|f| a.out.join(f)).to_vec();
        return Ok(Outcome::in_dir(&a.out, outputs));
    }
    let list = a.sources.as_deref().ok_or_else(|| usage("--sources or --synthetic is required"))?;
    let sources = read_source_list(list)?;
    let corpus = &ctx.cfg.corpus;
    let registry = corpus.registry();
    let encoder: Box<dyn Encoder> = match a.encoder.unwrap_or(corpus.encoder) {
        EncoderKind::Stub => Box::new(StubEncoder::new()),
        EncoderKind::External => Box::new(ExternalEncoder::new(registry.clone())),
    };
    let pctx = PipelineContext {
        corpus_root: a.out.clone(),
        encoder: encoder.as_ref(),
        registry: &registry,
        jobs: ctx.jobs,
    };
    let report = build_corpus(&sources, &corpus.references, &corpus.transcodes, &pctx)?;
    let m = &report.manifest;
    for f in &report.failures {
        warn!("{} (from {}): {}", f.id, f.parent_id, f.error);
    }
    println!(
        "{} sources, {} references, {} transcodes ({} encoded, {} reused, {} failed)",
        m.count(Role::Source),
        m.count(Role::Reference),
        m.count(Role::Transcoded),
        report.encoded,
        report.reused,
        report.failures.len()
    );
    if m.count(Role::Transcoded) == 0 {
        bail!("no transcodes were produced; see {}", a.out.join(FAILURE_LOG).display());
    }
    let mut outputs = vec![a.out.join(MANIFEST_FILE)];
    if !report.failures.is_empty() {
        outputs.push(a.out.join(FAILURE_LOG));
    }
    Ok(Outcome::in_dir(&a.out, outputs))
}

fn proxy_scorer(section: &ProxySection, kind: ProxyKind, work_dir: &Path) -> Box<dyn ProxyScorer> {
    match kind {
        ProxyKind::Psnr => Box::new(PsnrScorer {
            cap_db: section.psnr_cap_db,
        }),
        ProxyKind::Vmaf => Box::new(VmafScorer {
            command: section.vmaf_command.clone(),
            work_dir: work_dir.to_path_buf(),
        }),
    }
}

pub fn label(ctx: &Context, a: &LabelArgs) -> Result<Outcome> {
    let manifest = CorpusManifest::read(&a.manifest)?;
    let mut cfg = ctx.cfg.label.clone();
    if let Some(v) = a.sigma_ss {
        cfg.thresholds.sigma_ss = v;
    }
    if let Some(v) = a.sigma_ds {
        cfg.thresholds.sigma_ds = v;
    }
    if let Some(v) = a.ss_fraction {
        cfg.ss_fraction = v;
    }
    if let Some(v) = a.patches_per_sequence {
        cfg.patches_per_sequence = v;
    }
    if let Some(g) = a.patch {
        cfg.geometry = g;
    }
    create_dir(&a.out)?;
    let work = tempfile::tempdir()?;
    let scorer = proxy_scorer(&ctx.cfg.proxy, a.proxy.unwrap_or(ctx.cfg.proxy.kind), work.path());
    let set = build_training_set(&manifest, &cfg, scorer.as_ref())?;
    write_training_set(&a.out, &set)?;
    let r = &set.report;
    println!(
        "{} instances from {} pairings ({} candidates, {} excluded, {:.3} single-source)",
        r.instances, r.pairings, r.candidates, r.excluded, r.realized_ss_fraction
    );
    Ok(Outcome::in_dir(&a.out, vec![a.out.clone()]))
}

#[derive(Debug, Deserialize)]
struct EntryRow {
    reference_id: String,
    distorted_id: String,
    score: f64,
    #[serde(default)]
    qhat: Option<f64>,
}

fn whole(seq: &VideoSequence) -> Result<Patch> {
    let g = PatchGeometry::new(seq.num_frames(), seq.height, seq.width);
    Ok(extract_patch(seq, g, 0, 0, 0)?)
}

fn load_entry(m: &CorpusManifest, id: &str) -> Result<VideoSequence> {
    let e = m.get(id).ok_or_else(|| anyhow!("`{id}` is not in the manifest"))?;
    Ok(load_sequence(&m.resolve(e), None, Lineage::source(id))?)
}

/// Sequence-level `proxy(S, R) − proxy(S, D)` for a transcode in the corpus.
fn sequence_qhat(m: &CorpusManifest, distorted_id: &str, scorer: &dyn ProxyScorer) -> Result<f64> {
    let parent = |id: &str| -> Result<String> {
        m.get(id)
            .and_then(|e| e.parent_id.clone())
            .ok_or_else(|| anyhow!("`{id}` has no parent in the manifest"))
    };
    let ref_id = parent(distorted_id)?;
    let src_id = parent(&ref_id)?;
    let (s, r, d) = (load_entry(m, &src_id)?, load_entry(m, &ref_id)?, load_entry(m, distorted_id)?);
    let (s, r, d) = (whole(&s)?, whole(&r)?, whole(&d)?);
    Ok(compute_proxy(&s, &r, scorer)? - compute_proxy(&s, &d, scorer)?)
}

pub fn calibrate(ctx: &Context, a: &CalibrateArgs) -> Result<Outcome> {
    let section = &ctx.cfg.calibrate;
    let target = a.target.unwrap_or(section.target);
    let polarity = match a.polarity {
        Some(PolarityArg::Mos) => Polarity::Mos,
        Some(PolarityArg::Dmos) => Polarity::Dmos,
        None => section.polarity,
    };
    let rows: Vec<EntryRow> = csv::Reader::from_path(&a.entries)
        .with_context(|| format!("cannot read {}", a.entries.display()))?
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("malformed entries in {}", a.entries.display()))?;
    let manifest = match &a.manifest {
        Some(p) => Some(CorpusManifest::read(p)?),
        None if rows.iter().any(|r| r.qhat.is_none()) => {
            return Err(usage("some entries have no qhat; pass --manifest to compute it"))
        }
        None => None,
    };
    let work = tempfile::tempdir()?;
    let scorer = proxy_scorer(&ctx.cfg.proxy, ctx.cfg.proxy.kind, work.path());
    let entries = rows
        .into_par_iter()
        .map(|r| -> Result<SubjectiveEntry> {
            let qhat = match (r.qhat, &manifest) {
                (Some(q), _) => q,
                (None, Some(m)) => sequence_qhat(m, &r.distorted_id, scorer.as_ref())?,
                (None, None) => unreachable!(),
            };
            Ok(SubjectiveEntry {
                reference_id: r.reference_id,
                distorted_id: r.distorted_id,
                subjective: r.score,
                qhat,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let edges = section.bin_edges.clone().unwrap_or_else(default_bin_edges);
    let curve = ranking_accuracy_curve(&entries, polarity, a.mode.pairing(), &edges)?;
    create_dir(&a.out)?;
    let tag = a.mode.as_str();
    let csv_path = a.out.join(format!("curve_{tag}.csv"));
    curve.write_csv(&csv_path)?;
    let points: Vec<(f64, f64)> = curve
        .accuracy_per_bin
        .iter()
        .enumerate()
        .filter_map(|(i, acc)| acc.map(|v| (curve.bin_edges[i], v)))
        .collect();
    let x_max = points.last().map_or(1.0, |p| p.0);
    let svg = line_svg(
        &format!("ranking accuracy ({tag})"),
        "|ΔQ̂| bin lower edge",
        "accuracy",
        &[
            ("accuracy".into(), points),
            (format!("target {target}"), vec![(0.0, target), (x_max, target)]),
        ],
    );
    let svg_path = a.out.join(format!("curve_{tag}.svg"));
    fs::write(&svg_path, svg)?;
    let mut outputs = vec![csv_path, svg_path];

    let sigma = select_threshold(&curve, target);
    #[derive(Serialize)]
    struct Threshold<'a> {
        mode: &'a str,
        target: f64,
        sigma: Option<f64>,
        trials: usize,
    }
    let json_path = a.out.join(format!("threshold_{tag}.json"));
    let record = Threshold {
        mode: tag,
        target,
        sigma: sigma.as_ref().ok().copied(),
        trials: curve.total_trials(),
    };
    fs::write(&json_path, serde_json::to_vec_pretty(&record)?)?;
    outputs.push(json_path);
    let sigma = sigma?;
    println!("sigma_{tag} = {sigma} ({} trials, target {target})", curve.total_trials());
    Ok(Outcome::in_dir(&a.out, outputs))
}

pub fn train_pqanet(ctx: &Context, a: &TrainPqanetArgs) -> Result<Outcome> {
    let set = read_training_set(&a.dataset)?;
    let mut cfg = ctx.cfg.train.clone();
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    let backbone = ctx.cfg.backbone.build(set.meta.geometry, set.meta.bit_depth);
    create_dir(&a.out)?;
    let out = train(&set.instances, &cfg, backbone, Some(&a.out))?;
    let last = out.log.last().ok_or_else(|| anyhow!("training ran no epochs"))?;
    println!(
        "{} epochs on {} instances ({} held out): loss {:.4}, held-out accuracy {}",
        out.log.len(),
        out.train_size,
        out.heldout_size,
        last.mean_loss,
        last.heldout_rank_accuracy.map_or("n/a".into(), |v| format!("{v:.3}"))
    );
    Ok(Outcome::in_dir(&a.out, vec![a.out.clone()]))
}

fn load_pair(reference: &Path, dist: &Path, raw: Option<&RawGeometry>) -> Result<(VideoSequence, VideoSequence)> {
    let (rid, did) = (stem(reference), stem(dist));
    let r = load_sequence(reference, raw, Lineage::child(rid.clone(), Role::Reference, "source"))
        .with_context(|| format!("loading {}", reference.display()))?;
    let d = load_sequence(dist, raw, Lineage::child(did, Role::Transcoded, rid))
        .with_context(|| format!("loading {}", dist.display()))?;
    Ok((r, d))
}

pub fn train_stanet(ctx: &Context, a: &TrainStanetArgs) -> Result<Outcome> {
    let raw = a.raw.geometry()?;
    let entries = read_benchmark_csv(&a.db)?;
    let pqanet = PatchQualityModel::load(&a.pqanet)?;
    let sequences = entries
        .par_iter()
        .map(|e| -> Result<SubjectiveSequence> {
            let (reference, dist) = load_pair(&e.reference_path, &e.distorted_path, raw.as_ref())?;
            Ok(SubjectiveSequence {
                id: e.distorted_path.display().to_string(),
                reference,
                dist,
                subjective: e.degradation(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cfg = ctx.cfg.stanet.clone();
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    let out = train_aggregator(&sequences, &pqanet, &cfg)?;
    out.model.save(&a.out, &out.log)?;
    println!(
        "aggregator trained on {} sequences, held-out SROCC {}",
        sequences.len(),
        out.heldout_srocc.map_or("n/a".into(), |v| format!("{v:.4}"))
    );
    Ok(Outcome::in_dir(&a.out, vec![a.out.clone()]))
}

#[derive(Serialize)]
struct TileGrid {
    /// (temporal windows, rows, columns)
    shape: (usize, usize, usize),
    patch: PatchGeometry,
    stride: TileStride,
    /// `[frame, y, x]` of each tile, in the order of `per_tile_scores`.
    anchors: Vec<(usize, usize, usize)>,
}

#[derive(Serialize)]
struct ScoreReport {
    /// Degradation of the transcode relative to its reference: larger is worse.
    sequence_score: f64,
    tile_grid: TileGrid,
    per_tile_scores: Vec<f64>,
}

pub fn score(ctx: &Context, a: &ScoreArgs) -> Result<Outcome> {
    let raw = a.raw.geometry()?;
    let (r, d) = load_pair(&a.reference, &a.dist, raw.as_ref())?;
    let section = &ctx.cfg.score;
    let pqanet = if a.pqanet == "neutral" {
        let patch = a.patch.or(section.patch).unwrap_or_default();
        let seed = ctx.cfg.train.seed;
        PatchQualityModel::new(ctx.cfg.backbone.build(patch, r.bit_depth), seed)
    } else {
        PatchQualityModel::load(Path::new(&a.pqanet))?
    };
    let aggregator = if a.aggregator == "mean" {
        AggregatorModel::Mean
    } else {
        AggregatorModel::load(Path::new(&a.aggregator))?
    };
    let g = pqanet.config().geometry;
    let stride = TileStride {
        spatial: a.stride.or(section.stride).unwrap_or(TileStride::of(g).spatial),
        temporal: a.temporal_stride.or(section.temporal_stride).unwrap_or(g.frames),
    };
    let scored = score_sequence(&r, &d, &pqanet, &aggregator, stride)?;
    let layout = tile_layout((r.num_frames(), r.height, r.width), g, stride)?;
    let report = ScoreReport {
        sequence_score: scored.sequence_score,
        tile_grid: TileGrid {
            shape: layout.shape(),
            patch: g,
            stride,
            anchors: layout.anchors().collect(),
        },
        per_tile_scores: scored.field.scores,
    };
    if let Some(dir) = a.json_out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    fs::write(&a.json_out, serde_json::to_vec_pretty(&report)?)?;
    println!("{}", report.sequence_score);
    let mut manifest = a.json_out.clone().into_os_string();
    manifest.push(".run.json");
    Ok(Outcome {
        outputs: vec![a.json_out.clone()],
        run_manifest: Some(manifest.into()),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricsFile {
    metrics: Vec<MetricSpec>,
}

fn rebase(path: &Path, base: &Path) -> PathBuf {
    if path.is_relative() {
        base.join(path)
    } else {
        path.to_path_buf()
    }
}

/// Resolves relative checkpoint and plugin paths against the metrics file.
fn rebase_spec(spec: MetricSpec, base: &Path) -> MetricSpec {
    let rebase_cmd = |mut cmd: Vec<String>| {
        if let Some(prog) = cmd.first_mut() {
            if prog.contains('/') {
                *prog = rebase(Path::new(prog), base).display().to_string();
            }
        }
        cmd
    };
    match spec {
        MetricSpec::Model {
            name,
            pqanet,
            aggregator,
            stride,
        } => MetricSpec::Model {
            name,
            pqanet: rebase(&pqanet, base),
            aggregator: aggregator.map(|p| rebase(&p, base)),
            stride,
        },
        MetricSpec::FrPlugin { name, command, polarity } => MetricSpec::FrPlugin {
            name,
            command: rebase_cmd(command),
            polarity,
        },
        MetricSpec::NrPlugin { name, command, polarity } => MetricSpec::NrPlugin {
            name,
            command: rebase_cmd(command),
            polarity,
        },
        other => other,
    }
}

fn load_metrics(path: &Path) -> Result<Vec<MetricSpec>> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let file: MetricsFile = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(file.metrics.into_iter().map(|s| rebase_spec(s, base)).collect())
}

pub fn evaluate(ctx: &Context, a: &EvaluateArgs) -> Result<Outcome> {
    let section = &ctx.cfg.evaluate;
    let specs = match &a.metrics {
        Some(p) => load_metrics(p)?,
        None => section.metrics.clone(),
    };
    if specs.is_empty() {
        return Err(usage("no metrics configured; pass --metrics or fill [evaluate] metrics"));
    }
    let metrics = specs.iter().map(MetricSpec::build).collect::<transvqa::Result<Vec<Box<dyn FrMetric>>>>()?;
    let entries = read_benchmark_csv(&a.db)?;
    let cfg = BenchmarkConfig {
        alpha: a.alpha.unwrap_or(section.alpha),
        raw_geometry: a.raw.geometry()?,
        anchor: a.anchor.clone().or_else(|| section.anchor.clone()),
    };
    let report = run_benchmark(&entries, &metrics, &cfg)?;
    report.write(&a.out)?;
    print!("{}", report.render_table());
    for q in &report.quarantined {
        warn!("metric `{}` quarantined: {}", q.name, q.reason);
    }
    Ok(Outcome::in_dir(&a.out, vec![a.out.clone()]))
}

/// Stub-encoder corpus, then synthetic corpus → label → train → score → evaluate.
pub fn selftest(ctx: &Context, a: &SelftestArgs) -> Result<Outcome> {
    let tmp;
    let root = match &a.out {
        Some(p) => {
            create_dir(p)?;
            p.clone()
        }
        None => {
            tmp = tempfile::tempdir()?;
            tmp.path().to_path_buf()
        }
    };
    let seed = ctx.cfg.seed.unwrap_or(0);
    let spec = SyntheticSpec {
        n_sources: 8,
        width: 32,
        height: 32,
        frames: 4,
        bit_depth: 8,
        reference_noise: vec![1.0, 4.0],
        distortion_grid: vec![3.0, 6.0, 12.0],
        seed,
    };
    let corpus = root.join("synthetic");
    let m = make_synthetic_corpus(&corpus, &spec)?;
    println!("[1/6] synthetic corpus: {} transcodes", m.count(Role::Transcoded));

    // the stub pipeline runs over the procedural sources
    let sources: Vec<PathBuf> = m.with_role(Role::Source).take(2).map(|e| m.resolve(e)).collect();
    let stub = StubEncoder::new();
    let registry = ctx.cfg.corpus.registry();
    let pctx = PipelineContext {
        corpus_root: root.join("stub"),
        encoder: &stub,
        registry: &registry,
        jobs: ctx.jobs,
    };
    let (refs, transcodes) = (&ctx.cfg.corpus.references, &ctx.cfg.corpus.transcodes);
    let report = build_corpus(&sources, refs, transcodes, &pctx)?;
    let want = (sources.len() * refs.len(), sources.len() * refs.len() * transcodes.len());
    let got = (report.manifest.count(Role::Reference), report.manifest.count(Role::Transcoded));
    if got != want || !report.failures.is_empty() {
        bail!("stub corpus produced {got:?} entries, expected {want:?}");
    }
    println!("[2/6] stub encoder corpus: {} references, {} transcodes", got.0, got.1);

    let geometry = PatchGeometry::new(4, 16, 16);
    let labeling = transvqa::proxy::LabelingConfig {
        geometry,
        patches_per_sequence: 4,
        seed,
        ..ctx.cfg.label.clone()
    };
    let set = build_training_set(&m, &labeling, &PsnrScorer::default())?;
    let dataset = root.join("dataset");
    create_dir(&dataset)?;
    write_training_set(&dataset, &set)?;
    let set = read_training_set(&dataset)?;
    println!("[3/6] labeled {} instances", set.instances.len());

    let train_cfg = transvqa::model::TrainingConfig {
        epochs: 2,
        seed,
        ..ctx.cfg.train.clone()
    };
    let ckpt = root.join("pqanet");
    let out = train(&set.instances, &train_cfg, ctx.cfg.backbone.build(geometry, 8), Some(&ckpt))?;
    let model = PatchQualityModel::load(&ckpt)?;
    if model.params_digest() != out.model.params_digest() {
        bail!("checkpoint does not reload to the trained parameters");
    }
    println!("[4/6] trained 2 epochs, final loss {:.4}", out.log[1].mean_loss);

    let d = m.with_role(Role::Transcoded).next().ok_or_else(|| anyhow!("corpus has no transcodes"))?;
    let r = m.get(d.parent_id.as_deref().unwrap_or_default()).ok_or_else(|| anyhow!("transcode has no parent"))?;
    let (rv, dv) = load_pair(&m.resolve(r), &m.resolve(d), None)?;
    let identity = score_sequence(&rv, &rv, &model, &AggregatorModel::Mean, TileStride::of(geometry))?;
    if identity.sequence_score != 0.0 {
        bail!("identical inputs scored {}", identity.sequence_score);
    }
    let s = score_sequence(&rv, &dv, &model, &AggregatorModel::Mean, TileStride::of(geometry))?;
    println!("[5/6] scored {}: {:.4}", d.id, s.sequence_score);

    let metrics: Vec<Box<dyn FrMetric>> = [
        MetricSpec::Psnr,
        MetricSpec::Ssim,
        MetricSpec::Model {
            name: Some("pqanet".into()),
            pqanet: ckpt.clone(),
            aggregator: None,
            stride: None,
        },
    ]
    .iter()
    .map(MetricSpec::build)
    .collect::<transvqa::Result<_>>()?;
    let entries = read_benchmark_csv(&corpus.join(BENCHMARK_FILE))?;
    let bench = run_benchmark(&entries, &metrics, &BenchmarkConfig::default())?;
    let eval_dir = root.join("evaluation");
    bench.write(&eval_dir)?;
    if !bench.quarantined.is_empty() {
        bail!("metrics quarantined: {:?}", bench.quarantined);
    }
    println!("[6/6] evaluated {} metrics on {} entries", bench.metrics.len(), bench.entries);
    print!("{}", bench.render_table());
    println!("selftest passed");
    info!("artifacts in {}", root.display());
    Ok(match &a.out {
        Some(dir) => Outcome::in_dir(dir, vec![corpus, dataset, ckpt, eval_dir]),
        None => Outcome {
            outputs: Vec::new(),
            run_manifest: None,
        },
    })
}
