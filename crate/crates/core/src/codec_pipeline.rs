//! Three-stage corpus synthesis: pristine sources are compressed into
//! device-style references, which are transcoded again by platform codecs.
//! Encoders are external processes driven by per-codec command templates.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::util::atomic_write;
use crate::video_io::{probe_y4m, Role, StreamInfo};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const FAILURE_LOG: &str = "failures.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodecConfig {
    pub codec_name: String,
    /// CRF or the codec's constant-quality equivalent.
    pub quality_param: i32,
    pub preset: String,
    #[serde(default)]
    pub extra_args: Vec<String>,
}

impl CodecConfig {
    pub fn new(codec_name: &str, quality_param: i32, preset: &str) -> Self {
        CodecConfig {
            codec_name: codec_name.to_string(),
            quality_param,
            preset: preset.to_string(),
            extra_args: Vec::new(),
        }
    }
}

/// x264 at CRF 30, 37 and 42 with the medium preset.
pub fn default_reference_configs() -> Vec<CodecConfig> {
    [30, 37, 42]
        .into_iter()
        .map(|crf| CodecConfig::new("x264", crf, "medium"))
        .collect()
}

/// Four codecs at three quality levels each.
pub fn default_transcode_configs() -> Vec<CodecConfig> {
    let mut out = Vec::with_capacity(12);
    for codec in ["x264", "x265"] {
        out.extend([28, 34, 40].map(|q| CodecConfig::new(codec, q, "medium")));
    }
    out.extend([32, 42, 52].map(|q| CodecConfig::new("vp9", q, "good")));
    out.extend([32, 42, 52].map(|q| CodecConfig::new("av1", q, "6")));
    out
}

/// How to drive one encoder. Templates are whitespace-separated argv with
/// `{input}`, `{output}`, `{qp}` and `{preset}` placeholders; a bare `{extra}`
/// token expands to the config's extra arguments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecSpec {
    pub min_quality: i32,
    pub max_quality: i32,
    pub encode: String,
    pub decode: String,
    pub bitstream_ext: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EncoderRegistry {
    pub codecs: BTreeMap<String, CodecSpec>,
}

impl EncoderRegistry {
    /// ffmpeg-based templates for x264, x265, VP9 and AV1.
    pub fn with_defaults() -> Self {
        let decode = "ffmpeg -nostdin -loglevel error -y -i {input} -f yuv4mpegpipe -strict -1 {output}";
        let spec = |lo, hi, enc: &str, ext: &str| CodecSpec {
            min_quality: lo,
            max_quality: hi,
            encode: enc.to_string(),
            decode: decode.to_string(),
            bitstream_ext: ext.to_string(),
        };
        let mut codecs = BTreeMap::new();
        codecs.insert(
            "x264".into(),
            spec(0, 51, "ffmpeg -nostdin -loglevel error -y -i {input} -c:v libx264 -crf {qp} -preset {preset} {extra} {output}", "mp4"),
        );
        codecs.insert(
            "x265".into(),
            spec(0, 51, "ffmpeg -nostdin -loglevel error -y -i {input} -c:v libx265 -crf {qp} -preset {preset} {extra} {output}", "mp4"),
        );
        codecs.insert(
            "vp9".into(),
            spec(0, 63, "ffmpeg -nostdin -loglevel error -y -i {input} -c:v libvpx-vp9 -crf {qp} -b:v 0 -deadline {preset} {extra} {output}", "webm"),
        );
        codecs.insert(
            "av1".into(),
            spec(0, 63, "ffmpeg -nostdin -loglevel error -y -i {input} -c:v libaom-av1 -crf {qp} -b:v 0 -cpu-used {preset} {extra} {output}", "mkv"),
        );
        EncoderRegistry { codecs }
    }

    pub fn get(&self, name: &str) -> Result<&CodecSpec> {
        self.codecs
            .get(name)
            .ok_or_else(|| Error::InvalidInput(format!("codec `{name}` is not in the encoder registry")))
    }

    /// Checks the codec is registered and its quality parameter is in range.
    pub fn validate(&self, cfg: &CodecConfig) -> Result<()> {
        let spec = self.get(&cfg.codec_name)?;
        if !(spec.min_quality..=spec.max_quality).contains(&cfg.quality_param) {
            return Err(Error::InvalidInput(format!(
                "quality_param {} outside {} range [{}, {}]",
                cfg.quality_param, cfg.codec_name, spec.min_quality, spec.max_quality
            )));
        }
        Ok(())
    }
}

/// Compresses a raw video and writes the decoded result as Y4M.
pub trait Encoder: Send + Sync {
    fn encode_decode(&self, input: &Path, output: &Path, cfg: &CodecConfig) -> Result<()>;
}

/// Runs the registry's command templates as child processes.
pub struct ExternalEncoder {
    pub registry: EncoderRegistry,
}

impl ExternalEncoder {
    pub fn new(registry: EncoderRegistry) -> Self {
        ExternalEncoder { registry }
    }
}

fn expand_template(template: &str, vars: &[(&str, String)], extra: &[String]) -> Vec<String> {
    let mut argv = Vec::new();
    for tok in template.split_whitespace() {
        if tok == "{extra}" {
            argv.extend(extra.iter().cloned());
            continue;
        }
        let mut t = tok.to_string();
        for (key, val) in vars {
            t = t.replace(&format!("{{{key}}}"), val);
        }
        argv.push(t);
    }
    argv
}

pub(crate) fn run_command(argv: &[String]) -> Result<String> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| Error::InvalidInput("empty command template".into()))?;
    let command = argv.join(" ");
    debug!("running `{command}`");
    let output = Command::new(program)
        .args(args)
        .stdin(Stdio::null())
        .output()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingBinary {
                binary: program.clone(),
            },
            _ => Error::io(program, e),
        })?;
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        let tail: String = stderr.chars().rev().take(2000).collect::<Vec<_>>().into_iter().rev().collect();
        return Err(Error::EncoderFailed {
            command,
            status: output.status.to_string(),
            stderr: tail.trim().to_string(),
        });
    }
    Ok(String::from_utf8_lossy(&output.stdout).into_owned())
}

impl Encoder for ExternalEncoder {
    fn encode_decode(&self, input: &Path, output: &Path, cfg: &CodecConfig) -> Result<()> {
        let spec = self.registry.get(&cfg.codec_name)?;
        let bitstream = output.with_extension(&spec.bitstream_ext);
        let vars = [
            ("input", input.display().to_string()),
            ("output", bitstream.display().to_string()),
            ("qp", cfg.quality_param.to_string()),
            ("preset", cfg.preset.clone()),
        ];
        run_command(&expand_template(&spec.encode, &vars, &cfg.extra_args))?;
        let vars = [
            ("input", bitstream.display().to_string()),
            ("output", output.display().to_string()),
            ("qp", cfg.quality_param.to_string()),
            ("preset", cfg.preset.clone()),
        ];
        run_command(&expand_template(&spec.decode, &vars, &[]))?;
        Ok(())
    }
}

/// Identity "codec" for hermetic runs: copies its input and records the
/// declared settings in a `.qp` sidecar.
#[derive(Debug, Default)]
pub struct StubEncoder {
    calls: AtomicUsize,
}

impl StubEncoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn invocations(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Encoder for StubEncoder {
    fn encode_decode(&self, input: &Path, output: &Path, cfg: &CodecConfig) -> Result<()> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        fs::copy(input, output).at(input)?;
        let sidecar = output.with_extension("qp");
        fs::write(
            &sidecar,
            format!("{} {} {}\n", cfg.codec_name, cfg.quality_param, cfg.preset),
        )
        .at(&sidecar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub role: Role,
    pub path: PathBuf,
    #[serde(default)]
    pub codec: Option<String>,
    #[serde(default)]
    pub quality_param: Option<i32>,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub parent_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_bytes: Option<u64>,
    /// Known degradation relative to the parent (synthetic corpora only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_degradation: Option<f64>,
}

impl ManifestEntry {
    pub fn source(id: &str, path: PathBuf) -> Self {
        ManifestEntry {
            id: id.to_string(),
            role: Role::Source,
            path,
            codec: None,
            quality_param: None,
            preset: None,
            parent_id: None,
            size_bytes: None,
            true_degradation: None,
        }
    }

    fn child(id: String, role: Role, path: PathBuf, parent: &str, cfg: &CodecConfig) -> Self {
        ManifestEntry {
            id,
            role,
            path,
            codec: Some(cfg.codec_name.clone()),
            quality_param: Some(cfg.quality_param),
            preset: Some(cfg.preset.clone()),
            parent_id: Some(parent.to_string()),
            size_bytes: None,
            true_degradation: None,
        }
    }
}

/// Lineage forest of a corpus. Relative entry paths resolve against
/// `corpus_root`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusManifest {
    pub corpus_root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.corpus_root.join(&entry.path)
        }
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.role == role)
    }

    pub fn children<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a ManifestEntry> + 'a {
        self.entries
            .iter()
            .filter(move |e| e.parent_id.as_deref() == Some(id))
    }

    pub fn count(&self, role: Role) -> usize {
        self.with_role(role).count()
    }

    /// Ids are unique, every parent resolves, and lineage is exactly
    /// source → reference → transcoded.
    pub fn validate(&self) -> Result<()> {
        let mut roles: HashMap<&str, Role> = HashMap::with_capacity(self.entries.len());
        for e in &self.entries {
            if roles.insert(&e.id, e.role).is_some() {
                return Err(Error::InvalidInput(format!("duplicate manifest id `{}`", e.id)));
            }
        }
        for e in &self.entries {
            match (e.role.parent_role(), &e.parent_id) {
                (None, None) => {}
                (None, Some(p)) => {
                    return Err(Error::InvalidInput(format!("source `{}` has parent `{p}`", e.id)))
                }
                (Some(_), None) => {
                    return Err(Error::InvalidInput(format!("{} `{}` has no parent", e.role, e.id)))
                }
                (Some(want), Some(p)) => match roles.get(p.as_str()) {
                    None => {
                        return Err(Error::InvalidInput(format!(
                            "parent `{p}` of `{}` is not in the manifest",
                            e.id
                        )))
                    }
                    Some(&got) if got != want => {
                        return Err(Error::InvalidInput(format!(
                            "{} `{}` has a {got} parent `{p}`, expected {want}",
                            e.role, e.id
                        )))
                    }
                    _ => {}
                },
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Writes the manifest with an atomic rename; the root is the file's
    /// directory.
    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_jsonl()?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).at(path)?;
        let mut entries = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.at(path)?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line)?);
        }
        let corpus_root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(CorpusManifest {
            corpus_root,
            entries,
        })
    }
}

/// What the pipeline stages need besides their inputs.
pub struct PipelineContext<'a> {
    pub corpus_root: PathBuf,
    pub encoder: &'a dyn Encoder,
    pub registry: &'a EncoderRegistry,
    /// Maximum concurrent encoder jobs.
    pub jobs: usize,
}

fn child_id(parent: &str, cfg: &CodecConfig) -> String {
    format!("{parent}__{}_q{}", cfg.codec_name, cfg.quality_param)
}

fn child_path(role: Role, id: &str) -> PathBuf {
    let dir = match role {
        Role::Reference => "references",
        _ => "transcoded",
    };
    PathBuf::from(dir).join(format!("{id}.y4m"))
}

fn check_same_volume(parent: &StreamInfo, child: &StreamInfo, child_id: &str) -> Result<()> {
    if (parent.width, parent.height) != (child.width, child.height) {
        return Err(Error::Pipeline(format!(
            "decoded `{child_id}` is {}x{}, parent is {}x{}",
            child.width, child.height, parent.width, parent.height
        )));
    }
    if parent.frames != child.frames {
        return Err(Error::Pipeline(format!(
            "decoded `{child_id}` has {} frames, parent has {}",
            child.frames, parent.frames
        )));
    }
    Ok(())
}

fn encode_child(
    parent: &ManifestEntry,
    role: Role,
    cfg: &CodecConfig,
    ctx: &PipelineContext<'_>,
) -> Result<ManifestEntry> {
    ctx.registry.validate(cfg)?;
    let input = if parent.path.is_absolute() {
        parent.path.clone()
    } else {
        ctx.corpus_root.join(&parent.path)
    };
    let parent_info = probe_y4m(&input)?;
    let id = child_id(&parent.id, cfg);
    let rel = child_path(role, &id);
    let output = ctx.corpus_root.join(&rel);
    if let Some(dir) = output.parent() {
        fs::create_dir_all(dir).at(dir)?;
    }
    ctx.encoder.encode_decode(&input, &output, cfg)?;
    let info = probe_y4m(&output)?;
    check_same_volume(&parent_info, &info, &id)?;
    let mut entry = ManifestEntry::child(id, role, rel, &parent.id, cfg);
    entry.size_bytes = Some(fs::metadata(&output).at(&output)?.len());
    Ok(entry)
}

/// Emulates on-device compression of a pristine source.
pub fn synthesize_reference(
    source: &ManifestEntry,
    cfg: &CodecConfig,
    ctx: &PipelineContext<'_>,
) -> Result<ManifestEntry> {
    if source.role != Role::Source {
        return Err(Error::InvalidInput(format!("`{}` is not a source", source.id)));
    }
    encode_child(source, Role::Reference, cfg, ctx)
}

/// Platform-side re-encoding of a distorted reference.
pub fn transcode(
    reference: &ManifestEntry,
    cfg: &CodecConfig,
    ctx: &PipelineContext<'_>,
) -> Result<ManifestEntry> {
    if reference.role != Role::Reference {
        return Err(Error::InvalidInput(format!("`{}` is not a reference", reference.id)));
    }
    encode_child(reference, Role::Transcoded, cfg, ctx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildFailure {
    pub id: String,
    pub parent_id: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct BuildReport {
    pub manifest: CorpusManifest,
    pub failures: Vec<BuildFailure>,
    /// Children produced by running the encoder in this call.
    pub encoded: usize,
    /// Children reused from a previous run.
    pub reused: usize,
}

fn check_unique(cfgs: &[CodecConfig], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for c in cfgs {
        if !seen.insert((&c.codec_name, c.quality_param)) {
            return Err(Error::InvalidInput(format!(
                "{what} list repeats {} at {}",
                c.codec_name, c.quality_param
            )));
        }
    }
    Ok(())
}

enum Outcome {
    Encoded(ManifestEntry),
    Reused(ManifestEntry),
    Failed(BuildFailure),
}

fn run_stage(
    parents: &[ManifestEntry],
    cfgs: &[CodecConfig],
    role: Role,
    previous: &HashMap<String, ManifestEntry>,
    ctx: &PipelineContext<'_>,
    pool: &rayon::ThreadPool,
) -> Vec<Outcome> {
    let jobs: Vec<(&ManifestEntry, &CodecConfig)> = parents
        .iter()
        .flat_map(|p| cfgs.iter().map(move |c| (p, c)))
        .collect();
    pool.install(|| {
        jobs.par_iter()
            .map(|&(parent, cfg)| {
                let id = child_id(&parent.id, cfg);
                if let Some(prev) = previous.get(&id) {
                    let path = ctx.corpus_root.join(&prev.path);
                    let size = fs::metadata(&path).map(|m| m.len()).ok();
                    if prev.size_bytes.is_some() && size == prev.size_bytes {
                        return Outcome::Reused(prev.clone());
                    }
                }
                match encode_child(parent, role, cfg, ctx) {
                    Ok(e) => Outcome::Encoded(e),
                    Err(e) => {
                        warn!("{id}: {e}");
                        Outcome::Failed(BuildFailure {
                            id,
                            parent_id: parent.id.clone(),
                            error: e.to_string(),
                        })
                    }
                }
            })
            .collect()
    })
}

/// Builds the full corpus under `ctx.corpus_root`.
///
/// Produces |sources|·|ref_cfgs| references and |references|·|transcode_cfgs|
/// transcodes. Children already present from an earlier run (same id, file
/// size as recorded) are reused without invoking the encoder. A failed child
/// is logged to `failures.jsonl` and its descendants are skipped; other
/// branches continue.
pub fn build_corpus(
    sources: &[PathBuf],
    ref_cfgs: &[CodecConfig],
    transcode_cfgs: &[CodecConfig],
    ctx: &PipelineContext<'_>,
) -> Result<BuildReport> {
    check_unique(ref_cfgs, "reference config")?;
    check_unique(transcode_cfgs, "transcode config")?;
    for cfg in ref_cfgs.iter().chain(transcode_cfgs) {
        ctx.registry.validate(cfg)?;
    }
    fs::create_dir_all(&ctx.corpus_root).at(&ctx.corpus_root)?;

    let mut source_entries = Vec::with_capacity(sources.len());
    let mut ids = HashSet::new();
    for path in sources {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::InvalidInput(format!("cannot derive an id from {}", path.display())))?
            .to_string();
        if !ids.insert(id.clone()) {
            return Err(Error::InvalidInput(format!("two sources share the id `{id}`")));
        }
        let abs = std::path::absolute(path).at(path)?;
        probe_y4m(&abs)?;
        source_entries.push(ManifestEntry::source(&id, abs));
    }

    let manifest_path = ctx.corpus_root.join(MANIFEST_FILE);
    let previous: HashMap<String, ManifestEntry> = if manifest_path.exists() {
        CorpusManifest::read(&manifest_path)?
            .entries
            .into_iter()
            .filter(|e| e.role != Role::Source)
            .map(|e| (e.id.clone(), e))
            .collect()
    } else {
        HashMap::new()
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;

    let mut failures = Vec::new();
    let (mut encoded, mut reused) = (0, 0);
    let mut collect = |outcomes: Vec<Outcome>, out: &mut Vec<ManifestEntry>| {
        for o in outcomes {
            match o {
                Outcome::Encoded(e) => {
                    encoded += 1;
                    out.push(e)
                }
                Outcome::Reused(e) => {
                    reused += 1;
                    out.push(e)
                }
                Outcome::Failed(f) => failures.push(f),
            }
        }
    };

    let mut references = Vec::new();
    collect(
        run_stage(&source_entries, ref_cfgs, Role::Reference, &previous, ctx, &pool),
        &mut references,
    );
    let mut transcodes = Vec::new();
    collect(
        run_stage(&references, transcode_cfgs, Role::Transcoded, &previous, ctx, &pool),
        &mut transcodes,
    );

    let mut entries = source_entries;
    entries.extend(references);
    entries.extend(transcodes);
    let manifest = CorpusManifest {
        corpus_root: ctx.corpus_root.clone(),
        entries,
    };
    manifest.validate()?;
    manifest.write(&manifest_path)?;

    let mut log = String::new();
    for f in &failures {
        log.push_str(&serde_json::to_string(f)?);
        log.push('\n');
    }
    atomic_write(&ctx.corpus_root.join(FAILURE_LOG), log.as_bytes())?;
    info!(
        "corpus: {} references, {} transcodes ({encoded} encoded, {reused} reused, {} failed)",
        manifest.count(Role::Reference),
        manifest.count(Role::Transcoded),
        failures.len()
    );
    Ok(BuildReport {
        manifest,
        failures,
        encoded,
        reused,
    })
}
