//! `transvqa`: every pipeline stage as a subcommand.
//!
//! Exit status is 0 on success, 1 when a stage fails on its data, and 2 for
//! usage errors (bad flags, unreadable or invalid configuration).

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::LevelFilter;
use transvqa::proxy::PairingMode;
use transvqa::{ChromaFormat, PatchGeometry, RawGeometry};

use crate::config::{parse_geometry, EncoderKind, PipelineConfig, ProxyKind};

/// A problem with how the tool was invoked rather than with the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "transvqa", version, about = "Quality assessment for transcoded user-generated video")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// TOML file with per-stage sections; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads and concurrent encoder jobs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, default_value = "info")]
    pub log_level: LevelFilter,
    /// Single-threaded execution.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode sources into references and transcodes, or generate a procedural corpus.
    SynthCorpus(SynthCorpusArgs),
    /// Build rank-labeled training instances from a corpus.
    Label(LabelArgs),
    /// Proxy ranking accuracy against subjective scores, and the threshold it supports.
    Calibrate(CalibrateArgs),
    /// Train the patch-quality model on a labeled dataset.
    TrainPqanet(TrainPqanetArgs),
    /// Train the pooling head on a subjective database with a frozen patch model.
    TrainStanet(TrainStanetArgs),
    /// Score one transcode against its reference.
    Score(ScoreArgs),
    /// Correlate metrics with a subjective database.
    Evaluate(EvaluateArgs),
    /// Run the whole pipeline on a small synthetic corpus.
    Selftest(SelftestArgs),
}

/// Geometry for headerless planar inputs. Y4M files ignore it.
#[derive(Args, Debug, Clone)]
pub struct RawArgs {
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub bit_depth: u32,
    /// mono, 420, 422 or 444
    #[arg(long, default_value = "420", value_parser = parse_chroma)]
    pub chroma: ChromaFormat,
}

fn parse_chroma(s: &str) -> Result<ChromaFormat, String> {
    ChromaFormat::parse(s).ok_or_else(|| format!("unknown chroma format `{s}`"))
}

impl RawArgs {
    pub fn geometry(&self) -> Result<Option<RawGeometry>, UsageError> {
        match (self.width, self.height) {
            (Some(w), Some(h)) => Ok(Some(RawGeometry::new(w, h, self.bit_depth, self.chroma))),
            (None, None) => Ok(None),
            _ => Err(UsageError("--width and --height go together".into())),
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthCorpusArgs {
    /// Text file listing one Y4M source per line; relative paths resolve against the list.
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    pub sources: Option<PathBuf>,
    /// Generate procedural sources with additive-noise distortions instead of encoding.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long)]
    pub encoder: Option<EncoderKind>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LabelArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub sigma_ss: Option<f64>,
    #[arg(long)]
    pub sigma_ds: Option<f64>,
    #[arg(long)]
    pub ss_fraction: Option<f64>,
    #[arg(long)]
    pub patches_per_sequence: Option<usize>,
    /// Patch extent as FRAMESxHEIGHTxWIDTH.
    #[arg(long, value_parser = parse_geometry)]
    pub patch: Option<PatchGeometry>,
    #[arg(long)]
    pub proxy: Option<ProxyKind>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum ModeArg {
    Ss,
    Ds,
}

impl ModeArg {
    pub fn pairing(self) -> PairingMode {
        match self {
            ModeArg::Ss => PairingMode::SingleSource,
            ModeArg::Ds => PairingMode::DualSource,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModeArg::Ss => "ss",
            ModeArg::Ds => "ds",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum PolarityArg {
    Mos,
    Dmos,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// CSV with reference_id, distorted_id, score and optionally qhat.
    #[arg(long)]
    pub entries: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long)]
    pub target: Option<f64>,
    /// Whether `score` is a quality (mos) or degradation (dmos) rating.
    #[arg(long, value_enum)]
    pub polarity: Option<PolarityArg>,
    /// Corpus used to compute qhat for rows that lack it.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "calibration")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainPqanetArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainStanetArgs {
    /// Benchmark CSV: reference_path, distorted_path, score, polarity.
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub pqanet: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[command(flatten)]
    pub raw: RawArgs,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub dist: PathBuf,
    /// Checkpoint directory, or `neutral` for a freshly initialized model.
    #[arg(long)]
    pub pqanet: String,
    /// Checkpoint directory, or `mean`.
    #[arg(long, default_value = "mean")]
    pub aggregator: String,
    #[arg(long)]
    pub json_out: PathBuf,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub temporal_stride: Option<usize>,
    /// Patch extent of a neutral model as FRAMESxHEIGHTxWIDTH.
    #[arg(long, value_parser = parse_geometry)]
    pub patch: Option<PatchGeometry>,
    #[command(flatten)]
    pub raw: RawArgs,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub db: PathBuf,
    /// TOML file with a `metrics` array; defaults to the config's [evaluate] metrics.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Metric every other metric is F-tested against in the table.
    #[arg(long)]
    pub anchor: Option<String>,
    #[command(flatten)]
    pub raw: RawArgs,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    /// Keep artifacts here instead of a temporary directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Effective settings shared by all commands.
pub struct Context {
    pub cfg: PipelineConfig,
    pub jobs: usize,
    pub deterministic: bool,
}

fn init(global: &GlobalArgs) -> Result<Context, UsageError> {
    env_logger::Builder::new()
        .filter_level(global.log_level)
        .format_timestamp(None)
        .try_init()
        .ok();
    let mut cfg = PipelineConfig::load(global.config.as_deref())?;
    if let Some(seed) = global.seed.or(cfg.seed) {
        cfg.set_seed(seed);
    }
    let jobs = if global.deterministic {
        1
    } else {
        global
            .jobs
            .or(cfg.jobs)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    };
    if jobs == 0 {
        return Err(UsageError("--jobs must be at least 1".into()));
    }
    // a second init in the same process (tests) keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    Ok(Context {
        cfg,
        jobs,
        deterministic: global.deterministic,
    })
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let ctx = init(&cli.global)?;
    let started = run::now_unix();
    let (name, outcome) = match &cli.command {
        Command::SynthCorpus(a) => ("synth-corpus", commands::synth_corpus(&ctx, a)?),
        Command::Label(a) => ("label", commands::label(&ctx, a)?),
        Command::Calibrate(a) => ("calibrate", commands::calibrate(&ctx, a)?),
        Command::TrainPqanet(a) => ("train-pqanet", commands::train_pqanet(&ctx, a)?),
        Command::TrainStanet(a) => ("train-stanet", commands::train_stanet(&ctx, a)?),
        Command::Score(a) => ("score", commands::score(&ctx, a)?),
        Command::Evaluate(a) => ("evaluate", commands::evaluate(&ctx, a)?),
        Command::Selftest(a) => ("selftest", commands::selftest(&ctx, a)?),
    };
    let manifest = run::RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        command: name,
        argv: std::env::args().collect(),
        config_hash: run::config_hash(&ctx.cfg),
        config: &ctx.cfg,
        seeds: ctx.cfg.seeds(),
        jobs: ctx.jobs,
        deterministic: ctx.deterministic,
        outputs: outcome.outputs,
        started_unix: started,
    };
    if let Some(path) = outcome.run_manifest {
        run::write(&path, &manifest)?;
    }
    Ok(())
}

/// Joins the error chain, skipping causes a message already quotes.
fn render_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            eprintln!("run `transvqa --help` for usage");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {}", render_chain(&e));
            ExitCode::from(1)
        }
    }
}
