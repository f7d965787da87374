//! `dg`: batch driver for database building, description augmentation,
//! depth unprojection, scene enhancement and evaluation.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "dg", version, about = "Ego-centric 3D grounding toolkit")]
pub struct RunConfig {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Suppress progress and summary output.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the scene information database from annotations.
    SidbBuild(SidbBuildArgs),
    /// Rewrite descriptions with scene context.
    Augment(AugmentArgs),
    /// Turn a scan manifest into a sampled, optionally feature-lifted point cloud.
    Unproject(UnprojectArgs),
    /// Score predicted boxes against ground truth.
    Eval(EvalArgs),
    /// Run the scene enhancer on a scan and check its invariants.
    HsseDemo(HsseDemoArgs),
    /// Finite-difference check of every primitive and the composed enhancer.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SidbBuildArgs {
    /// Annotations JSONL.
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    /// Offline deterministic rewriter.
    Mock,
    /// OpenAI-style chat completions; key from DG_LLM_API_KEY.
    Http,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub sidb: PathBuf,
    /// Annotations JSONL.
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Context descriptions per prompt.
    #[arg(long, default_value_t = dg_core::lse::DEFAULT_CONTEXT_K)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = Backend::Mock)]
    pub backend: Backend,
    /// Prompt template with {RAW}, {CONTEXT} and {TARGET_CLASS}.
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Concurrent requests.
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    #[arg(long, default_value = "https://api.openai.com/v1/chat/completions")]
    pub endpoint: String,
    #[arg(long, default_value = "gpt-4o-mini")]
    pub model: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PointFormat {
    Jsonl,
    Bin,
}

#[derive(Debug, Args)]
pub struct UnprojectArgs {
    /// Scene manifest JSON.
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of points kept.
    #[arg(long, default_value_t = dg_core::pointcloud::DEFAULT_SAMPLE_RATIO)]
    pub ratio: f64,
    /// Lift features from this pyramid scale (1-based).
    #[arg(long)]
    pub lift_scale: Option<usize>,
    #[arg(long, value_enum, default_value_t = PointFormat::Jsonl)]
    pub format: PointFormat,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions JSONL: {desc_id, pred_box}.
    #[arg(long)]
    pub preds: PathBuf,
    /// Annotations JSONL with target boxes.
    #[arg(long)]
    pub gt: PathBuf,
    /// Scenes JSONL: {scene_id, objects}.
    #[arg(long)]
    pub scenes: PathBuf,
    #[arg(long, default_value_t = dg_core::eval::DEFAULT_IOU_THRESHOLD)]
    pub threshold: f64,
    /// View-dependency lexicon, one phrase per line.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HsseDemoArgs {
    /// Scene manifest JSON.
    #[arg(long)]
    pub scene: PathBuf,
    /// Enhancer config JSON (defaults apply when omitted).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Description embedded as the language input.
    #[arg(long, default_value = "the chair next to the table")]
    pub text: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Enhancer config JSON (defaults apply when omitted).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn run(cfg: &RunConfig) -> CliResult<()> {
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match &cfg.command {
        Command::SidbBuild(a) => commands::sidb_build(cfg, a),
        Command::Augment(a) => commands::augment(cfg, a),
        Command::Unproject(a) => commands::unproject(cfg, a),
        Command::Eval(a) => commands::eval(cfg, a),
        Command::HsseDemo(a) => commands::hsse_demo(cfg, a),
        Command::Gradcheck(a) => commands::gradcheck(cfg, a),
    }
}

fn main() -> ExitCode {
    let cfg = RunConfig::parse();
    match run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
