use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use plane2depth::objectives::SuperviseLayers;
use plane2depth::synth::{generate_scene, read_dataset, render, write_dataset, GenerationConfig};

use crate::ablate::{format_ablation_table, run_ablation, Matrix};
use crate::checkpoint;
use crate::colormap::load_rgb_png;
use crate::config::{diff_fields, seed_from_env, RunConfig};
use crate::error::{Result, ToolError};
use crate::eval::{evaluate_samples, oracle_depth, predict_depth, write_reports, EvalOptions, DEFAULT_ERROR_CLIP};
use crate::infer::{infer, load_gt_depth, load_intrinsics};
use crate::train::{train, TrainingSet};

#[derive(Debug, Parser)]
#[command(name = "plane2depth", version, about = "Plane-query monocular depth on synthetic rooms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset.
    GenData(GenDataArgs),
    /// Train a network.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Predict maps for one image.
    Infer(InferArgs),
    /// Train and compare a matrix of configurations.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: usize,
    /// First scene seed; scenes use consecutive seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scene generation parameters (TOML or JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Image size as `HxW`, e.g. `64x64`.
    #[arg(long, value_parser = parse_size)]
    pub size: Option<(usize, usize)>,
    #[arg(long)]
    pub deception_frac: Option<f64>,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got `{s}`"))?;
    let dim = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("bad size `{s}`: {e}"));
    Ok((dim(h)?, dim(w)?))
}

/// Run-config overrides shared by `train` and `ablate`.
#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of plane queries.
    #[arg(long)]
    pub num_queries: Option<usize>,
    /// Disable the feature modulators.
    #[arg(long)]
    pub no_afm: bool,
    #[arg(long, value_parser = parse_supervise)]
    pub supervise_layers: Option<SuperviseLayers>,
}

fn parse_supervise(s: &str) -> std::result::Result<SuperviseLayers, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Continue from a checkpoint directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint directory; not needed with `--oracle-gt-planes`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Expected architecture; a mismatch with the checkpoint is an error.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write per-image predicted depth PFMs and error PNGs.
    #[arg(long)]
    pub export_maps: bool,
    /// Compute depth from ground-truth normal and distance instead of a network.
    #[arg(long)]
    pub oracle_gt_planes: bool,
    #[arg(long, default_value_t = DEFAULT_ERROR_CLIP)]
    pub error_clip: f64,
    /// Ground-truth depth cap in meters.
    #[arg(long)]
    pub cap: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub intrinsics: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth depth PFM for an error map.
    #[arg(long)]
    pub gt_depth: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ERROR_CLIP)]
    pub error_clip: f64,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// afm, ncdc or queries.
    #[arg(long)]
    pub matrix: String,
    /// Query counts for `--matrix queries`.
    #[arg(long, value_delimiter = ',')]
    pub queries: Vec<usize>,
    #[arg(long)]
    pub test_dataset: PathBuf,
}

fn run_config(a: &RunArgs) -> Result<RunConfig> {
    let mut c = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &a.dataset {
        c.dataset = v.clone();
    }
    if let Some(v) = &a.output_dir {
        c.output_dir = v.clone();
    }
    if let Some(v) = a.iterations {
        c.iterations = v;
    }
    if let Some(v) = a.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = a.lr {
        c.optimizer.learning_rate = v;
    }
    if a.seed.is_some() {
        c.seed = a.seed;
    }
    if let Some(v) = a.num_queries {
        c.model.num_queries = v;
    }
    if a.no_afm {
        c.model.af_modulators = false;
    }
    if let Some(v) = a.supervise_layers {
        c.supervise_layers = v;
    }
    c.validate()?;
    Ok(c)
}

fn load_generation(path: &Path) -> Result<GenerationConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| ToolError::io(path, e))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| ToolError::usage(format!("{}: {}", path.display(), e.replace('\n', " "))))
}

pub fn gen_data(a: &GenDataArgs) -> Result<usize> {
    if a.count == 0 {
        return Err(ToolError::usage("--count must be at least 1"));
    }
    let mut cfg = match &a.config {
        Some(p) => load_generation(p)?,
        None => GenerationConfig::default(),
    };
    if let Some((h, w)) = a.size {
        cfg.height = h;
        cfg.width = w;
    }
    if let Some(d) = a.deception_frac {
        cfg.deception_frac = d;
    }
    cfg.validate()?;
    let first = match a.seed {
        Some(s) => s,
        None => seed_from_env()?,
    };
    let samples = (0..a.count as u64)
        .map(|i| Ok(render(&generate_scene(first + i, &cfg)?)))
        .collect::<Result<Vec<_>>>()?;
    write_dataset(&samples, &a.out, Some(&cfg))?;
    Ok(samples.len())
}

fn emit(line: &serde_json::Value) {
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = run_config(&a.run)?;
    let set = TrainingSet::load(&cfg.dataset, cfg.width, cfg.height)?;
    let quiet = a.quiet;
    let outcome = train(&cfg, &set, a.resume.as_deref(), |e| {
        if !quiet && (e.iteration % 100 == 0 || e.iteration == 1) {
            let _ = writeln!(std::io::stderr(), "{}", serde_json::to_string(e).expect("json"));
        }
    })?;
    emit(&serde_json::json!({
        "checkpoint": outcome.checkpoint_dir,
        "iterations": outcome.final_iteration,
        "final_loss": outcome.log.last().map(|e| e.loss),
    }));
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let samples = read_dataset(&a.dataset)?;
    let maps_dir = a.out.join("maps");
    let opts = EvalOptions {
        cap: a.cap,
        export_maps: a.export_maps.then_some(maps_dir.as_path()),
        error_clip: Some(a.error_clip),
    };
    let (label, outcome) = if a.oracle_gt_planes {
        ("oracle", evaluate_samples(&samples, &opts, oracle_depth)?)
    } else {
        let path = a
            .checkpoint
            .as_ref()
            .ok_or_else(|| ToolError::usage("--checkpoint is required unless --oracle-gt-planes is set"))?;
        let ckpt = checkpoint::load(path)?;
        if let Some(cfg_path) = &a.config {
            let expected = RunConfig::load(cfg_path)?;
            let diffs = diff_fields(&expected.model, &ckpt.meta.model);
            if !diffs.is_empty() {
                return Err(ToolError::usage(format!(
                    "config-diff between {} and checkpoint: {}",
                    cfg_path.display(),
                    diffs.join("; ")
                )));
            }
        }
        let net = ckpt.network()?;
        ("model", evaluate_samples(&samples, &opts, |s| predict_depth(&net, s))?)
    };
    write_reports(&a.out, label, &outcome)?;
    emit(&serde_json::json!({"aggregate": outcome.aggregate, "deception_ratio": outcome.deception_ratio()}));
    Ok(())
}

fn cmd_infer(a: &InferArgs) -> Result<()> {
    let k = load_intrinsics(&a.intrinsics)?;
    let ckpt = checkpoint::load(&a.checkpoint)?;
    let net = ckpt.network()?;
    let (w, h, rgb) = load_rgb_png(&a.image)?;
    k.validate_for(w, h).map_err(|e| ToolError::usage(format!("{}: {e}", a.intrinsics.display())))?;
    let max_depth = ckpt.meta.max_depth as f32;
    let gt = a.gt_depth.as_deref().map(|p| load_gt_depth(p, max_depth)).transpose()?;
    infer(&net, max_depth, &rgb, w, h, &k, &a.out, gt.as_ref(), a.error_clip)?;
    emit(&serde_json::json!({"out": a.out}));
    Ok(())
}

fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let cfg = run_config(&a.run)?;
    let matrix = Matrix::parse(&a.matrix, &a.queries)?;
    let set = TrainingSet::load(&cfg.dataset, cfg.width, cfg.height)?;
    let test = read_dataset(&a.test_dataset)?;
    let results = run_ablation(&cfg, &matrix, &set, &test, |_, _, _| {})?;
    let _ = write!(std::io::stdout(), "{}", format_ablation_table(&results));
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => {
            let n = gen_data(a)?;
            emit(&serde_json::json!({"samples": n, "out": a.out}));
            Ok(())
        }
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Ablate(a) => cmd_ablate(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code. Errors
/// are printed as one line: `error[<kind>]: <message>`.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(std::io::stdout(), "{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            let _ = writeln!(std::io::stderr(), "error[usage]: {first}");
            return 2;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(std::io::stderr(), "error[{}]: {msg}", e.kind());
            e.exit_code()
        }
    }
}
