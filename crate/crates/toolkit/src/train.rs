use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use plane2depth::autodiff::Adam;
use plane2depth::planenet::PlaneNet;
use plane2depth::synth::{read_dataset, read_manifest};
use plane2depth::training::{batch_gradients, TrainError, TrainSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Checkpoint, CheckpointMeta, FORMAT_VERSION};
use crate::config::RunConfig;
use crate::error::{Result, ToolError};

pub const LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const NAN_DUMP_FILE: &str = "nan_dump.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: u64,
    pub loss: f64,
    pub depth: f64,
    pub normal: f64,
    pub distance: f64,
    pub learning_rate: f64,
    pub wall_time_s: f64,
}

/// Training samples with their mirrored copies.
pub struct TrainingSet {
    pub samples: Vec<TrainSample<f32>>,
    pub flipped: Vec<TrainSample<f32>>,
    pub max_depth: f64,
}

impl TrainingSet {
    pub fn load(dataset: &Path, width: usize, height: usize) -> Result<Self> {
        let manifest = read_manifest(dataset)?;
        if (manifest.width, manifest.height) != (width, height) {
            return Err(ToolError::usage(format!(
                "dataset {} is {}x{} but the config expects {width}x{height}",
                dataset.display(),
                manifest.width,
                manifest.height
            )));
        }
        let rendered = read_dataset(dataset)?;
        if rendered.is_empty() {
            return Err(ToolError::usage(format!("dataset {} has no samples", dataset.display())));
        }
        let max_depth = rendered[0].depth.max_depth as f64;
        let mut samples = Vec::with_capacity(rendered.len());
        let mut flipped = Vec::with_capacity(rendered.len());
        for r in &rendered {
            samples.push(TrainSample::from_rendered(r)?);
            flipped.push(TrainSample::from_rendered(&r.flipped_horizontally())?);
        }
        Ok(Self {
            samples,
            flipped,
            max_depth,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Indices and mirror flags of the batch used at `iteration`; a pure function
/// of the seed so resumed runs see the same batches.
pub fn batch_plan(seed: u64, iteration: u64, batch: usize, n: usize, flip: bool) -> Vec<(usize, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    (0..batch)
        .map(|_| {
            let i = rng.random_range(0..n);
            let f = flip && rng.random_bool(0.5);
            (i, f)
        })
        .collect()
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub net: PlaneNet<f32>,
    pub start_iteration: u64,
    pub final_iteration: u64,
    pub log: Vec<LogEntry>,
    pub checkpoint_dir: PathBuf,
}

fn write_nan_dump(dir: &Path, iteration: u64, plan: &[(usize, bool)], set: &TrainingSet, detail: &str) -> Result<()> {
    let batch: Vec<serde_json::Value> = plan
        .iter()
        .map(|&(i, f)| serde_json::json!({"sample_seed": set.samples[i].seed, "flipped": f}))
        .collect();
    let dump = serde_json::json!({"iteration": iteration, "detail": detail, "batch": batch});
    let path = dir.join(NAN_DUMP_FILE);
    std::fs::write(&path, serde_json::to_vec_pretty(&dump).expect("json")).map_err(|e| ToolError::io(&path, e))
}

/// Trains according to `cfg`, optionally resuming from a checkpoint
/// directory. `on_entry` sees every log entry as it is written.
pub fn train(
    cfg: &RunConfig,
    set: &TrainingSet,
    resume: Option<&Path>,
    mut on_entry: impl FnMut(&LogEntry),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let seed = cfg.resolved_seed()?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| ToolError::io(out, e))?;

    let (mut net, mut adam, start) = match resume {
        Some(dir) => {
            let ckpt = checkpoint::load(dir)?;
            let diffs = crate::config::diff_fields(&ckpt.meta.model, &cfg.model);
            if !diffs.is_empty() {
                return Err(ToolError::usage(format!(
                    "checkpoint architecture differs from config: {}",
                    diffs.join("; ")
                )));
            }
            let net = ckpt.network()?;
            let mut adam = ckpt
                .optimizer
                .unwrap_or_else(|| Adam::new(&net.params, cfg.optimizer.beta1, cfg.optimizer.beta2));
            adam.beta1 = cfg.optimizer.beta1;
            adam.beta2 = cfg.optimizer.beta2;
            (net, adam, ckpt.meta.iteration)
        }
        None => {
            let net = PlaneNet::<f32>::new(cfg.model.clone(), seed)?;
            let adam = Adam::new(&net.params, cfg.optimizer.beta1, cfg.optimizer.beta2);
            (net, adam, 0)
        }
    };

    let log_path = out.join(LOG_FILE);
    let mut log_file = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(resume.is_some())
        .truncate(resume.is_none())
        .open(&log_path)
        .map_err(|e| ToolError::io(&log_path, e))?;
    let ckpt_dir = out.join(CHECKPOINT_DIR);
    let save = |net: &PlaneNet<f32>, adam: &Adam<f32>, iteration: u64| {
        checkpoint::save(
            &ckpt_dir,
            &Checkpoint {
                meta: CheckpointMeta {
                    format_version: FORMAT_VERSION,
                    model: cfg.model.clone(),
                    width: cfg.width,
                    height: cfg.height,
                    max_depth: set.max_depth,
                    iteration,
                    optimizer_state: true,
                    optimizer_step: adam.step,
                    seed,
                    loss: cfg.loss,
                    supervise_layers: cfg.supervise_layers,
                },
                params: net.params.clone(),
                optimizer: Some(adam.clone()),
            },
        )
    };

    let clock = Instant::now();
    let mut log = Vec::new();
    for it in start + 1..=cfg.iterations {
        let plan = batch_plan(seed, it, cfg.batch_size, set.len(), cfg.flip_augment);
        let batch: Vec<&TrainSample<f32>> = plan
            .iter()
            .map(|&(i, f)| if f { &set.flipped[i] } else { &set.samples[i] })
            .collect();
        let (grads, breakdown) = match batch_gradients(&net, &batch, &cfg.loss, cfg.supervise_layers) {
            Ok(v) => v,
            Err(TrainError::NonFinite { seed: s }) => {
                let detail = format!("non-finite loss on sample {s}");
                write_nan_dump(out, it, &plan, set, &detail)?;
                return Err(ToolError::Diverged { iteration: it, detail });
            }
            Err(e) => return Err(e.into()),
        };
        if !grads.is_finite() {
            let detail = "non-finite gradient".to_string();
            write_nan_dump(out, it, &plan, set, &detail)?;
            return Err(ToolError::Diverged { iteration: it, detail });
        }
        let lr = if cfg.optimizer.linear_decay {
            cfg.optimizer.learning_rate * (1.0 - (it - 1) as f64 / cfg.iterations as f64)
        } else {
            cfg.optimizer.learning_rate
        };
        adam.update(&mut net.params, &grads, lr);
        let entry = LogEntry {
            iteration: it,
            loss: breakdown.total,
            depth: breakdown.depth,
            normal: breakdown.normal,
            distance: breakdown.distance,
            learning_rate: lr,
            wall_time_s: clock.elapsed().as_secs_f64(),
        };
        let line = serde_json::to_string(&entry).expect("log entry serializes");
        writeln!(log_file, "{line}").map_err(|e| ToolError::io(&log_path, e))?;
        on_entry(&entry);
        log.push(entry);
        if cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0 && it != cfg.iterations {
            save(&net, &adam, it)?;
        }
    }
    let final_iteration = cfg.iterations.max(start);
    save(&net, &adam, final_iteration)?;
    Ok(TrainOutcome {
        net,
        start_iteration: start,
        final_iteration,
        log,
        checkpoint_dir: ckpt_dir,
    })
}

pub fn read_log(path: &Path) -> Result<Vec<LogEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| ToolError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| ToolError::Checkpoint(format!("{}: {e}", path.display()))))
        .collect()
}
