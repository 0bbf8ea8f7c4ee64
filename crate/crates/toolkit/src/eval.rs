use std::collections::BTreeMap;
use std::path::Path;

use plane2depth::geometry::{depth_map_from_plane_fields, DepthMap};
use plane2depth::metrics::{aggregate, evaluate, format_table, MetricReport};
use plane2depth::planenet::PlaneNet;
use plane2depth::synth::{write_pfm, RenderedSample, TextureKind, NO_PLANE};
use serde::{Deserialize, Serialize};

use crate::colormap;
use crate::error::{Result, ToolError};

/// Default clip for error-map colorization, in meters.
pub const DEFAULT_ERROR_CLIP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureGroup {
    Flat,
    Checker,
    Stripes,
    SplitColor,
}

impl From<TextureKind> for TextureGroup {
    fn from(k: TextureKind) -> Self {
        match k {
            TextureKind::Flat => Self::Flat,
            TextureKind::Checker => Self::Checker,
            TextureKind::Stripes => Self::Stripes,
            TextureKind::SplitColor => Self::SplitColor,
        }
    }
}

/// Mean absolute depth error over all pixels of planes with one texture kind.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TextureError {
    pub mean_abs_error: f64,
    pub pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub seed: u64,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub per_image: Vec<ImageResult>,
    pub aggregate: MetricReport,
    /// Pixel-pooled over the whole set, keyed by texture kind.
    pub texture_errors: BTreeMap<TextureGroup, TextureError>,
}

impl EvalOutcome {
    /// Split-color plane error divided by flat plane error.
    pub fn deception_ratio(&self) -> Option<f64> {
        let d = self.texture_errors.get(&TextureGroup::SplitColor)?;
        let u = self.texture_errors.get(&TextureGroup::Flat)?;
        (d.pixels > 0 && u.pixels > 0 && u.mean_abs_error > 0.0).then(|| d.mean_abs_error / u.mean_abs_error)
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions<'a> {
    /// Ground-truth cap in meters; defaults to each sample's max depth.
    pub cap: Option<f64>,
    /// Write per-image predicted depth and error maps here.
    pub export_maps: Option<&'a Path>,
    pub error_clip: Option<f64>,
}

/// Full-resolution network prediction.
pub fn predict_depth(net: &PlaneNet<f32>, s: &RenderedSample<f32>) -> Result<DepthMap<f32>> {
    let out = net.forward(&s.rgb, s.width, s.height, &s.intrinsics, s.depth.max_depth)?;
    Ok(out.depth)
}

/// Depth recomputed from the ground-truth normal and distance maps alone.
pub fn oracle_depth(s: &RenderedSample<f32>) -> Result<DepthMap<f32>> {
    Ok(depth_map_from_plane_fields(&s.normal, &s.distance, &s.intrinsics, s.depth.max_depth)?)
}

pub fn evaluate_samples(
    samples: &[RenderedSample<f32>],
    opts: &EvalOptions,
    mut predict: impl FnMut(&RenderedSample<f32>) -> Result<DepthMap<f32>>,
) -> Result<EvalOutcome> {
    if samples.is_empty() {
        return Err(ToolError::usage("evaluation set is empty"));
    }
    let mut per_image = Vec::with_capacity(samples.len());
    let mut sums: BTreeMap<TextureGroup, (f64, usize)> = BTreeMap::new();
    if let Some(dir) = opts.export_maps {
        std::fs::create_dir_all(dir).map_err(|e| ToolError::io(dir, e))?;
    }
    for s in samples {
        let pred = predict(s)?;
        let cap = opts.cap.unwrap_or(s.depth.max_depth as f64);
        let report = evaluate(&pred, &s.depth, cap).map_err(ToolError::from)?;
        for i in 0..pred.values.len() {
            if !(s.depth.valid[i] && pred.valid[i]) || s.plane_id[i] == NO_PLANE {
                continue;
            }
            if let Some(kind) = s.texture_of(s.plane_id[i]) {
                let e = sums.entry(kind.into()).or_default();
                e.0 += (pred.values[i] as f64 - s.depth.values[i] as f64).abs();
                e.1 += 1;
            }
        }
        if let Some(dir) = opts.export_maps {
            export_maps(dir, s, &pred, opts.error_clip.unwrap_or(DEFAULT_ERROR_CLIP))?;
        }
        per_image.push(ImageResult { seed: s.seed, report });
    }
    let reports: Vec<MetricReport> = per_image.iter().map(|r| r.report.clone()).collect();
    let texture_errors = sums
        .into_iter()
        .map(|(k, (sum, n))| {
            (
                k,
                TextureError {
                    mean_abs_error: sum / n as f64,
                    pixels: n,
                },
            )
        })
        .collect();
    Ok(EvalOutcome {
        per_image,
        aggregate: aggregate(&reports)?,
        texture_errors,
    })
}

fn export_maps(dir: &Path, s: &RenderedSample<f32>, pred: &DepthMap<f32>, clip: f64) -> Result<()> {
    let stem = plane2depth::synth::sample_dir_name(s.seed);
    let pfm = dir.join(format!("{stem}_depth.pfm"));
    write_pfm(&pfm, pred.width, pred.height, &pred.values)?;
    let err: Vec<Option<f64>> = (0..pred.values.len())
        .map(|i| {
            (s.depth.valid[i] && pred.valid[i]).then(|| pred.values[i] as f64 - s.depth.values[i] as f64)
        })
        .collect();
    colormap::save_error_png(&dir.join(format!("{stem}_error.png")), pred.width, pred.height, &err, clip)
}

/// Writes `per_image.json`, `aggregate.json` and `table.txt` into `dir`.
pub fn write_reports(dir: &Path, label: &str, outcome: &EvalOutcome) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| ToolError::io(dir, e))?;
    let write = |name: &str, bytes: Vec<u8>| {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| ToolError::io(&p, e))
    };
    write("per_image.json", serde_json::to_vec_pretty(&outcome.per_image).expect("json"))?;
    let agg = serde_json::json!({
        "aggregate": outcome.aggregate,
        "texture_errors": outcome.texture_errors,
        "deception_ratio": outcome.deception_ratio(),
    });
    write("aggregate.json", serde_json::to_vec_pretty(&agg).expect("json"))?;
    write(
        "table.txt",
        format_table(&[(label.to_string(), outcome.aggregate.clone())]).into_bytes(),
    )
}
