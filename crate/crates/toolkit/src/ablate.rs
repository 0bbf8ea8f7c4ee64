use std::path::Path;

use plane2depth::metrics::{MetricReport, TABLE_HEADER};
use plane2depth::synth::RenderedSample;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Result, ToolError};
use crate::eval::{evaluate_samples, predict_depth, EvalOptions, EvalOutcome};
use crate::train::{train, TrainingSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Matrix {
    /// Feature modulators off and on at the configured layer count.
    Afm,
    /// Normal and distance losses toggled independently: four rows.
    NcDc,
    /// One row per query count.
    Queries(Vec<usize>),
}

impl Matrix {
    pub fn parse(name: &str, queries: &[usize]) -> Result<Self> {
        match name {
            "afm" => Ok(Self::Afm),
            "ncdc" => Ok(Self::NcDc),
            "queries" if queries.is_empty() => Err(ToolError::usage("`--matrix queries` needs `--queries L1,L2,..`")),
            "queries" => Ok(Self::Queries(queries.to_vec())),
            other => Err(ToolError::usage(format!(
                "unknown ablation matrix `{other}` (expected afm, ncdc or queries)"
            ))),
        }
    }
}

fn mark(on: bool) -> String {
    if on { "✓" } else { "✗" }.to_string()
}

/// One configuration of an ablation: key columns and the run config.
#[derive(Debug, Clone)]
pub struct Arm {
    pub slug: String,
    pub columns: Vec<(String, String)>,
    pub config: RunConfig,
}

pub fn arms(base: &RunConfig, matrix: &Matrix) -> Vec<Arm> {
    let layers = base.model.num_layers.to_string();
    let arm = |slug: String, columns: Vec<(&str, String)>, config: RunConfig| Arm {
        config: RunConfig {
            output_dir: base.output_dir.join(&slug),
            ..config
        },
        slug,
        columns: columns.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    };
    match matrix {
        Matrix::Afm => [false, true]
            .into_iter()
            .map(|on| {
                let mut c = base.clone();
                c.model.af_modulators = on;
                let layer_label = if on && base.model.num_layers > 1 {
                    format!("{layers}(+{})", base.model.num_layers - 1)
                } else {
                    layers.clone()
                };
                arm(
                    format!("afm_{}", if on { "on" } else { "off" }),
                    vec![("layers", layer_label), ("AFM", mark(on))],
                    c,
                )
            })
            .collect(),
        Matrix::NcDc => [(false, false), (true, false), (false, true), (true, true)]
            .into_iter()
            .map(|(nc, dc)| {
                let mut c = base.clone();
                if !nc {
                    c.loss.beta = 0.0;
                }
                if !dc {
                    c.loss.gamma = 0.0;
                }
                arm(
                    format!("nc_{}_dc_{}", u8::from(nc), u8::from(dc)),
                    vec![("NC", mark(nc)), ("DC", mark(dc))],
                    c,
                )
            })
            .collect(),
        Matrix::Queries(ls) => ls
            .iter()
            .map(|&l| {
                let mut c = base.clone();
                c.model.num_queries = l;
                arm(format!("queries_{l}"), vec![("L", l.to_string())], c)
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmResult {
    pub slug: String,
    pub columns: Vec<(String, String)>,
    pub final_loss: f64,
    pub eval: EvalOutcome,
}

/// Aligned plain-text table: key columns then the metric columns.
pub fn format_ablation_table(rows: &[ArmResult]) -> String {
    let keys: Vec<&str> = rows
        .first()
        .map(|r| r.columns.iter().map(|(k, _)| k.as_str()).collect())
        .unwrap_or_default();
    let mut header: Vec<String> = keys.iter().map(|k| k.to_string()).collect();
    header.extend(TABLE_HEADER.iter().map(|h| h.to_string()));
    let mut lines = vec![header];
    for r in rows {
        let mut cells: Vec<String> = r.columns.iter().map(|(_, v)| v.clone()).collect();
        cells.extend(metric_cells(&r.eval.aggregate));
        lines.push(cells);
    }
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for l in &lines {
        let cells: Vec<String> = l
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{}{}", " ".repeat(w - s.chars().count()), s))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn metric_cells(r: &MetricReport) -> Vec<String> {
    r.table_row().iter().map(|v| format!("{v:.4}")).collect()
}

/// Trains and evaluates every arm with the base seed, writing each run under
/// `base.output_dir/<slug>` and the table to `ablation.txt` / `ablation.json`.
pub fn run_ablation(
    base: &RunConfig,
    matrix: &Matrix,
    train_set: &TrainingSet,
    test: &[RenderedSample<f32>],
    mut progress: impl FnMut(&str, u64, f64),
) -> Result<Vec<ArmResult>> {
    let mut results = Vec::new();
    for arm in arms(base, matrix) {
        let outcome = train(&arm.config, train_set, None, |e| progress(&arm.slug, e.iteration, e.loss))?;
        let eval = evaluate_samples(test, &EvalOptions::default(), |s| predict_depth(&outcome.net, s))?;
        results.push(ArmResult {
            slug: arm.slug.clone(),
            columns: arm.columns.clone(),
            final_loss: outcome.log.last().map(|e| e.loss).unwrap_or(f64::NAN),
            eval,
        });
    }
    write_table(&base.output_dir, &results)?;
    Ok(results)
}

pub fn write_table(dir: &Path, results: &[ArmResult]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| ToolError::io(dir, e))?;
    let p = dir.join("ablation.txt");
    std::fs::write(&p, format_ablation_table(results)).map_err(|e| ToolError::io(&p, e))?;
    let p = dir.join("ablation.json");
    std::fs::write(&p, serde_json::to_vec_pretty(results).expect("json")).map_err(|e| ToolError::io(&p, e))
}
