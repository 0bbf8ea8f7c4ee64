//! Standard depth-estimation error and accuracy metrics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::DepthMap;
use crate::Scalar;

/// Predictions below this depth are clamped before taking logarithms.
pub const LOG_CLAMP: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no jointly valid pixels to evaluate")]
    NoValidPixels,
    #[error("prediction is {0}x{1} but ground truth is {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("cannot aggregate an empty list of reports")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub log10: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub valid_pixel_count: usize,
    /// Predictions clamped to [`LOG_CLAMP`] before the log metrics.
    #[serde(default)]
    pub clamped: usize,
}

/// Evaluates `pred` against `gt` over pixels valid in both with ground truth
/// in `(0, cap]`.
pub fn evaluate<S: Scalar>(
    pred: &DepthMap<S>,
    gt: &DepthMap<S>,
    cap: f64,
) -> Result<MetricReport, MetricsError> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(MetricsError::ShapeMismatch(pred.width, pred.height, gt.width, gt.height));
    }
    let (mut abs_rel, mut sq_rel, mut se, mut se_log, mut l10) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut hits = [0usize; 3];
    let (mut n, mut clamped) = (0usize, 0usize);
    let thresholds = [1.25, 1.25f64.powi(2), 1.25f64.powi(3)];
    for i in 0..gt.values.len() {
        if !(gt.valid[i] && pred.valid[i]) {
            continue;
        }
        let g = gt.values[i].to_f64_lossy();
        let d = pred.values[i].to_f64_lossy();
        if !(g > 0.0 && g <= cap) {
            continue;
        }
        n += 1;
        let diff = d - g;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        se += diff * diff;
        let dl = if d < LOG_CLAMP {
            clamped += 1;
            LOG_CLAMP
        } else {
            d
        };
        let r = dl.ln() - g.ln();
        se_log += r * r;
        l10 += (dl.log10() - g.log10()).abs();
        let ratio = (dl / g).max(g / dl);
        for (h, t) in hits.iter_mut().zip(thresholds) {
            if ratio < t {
                *h += 1;
            }
        }
    }
    if n == 0 {
        return Err(MetricsError::NoValidPixels);
    }
    let nf = n as f64;
    Ok(MetricReport {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (se / nf).sqrt(),
        rmse_log: (se_log / nf).sqrt(),
        log10: l10 / nf,
        delta1: hits[0] as f64 / nf,
        delta2: hits[1] as f64 / nf,
        delta3: hits[2] as f64 / nf,
        valid_pixel_count: n,
        clamped,
    })
}

/// Per-image mean of every metric; pixel and clamp counts are summed.
pub fn aggregate(reports: &[MetricReport]) -> Result<MetricReport, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Ok(MetricReport {
        abs_rel: mean(|r| r.abs_rel),
        sq_rel: mean(|r| r.sq_rel),
        rmse: mean(|r| r.rmse),
        rmse_log: mean(|r| r.rmse_log),
        log10: mean(|r| r.log10),
        delta1: mean(|r| r.delta1),
        delta2: mean(|r| r.delta2),
        delta3: mean(|r| r.delta3),
        valid_pixel_count: reports.iter().map(|r| r.valid_pixel_count).sum(),
        clamped: reports.iter().map(|r| r.clamped).sum(),
    })
}

pub const TABLE_HEADER: [&str; 8] = [
    "RMSE", "AbsRel", "log10", "d<1.25", "d<1.25^2", "d<1.25^3", "SqRel", "RMSElog",
];

impl MetricReport {
    /// Values in [`TABLE_HEADER`] order.
    pub fn table_row(&self) -> [f64; 8] {
        [
            self.rmse,
            self.abs_rel,
            self.log10,
            self.delta1,
            self.delta2,
            self.delta3,
            self.sq_rel,
            self.rmse_log,
        ]
    }
}

/// Aligned plain-text table with one row per `(label, report)`.
pub fn format_table(rows: &[(String, MetricReport)]) -> String {
    let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = write!(out, "{:<label_w$}", "");
    for h in TABLE_HEADER {
        let _ = write!(out, " {h:>9}");
    }
    out.push('\n');
    for (label, r) in rows {
        let _ = write!(out, "{label:<label_w$}");
        for v in r.table_row() {
            let _ = write!(out, " {v:>9.4}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(v: &[f64]) -> DepthMap<f64> {
        DepthMap::from_values(v.len(), 1, v.to_vec(), 100.0)
    }

    #[test]
    fn perfect_prediction() {
        let g = map(&[1.0, 2.5, 7.0]);
        let r = evaluate(&g, &g, 10.0).unwrap();
        assert_eq!((r.abs_rel, r.sq_rel, r.rmse, r.rmse_log, r.log10), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!((r.delta1, r.delta2, r.delta3), (1.0, 1.0, 1.0));
    }

    #[test]
    fn four_pixel_worked_example() {
        let r = evaluate(&map(&[1.0, 2.0, 4.0, 8.0]), &map(&[1.0, 2.0, 2.0, 8.0]), 10.0).unwrap();
        assert_eq!(r.abs_rel, 0.25);
        assert_eq!(r.rmse, 1.0);
        assert_eq!(r.delta1, 0.75);
        assert_eq!(r.sq_rel, 0.5);
        assert_eq!(r.valid_pixel_count, 4);
    }

    #[test]
    fn threshold_is_strict() {
        let g = map(&[1.0, 3.0, 5.0]);
        let p = map(&[1.25001, 3.75003, 6.25005]);
        let r = evaluate(&p, &g, 10.0).unwrap();
        assert_eq!((r.delta1, r.delta2, r.delta3), (0.0, 1.0, 1.0));
    }

    #[test]
    fn cap_and_validity_select_pixels() {
        let g = map(&[1.0, 20.0, 3.0]);
        let mut p = map(&[1.0, 5.0, 3.0]);
        assert_eq!(evaluate(&p, &g, 10.0).unwrap().valid_pixel_count, 2);
        p.valid[0] = false;
        assert_eq!(evaluate(&p, &g, 10.0).unwrap().valid_pixel_count, 1);
        assert_eq!(evaluate(&p, &g, 0.5), Err(MetricsError::NoValidPixels));
    }

    #[test]
    fn tiny_predictions_are_clamped_for_logs() {
        let r = evaluate(&map(&[1e-5]), &map(&[1e-3]), 10.0).unwrap();
        assert_eq!(r.clamped, 1);
        assert_eq!(r.rmse_log, 0.0);
    }

    #[test]
    fn aggregation_is_a_per_image_mean() {
        let a = evaluate(&map(&[1.0]), &map(&[1.0]), 10.0).unwrap();
        let b = evaluate(&map(&[2.0]), &map(&[1.0]), 10.0).unwrap();
        assert_eq!(aggregate(&[a]).unwrap(), a);
        assert_eq!(aggregate(&[a, a]).unwrap().abs_rel, a.abs_rel);
        let m = aggregate(&[a, b]).unwrap();
        assert_eq!(m.delta1, 0.5);
        assert_eq!(m.abs_rel, 0.5);
        assert_eq!(aggregate(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn table_lists_rows() {
        let a = evaluate(&map(&[1.0]), &map(&[1.0]), 10.0).unwrap();
        let t = format_table(&[("baseline".into(), a)]);
        assert!(t.lines().next().unwrap().contains("AbsRel"));
        assert!(t.contains("baseline"));
    }

    proptest! {
        #[test]
        fn invariants_hold(v in proptest::collection::vec((0.1f64..9.0, 0.1f64..9.0), 1..40), c in 0.1f64..5.0) {
            let p: Vec<f64> = v.iter().map(|x| x.0).collect();
            let g: Vec<f64> = v.iter().map(|x| x.1).collect();
            let r = evaluate(&map(&p), &map(&g), 100.0).unwrap();
            prop_assert!(r.delta1 <= r.delta2 && r.delta2 <= r.delta3 && r.delta3 <= 1.0);
            prop_assert!(r.abs_rel >= 0.0 && r.rmse >= 0.0 && r.sq_rel >= 0.0 && r.log10 >= 0.0);
            let ps: Vec<f64> = p.iter().map(|x| x * c).collect();
            let gs: Vec<f64> = g.iter().map(|x| x * c).collect();
            let s = evaluate(&map(&ps), &map(&gs), 1000.0).unwrap();
            prop_assert!((s.abs_rel - r.abs_rel).abs() < 1e-9);
            prop_assert!((s.rmse_log - r.rmse_log).abs() < 1e-9);
            prop_assert!((s.log10 - r.log10).abs() < 1e-9);
            prop_assert!((s.rmse - c * r.rmse).abs() < 1e-9 * (1.0 + s.rmse));
            prop_assert!((s.sq_rel - c * r.sq_rel).abs() < 1e-9 * (1.0 + s.sq_rel));
        }
    }
}
