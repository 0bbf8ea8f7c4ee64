//! Training losses: scale-invariant log depth, normal cosine and distance L1,
//! plus their weighted combination.
//!
//! Each loss has a slice form returning the value together with its gradient
//! with respect to the prediction; the network's autodiff tape reuses these.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{vec3, DepthMap, DistanceMap, NormalMap};
use crate::grid;
use crate::planenet::NetworkOutput;
use crate::Scalar;

/// Lower bound applied inside the square root when differentiating the SI loss.
pub const SI_GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("loss undefined: no jointly valid pixels")]
    NoValidPixels,
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Variance factor of the SI loss.
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 0.15,
            alpha: 10.0,
            beta: 5.0,
            gamma: 1.0,
        }
    }
}

/// A loss value and its gradient with respect to each prediction entry
/// (zero on excluded pixels).
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<S, G> {
    pub value: S,
    pub grad: Vec<G>,
}

fn joint_count(mask: &[bool]) -> Result<usize, LossError> {
    match mask.iter().filter(|&&m| m).count() {
        0 => Err(LossError::NoValidPixels),
        n => Ok(n),
    }
}

fn check_len(a: usize, b: usize, c: usize) -> Result<(), LossError> {
    if a != b || a != c {
        return Err(LossError::ShapeMismatch(format!("lengths {a}, {b}, {c}")));
    }
    Ok(())
}

/// `sqrt(mean(d^2) - lambda * mean(d)^2)` with `d = ln pred - ln gt` over
/// `mask`.
pub fn si_loss_grad<S: Scalar>(
    pred: &[S],
    gt: &[S],
    mask: &[bool],
    lambda: S,
) -> Result<LossGrad<S, S>, LossError> {
    check_len(pred.len(), gt.len(), mask.len())?;
    let k = joint_count(mask)?;
    let kf = S::lit(k as f64);
    let mut delta = vec![S::zero(); pred.len()];
    let (mut s1, mut s2) = (S::zero(), S::zero());
    for i in 0..pred.len() {
        if !mask[i] {
            continue;
        }
        for v in [pred[i], gt[i]] {
            if !(v > S::zero()) {
                return Err(LossError::NonPositiveDepth(v.to_f64_lossy()));
            }
        }
        let d = pred[i].ln() - gt[i].ln();
        delta[i] = d;
        s1 = s1 + d;
        s2 = s2 + d * d;
    }
    let mean = s1 / kf;
    let var = s2 / kf - lambda * mean * mean;
    let value = var.max(S::zero()).sqrt();
    let denom = var.max(S::lit(SI_GRAD_FLOOR)).sqrt() * kf;
    let grad = (0..pred.len())
        .map(|i| {
            if mask[i] {
                (delta[i] - lambda * mean) / (denom * pred[i])
            } else {
                S::zero()
            }
        })
        .collect();
    Ok(LossGrad { value, grad })
}

/// `mean(1 - pred . gt)` over `mask`.
pub fn normal_loss_grad<S: Scalar>(
    pred: &[[S; 3]],
    gt: &[[S; 3]],
    mask: &[bool],
) -> Result<LossGrad<S, [S; 3]>, LossError> {
    check_len(pred.len(), gt.len(), mask.len())?;
    let kf = S::lit(joint_count(mask)? as f64);
    let mut sum = S::zero();
    let mut grad = vec![[S::zero(); 3]; pred.len()];
    for i in 0..pred.len() {
        if mask[i] {
            sum = sum + S::one() - vec3::dot(pred[i], gt[i]);
            grad[i] = vec3::scale(gt[i], -S::one() / kf);
        }
    }
    Ok(LossGrad {
        value: sum / kf,
        grad,
    })
}

/// `mean(|pred - gt|)` over `mask`.
pub fn distance_loss_grad<S: Scalar>(
    pred: &[S],
    gt: &[S],
    mask: &[bool],
) -> Result<LossGrad<S, S>, LossError> {
    check_len(pred.len(), gt.len(), mask.len())?;
    let kf = S::lit(joint_count(mask)? as f64);
    let mut sum = S::zero();
    let mut grad = vec![S::zero(); pred.len()];
    for i in 0..pred.len() {
        if mask[i] {
            let d = pred[i] - gt[i];
            sum = sum + d.abs();
            grad[i] = if d > S::zero() {
                S::one() / kf
            } else if d < S::zero() {
                -S::one() / kf
            } else {
                S::zero()
            };
        }
    }
    Ok(LossGrad {
        value: sum / kf,
        grad,
    })
}

fn same_shape(a: (usize, usize), b: (usize, usize)) -> Result<(), LossError> {
    if a != b {
        return Err(LossError::ShapeMismatch(format!("{}x{} vs {}x{}", a.0, a.1, b.0, b.1)));
    }
    Ok(())
}

fn joint(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(x, y)| *x && *y).collect()
}

pub fn si_loss<S: Scalar>(pred: &DepthMap<S>, gt: &DepthMap<S>, lambda: S) -> Result<S, LossError> {
    same_shape((pred.width, pred.height), (gt.width, gt.height))?;
    let mask = joint(&pred.valid, &gt.valid);
    Ok(si_loss_grad(&pred.values, &gt.values, &mask, lambda)?.value)
}

pub fn normal_loss<S: Scalar>(pred: &NormalMap<S>, gt: &NormalMap<S>) -> Result<S, LossError> {
    same_shape((pred.width, pred.height), (gt.width, gt.height))?;
    let mask = joint(&pred.valid, &gt.valid);
    Ok(normal_loss_grad(&pred.vectors, &gt.vectors, &mask)?.value)
}

pub fn distance_loss<S: Scalar>(pred: &DistanceMap<S>, gt: &DistanceMap<S>) -> Result<S, LossError> {
    same_shape((pred.width, pred.height), (gt.width, gt.height))?;
    let mask = joint(&pred.valid, &gt.valid);
    Ok(distance_loss_grad(&pred.values, &gt.values, &mask)?.value)
}

/// Ground truth resampled onto a prediction grid. `valid` is the joint
/// validity of depth, normal and distance.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisionTargets<S> {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<S>,
    pub normal: Vec<[S; 3]>,
    pub distance: Vec<S>,
    pub valid: Vec<bool>,
}

impl<S: Scalar> SupervisionTargets<S> {
    /// Nearest-neighbor resampling of full-resolution ground truth to `stride`.
    pub fn resample(
        depth: &DepthMap<S>,
        normal: &NormalMap<S>,
        distance: &DistanceMap<S>,
        stride: usize,
    ) -> Result<Self, LossError> {
        let (w, h) = (depth.width, depth.height);
        same_shape((w, h), (normal.width, normal.height))?;
        same_shape((w, h), (distance.width, distance.height))?;
        let valid: Vec<bool> = (0..w * h)
            .map(|i| depth.valid[i] && normal.valid[i] && distance.valid[i])
            .collect();
        Ok(Self {
            width: grid::grid_len(w, stride),
            height: grid::grid_len(h, stride),
            depth: grid::nearest_downsample(&depth.values, w, h, stride),
            normal: grid::nearest_downsample(&normal.vectors, w, h, stride),
            distance: grid::nearest_downsample(&distance.values, w, h, stride),
            valid: grid::nearest_downsample(&valid, w, h, stride),
        })
    }
}

/// Which decoder layers contribute to the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SuperviseLayers {
    Last,
    #[default]
    All,
}

impl std::str::FromStr for SuperviseLayers {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "last" => Ok(Self::Last),
            "all" => Ok(Self::All),
            other => Err(format!("expected `last` or `all`, got `{other}`")),
        }
    }
}

impl SuperviseLayers {
    /// Indices of supervised layers among `n` decoder layers.
    pub fn layers(self, n: usize) -> std::ops::Range<usize> {
        match self {
            Self::Last => n.saturating_sub(1)..n,
            Self::All => 0..n,
        }
    }
}

/// Per-term values for logging, averaged over supervised layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub depth: f64,
    pub normal: f64,
    pub distance: f64,
    /// `[si, normal, distance]` per supervised layer.
    pub per_layer: Vec<[f64; 3]>,
}

impl LossBreakdown {
    /// Combines per-layer raw terms `[si, normal, distance]`.
    pub fn from_layers(per_layer: Vec<[f64; 3]>, w: &LossWeights) -> Self {
        let n = per_layer.len().max(1) as f64;
        let mean = |k: usize| per_layer.iter().map(|t| t[k]).sum::<f64>() / n;
        let (depth, normal, distance) = (mean(0), mean(1), mean(2));
        Self {
            total: w.alpha * depth + w.beta * normal + w.gamma * distance,
            depth,
            normal,
            distance,
            per_layer,
        }
    }
}

/// `alpha * L_D + beta * L_N + gamma * L_T` per supervised layer, averaged
/// over layers.
pub fn total_loss<S: Scalar>(
    outputs: &NetworkOutput<S>,
    targets: &SupervisionTargets<S>,
    weights: &LossWeights,
    supervise: SuperviseLayers,
) -> Result<LossBreakdown, LossError> {
    let mut per_layer = Vec::new();
    for l in supervise.layers(outputs.layers.len()) {
        let layer = &outputs.layers[l];
        same_shape(
            (layer.depth.width, layer.depth.height),
            (targets.width, targets.height),
        )?;
        let mask = joint(&layer.depth.valid, &targets.valid);
        let si = si_loss_grad(&layer.depth.values, &targets.depth, &mask, S::lit(weights.lambda))?;
        let n = normal_loss_grad(&layer.normal.vectors, &targets.normal, &mask)?;
        let t = distance_loss_grad(&layer.distance.values, &targets.distance, &mask)?;
        per_layer.push([si.value, n.value, t.value].map(|v| v.to_f64_lossy()));
    }
    if per_layer.is_empty() {
        return Err(LossError::NoValidPixels);
    }
    Ok(LossBreakdown::from_layers(per_layer, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all(n: usize) -> Vec<bool> {
        vec![true; n]
    }

    #[test]
    fn si_loss_examples() {
        let gt = [1.0, 2.0, 3.5, 7.0];
        assert_eq!(si_loss_grad(&gt, &gt, &all(4), 0.15).unwrap().value, 0.0);
        let doubled: Vec<f64> = gt.iter().map(|g| 2.0 * g).collect();
        let v = si_loss_grad(&doubled, &gt, &all(4), 0.15).unwrap().value;
        assert!((v - 2f64.ln() * 0.85f64.sqrt()).abs() < 1e-12);
        assert!((v - 0.639_049).abs() < 5e-6);
        let v = si_loss_grad(&doubled, &gt, &all(4), 1.0).unwrap().value;
        assert!(v.abs() < 1e-7, "{v}");
    }

    #[test]
    fn si_loss_errors() {
        assert_eq!(
            si_loss_grad(&[1.0], &[1.0], &[false], 0.15),
            Err(LossError::NoValidPixels)
        );
        assert!(matches!(
            si_loss_grad(&[0.0], &[1.0], &[true], 0.15),
            Err(LossError::NonPositiveDepth(_))
        ));
        // Masked-out non-positive values are ignored.
        assert!(si_loss_grad(&[0.0, 1.0], &[1.0, 1.0], &[false, true], 0.15).is_ok());
    }

    #[test]
    fn normal_loss_examples() {
        let z = [[0.0, 0.0, 1.0]; 3];
        let x = [[1.0, 0.0, 0.0]; 3];
        let nz = [[0.0, 0.0, -1.0]; 3];
        assert_eq!(normal_loss_grad(&z, &z, &all(3)).unwrap().value, 0.0);
        assert_eq!(normal_loss_grad(&x, &z, &all(3)).unwrap().value, 1.0);
        assert_eq!(normal_loss_grad(&nz, &z, &all(3)).unwrap().value, 2.0);
    }

    #[test]
    fn distance_loss_examples() {
        let gt = [1.0, 2.0, 3.0];
        assert_eq!(distance_loss_grad(&gt, &gt, &all(3)).unwrap().value, 0.0);
        let off: Vec<f64> = gt.iter().map(|g| g + 0.5).collect();
        assert_eq!(distance_loss_grad(&off, &gt, &all(3)).unwrap().value, 0.5);
        assert_eq!(distance_loss_grad(&[1.0, 3.0], &[2.0, 1.0], &all(2)).unwrap().value, 1.5);
    }

    #[test]
    fn map_level_losses_use_joint_validity() {
        let gt = DepthMap::from_values(2, 1, vec![1.0, 2.0], 10.0);
        let mut pred = DepthMap::from_values(2, 1, vec![1.0, 8.0], 10.0);
        assert!(si_loss(&pred, &gt, 0.15).unwrap() > 0.0);
        pred.valid[1] = false;
        assert_eq!(si_loss(&pred, &gt, 0.15).unwrap(), 0.0);
        let bad = DepthMap::from_values(1, 2, vec![1.0, 2.0], 10.0);
        assert!(matches!(si_loss(&pred, &bad, 0.15), Err(LossError::ShapeMismatch(_))));
    }

    /// Central differences of a scalar function of `x`.
    fn fd(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[i] += h;
                m[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn assert_close(a: &[f64], n: &[f64], tol: f64) {
        for (x, y) in a.iter().zip(n) {
            let rel = (x - y).abs() / x.abs().max(y.abs()).max(1e-12);
            assert!(rel < tol || (x - y).abs() < 1e-10, "analytic {x} vs numeric {y}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let gt: Vec<f64> = (0..16).map(|_| rng.random_range(0.5..9.0)).collect();
            let pred: Vec<f64> = (0..16).map(|_| rng.random_range(0.5..9.0)).collect();
            let mask: Vec<bool> = (0..16).map(|i| i % 5 != 3).collect();

            let a = si_loss_grad(&pred, &gt, &mask, 0.15).unwrap().grad;
            let n = fd(&pred, |p| si_loss_grad(p, &gt, &mask, 0.15).unwrap().value);
            assert_close(&a, &n, 1e-5);

            let a = distance_loss_grad(&pred, &gt, &mask).unwrap().grad;
            let n = fd(&pred, |p| distance_loss_grad(p, &gt, &mask).unwrap().value);
            assert_close(&a, &n, 1e-5);

            let flat: Vec<f64> = (0..48).map(|_| rng.random_range(-1.0..1.0)).collect();
            let gtn: Vec<[f64; 3]> = (0..16).map(|_| [rng.random_range(-1.0..1.0), 0.3, 0.8]).collect();
            let as_vecs = |f: &[f64]| f.chunks(3).map(|c| [c[0], c[1], c[2]]).collect::<Vec<_>>();
            let a: Vec<f64> = normal_loss_grad(&as_vecs(&flat), &gtn, &mask)
                .unwrap()
                .grad
                .concat();
            let n = fd(&flat, |f| normal_loss_grad(&as_vecs(f), &gtn, &mask).unwrap().value);
            assert_close(&a, &n, 1e-5);
        }
    }

    proptest! {
        #[test]
        fn si_loss_is_scale_invariant_jointly(
            v in proptest::collection::vec((0.1f64..9.0, 0.1f64..9.0), 1..30), c in 0.05f64..20.0,
        ) {
            let p: Vec<f64> = v.iter().map(|x| x.0).collect();
            let g: Vec<f64> = v.iter().map(|x| x.1).collect();
            let m = all(p.len());
            let a = si_loss_grad(&p, &g, &m, 0.15).unwrap().value;
            let ps: Vec<f64> = p.iter().map(|x| x * c).collect();
            let gs: Vec<f64> = g.iter().map(|x| x * c).collect();
            let b = si_loss_grad(&ps, &gs, &m, 0.15).unwrap().value;
            prop_assert!((a - b).abs() < 1e-7);
            prop_assert!(a.is_finite() && a >= 0.0);
        }

        #[test]
        fn normal_loss_is_rotation_invariant(
            v in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..20),
            angle in 0.0f64..6.28,
        ) {
            let unit = |a: f64, b: f64| [a.cos() * b.cos(), a.sin() * b.cos(), b.sin()];
            let p: Vec<[f64; 3]> = v.iter().map(|x| unit(x.0, x.1)).collect();
            let g: Vec<[f64; 3]> = v.iter().map(|x| unit(x.1, x.0)).collect();
            let rot = |n: [f64; 3]| [angle.cos() * n[0] - angle.sin() * n[2], n[1], angle.sin() * n[0] + angle.cos() * n[2]];
            let m = all(p.len());
            let a = normal_loss_grad(&p, &g, &m).unwrap().value;
            let pr: Vec<_> = p.iter().map(|&n| rot(n)).collect();
            let gr: Vec<_> = g.iter().map(|&n| rot(n)).collect();
            let b = normal_loss_grad(&pr, &gr, &m).unwrap().value;
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=2.0 + 1e-12).contains(&a));
        }
    }
}
