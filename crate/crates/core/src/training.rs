//! Differentiable training loss and per-batch gradients.

use thiserror::Error;

use crate::autodiff::{Graph, ParamStore, Tensor, Var};
use crate::geometry::CameraIntrinsics;
use crate::objectives::{
    distance_loss_grad, normal_loss_grad, si_loss_grad, LossBreakdown, LossError, LossWeights,
    SuperviseLayers, SupervisionTargets,
};
use crate::planenet::{ForwardVars, NetError, PlaneNet, OUTPUT_STRIDE};
use crate::synth::RenderedSample;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("sample {seed}: {source}")]
    Loss { seed: u64, source: LossError },
    #[error("non-finite loss on sample {seed}")]
    NonFinite { seed: u64 },
    #[error("empty batch")]
    EmptyBatch,
}

/// One network input with its stride-4 supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample<S> {
    pub rgb: Vec<[S; 3]>,
    pub width: usize,
    pub height: usize,
    pub intrinsics: CameraIntrinsics<S>,
    pub max_depth: S,
    pub targets: SupervisionTargets<S>,
    pub seed: u64,
}

impl<S: Scalar> TrainSample<S> {
    pub fn from_rendered(sample: &RenderedSample<S>) -> Result<Self, TrainError> {
        let targets = SupervisionTargets::resample(&sample.depth, &sample.normal, &sample.distance, OUTPUT_STRIDE)
            .map_err(|source| TrainError::Loss { seed: sample.seed, source })?;
        Ok(Self {
            rgb: sample.rgb.clone(),
            width: sample.width,
            height: sample.height,
            intrinsics: sample.intrinsics,
            max_depth: sample.depth.max_depth,
            targets,
            seed: sample.seed,
        })
    }
}

/// Appends the weighted loss of `vars` to `g`: per supervised layer
/// `alpha * L_D + beta * L_N + gamma * L_T`, averaged over layers. Terms with
/// zero weight are left off the tape.
pub fn graph_loss<S: Scalar>(
    g: &mut Graph<S>,
    vars: &ForwardVars,
    targets: &SupervisionTargets<S>,
    weights: &LossWeights,
    supervise: SuperviseLayers,
) -> Result<(Var, LossBreakdown), LossError> {
    let layers = supervise.layers(vars.layers.len());
    let inv = 1.0 / layers.len().max(1) as f64;
    let mut terms = Vec::new();
    let mut per_layer = Vec::new();
    for l in layers {
        let maps = &vars.layers[l].maps;
        let n_pix = g.value(maps.depth).rows();
        if n_pix != targets.depth.len() {
            return Err(LossError::ShapeMismatch(format!(
                "prediction has {n_pix} pixels, targets {}",
                targets.depth.len()
            )));
        }
        let mask = &targets.valid;
        let depth = g.value(maps.depth).data().to_vec();
        let si = si_loss_grad(&depth, &targets.depth, mask, S::lit(weights.lambda))?;
        let normals: Vec<[S; 3]> = {
            let t = g.value(maps.normal);
            (0..t.rows()).map(|r| [t.get(r, 0), t.get(r, 1), t.get(r, 2)]).collect()
        };
        let nl = normal_loss_grad(&normals, &targets.normal, mask)?;
        let distance = g.value(maps.distance).data().to_vec();
        let tl = distance_loss_grad(&distance, &targets.distance, mask)?;
        per_layer.push([si.value, nl.value, tl.value].map(|v| v.to_f64_lossy()));

        if weights.alpha != 0.0 {
            let v = g.external_scalar(maps.depth, si.value, Tensor::from_vec(n_pix, 1, si.grad));
            terms.push((v, S::lit(weights.alpha * inv)));
        }
        if weights.beta != 0.0 {
            let v = g.external_scalar(maps.normal, nl.value, Tensor::from_vec(n_pix, 3, nl.grad.concat()));
            terms.push((v, S::lit(weights.beta * inv)));
        }
        if weights.gamma != 0.0 {
            let v = g.external_scalar(maps.distance, tl.value, Tensor::from_vec(n_pix, 1, tl.grad));
            terms.push((v, S::lit(weights.gamma * inv)));
        }
    }
    if per_layer.is_empty() {
        return Err(LossError::NoValidPixels);
    }
    let root = g.weighted_sum(&terms);
    Ok((root, LossBreakdown::from_layers(per_layer, weights)))
}

/// Forward and backward for one sample; gradients are added into `grads`.
pub fn accumulate_sample<S: Scalar>(
    net: &PlaneNet<S>,
    sample: &TrainSample<S>,
    weights: &LossWeights,
    supervise: SuperviseLayers,
    grads: &mut ParamStore<S>,
) -> Result<LossBreakdown, TrainError> {
    let mut g = Graph::new();
    let vars = net.build(&mut g, &sample.rgb, sample.width, sample.height, &sample.intrinsics, sample.max_depth)?;
    let (root, breakdown) = graph_loss(&mut g, &vars, &sample.targets, weights, supervise)
        .map_err(|source| TrainError::Loss { seed: sample.seed, source })?;
    if !breakdown.total.is_finite() {
        return Err(TrainError::NonFinite { seed: sample.seed });
    }
    g.backward(root, grads);
    Ok(breakdown)
}

/// Mean gradient and mean loss breakdown over `batch`.
pub fn batch_gradients<S: Scalar>(
    net: &PlaneNet<S>,
    batch: &[&TrainSample<S>],
    weights: &LossWeights,
    supervise: SuperviseLayers,
) -> Result<(ParamStore<S>, LossBreakdown), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut grads = net.params.zeros_like();
    let mut parts = Vec::with_capacity(batch.len());
    for s in batch {
        parts.push(accumulate_sample(net, s, weights, supervise, &mut grads)?);
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale_assign(S::lit(inv));
    let n_layers = parts[0].per_layer.len();
    let per_layer = (0..n_layers)
        .map(|l| std::array::from_fn(|k| parts.iter().map(|p| p.per_layer[l][k]).sum::<f64>() * inv))
        .collect();
    Ok((grads, LossBreakdown::from_layers(per_layer, weights)))
}

/// Total loss of one sample without building gradients.
pub fn loss_value<S: Scalar>(
    net: &PlaneNet<S>,
    sample: &TrainSample<S>,
    weights: &LossWeights,
    supervise: SuperviseLayers,
) -> Result<f64, TrainError> {
    let mut g = Graph::new();
    let vars = net.build(&mut g, &sample.rgb, sample.width, sample.height, &sample.intrinsics, sample.max_depth)?;
    let (_, breakdown) = graph_loss(&mut g, &vars, &sample.targets, weights, supervise)
        .map_err(|source| TrainError::Loss { seed: sample.seed, source })?;
    Ok(breakdown.total)
}
