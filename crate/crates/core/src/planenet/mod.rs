//! The plane-query depth network: convolutional pyramid, query decoder with
//! optional feature modulation, and the plane-guided depth generator.

mod backbone;
mod decoder;
mod heads;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backbone::{sine_positional_encoding, FeatureGrid, MultiScaleFeatures, INPUT_CHANNELS, STRIDES};
pub use decoder::{attention, binarize_mask, predict_mask, DecoderTrace};
pub use heads::{assemble_maps, pixel_assignment, MapVars, PlaneBasisVars, DEGENERATE_NORM};

use crate::autodiff::{DepthClamp, Graph, ParamId, ParamStore, Tensor, Var};
use crate::geometry::{CameraIntrinsics, DepthMap, DistanceMap, GeometryError, NormalMap, DEFAULT_DENOM_EPS};
use crate::grid;
use crate::Scalar;
use backbone::Backbone;
use decoder::{AfModulator, DecoderLayer};
use heads::PlaneHeads;

/// Stride of the per-layer prediction maps.
pub const OUTPUT_STRIDE: usize = 4;

/// Strides the decoder layers cycle through, coarse to fine.
pub const DECODER_STRIDES: [usize; 3] = [32, 16, 8];

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("input {width}x{height} is not divisible by {multiple}")]
    InputSize { width: usize, height: usize, multiple: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    /// Number of plane queries `L`.
    pub num_queries: usize,
    /// Feature width `C` of the pyramid and of the plane features.
    pub channels: usize,
    /// Query embedding width.
    pub query_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub af_modulators: bool,
    /// Hidden width of the decoder feed-forward block as a multiple of the
    /// query width.
    pub ffn_mult: usize,
    /// Encoder width at strides 8 and coarser; earlier stages use 1/4 and 1/2.
    pub backbone_width: usize,
    /// Input width and height must be multiples of this.
    pub input_multiple: usize,
    pub query_init_std: f64,
    /// Lower clamp for predicted depth in meters.
    pub min_depth: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            num_queries: 64,
            channels: 64,
            query_dim: 64,
            num_layers: 3,
            num_heads: 1,
            af_modulators: true,
            ffn_mult: 2,
            backbone_width: 64,
            input_multiple: 32,
            query_init_std: 0.02,
            min_depth: 1e-3,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::Config(m.to_string()));
        if self.num_queries == 0 {
            return bad("num_queries must be at least 1");
        }
        if self.channels == 0 || self.query_dim == 0 || self.backbone_width == 0 || self.ffn_mult == 0 {
            return bad("channels, query_dim, backbone_width and ffn_mult must be positive");
        }
        if self.num_layers == 0 {
            return bad("num_layers must be at least 1");
        }
        if self.num_heads == 0 || self.query_dim % self.num_heads != 0 {
            return bad("num_heads must be positive and divide query_dim");
        }
        if self.input_multiple == 0 {
            return bad("input_multiple must be positive");
        }
        if !(self.query_init_std >= 0.0 && self.query_init_std.is_finite()) {
            return bad("query_init_std must be finite and non-negative");
        }
        if !(self.min_depth > 0.0 && self.min_depth.is_finite()) {
            return bad("min_depth must be positive");
        }
        Ok(())
    }

    pub fn check_input(&self, width: usize, height: usize) -> Result<(), NetError> {
        let m = self.input_multiple;
        if width == 0 || height == 0 || width % m != 0 || height % m != 0 {
            return Err(NetError::InputSize { width, height, multiple: m });
        }
        Ok(())
    }
}

/// Network weights and the handles needed to rebuild the forward graph.
#[derive(Debug, Clone)]
pub struct PlaneNet<S> {
    pub config: NetConfig,
    pub params: ParamStore<S>,
    queries: ParamId,
    backbone: Backbone,
    modulators: Vec<Option<AfModulator>>,
    layers: Vec<DecoderLayer>,
    heads: PlaneHeads,
}

/// Outputs of one decoder layer at the stride-4 grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput<S> {
    pub normal: NormalMap<S>,
    pub distance: DistanceMap<S>,
    pub depth: DepthMap<S>,
    /// Soft assignment `[pixels, L]`.
    pub assignment: Tensor<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutput<S> {
    pub layers: Vec<LayerOutput<S>>,
    /// Last layer's depth bilinearly upsampled to the input resolution.
    pub depth: DepthMap<S>,
    pub grid_width: usize,
    pub grid_height: usize,
    /// Pixels whose aggregated normal was degenerate, summed over layers.
    pub degenerate_pixel_normals: usize,
    /// Queries whose raw normal head output was degenerate, summed over layers.
    pub degenerate_head_normals: usize,
}

/// Handles into the graph for one layer.
#[derive(Debug, Clone)]
pub struct LayerVars {
    pub queries: Var,
    pub basis: PlaneBasisVars,
    pub assignment: Var,
    pub maps: MapVars,
    pub trace: DecoderTrace,
    pub modulation_weights: Option<Var>,
    /// Mask used by this layer's cross-attention (`None` for all-ones).
    pub mask: Option<Vec<bool>>,
}

/// A built forward graph.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub features: MultiScaleFeatures,
    pub layers: Vec<LayerVars>,
    pub width: usize,
    pub height: usize,
    pub grid_width: usize,
    pub grid_height: usize,
    pub max_depth: f64,
}

/// Viewing rays at the sample positions of a stride-`stride` grid.
pub fn grid_rays<S: Scalar>(k: &CameraIntrinsics<S>, width: usize, height: usize, stride: usize) -> Vec<[S; 3]> {
    let (gw, gh) = (grid::grid_len(width, stride), grid::grid_len(height, stride));
    let mut rays = Vec::with_capacity(gw * gh);
    for j in 0..gh {
        let v = grid::sample_coord(j, stride, height);
        for i in 0..gw {
            let u = grid::sample_coord(i, stride, width);
            rays.push(k.pixel_ray(S::lit(u as f64), S::lit(v as f64)).direction);
        }
    }
    rays
}

impl<S: Scalar> PlaneNet<S> {
    /// Fresh weights drawn from `seed`.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self, NetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let normal = Normal::new(0.0, config.query_init_std).map_err(|e| NetError::Config(e.to_string()))?;
        let q: Vec<S> = (0..config.num_queries * config.query_dim)
            .map(|_| S::lit(normal.sample(&mut rng)))
            .collect();
        let queries = p.add("queries", Tensor::from_vec(config.num_queries, config.query_dim, q));
        let backbone = Backbone::new(&config, &mut p, &mut rng);
        let mut modulators = Vec::new();
        let mut layers = Vec::new();
        for l in 0..config.num_layers {
            modulators.push(
                (config.af_modulators && l > 0)
                    .then(|| AfModulator::new(&config, &mut p, &format!("modulator.{l}"), &mut rng)),
            );
            layers.push(DecoderLayer::new(&config, &mut p, &format!("decoder.{l}"), &mut rng));
        }
        let heads = PlaneHeads::new(&config, &mut p, &mut rng);
        Ok(Self {
            config,
            params: p,
            queries,
            backbone,
            modulators,
            layers,
            heads,
        })
    }

    /// Rebuilds the network for `config` and loads `params` into it. Every
    /// tensor must be present with the right shape and no extras are allowed.
    pub fn from_params(config: NetConfig, params: &ParamStore<S>) -> Result<Self, NetError> {
        let mut net = Self::new(config, 0)?;
        let problems = net.params.load_from(params);
        if !problems.is_empty() {
            return Err(NetError::Shape(format!(
                "parameters missing or mis-shaped: {}",
                problems.join(", ")
            )));
        }
        if params.len() != net.params.len() {
            let extra: Vec<&str> = params
                .iter()
                .map(|(n, _)| n)
                .filter(|n| net.params.id(n).is_none())
                .collect();
            return Err(NetError::Shape(format!("unexpected parameters: {}", extra.join(", "))));
        }
        Ok(net)
    }

    pub fn queries_id(&self) -> ParamId {
        self.queries
    }

    /// Builds the full forward pass on `g`.
    pub fn build(
        &self,
        g: &mut Graph<S>,
        rgb: &[[S; 3]],
        width: usize,
        height: usize,
        k: &CameraIntrinsics<S>,
        max_depth: S,
    ) -> Result<ForwardVars, NetError> {
        self.config.check_input(width, height)?;
        if rgb.len() != width * height {
            return Err(NetError::Shape(format!(
                "image buffer has {} pixels, expected {}",
                rgb.len(),
                width * height
            )));
        }
        k.validate_for(width, height)?;
        if !(max_depth > S::zero() && max_depth.is_finite()) {
            return Err(NetError::Config(format!("max_depth must be positive, got {max_depth}")));
        }
        let p = &self.params;
        let features = self.backbone.forward(g, p, rgb, width, height, k);
        let sim = features.grids[0];
        let rays = grid_rays(k, width, height, OUTPUT_STRIDE);
        let clamp = DepthClamp {
            min_depth: S::lit(self.config.min_depth),
            max_depth,
            denom_eps: S::lit(DEFAULT_DENOM_EPS),
        };

        let mut queries = g.param(p, self.queries);
        let mut prev_features: Option<Var> = None;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let scale = *features
                .at_stride(DECODER_STRIDES[l % DECODER_STRIDES.len()])
                .expect("decoder stride present in pyramid");
            let pos = g.input(sine_positional_encoding(scale.width, scale.height, self.config.channels));
            let mut feat = g.add(scale.var, pos);
            let mut modulation_weights = None;
            if let Some(m) = &self.modulators[l] {
                let (f, w) = m.apply(g, p, feat, queries);
                feat = f;
                modulation_weights = Some(w);
            }
            let mask = prev_features.map(|e| {
                predict_mask(
                    g.value(e),
                    g.value(sim.var),
                    sim.width,
                    sim.height,
                    scale.width,
                    scale.height,
                )
            });
            let trace = layer.apply(g, p, queries, feat, mask.as_deref(), self.config.num_heads);
            queries = trace.output;
            let basis = self.heads.apply(g, p, queries);
            let assignment = pixel_assignment(g, basis.features, sim.var);
            let maps = assemble_maps(g, basis.normals, basis.distance_logits, assignment, rays.clone(), clamp);
            prev_features = Some(basis.features);
            layers.push(LayerVars {
                queries,
                basis,
                assignment,
                maps,
                trace,
                modulation_weights,
                mask,
            });
        }
        Ok(ForwardVars {
            features,
            layers,
            width,
            height,
            grid_width: sim.width,
            grid_height: sim.height,
            max_depth: max_depth.to_f64_lossy(),
        })
    }

    /// Inference: builds the graph and extracts every layer's maps.
    pub fn forward(
        &self,
        rgb: &[[S; 3]],
        width: usize,
        height: usize,
        k: &CameraIntrinsics<S>,
        max_depth: S,
    ) -> Result<NetworkOutput<S>, NetError> {
        let mut g = Graph::new();
        let vars = self.build(&mut g, rgb, width, height, k, max_depth)?;
        Ok(vars.extract(&g))
    }
}

fn count_degenerate<S: Scalar>(t: &Tensor<S>) -> usize {
    (0..t.rows())
        .filter(|&r| {
            let v = t.row(r);
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            !(n >= S::lit(DEGENERATE_NORM))
        })
        .count()
}

impl ForwardVars {
    /// Reads the per-layer maps off an evaluated graph.
    pub fn extract<S: Scalar>(&self, g: &Graph<S>) -> NetworkOutput<S> {
        let (gw, gh) = (self.grid_width, self.grid_height);
        let max_depth = S::lit(self.max_depth);
        let mut degenerate_pixel_normals = 0;
        let mut degenerate_head_normals = 0;
        let layers: Vec<LayerOutput<S>> = self
            .layers
            .iter()
            .map(|l| {
                degenerate_pixel_normals += count_degenerate(g.value(l.maps.mixed_normals));
                degenerate_head_normals += count_degenerate(g.value(l.basis.raw_normals));
                let n = g.value(l.maps.normal);
                let normal = NormalMap {
                    width: gw,
                    height: gh,
                    vectors: (0..n.rows()).map(|r| [n.get(r, 0), n.get(r, 1), n.get(r, 2)]).collect(),
                    valid: vec![true; gw * gh],
                };
                let distance = DistanceMap {
                    width: gw,
                    height: gh,
                    values: g.value(l.maps.distance).data().to_vec(),
                    valid: vec![true; gw * gh],
                };
                let depth = DepthMap {
                    width: gw,
                    height: gh,
                    values: g.value(l.maps.depth).data().to_vec(),
                    valid: vec![true; gw * gh],
                    max_depth,
                };
                LayerOutput {
                    normal,
                    distance,
                    depth,
                    assignment: g.value(l.assignment).clone(),
                }
            })
            .collect();
        let last = &layers.last().expect("at least one layer").depth;
        let up = grid::bilinear_upsample(&last.values, gw, gh, OUTPUT_STRIDE, self.width, self.height);
        let depth = DepthMap {
            width: self.width,
            height: self.height,
            valid: vec![true; up.len()],
            values: up,
            max_depth,
        };
        NetworkOutput {
            layers,
            depth,
            grid_width: gw,
            grid_height: gh,
            degenerate_pixel_normals,
            degenerate_head_normals,
        }
    }
}

#[cfg(test)]
mod tests;
