use rand::Rng;

use super::decoder::{Linear, Norm};
use super::NetConfig;
use crate::autodiff::{DepthClamp, Graph, ParamStore, Var};
use crate::Scalar;

/// Norm below which a normal vector is treated as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Mlp {
    hidden: Linear,
    out: Linear,
}

impl Mlp {
    fn new<S: Scalar>(p: &mut ParamStore<S>, name: &str, d: usize, out: usize, rng: &mut impl Rng) -> Self {
        Self {
            hidden: Linear::new(p, &format!("{name}.hidden"), d, d, rng),
            out: Linear::new(p, &format!("{name}.out"), d, out, rng),
        }
    }

    fn apply<S: Scalar>(&self, g: &mut Graph<S>, p: &ParamStore<S>, x: Var) -> Var {
        let h = self.hidden.apply(g, p, x);
        let h = g.gelu(h);
        self.out.apply(g, p, h)
    }
}

/// The three query-to-basis MLPs.
#[derive(Debug, Clone)]
pub(crate) struct PlaneHeads {
    norm: Norm,
    normal: Mlp,
    distance: Mlp,
    feature: Mlp,
}

/// Per-query plane bases on the tape: unit normals `[L, 3]`, distance logits
/// `[L, 1]`, plane features `[L, C]`, plus the raw normal head output.
#[derive(Debug, Clone, Copy)]
pub struct PlaneBasisVars {
    pub raw_normals: Var,
    pub normals: Var,
    pub distance_logits: Var,
    pub features: Var,
}

impl PlaneHeads {
    pub(crate) fn new<S: Scalar>(cfg: &NetConfig, p: &mut ParamStore<S>, rng: &mut impl Rng) -> Self {
        let d = cfg.query_dim;
        let heads = Self {
            norm: Norm::new(p, "heads.norm", d),
            normal: Mlp::new(p, "heads.normal", d, 3, rng),
            distance: Mlp::new(p, "heads.distance", d, 1, rng),
            feature: Mlp::new(p, "heads.feature", d, cfg.channels, rng),
        };
        // Start every plane facing the camera.
        p.get_mut(heads.normal.out.b).data_mut()[2] = S::one();
        heads
    }

    pub(crate) fn apply<S: Scalar>(&self, g: &mut Graph<S>, p: &ParamStore<S>, queries: Var) -> PlaneBasisVars {
        let x = self.norm.apply(g, p, queries);
        let raw_normals = self.normal.apply(g, p, x);
        let normals = g.normalize_rows3(raw_normals, S::lit(DEGENERATE_NORM));
        PlaneBasisVars {
            raw_normals,
            normals,
            distance_logits: self.distance.apply(g, p, x),
            features: self.feature.apply(g, p, x),
        }
    }
}

/// Soft pixel-to-plane assignment stored as `[pixels, L]`: each row is a
/// softmax over the planes of `F_sim E^T`.
pub fn pixel_assignment<S: Scalar>(g: &mut Graph<S>, plane_features: Var, sim_features: Var) -> Var {
    let logits = g.matmul_ex(sim_features, false, plane_features, true, S::one());
    g.softmax_rows(logits, None)
}

/// Per-pixel maps on the tape.
#[derive(Debug, Clone, Copy)]
pub struct MapVars {
    /// Aggregated normals before renormalization.
    pub mixed_normals: Var,
    pub normal: Var,
    pub distance: Var,
    pub depth: Var,
}

/// Mixes plane bases by the assignment `s: [pixels, L]` and converts the
/// resulting per-pixel plane to depth along `rays`.
pub fn assemble_maps<S: Scalar>(
    g: &mut Graph<S>,
    normals: Var,
    distance_logits: Var,
    s: Var,
    rays: Vec<[S; 3]>,
    clamp: DepthClamp<S>,
) -> MapVars {
    let mixed_normals = g.matmul(s, normals);
    let normal = g.normalize_rows3(mixed_normals, S::lit(DEGENERATE_NORM));
    let t = g.matmul(s, distance_logits);
    let t = g.sigmoid(t);
    let distance = g.scale(t, clamp.max_depth);
    let depth = g.plane_depth(normal, distance, rays, clamp);
    MapVars {
        mixed_normals,
        normal,
        distance,
        depth,
    }
}
