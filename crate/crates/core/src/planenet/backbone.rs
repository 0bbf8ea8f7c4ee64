use rand::Rng;

use super::decoder::Norm;
use super::NetConfig;
use crate::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::geometry::CameraIntrinsics;
use crate::Scalar;

/// Channels fed to the stem: normalized RGB plus the x and y components of
/// each pixel's viewing ray.
pub const INPUT_CHANNELS: usize = 5;

/// Strides of the four output grids, finest first.
pub const STRIDES: [usize; 4] = [4, 8, 16, 32];

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: ParamId,
    b: ParamId,
    stride: usize,
}

/// Convolution, per-pixel LayerNorm and GELU; residual when shapes allow.
#[derive(Debug, Clone, Copy)]
struct Block {
    conv: Conv,
    norm: Norm,
    residual: bool,
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
pub(crate) struct Backbone {
    blocks: Vec<Block>,
    laterals: [Linear; 4],
    smooth: Conv,
}

/// One feature grid `[h * w, C]` of the pyramid.
#[derive(Debug, Clone, Copy)]
pub struct FeatureGrid {
    pub var: Var,
    pub width: usize,
    pub height: usize,
    pub stride: usize,
}

/// The four projected grids at strides 4, 8, 16 and 32.
#[derive(Debug, Clone, Copy)]
pub struct MultiScaleFeatures {
    pub grids: [FeatureGrid; 4],
}

impl MultiScaleFeatures {
    pub fn at_stride(&self, stride: usize) -> Option<&FeatureGrid> {
        self.grids.iter().find(|g| g.stride == stride)
    }
}

/// Fixed 2D sine encoding of a `w x h` grid, `[h * w, c]`. The first half of
/// the channels encodes the row and the second half the column; within a half,
/// channel `i` is `sin` (even) or `cos` (odd) of `2 pi (j + 0.5) / n` scaled by
/// `10000^(-2 floor(i / 2) / half)`.
pub fn sine_positional_encoding<S: Scalar>(w: usize, h: usize, c: usize) -> Tensor<S> {
    let half_y = c / 2;
    let half_x = c - half_y;
    let enc = |i: usize, half: usize, j: usize, n: usize| {
        let pos = std::f64::consts::TAU * (j as f64 + 0.5) / n as f64;
        let freq = 10000f64.powf(-2.0 * (i / 2) as f64 / half as f64);
        if i % 2 == 0 {
            (pos * freq).sin()
        } else {
            (pos * freq).cos()
        }
    };
    let mut data = Vec::with_capacity(w * h * c);
    for y in 0..h {
        for x in 0..w {
            data.extend((0..half_y).map(|i| S::lit(enc(i, half_y, y, h))));
            data.extend((0..half_x).map(|i| S::lit(enc(i, half_x, x, w))));
        }
    }
    Tensor::from_vec(w * h, c, data)
}

fn conv<S: Scalar>(
    p: &mut ParamStore<S>,
    name: &str,
    cin: usize,
    cout: usize,
    stride: usize,
    rng: &mut impl Rng,
) -> Conv {
    Conv {
        w: p.add_xavier(format!("{name}.w"), 9 * cin, cout, 9 * cin, cout, rng),
        b: p.add_filled(format!("{name}.b"), 1, cout, 0.0),
        stride,
    }
}

impl Backbone {
    pub(crate) fn new<S: Scalar>(cfg: &NetConfig, p: &mut ParamStore<S>, rng: &mut impl Rng) -> Self {
        let w = cfg.backbone_width;
        let (q, h) = ((w / 4).max(1), (w / 2).max(1));
        let spec = [
            ("stem", INPUT_CHANNELS, q, 2),
            ("stage4.a", q, h, 2),
            ("stage4.b", h, h, 1),
            ("stage8.a", h, w, 2),
            ("stage8.b", w, w, 1),
            ("stage16", w, w, 2),
            ("stage32", w, w, 2),
        ];
        let blocks = spec
            .iter()
            .map(|&(name, cin, cout, s)| {
                let name = format!("backbone.{name}");
                Block {
                    conv: conv(p, &name, cin, cout, s, rng),
                    norm: Norm::new(p, &format!("{name}.norm"), cout),
                    residual: s == 1 && cin == cout,
                }
            })
            .collect();
        let c = cfg.channels;
        let lateral_in = [h, w, w, w];
        let laterals = std::array::from_fn(|i| Linear {
            w: p.add_xavier(format!("backbone.lateral{}.w", STRIDES[i]), lateral_in[i], c, lateral_in[i], c, rng),
            b: p.add_filled(format!("backbone.lateral{}.b", STRIDES[i]), 1, c, 0.0),
        });
        let smooth = conv(p, "backbone.smooth4", c, c, 1, rng);
        Self { blocks, laterals, smooth }
    }

    /// Runs the encoder and the top-down pyramid. `width` and `height` must
    /// already be validated by the caller.
    pub(crate) fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        p: &ParamStore<S>,
        rgb: &[[S; 3]],
        width: usize,
        height: usize,
        k: &CameraIntrinsics<S>,
    ) -> MultiScaleFeatures {
        let two = S::lit(2.0);
        let half = S::lit(0.5);
        let mut input = Vec::with_capacity(width * height * INPUT_CHANNELS);
        for y in 0..height {
            for x in 0..width {
                let c = rgb[y * width + x];
                let ray = k.pixel_ray(S::lit(x as f64), S::lit(y as f64)).direction;
                input.extend_from_slice(&[
                    two * (c[0] - half),
                    two * (c[1] - half),
                    two * (c[2] - half),
                    ray[0],
                    ray[1],
                ]);
            }
        }
        let mut x = g.input(Tensor::from_vec(width * height, INPUT_CHANNELS, input));
        let (mut w, mut h) = (width, height);
        let mut taps = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let c = b.conv;
            let wv = g.param(p, c.w);
            let bv = g.param(p, c.b);
            let y = g.conv3x3(x, wv, w, h, c.stride);
            w = w.div_ceil(c.stride);
            h = h.div_ceil(c.stride);
            let y = g.add_row(y, bv);
            let y = b.norm.apply(g, p, y);
            let y = g.gelu(y);
            x = if b.residual { g.add(x, y) } else { y };
            // Taps after stage4.b, stage8.b, stage16, stage32.
            if matches!(i, 2 | 4 | 5 | 6) {
                taps.push((x, w, h));
            }
        }
        let mut lat: Vec<Var> = Vec::with_capacity(4);
        for (i, &(t, _, _)) in taps.iter().enumerate() {
            let wv = g.param(p, self.laterals[i].w);
            let bv = g.param(p, self.laterals[i].b);
            lat.push(g.linear(t, wv, bv));
        }
        let mut merged = [lat[3]; 4];
        for i in (0..3).rev() {
            let (_, cw, ch) = taps[i + 1];
            let (_, fw, fh) = taps[i];
            let up = g.resize_nearest(merged[i + 1], cw, ch, fw, fh);
            merged[i] = g.add(lat[i], up);
        }
        let (_, w4, h4) = taps[0];
        let sw = g.param(p, self.smooth.w);
        let sb = g.param(p, self.smooth.b);
        let s = g.conv3x3(merged[0], sw, w4, h4, 1);
        merged[0] = g.add_row(s, sb);
        MultiScaleFeatures {
            grids: std::array::from_fn(|i| FeatureGrid {
                var: merged[i],
                width: taps[i].1,
                height: taps[i].2,
                stride: STRIDES[i],
            }),
        }
    }
}
