//! Normal and plane-distance ground truth derived from a depth map.

use super::vec3::{cross, dot, normalize, sub};
use super::{CameraIntrinsics, DepthMap, DistanceMap, NormalMap};
use crate::Scalar;

const MIN_CROSS_NORM: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct GroundTruthPlanes<S> {
    pub normals: NormalMap<S>,
    pub distances: DistanceMap<S>,
    /// Pixels whose distance exceeded `max_depth` and was clipped to it.
    pub clipped: usize,
}

/// Per-pixel tangent planes from back-projected points.
///
/// Tangents are central differences of neighboring 3D points (one-sided at
/// the image border). A pixel is invalid if any point of its stencil is
/// invalid or the tangents are degenerate. Normals are oriented so that
/// `N . X > 0`; the distance is `N . X`, clipped to `max_depth`.
pub fn derive_gt_normal_distance<S: Scalar>(
    depth: &DepthMap<S>,
    k: &CameraIntrinsics<S>,
) -> GroundTruthPlanes<S> {
    let (w, h) = (depth.width, depth.height);
    let mut normals = NormalMap::invalid(w, h);
    let mut distances = DistanceMap::invalid(w, h);
    let mut clipped = 0;

    let point = |x: usize, y: usize| -> Option<[S; 3]> {
        let d = depth.get(x, y)?;
        k.backproject(S::lit(x as f64), S::lit(y as f64), d).ok()
    };
    // Difference along one axis: central inside, one-sided at the border.
    let tangent = |lo: Option<[S; 3]>, center: [S; 3], hi: Option<[S; 3]>, at_lo: bool, at_hi: bool| {
        match (at_lo, at_hi) {
            (true, true) => None,
            (true, false) => hi.map(|b| sub(b, center)),
            (false, true) => lo.map(|a| sub(center, a)),
            (false, false) => match (lo, hi) {
                (Some(a), Some(b)) => Some(sub(b, a)),
                _ => None,
            },
        }
    };

    for y in 0..h {
        for x in 0..w {
            let Some(center) = point(x, y) else { continue };
            let left = (x > 0).then(|| point(x - 1, y)).flatten();
            let right = (x + 1 < w).then(|| point(x + 1, y)).flatten();
            let up = (y > 0).then(|| point(x, y - 1)).flatten();
            let down = (y + 1 < h).then(|| point(x, y + 1)).flatten();
            let Some(du) = tangent(left, center, right, x == 0, x + 1 == w) else { continue };
            let Some(dv) = tangent(up, center, down, y == 0, y + 1 == h) else { continue };
            let Some(mut n) = normalize(cross(du, dv), S::lit(MIN_CROSS_NORM)) else { continue };
            let mut t = dot(n, center);
            if t < S::zero() {
                n = [-n[0], -n[1], -n[2]];
                t = -t;
            }
            if !(t > S::zero()) {
                continue;
            }
            if t > depth.max_depth {
                t = depth.max_depth;
                clipped += 1;
            }
            let i = y * w + x;
            normals.vectors[i] = n;
            normals.valid[i] = true;
            distances.values[i] = t;
            distances.valid[i] = true;
        }
    }
    GroundTruthPlanes {
        normals,
        distances,
        clipped,
    }
}
