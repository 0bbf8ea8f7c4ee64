use super::vec3::{dot, norm};
use super::{CameraIntrinsics, DepthMap, DistanceMap, GeometryError, NormalMap, PixelRay};
use crate::Scalar;

/// Default bound on `|n . K^-1 p~|` below which a ray counts as parallel.
pub const DEFAULT_DENOM_EPS: f64 = 1e-8;

const UNIT_TOL: f64 = 1e-6;

/// Flips `(n, t)` so that `t > 0`; the plane itself is unchanged.
pub fn canonicalize_plane<S: Scalar>(n: [S; 3], t: S) -> Result<([S; 3], S), GeometryError> {
    if t == S::zero() || !t.is_finite() {
        return Err(GeometryError::ZeroDistance);
    }
    if t < S::zero() {
        Ok(([-n[0], -n[1], -n[2]], -t))
    } else {
        Ok((n, t))
    }
}

/// Depth at which `ray` meets the plane `(n, t)`: `t / (n . ray)`.
pub fn plane_to_depth_along<S: Scalar>(
    n: [S; 3],
    t: S,
    ray: &PixelRay<S>,
    denom_eps: S,
) -> Result<S, GeometryError> {
    let len = norm(n).to_f64_lossy();
    if !((len - 1.0).abs() <= UNIT_TOL) {
        return Err(GeometryError::NotUnitNormal(len));
    }
    let (n, t) = canonicalize_plane(n, t)?;
    let denom = dot(n, ray.direction);
    if denom.abs() <= denom_eps {
        return Err(GeometryError::RayParallel(denom.abs().to_f64_lossy()));
    }
    let depth = t / denom;
    if depth < S::zero() {
        return Err(GeometryError::BehindCamera(depth.to_f64_lossy()));
    }
    Ok(depth)
}

/// Plane coefficients to depth at pixel `(u, v)`: `D = T / (N^T K^-1 p~)`.
pub fn plane_to_depth<S: Scalar>(
    n: [S; 3],
    t: S,
    u: S,
    v: S,
    k: &CameraIntrinsics<S>,
) -> Result<S, GeometryError> {
    plane_to_depth_along(n, t, &k.pixel_ray(u, v), S::lit(DEFAULT_DENOM_EPS))
}

/// Applies [`plane_to_depth`] at every pixel. Pixels invalid in either input
/// or failing the conversion are invalid in the output; depths beyond
/// `max_depth` are clamped to it.
pub fn depth_map_from_plane_fields<S: Scalar>(
    normals: &NormalMap<S>,
    distances: &DistanceMap<S>,
    k: &CameraIntrinsics<S>,
    max_depth: S,
) -> Result<DepthMap<S>, GeometryError> {
    if normals.width != distances.width || normals.height != distances.height {
        return Err(GeometryError::ShapeMismatch(format!(
            "normals {}x{} vs distances {}x{}",
            normals.width, normals.height, distances.width, distances.height
        )));
    }
    let (w, h) = (normals.width, normals.height);
    let mut out = DepthMap::invalid(w, h, max_depth);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !(normals.valid[i] && distances.valid[i]) {
                continue;
            }
            let d = plane_to_depth(
                normals.vectors[i],
                distances.values[i],
                S::lit(x as f64),
                S::lit(y as f64),
                k,
            );
            if let Ok(d) = d {
                if d > S::zero() {
                    out.set(i, d.min(max_depth));
                }
            }
        }
    }
    Ok(out)
}
