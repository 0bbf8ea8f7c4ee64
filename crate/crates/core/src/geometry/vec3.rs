//! Minimal 3-vector helpers on `[S; 3]`.

use crate::Scalar;

#[inline]
pub fn dot<S: Scalar>(a: [S; 3], b: [S; 3]) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross<S: Scalar>(a: [S; 3], b: [S; 3]) -> [S; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn sub<S: Scalar>(a: [S; 3], b: [S; 3]) -> [S; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add<S: Scalar>(a: [S; 3], b: [S; 3]) -> [S; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale<S: Scalar>(a: [S; 3], s: S) -> [S; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn norm<S: Scalar>(a: [S; 3]) -> S {
    dot(a, a).sqrt()
}

/// Unit vector along `a`, or `None` when `|a|` is below `min_norm`.
#[inline]
pub fn normalize<S: Scalar>(a: [S; 3], min_norm: S) -> Option<[S; 3]> {
    let n = norm(a);
    if n < min_norm || !n.is_finite() {
        None
    } else {
        Some(scale(a, S::one() / n))
    }
}

/// Angle between two unit vectors in degrees.
pub fn angle_deg<S: Scalar>(a: [S; 3], b: [S; 3]) -> f64 {
    let c = dot(a, b).to_f64_lossy().clamp(-1.0, 1.0);
    // acos loses precision near 1; use atan2 of |a x b| and a . b instead.
    let s = norm(cross(a, b)).to_f64_lossy();
    s.atan2(c).to_degrees()
}

pub fn cast<S: Scalar, T: Scalar>(a: [S; 3]) -> [T; 3] {
    [
        T::lit(a[0].to_f64_lossy()),
        T::lit(a[1].to_f64_lossy()),
        T::lit(a[2].to_f64_lossy()),
    ]
}
