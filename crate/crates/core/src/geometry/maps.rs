//! Per-pixel depth, normal and distance fields with validity masks.
//!
//! Invalid pixels hold a zero sentinel and are skipped by every loss and
//! metric.

use crate::Scalar;

/// Depth `D(p)` in meters; valid values lie in `(0, max_depth]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap<S> {
    pub width: usize,
    pub height: usize,
    pub values: Vec<S>,
    pub valid: Vec<bool>,
    pub max_depth: S,
}

/// Unit surface normals `N(p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap<S> {
    pub width: usize,
    pub height: usize,
    pub vectors: Vec<[S; 3]>,
    pub valid: Vec<bool>,
}

/// Plane-to-origin distances `T(p)` in meters; valid values are positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap<S> {
    pub width: usize,
    pub height: usize,
    pub values: Vec<S>,
    pub valid: Vec<bool>,
}

impl<S: Scalar> DepthMap<S> {
    pub fn invalid(width: usize, height: usize, max_depth: S) -> Self {
        Self {
            width,
            height,
            values: vec![S::zero(); width * height],
            valid: vec![false; width * height],
            max_depth,
        }
    }

    /// Builds a map from raw values; entries outside `(0, max_depth]` or
    /// non-finite become invalid.
    pub fn from_values(width: usize, height: usize, values: Vec<S>, max_depth: S) -> Self {
        assert_eq!(values.len(), width * height, "depth buffer size");
        let mut map = Self::invalid(width, height, max_depth);
        for (i, d) in values.into_iter().enumerate() {
            map.set(i, d);
        }
        map
    }

    /// Writes `d` at linear index `i`, marking it invalid if out of range.
    pub fn set(&mut self, i: usize, d: S) {
        if d.is_finite() && d > S::zero() && d <= self.max_depth {
            self.values[i] = d;
            self.valid[i] = true;
        } else {
            self.values[i] = S::zero();
            self.valid[i] = false;
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Option<S> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn cast<T: Scalar>(&self) -> DepthMap<T> {
        DepthMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| T::lit(v.to_f64_lossy())).collect(),
            valid: self.valid.clone(),
            max_depth: T::lit(self.max_depth.to_f64_lossy()),
        }
    }
}

impl<S: Scalar> NormalMap<S> {
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            vectors: vec![[S::zero(); 3]; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Option<[S; 3]> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.vectors[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn cast<T: Scalar>(&self) -> NormalMap<T> {
        NormalMap {
            width: self.width,
            height: self.height,
            vectors: self.vectors.iter().map(|&v| super::vec3::cast(v)).collect(),
            valid: self.valid.clone(),
        }
    }
}

impl<S: Scalar> DistanceMap<S> {
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![S::zero(); width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Option<S> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn cast<T: Scalar>(&self) -> DistanceMap<T> {
        DistanceMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| T::lit(v.to_f64_lossy())).collect(),
            valid: self.valid.clone(),
        }
    }
}
