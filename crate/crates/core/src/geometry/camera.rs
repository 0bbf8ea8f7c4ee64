use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::Scalar;

/// Pinhole intrinsics `fx, fy, cx, cy`, all in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics<S> {
    pub fx: S,
    pub fy: S,
    pub cx: S,
    pub cy: S,
}

/// The unnormalized back-projection ray `K^-1 p~`; its `z` component is 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRay<S> {
    pub direction: [S; 3],
}

impl<S: Scalar> CameraIntrinsics<S> {
    pub fn new(fx: S, fy: S, cx: S, cy: S) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy };
        k.check()?;
        Ok(k)
    }

    /// Square-pixel intrinsics with the given horizontal field of view and the
    /// principal point at the image center.
    pub fn from_fov(width: usize, height: usize, fov_x_deg: f64) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidIntrinsics("empty image".into()));
        }
        if !(fov_x_deg > 0.0 && fov_x_deg < 180.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "field of view {fov_x_deg} outside (0, 180)"
            )));
        }
        let f = 0.5 * width as f64 / (0.5 * fov_x_deg.to_radians()).tan();
        Self::new(
            S::lit(f),
            S::lit(f),
            S::lit((width as f64 - 1.0) * 0.5),
            S::lit((height as f64 - 1.0) * 0.5),
        )
    }

    fn check(&self) -> Result<(), GeometryError> {
        let finite = self.fx.is_finite()
            && self.fy.is_finite()
            && self.cx.is_finite()
            && self.cy.is_finite();
        if !finite {
            return Err(GeometryError::InvalidIntrinsics("non-finite value".into()));
        }
        if self.fx <= S::zero() || self.fy <= S::zero() {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    /// Checks the principal point lies inside a `width x height` image.
    pub fn validate_for(&self, width: usize, height: usize) -> Result<(), GeometryError> {
        self.check()?;
        let inside = |c: S, n: usize| c >= S::zero() && c < S::lit(n as f64);
        if !inside(self.cx, width) || !inside(self.cy, height) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {width}x{height} image",
                self.cx, self.cy
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn pixel_ray(&self, u: S, v: S) -> PixelRay<S> {
        PixelRay {
            direction: [(u - self.cx) / self.fx, (v - self.cy) / self.fy, S::one()],
        }
    }

    pub fn backproject(&self, u: S, v: S, depth: S) -> Result<[S; 3], GeometryError> {
        if !(depth > S::zero()) {
            return Err(GeometryError::NonPositiveDepth(depth.to_f64_lossy()));
        }
        let r = self.pixel_ray(u, v).direction;
        Ok([r[0] * depth, r[1] * depth, depth])
    }

    /// Projects a camera-frame point to `(u, v, depth)`; `None` behind the camera.
    pub fn project(&self, x: [S; 3]) -> Option<(S, S, S)> {
        if !(x[2] > S::zero()) {
            return None;
        }
        Some((
            self.fx * x[0] / x[2] + self.cx,
            self.fy * x[1] / x[2] + self.cy,
            x[2],
        ))
    }

    pub fn cast<T: Scalar>(&self) -> CameraIntrinsics<T> {
        CameraIntrinsics {
            fx: T::lit(self.fx.to_f64_lossy()),
            fy: T::lit(self.fy.to_f64_lossy()),
            cx: T::lit(self.cx.to_f64_lossy()),
            cy: T::lit(self.cy.to_f64_lossy()),
        }
    }

    /// Intrinsics after horizontally mirroring a `width`-pixel image.
    pub fn flipped_horizontally(&self, width: usize) -> Self {
        Self {
            cx: S::lit(width as f64 - 1.0) - self.cx,
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k100() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0).unwrap()
    }

    #[test]
    fn principal_point_maps_to_optical_axis() {
        let k = CameraIntrinsics::new(320.0, 300.0, 31.5, 17.25).unwrap();
        assert_eq!(k.pixel_ray(31.5, 17.25).direction, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn pixel_ray_examples() {
        assert_eq!(k100().pixel_ray(150.0, 50.0).direction, [1.0, 0.0, 1.0]);
        let k = CameraIntrinsics::new(200.0, 100.0, 50.0, 50.0).unwrap();
        assert_eq!(k.pixel_ray(50.0, 150.0).direction, [0.0, 1.0, 1.0]);
    }

    #[test]
    fn backproject_examples() {
        let k = k100();
        assert_eq!(k.backproject(50.0, 50.0, 3.0).unwrap(), [0.0, 0.0, 3.0]);
        assert_eq!(k.backproject(150.0, 50.0, 2.0).unwrap(), [2.0, 0.0, 2.0]);
        assert!(matches!(
            k.backproject(1.0, 1.0, 0.0),
            Err(GeometryError::NonPositiveDepth(_))
        ));
        assert!(k.backproject(1.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(1.0, f64::NAN, 0.0, 0.0).is_err());
        let k = CameraIntrinsics::new(10.0, 10.0, 64.0, 3.0).unwrap();
        assert!(k.validate_for(64, 64).is_err());
        assert!(k.validate_for(65, 64).is_ok());
    }

    #[test]
    fn fov_intrinsics_center_the_principal_point() {
        let k = CameraIntrinsics::<f64>::from_fov(64, 48, 90.0).unwrap();
        assert!((k.fx - 32.0).abs() < 1e-12);
        assert_eq!((k.cx, k.cy), (31.5, 23.5));
        k.validate_for(64, 48).unwrap();
    }

    proptest! {
        #[test]
        fn project_inverts_backproject(
            u in -10.0f64..200.0, v in -10.0f64..200.0, d in 0.01f64..100.0,
            fx in 10.0f64..500.0, fy in 10.0f64..500.0,
        ) {
            let k = CameraIntrinsics::new(fx, fy, 60.0, 40.0).unwrap();
            let x = k.backproject(u, v, d).unwrap();
            let (pu, pv, pd) = k.project(x).unwrap();
            prop_assert!((pu - u).abs() < 1e-9);
            prop_assert!((pv - v).abs() < 1e-9);
            prop_assert!((pd - d).abs() < 1e-9);
        }
    }
}
