use super::scene::{nearest_hit, SceneSpec};
use super::texture::TextureKind;
use crate::geometry::vec3::{self, dot};
use crate::geometry::{CameraIntrinsics, DepthMap, DistanceMap, NormalMap};
use crate::Scalar;

/// One rendered view with aligned ground-truth channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedSample<S> {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB in `[0, 1]`.
    pub rgb: Vec<[S; 3]>,
    pub depth: DepthMap<S>,
    pub normal: NormalMap<S>,
    pub distance: DistanceMap<S>,
    /// Plane id per pixel, `u32::MAX` where nothing was hit.
    pub plane_id: Vec<u32>,
    pub intrinsics: CameraIntrinsics<S>,
    pub seed: u64,
    /// Texture kind per plane id present in the scene.
    pub plane_textures: Vec<(u32, TextureKind)>,
    /// Pixels without any hit; zero for generated scenes.
    pub missed_pixels: usize,
}

pub const NO_PLANE: u32 = u32::MAX;

/// Ray-casts every pixel center against every primitive and keeps the nearest
/// positive hit within `max_depth`.
pub fn render(scene: &SceneSpec) -> RenderedSample<f64> {
    let (w, h) = (scene.width, scene.height);
    let k = scene.intrinsics;
    let mut depth = DepthMap::invalid(w, h, scene.max_depth);
    let mut normal = NormalMap::invalid(w, h);
    let mut distance = DistanceMap::invalid(w, h);
    let mut rgb = vec![[0.0; 3]; w * h];
    let mut plane_id = vec![NO_PLANE; w * h];
    let mut missed = 0;

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (u, v) = (x as f64, y as f64);
            let Some((hit, d)) = nearest_hit(&scene.planes, &k, u, v, scene.max_depth) else {
                missed += 1;
                continue;
            };
            let plane = &scene.planes[hit];
            depth.set(i, d);
            normal.vectors[i] = plane.normal;
            normal.valid[i] = true;
            distance.values[i] = plane.distance;
            distance.valid[i] = true;
            plane_id[i] = plane.plane_id;

            let ray = k.pixel_ray(u, v).direction;
            let point = vec3::scale(ray, d);
            let color = plane.texture.sample(plane.plane_coords(point));
            // Headlight shading: brighter where the surface faces the camera.
            let facing = dot(plane.normal, ray).abs() / vec3::norm(ray);
            let shade = 0.45 + 0.55 * facing;
            rgb[i] = color.map(|c| (c * shade).clamp(0.0, 1.0));
        }
    }

    RenderedSample {
        width: w,
        height: h,
        rgb,
        depth,
        normal,
        distance,
        plane_id,
        intrinsics: k,
        seed: scene.rng_seed,
        plane_textures: scene
            .planes
            .iter()
            .map(|p| (p.plane_id, p.texture.kind()))
            .collect(),
        missed_pixels: missed,
    }
}

impl<S: Scalar> RenderedSample<S> {
    pub fn cast<T: Scalar>(&self) -> RenderedSample<T> {
        RenderedSample {
            width: self.width,
            height: self.height,
            rgb: self.rgb.iter().map(|&c| vec3::cast(c)).collect(),
            depth: self.depth.cast(),
            normal: self.normal.cast(),
            distance: self.distance.cast(),
            plane_id: self.plane_id.clone(),
            intrinsics: self.intrinsics.cast(),
            seed: self.seed,
            plane_textures: self.plane_textures.clone(),
            missed_pixels: self.missed_pixels,
        }
    }

    pub fn texture_of(&self, id: u32) -> Option<TextureKind> {
        self.plane_textures
            .iter()
            .find(|(pid, _)| *pid == id)
            .map(|&(_, k)| k)
    }

    /// Mirrors the view left-right: colors and maps are flipped, normals have
    /// their `x` component negated and the principal point is mirrored.
    pub fn flipped_horizontally(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let flip = |i: usize| {
            let (x, y) = (i % w, i / w);
            y * w + (w - 1 - x)
        };
        let mut out = self.clone();
        for i in 0..w * h {
            let j = flip(i);
            out.rgb[i] = self.rgb[j];
            out.depth.values[i] = self.depth.values[j];
            out.depth.valid[i] = self.depth.valid[j];
            let n = self.normal.vectors[j];
            out.normal.vectors[i] = [-n[0], n[1], n[2]];
            out.normal.valid[i] = self.normal.valid[j];
            out.distance.values[i] = self.distance.values[j];
            out.distance.valid[i] = self.distance.valid[j];
            out.plane_id[i] = self.plane_id[j];
        }
        out.intrinsics = self.intrinsics.flipped_horizontally(w);
        out
    }
}
