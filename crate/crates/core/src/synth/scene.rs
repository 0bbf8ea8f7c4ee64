use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::texture::{Rgb, Texture};
use super::SynthError;
use crate::geometry::vec3::{self, cross, dot, normalize, scale, sub};
use crate::geometry::{plane_to_depth_along, CameraIntrinsics, DEFAULT_DENOM_EPS};

/// Where on its infinite plane a primitive exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extent {
    Infinite,
    /// Convex polygon, counter-clockwise in plane coordinates.
    Polygon(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanePrimitive {
    pub normal: [f64; 3],
    pub distance: f64,
    pub extent: Extent,
    pub plane_id: u32,
    pub texture: Texture,
}

impl PlanePrimitive {
    /// Orthonormal in-plane axes `(e1, e2)`.
    pub fn axes(&self) -> ([f64; 3], [f64; 3]) {
        let n = self.normal;
        let helper = if n[1].abs() < 0.9 {
            [0.0, 1.0, 0.0]
        } else {
            [1.0, 0.0, 0.0]
        };
        let e1 = normalize(cross(helper, n), 1e-12).expect("helper not parallel to normal");
        (e1, cross(n, e1))
    }

    /// The point of the plane closest to the camera center.
    pub fn origin(&self) -> [f64; 3] {
        scale(self.normal, self.distance)
    }

    pub fn plane_coords(&self, x: [f64; 3]) -> [f64; 2] {
        let (e1, e2) = self.axes();
        let d = sub(x, self.origin());
        [dot(d, e1), dot(d, e2)]
    }

    pub fn contains(&self, x: [f64; 3]) -> bool {
        match &self.extent {
            Extent::Infinite => true,
            Extent::Polygon(poly) => {
                let p = self.plane_coords(x);
                poly.iter().zip(poly.iter().cycle().skip(1)).all(|(a, b)| {
                    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
                })
            }
        }
    }

    fn check(&self) -> Result<(), SynthError> {
        if (vec3::norm(self.normal) - 1.0).abs() > 1e-9 {
            return Err(SynthError::Config(format!("plane {} normal not unit", self.plane_id)));
        }
        if !(self.distance > 0.0) {
            return Err(SynthError::Config(format!(
                "plane {} distance must be positive",
                self.plane_id
            )));
        }
        if let Extent::Polygon(poly) = &self.extent {
            if poly.len() < 3 {
                return Err(SynthError::Config(format!("plane {} polygon degenerate", self.plane_id)));
            }
            let n = poly.len();
            for i in 0..n {
                let (a, b, c) = (poly[i], poly[(i + 1) % n], poly[(i + 2) % n]);
                let turn = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
                if !(turn > 1e-12) {
                    return Err(SynthError::Config(format!(
                        "plane {} polygon not strictly convex counter-clockwise",
                        self.plane_id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub intrinsics: CameraIntrinsics<f64>,
    pub width: usize,
    pub height: usize,
    pub planes: Vec<PlanePrimitive>,
    pub max_depth: f64,
    pub rng_seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.width == 0 || self.height == 0 {
            return Err(SynthError::Config("empty image".into()));
        }
        self.intrinsics
            .validate_for(self.width, self.height)
            .map_err(|e| SynthError::Config(e.to_string()))?;
        let mut ids: Vec<u32> = self.planes.iter().map(|p| p.plane_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(SynthError::Config("duplicate plane ids".into()));
        }
        self.planes.iter().try_for_each(PlanePrimitive::check)
    }
}

/// Ranges for the procedural room family. Lengths in meters, angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub width: usize,
    pub height: usize,
    pub fov_x_deg: f64,
    pub max_depth: f64,
    pub camera_height: [f64; 2],
    pub room_height: [f64; 2],
    /// Distance from the camera to each side wall.
    pub half_width: [f64; 2],
    pub back_wall: [f64; 2],
    /// Inclusive range for the number of interior panels.
    pub interior_objects: [usize; 2],
    pub panel_half_extent: [f64; 2],
    pub max_tilt_deg: f64,
    pub deception_frac: f64,
    pub pattern_period: [f64; 2],
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            fov_x_deg: 60.0,
            max_depth: 10.0,
            camera_height: [1.3, 1.6],
            room_height: [2.6, 3.2],
            half_width: [1.5, 3.0],
            back_wall: [4.0, 8.0],
            interior_objects: [0, 4],
            panel_half_extent: [0.3, 0.9],
            max_tilt_deg: 60.0,
            deception_frac: 0.3,
            pattern_period: [0.25, 0.6],
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        let range_ok = |r: [f64; 2]| r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite();
        if self.width == 0 || self.height == 0 {
            return bad("image size must be non-zero");
        }
        if !(self.fov_x_deg > 0.0 && self.fov_x_deg < 150.0) {
            return bad("fov_x_deg must lie in (0, 150)");
        }
        for (name, r) in [
            ("camera_height", self.camera_height),
            ("room_height", self.room_height),
            ("half_width", self.half_width),
            ("back_wall", self.back_wall),
            ("panel_half_extent", self.panel_half_extent),
            ("pattern_period", self.pattern_period),
        ] {
            if !range_ok(r) {
                return bad(&format!("{name} must be a positive, ordered range"));
            }
        }
        if self.room_height[0] <= self.camera_height[1] {
            return bad("room must be taller than the camera height");
        }
        if self.back_wall[1] > self.max_depth {
            return bad("back wall beyond max_depth");
        }
        if self.interior_objects[0] > self.interior_objects[1] {
            return bad("interior_objects range reversed");
        }
        if !(0.0..=1.0).contains(&self.deception_frac) {
            return bad("deception_frac must lie in [0, 1]");
        }
        if !(0.0..90.0).contains(&self.max_tilt_deg) {
            return bad("max_tilt_deg must lie in [0, 90)");
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn random_color(rng: &mut ChaCha8Rng) -> Rgb {
    [
        rng.random_range(0.15..0.95),
        rng.random_range(0.15..0.95),
        rng.random_range(0.15..0.95),
    ]
}

fn contrasting_pair(rng: &mut ChaCha8Rng) -> (Rgb, Rgb) {
    let a = random_color(rng);
    loop {
        let b = random_color(rng);
        let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        if d > 0.6 {
            return (a, b);
        }
    }
}

/// Nearest hit among `planes` along the ray through `(u, v)`.
pub(crate) fn nearest_hit(
    planes: &[PlanePrimitive],
    k: &CameraIntrinsics<f64>,
    u: f64,
    v: f64,
    max_depth: f64,
) -> Option<(usize, f64)> {
    let ray = k.pixel_ray(u, v);
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in planes.iter().enumerate() {
        let Ok(d) = plane_to_depth_along(p.normal, p.distance, &ray, DEFAULT_DENOM_EPS) else {
            continue;
        };
        if d <= 0.0 || d > max_depth || best.is_some_and(|(_, b)| d >= b) {
            continue;
        }
        if p.contains(vec3::scale(ray.direction, d)) {
            best = Some((i, d));
        }
    }
    best
}

/// Deterministically builds a closed axis-aligned room (floor, ceiling, two
/// side walls, back wall) plus tilted rectangular panels.
pub fn generate_scene(seed: u64, cfg: &GenerationConfig) -> Result<SceneSpec, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = CameraIntrinsics::from_fov(cfg.width, cfg.height, cfg.fov_x_deg)
        .map_err(|e| SynthError::Config(e.to_string()))?;

    let cam_h = uniform(&mut rng, cfg.camera_height);
    let room_h = uniform(&mut rng, cfg.room_height);
    let left = uniform(&mut rng, cfg.half_width);
    let right = uniform(&mut rng, cfg.half_width);
    let back = uniform(&mut rng, cfg.back_wall);

    let placeholder = Texture::Flat { color: [0.5; 3] };
    let face = |normal: [f64; 3], distance: f64, id: u32| PlanePrimitive {
        normal,
        distance,
        extent: Extent::Infinite,
        plane_id: id,
        texture: placeholder.clone(),
    };
    let mut planes = vec![
        face([0.0, 1.0, 0.0], cam_h, 0),
        face([0.0, -1.0, 0.0], room_h - cam_h, 1),
        face([-1.0, 0.0, 0.0], left, 2),
        face([1.0, 0.0, 0.0], right, 3),
        face([0.0, 0.0, 1.0], back, 4),
    ];
    let room_faces = planes.len();

    // A visible anchor point per plane, used to place split-color lines.
    let mut anchors: Vec<[f64; 3]> = Vec::new();
    for id in 0..room_faces {
        let mut anchor = planes[id].origin();
        for _ in 0..256 {
            let u = rng.random_range(0.0..cfg.width as f64 - 1.0);
            let v = rng.random_range(0.0..cfg.height as f64 - 1.0);
            if let Some((hit, d)) = nearest_hit(&planes, &k, u, v, cfg.max_depth) {
                if hit == id {
                    anchor = vec3::scale(k.pixel_ray(u, v).direction, d);
                    break;
                }
            }
        }
        anchors.push(anchor);
    }

    let n_panels = rng.random_range(cfg.interior_objects[0]..=cfg.interior_objects[1]);
    let max_tilt = cfg.max_tilt_deg.to_radians();
    for p in 0..n_panels {
        for _attempt in 0..64 {
            let u = rng.random_range(0.1..0.9) * (cfg.width as f64 - 1.0);
            let v = rng.random_range(0.1..0.9) * (cfg.height as f64 - 1.0);
            let Some((_, wall)) = nearest_hit(&planes[..room_faces], &k, u, v, cfg.max_depth)
            else {
                continue;
            };
            if wall < 2.0 {
                continue;
            }
            let depth = rng.random_range(1.5..wall - 0.3);
            let center = vec3::scale(k.pixel_ray(u, v).direction, depth);
            let tilt = if max_tilt > 0.0 {
                rng.random_range(0.0..max_tilt)
            } else {
                0.0
            };
            let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
            let normal = [
                tilt.sin() * azimuth.cos(),
                tilt.sin() * azimuth.sin(),
                tilt.cos(),
            ];
            let distance = dot(normal, center);
            if distance < 0.3 {
                continue;
            }
            let mut panel = PlanePrimitive {
                normal,
                distance,
                extent: Extent::Infinite,
                plane_id: (room_faces + p) as u32,
                texture: placeholder.clone(),
            };
            let c = panel.plane_coords(center);
            let hx = uniform(&mut rng, cfg.panel_half_extent);
            let hy = uniform(&mut rng, cfg.panel_half_extent);
            let rot = rng.random_range(0.0..std::f64::consts::PI);
            let (s, co) = rot.sin_cos();
            let corners = [[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]];
            panel.extent = Extent::Polygon(
                corners
                    .iter()
                    .map(|q| [c[0] + co * q[0] - s * q[1], c[1] + s * q[0] + co * q[1]])
                    .collect(),
            );
            planes.push(panel);
            anchors.push(center);
            break;
        }
    }

    let n = planes.len();
    let n_deceptive = if cfg.deception_frac > 0.0 {
        ((cfg.deception_frac * n as f64).ceil() as usize).clamp(1, n)
    } else {
        0
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut deceptive = vec![false; n];
    for &i in &order[..n_deceptive] {
        deceptive[i] = true;
    }
    for (i, plane) in planes.iter_mut().enumerate() {
        let period = uniform(&mut rng, cfg.pattern_period);
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        plane.texture = if deceptive[i] {
            let (a, b) = contrasting_pair(&mut rng);
            if rng.random_bool(0.5) {
                let anchor = plane.plane_coords(anchors[i]);
                Texture::SplitColor { a, b, anchor, angle }
            } else {
                Texture::Stripes { a, b, period, angle }
            }
        } else if rng.random_bool(0.3) {
            let (a, b) = contrasting_pair(&mut rng);
            Texture::Checker { a, b, period }
        } else {
            Texture::Flat {
                color: random_color(&mut rng),
            }
        };
    }

    let scene = SceneSpec {
        intrinsics: k,
        width: cfg.width,
        height: cfg.height,
        planes,
        max_depth: cfg.max_depth,
        rng_seed: seed,
    };
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        let cfg = GenerationConfig::default();
        assert_eq!(generate_scene(7, &cfg).unwrap(), generate_scene(7, &cfg).unwrap());
        assert_ne!(generate_scene(7, &cfg).unwrap(), generate_scene(8, &cfg).unwrap());
    }

    #[test]
    fn empty_room_has_five_faces() {
        let cfg = GenerationConfig {
            interior_objects: [0, 0],
            ..Default::default()
        };
        for seed in 0..20 {
            assert_eq!(generate_scene(seed, &cfg).unwrap().planes.len(), 5);
        }
    }

    #[test]
    fn deception_fraction_is_honored() {
        let cfg = GenerationConfig {
            deception_frac: 0.5,
            ..Default::default()
        };
        for seed in 0..20 {
            let s = generate_scene(seed, &cfg).unwrap();
            let n = s.planes.iter().filter(|p| p.texture.kind().is_deceptive()).count();
            assert_eq!(n, (s.planes.len() as f64 * 0.5).ceil() as usize);
        }
        let none = GenerationConfig {
            deception_frac: 0.0,
            ..Default::default()
        };
        let s = generate_scene(3, &none).unwrap();
        assert!(s.planes.iter().all(|p| !p.texture.kind().is_deceptive()));
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let zero = GenerationConfig {
            half_width: [0.0, 0.0],
            ..Default::default()
        };
        assert!(matches!(generate_scene(1, &zero), Err(SynthError::Config(_))));
        let deep = GenerationConfig {
            back_wall: [4.0, 12.0],
            ..Default::default()
        };
        assert!(generate_scene(1, &deep).is_err());
        let empty = GenerationConfig {
            width: 0,
            ..Default::default()
        };
        assert!(generate_scene(1, &empty).is_err());
    }

    #[test]
    fn panel_polygon_membership() {
        let p = PlanePrimitive {
            normal: [0.0, 0.0, 1.0],
            distance: 2.0,
            extent: Extent::Polygon(vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]),
            plane_id: 9,
            texture: Texture::Flat { color: [0.0; 3] },
        };
        let (e1, e2) = p.axes();
        assert!(dot(e1, e2).abs() < 1e-15 && dot(e1, p.normal).abs() < 1e-15);
        assert!(p.contains([0.5, 0.5, 2.0]));
        assert!(!p.contains([1.5, 0.0, 2.0]));
    }
}
