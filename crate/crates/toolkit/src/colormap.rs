//! Color maps and PNG output for depth, error and normal maps.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Result, ToolError};

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// The classic rainbow map: violet at 0 through red at 1.
pub fn rainbow(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let r = (2.0 * t - 0.5).abs();
    let g = (std::f64::consts::PI * t).sin();
    let b = (std::f64::consts::FRAC_PI_2 * t).cos();
    [to_u8(r), to_u8(g), to_u8(b)]
}

/// Diverging blue-gray-red map with gray at 0.5.
pub fn coolwarm(t: f64) -> [u8; 3] {
    const STOPS: [(f64, [f64; 3]); 3] = [
        (0.0, [59.0, 76.0, 192.0]),
        (0.5, [221.0, 221.0, 221.0]),
        (1.0, [180.0, 4.0, 38.0]),
    ];
    let t = t.clamp(0.0, 1.0);
    let (lo, hi) = if t <= 0.5 { (STOPS[0], STOPS[1]) } else { (STOPS[1], STOPS[2]) };
    let f = (t - lo.0) / (hi.0 - lo.0);
    std::array::from_fn(|c| (lo.1[c] + f * (hi.1[c] - lo.1[c])).round() as u8)
}

fn save(path: &Path, img: RgbImage) -> Result<()> {
    img.save(path)
        .map_err(|e| ToolError::io(path, std::io::Error::other(e.to_string())))
}

/// Depth in `[0, max_depth]` through the rainbow map; `None` pixels are black.
pub fn save_depth_png(path: &Path, w: usize, h: usize, depth: &[Option<f64>], max_depth: f64) -> Result<()> {
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| match depth[y as usize * w + x as usize] {
        Some(d) => Rgb(rainbow(d / max_depth)),
        None => Rgb([0, 0, 0]),
    });
    save(path, img)
}

/// Signed error clipped to `[-clip, clip]` through the coolwarm map; `None`
/// pixels are black.
pub fn save_error_png(path: &Path, w: usize, h: usize, err: &[Option<f64>], clip: f64) -> Result<()> {
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| match err[y as usize * w + x as usize] {
        Some(e) => Rgb(coolwarm(0.5 + 0.5 * (e / clip).clamp(-1.0, 1.0))),
        None => Rgb([0, 0, 0]),
    });
    save(path, img)
}

/// Unit normals mapped from `[-1, 1]` to `[0, 255]` per channel.
pub fn save_normal_png(path: &Path, w: usize, h: usize, normals: &[[f64; 3]]) -> Result<()> {
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let n = normals[y as usize * w + x as usize];
        Rgb(n.map(|c| to_u8(0.5 * (c + 1.0))))
    });
    save(path, img)
}

/// An 8-bit RGB PNG as `[0, 1]` floats.
pub fn load_rgb_png(path: &Path) -> Result<(usize, usize, Vec<[f32; 3]>)> {
    let img = image::open(path)
        .map_err(|e| ToolError::usage(format!("{}: cannot read image: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let rgb = img.pixels().map(|p| p.0.map(|c| c as f32 / 255.0)).collect();
    Ok((w, h, rgb))
}
