//! On-disk dataset layout: one `sample_{seed:08}` directory per view plus a
//! top-level `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use super::pfm::{read_pfm, write_pfm};
use super::render::{RenderedSample, NO_PLANE};
use super::texture::TextureKind;
use super::{GenerationConfig, SynthError};
use crate::geometry::{CameraIntrinsics, DepthMap, DistanceMap, NormalMap};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneMeta {
    pub id: u32,
    pub texture: TextureKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub intrinsics: CameraIntrinsics<f64>,
    pub max_depth: f64,
    pub plane_count: usize,
    pub planes: Vec<PlaneMeta>,
    pub missed_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub dir: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub generation: Option<GenerationConfig>,
    pub samples: Vec<ManifestEntry>,
}

pub fn sample_dir_name(seed: u64) -> String {
    format!("sample_{seed:08}")
}

fn to_f32<S: Scalar>(v: &[S]) -> Vec<f32> {
    v.iter().map(|x| x.to_f32().unwrap_or(f32::NAN)).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SynthError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| SynthError::format(path, e.to_string()))?;
    fs::write(path, text).map_err(|e| SynthError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SynthError> {
    let text = fs::read_to_string(path).map_err(|e| SynthError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| SynthError::format(path, e.to_string()))
}

/// Writes one sample below `root` and returns its directory.
pub fn write_sample<S: Scalar>(sample: &RenderedSample<S>, root: &Path) -> Result<PathBuf, SynthError> {
    let dir = root.join(sample_dir_name(sample.seed));
    fs::create_dir_all(&dir).map_err(|e| SynthError::io(&dir, e))?;
    let (w, h) = (sample.width, sample.height);

    let rgb = ImageBuffer::<Rgb<u8>, _>::from_fn(w as u32, h as u32, |x, y| {
        let c = sample.rgb[y as usize * w + x as usize];
        Rgb(c.map(|v| (v.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8))
    });
    let path = dir.join("rgb.png");
    rgb.save(&path)
        .map_err(|e| SynthError::format(&path, e.to_string()))?;

    let ids = ImageBuffer::<Luma<u16>, _>::from_fn(w as u32, h as u32, |x, y| {
        let id = sample.plane_id[y as usize * w + x as usize];
        Luma([if id == NO_PLANE { u16::MAX } else { id.min(u16::MAX as u32 - 1) as u16 }])
    });
    let path = dir.join("plane_id.png");
    ids.save(&path)
        .map_err(|e| SynthError::format(&path, e.to_string()))?;

    write_pfm(&dir.join("depth.pfm"), w, h, &to_f32(&sample.depth.values))?;
    for (axis, name) in ["normal_x.pfm", "normal_y.pfm", "normal_z.pfm"].iter().enumerate() {
        let c: Vec<S> = sample.normal.vectors.iter().map(|n| n[axis]).collect();
        write_pfm(&dir.join(name), w, h, &to_f32(&c))?;
    }
    write_pfm(&dir.join("distance.pfm"), w, h, &to_f32(&sample.distance.values))?;

    let meta = SampleMeta {
        seed: sample.seed,
        width: w,
        height: h,
        intrinsics: sample.intrinsics.cast(),
        max_depth: sample.depth.max_depth.to_f64_lossy(),
        plane_count: sample.plane_textures.len(),
        planes: sample
            .plane_textures
            .iter()
            .map(|&(id, texture)| PlaneMeta { id, texture })
            .collect(),
        missed_pixels: sample.missed_pixels,
    };
    write_json(&dir.join("meta.json"), &meta)?;
    Ok(dir)
}

fn read_channel(dir: &Path, name: &str, w: usize, h: usize) -> Result<Vec<f32>, SynthError> {
    let path = dir.join(name);
    let (pw, ph, data) = read_pfm(&path)?;
    if (pw, ph) != (w, h) {
        return Err(SynthError::format(&path, format!("size {pw}x{ph}, expected {w}x{h}")));
    }
    Ok(data)
}

/// Reads a sample directory written by [`write_sample`].
pub fn read_sample(dir: &Path) -> Result<RenderedSample<f32>, SynthError> {
    let meta: SampleMeta = read_json(&dir.join("meta.json"))?;
    let (w, h) = (meta.width, meta.height);

    let path = dir.join("rgb.png");
    let img = image::open(&path)
        .map_err(|e| SynthError::format(&path, e.to_string()))?
        .to_rgb8();
    if (img.width() as usize, img.height() as usize) != (w, h) {
        return Err(SynthError::format(&path, "size does not match meta.json"));
    }
    let rgb = img.pixels().map(|p| p.0.map(|c| c as f32 / 255.0)).collect();

    let path = dir.join("plane_id.png");
    let plane_id = match image::open(&path) {
        Ok(img) => img
            .to_luma16()
            .pixels()
            .map(|p| if p.0[0] == u16::MAX { NO_PLANE } else { p.0[0] as u32 })
            .collect(),
        Err(_) if !path.exists() => vec![NO_PLANE; w * h],
        Err(e) => return Err(SynthError::format(&path, e.to_string())),
    };

    let max_depth = meta.max_depth as f32;
    let depth = DepthMap::from_values(w, h, read_channel(dir, "depth.pfm", w, h)?, max_depth);
    let nx = read_channel(dir, "normal_x.pfm", w, h)?;
    let ny = read_channel(dir, "normal_y.pfm", w, h)?;
    let nz = read_channel(dir, "normal_z.pfm", w, h)?;
    let mut normal = NormalMap::invalid(w, h);
    for i in 0..w * h {
        let n = [nx[i], ny[i], nz[i]];
        normal.vectors[i] = n;
        normal.valid[i] = n.iter().map(|c| c * c).sum::<f32>() > 0.25;
    }
    let dist = read_channel(dir, "distance.pfm", w, h)?;
    let mut distance = DistanceMap::invalid(w, h);
    for (i, &t) in dist.iter().enumerate() {
        distance.values[i] = t;
        distance.valid[i] = t > 0.0 && t.is_finite();
    }

    Ok(RenderedSample {
        width: w,
        height: h,
        rgb,
        depth,
        normal,
        distance,
        plane_id,
        intrinsics: meta.intrinsics.cast(),
        seed: meta.seed,
        plane_textures: meta.planes.iter().map(|p| (p.id, p.texture)).collect(),
        missed_pixels: meta.missed_pixels,
    })
}

/// Writes all samples and a manifest into `root`.
pub fn write_dataset<S: Scalar>(
    samples: &[RenderedSample<S>],
    root: &Path,
    generation: Option<&GenerationConfig>,
) -> Result<Manifest, SynthError> {
    fs::create_dir_all(root).map_err(|e| SynthError::io(root, e))?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        write_sample(s, root)?;
        entries.push(ManifestEntry {
            dir: sample_dir_name(s.seed),
            seed: s.seed,
        });
    }
    let manifest = Manifest {
        count: entries.len(),
        width: samples.first().map_or(0, |s| s.width),
        height: samples.first().map_or(0, |s| s.height),
        generation: generation.cloned(),
        samples: entries,
    };
    write_json(&root.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<Manifest, SynthError> {
    read_json(&root.join("manifest.json"))
}

pub fn read_dataset(root: &Path) -> Result<Vec<RenderedSample<f32>>, SynthError> {
    let manifest = read_manifest(root)?;
    if manifest.samples.len() != manifest.count {
        return Err(SynthError::format(
            root.join("manifest.json"),
            "count does not match sample list",
        ));
    }
    manifest
        .samples
        .iter()
        .map(|e| read_sample(&root.join(&e.dir)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, render};

    fn sample(seed: u64) -> RenderedSample<f32> {
        let cfg = GenerationConfig {
            width: 32,
            height: 32,
            ..Default::default()
        };
        render(&generate_scene(seed, &cfg).unwrap()).cast()
    }

    #[test]
    fn round_trip_keeps_float_channels_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let s = sample(5);
        write_dataset(std::slice::from_ref(&s), dir.path(), None).unwrap();
        let back = read_dataset(dir.path()).unwrap().remove(0);
        assert_eq!(back.depth, s.depth);
        assert_eq!(back.normal, s.normal);
        assert_eq!(back.distance, s.distance);
        assert_eq!(back.plane_id, s.plane_id);
        assert_eq!(back.plane_textures, s.plane_textures);
        for (a, b) in back.rgb.iter().zip(&s.rgb) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
    }

    #[test]
    fn manifest_lists_every_sample() {
        let dir = tempfile::tempdir().unwrap();
        let samples: Vec<_> = (10..14).map(sample).collect();
        let m = write_dataset(&samples, dir.path(), Some(&GenerationConfig::default())).unwrap();
        assert_eq!(m.count, 4);
        assert_eq!(read_manifest(dir.path()).unwrap(), m);
        assert_eq!(m.samples[2].dir, "sample_00000012");
        assert_eq!(m.samples[2].seed, 12);
    }

    #[test]
    fn truncated_channel_names_the_sample() {
        let dir = tempfile::tempdir().unwrap();
        let sdir = write_sample(&sample(3), dir.path()).unwrap();
        let depth = sdir.join("depth.pfm");
        let bytes = fs::read(&depth).unwrap();
        fs::write(&depth, &bytes[..bytes.len() / 2]).unwrap();
        let err = read_sample(&sdir).unwrap_err();
        assert!(err.to_string().contains("sample_00000003"), "{err}");
    }

    #[test]
    fn missing_manifest_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(SynthError::Io { .. })));
    }
}
