use std::path::Path;

use plane2depth::geometry::{CameraIntrinsics, DepthMap};
use plane2depth::grid::bilinear_upsample;
use plane2depth::planenet::{PlaneNet, OUTPUT_STRIDE};
use plane2depth::synth::{read_pfm, write_pfm};

use crate::colormap;
use crate::error::{Result, ToolError};

/// Reads `{"fx": .., "fy": .., "cx": .., "cy": ..}`.
pub fn load_intrinsics(path: &Path) -> Result<CameraIntrinsics<f32>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ToolError::usage(format!("{}: cannot read intrinsics: {e}", path.display())))?;
    let k: CameraIntrinsics<f64> = serde_json::from_str(&text)
        .map_err(|e| ToolError::usage(format!("{}: bad intrinsics JSON: {e}", path.display())))?;
    CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy)
        .map(|k| k.cast())
        .map_err(|e| ToolError::usage(format!("{}: {e}", path.display())))
}

/// Ground-truth depth from a PFM; non-positive or non-finite entries are
/// treated as missing.
pub fn load_gt_depth(path: &Path, max_depth: f32) -> Result<DepthMap<f32>> {
    let (w, h, values) = read_pfm(path)?;
    Ok(DepthMap::from_values(w, h, values, max_depth))
}

/// Files written by [`infer`].
pub const OUTPUT_FILES: [&str; 7] = [
    "depth.pfm",
    "normal_x.pfm",
    "normal_y.pfm",
    "normal_z.pfm",
    "distance.pfm",
    "depth.png",
    "normal.png",
];

#[allow(clippy::too_many_arguments)]
pub fn infer(
    net: &PlaneNet<f32>,
    max_depth: f32,
    rgb: &[[f32; 3]],
    width: usize,
    height: usize,
    k: &CameraIntrinsics<f32>,
    out: &Path,
    gt: Option<&DepthMap<f32>>,
    error_clip: f64,
) -> Result<()> {
    if let Some(gt) = gt {
        if (gt.width, gt.height) != (width, height) {
            return Err(ToolError::usage(format!(
                "ground truth is {}x{} but the image is {width}x{height}",
                gt.width, gt.height
            )));
        }
    }
    let pred = net.forward(rgb, width, height, k, max_depth)?;
    std::fs::create_dir_all(out).map_err(|e| ToolError::io(out, e))?;
    let last = pred.layers.last().expect("network has layers");
    let (gw, gh) = (pred.grid_width, pred.grid_height);
    let up = |v: Vec<f32>| bilinear_upsample(&v, gw, gh, OUTPUT_STRIDE, width, height);
    let comp = |c: usize| up(last.normal.vectors.iter().map(|n| n[c]).collect());
    let (nx, ny, nz) = (comp(0), comp(1), comp(2));
    let normals: Vec<[f32; 3]> = (0..width * height)
        .map(|i| {
            let n = (nx[i] * nx[i] + ny[i] * ny[i] + nz[i] * nz[i]).sqrt();
            if n > 1e-12 {
                [nx[i] / n, ny[i] / n, nz[i] / n]
            } else {
                [0.0, 0.0, 1.0]
            }
        })
        .collect();
    let distance = up(last.distance.values.clone());

    write_pfm(&out.join("depth.pfm"), width, height, &pred.depth.values)?;
    for (c, name) in ["normal_x.pfm", "normal_y.pfm", "normal_z.pfm"].iter().enumerate() {
        let v: Vec<f32> = normals.iter().map(|n| n[c]).collect();
        write_pfm(&out.join(name), width, height, &v)?;
    }
    write_pfm(&out.join("distance.pfm"), width, height, &distance)?;
    let d: Vec<Option<f64>> = pred.depth.values.iter().map(|&v| Some(v as f64)).collect();
    colormap::save_depth_png(&out.join("depth.png"), width, height, &d, max_depth as f64)?;
    let n64: Vec<[f64; 3]> = normals.iter().map(|n| n.map(|c| c as f64)).collect();
    colormap::save_normal_png(&out.join("normal.png"), width, height, &n64)?;
    if let Some(gt) = gt {
        let err: Vec<Option<f64>> = (0..width * height)
            .map(|i| gt.valid[i].then(|| pred.depth.values[i] as f64 - gt.values[i] as f64))
            .collect();
        colormap::save_error_png(&out.join("error.png"), width, height, &err, error_clip)?;
    }
    Ok(())
}
