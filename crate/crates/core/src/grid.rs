//! Conventions linking a strided prediction grid to full-resolution pixels.
//!
//! Cell `j` of a grid with stride `s` samples full-resolution pixel
//! `min(s * j + s / 2, n - 1)`. Ground truth is resampled by nearest neighbor
//! at those pixels and coarse maps are upsampled bilinearly between them.

use crate::Scalar;

/// Number of cells covering `n` pixels at `stride`.
pub fn grid_len(n: usize, stride: usize) -> usize {
    n.div_ceil(stride)
}

/// Full-resolution pixel sampled by cell `j`.
pub fn sample_coord(j: usize, stride: usize, n: usize) -> usize {
    (stride * j + stride / 2).min(n.saturating_sub(1))
}

/// Nearest-neighbor resampling of a row-major `w x h` buffer onto the grid of
/// the given stride.
pub fn nearest_downsample<T: Copy>(data: &[T], w: usize, h: usize, stride: usize) -> Vec<T> {
    let (gw, gh) = (grid_len(w, stride), grid_len(h, stride));
    let mut out = Vec::with_capacity(gw * gh);
    for gy in 0..gh {
        let y = sample_coord(gy, stride, h);
        for gx in 0..gw {
            out.push(data[y * w + sample_coord(gx, stride, w)]);
        }
    }
    out
}

/// Nearest-neighbor resampling between two grids over the same image.
pub fn nearest_resize<T: Copy>(data: &[T], w: usize, h: usize, ow: usize, oh: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        let sy = ((2 * y + 1) * h / (2 * oh)).min(h - 1);
        for x in 0..ow {
            let sx = ((2 * x + 1) * w / (2 * ow)).min(w - 1);
            out.push(data[sy * w + sx]);
        }
    }
    out
}

/// Bilinear upsampling of a grid back to `w x h` pixels, consistent with
/// [`sample_coord`]; pixels outside the sampled span are clamped to the edge.
pub fn bilinear_upsample<S: Scalar>(grid: &[S], gw: usize, gh: usize, stride: usize, w: usize, h: usize) -> Vec<S> {
    let axis = |p: usize, gn: usize| -> (usize, usize, S) {
        let offset = (stride / 2) as f64;
        let g = ((p as f64 - offset) / stride as f64).clamp(0.0, (gn - 1) as f64);
        let lo = g.floor() as usize;
        let hi = (lo + 1).min(gn - 1);
        (lo, hi, S::lit(g - lo as f64))
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1, fy) = axis(y, gh);
        for x in 0..w {
            let (x0, x1, fx) = axis(x, gw);
            let top = grid[y0 * gw + x0] * (S::one() - fx) + grid[y0 * gw + x1] * fx;
            let bot = grid[y1 * gw + x0] * (S::one() - fx) + grid[y1 * gw + x1] * fx;
            out.push(top * (S::one() - fy) + bot * fy);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_four_samples_cell_centers() {
        assert_eq!(grid_len(64, 4), 16);
        assert_eq!(grid_len(8, 32), 1);
        assert_eq!(sample_coord(0, 4, 64), 2);
        assert_eq!(sample_coord(15, 4, 64), 62);
        assert_eq!(sample_coord(0, 32, 8), 7);
    }

    #[test]
    fn upsampling_interpolates_between_samples() {
        // Linear ramp sampled at 2, 6, 10, 14 is reproduced exactly in between.
        let grid: Vec<f64> = (0..4).map(|j| (4 * j + 2) as f64).collect();
        let up = bilinear_upsample(&grid, 4, 1, 4, 16, 1);
        for x in 2..=14 {
            assert!((up[x] - x as f64).abs() < 1e-12);
        }
        assert_eq!(up[0], 2.0);
        assert_eq!(up[15], 14.0);
    }

    #[test]
    fn nearest_round_trip() {
        let data: Vec<usize> = (0..64).collect();
        let d = nearest_downsample(&data, 8, 8, 4);
        assert_eq!(d, vec![18, 22, 50, 54]);
        assert_eq!(nearest_resize(&[1, 2, 3, 4], 2, 2, 4, 4)[5], 1);
        assert_eq!(nearest_resize(&data, 8, 8, 2, 2), vec![18, 22, 50, 54]);
    }
}
