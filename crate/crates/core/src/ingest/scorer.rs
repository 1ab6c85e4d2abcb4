//! Built-in scorers that stand in for a learned selector.

use super::{Frame, GrayImage, IngestError};
use crate::response_map::ResponseMap;
use crate::supervision::oracle_response_map;

/// Window sizes for [`baseline_scorer`], in lattice cells (both odd).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineConfig {
    pub inner_cells: usize,
    pub surround_cells: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            inner_cells: 1,
            surround_cells: 3,
        }
    }
}

/// Summed-area table with a zero top row and left column.
struct Integral {
    w: usize,
    sums: Vec<u64>,
}

impl Integral {
    fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width as usize, img.height as usize);
        let mut sums = vec![0u64; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            for x in 0..w {
                row += u64::from(img.samples[y * w + x]);
                sums[(y + 1) * (w + 1) + x + 1] = sums[y * (w + 1) + x + 1] + row;
            }
        }
        Self { w, sums }
    }

    /// Sum over `[x0, x1) × [y0, y1)`.
    fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> u64 {
        let s = |x: usize, y: usize| self.sums[y * (self.w + 1) + x];
        s(x1, y1) + s(x0, y0) - s(x0, y1) - s(x1, y0)
    }
}

/// Center-surround contrast scorer.
///
/// Each lattice cell scores `|mean(inner) − mean(ring)|`, where the inner
/// window is the cell (or `inner_cells` cells around it) and the ring is the
/// rest of the `surround_cells` block, clipped to the image. Scores are then
/// min-max normalized over the grid; a zero range gives the all-zero map.
pub fn baseline_scorer(
    img: &GrayImage,
    grid_w: usize,
    grid_h: usize,
    cfg: &BaselineConfig,
) -> Result<ResponseMap, IngestError> {
    if grid_w == 0 || grid_h == 0 || grid_w > img.width as usize || grid_h > img.height as usize {
        return Err(IngestError::GridLargerThanImage {
            grid_w,
            grid_h,
            width: img.width,
            height: img.height,
        });
    }
    let (w, h) = (img.width as usize, img.height as usize);
    let integral = Integral::new(img);
    let col = |u: usize| u * w / grid_w;
    let row = |v: usize| v * h / grid_h;
    let block = |u: usize, v: usize, cells: usize| {
        let r = cells / 2;
        let (u0, v0) = (u.saturating_sub(r), v.saturating_sub(r));
        let (u1, v1) = ((u + r + 1).min(grid_w), (v + r + 1).min(grid_h));
        let (x0, y0, x1, y1) = (col(u0), row(v0), col(u1), row(v1));
        (integral.sum(x0, y0, x1, y1), ((x1 - x0) * (y1 - y0)) as u64)
    };

    let mut raw = Vec::with_capacity(grid_w * grid_h);
    for v in 0..grid_h {
        for u in 0..grid_w {
            let (in_sum, in_n) = block(u, v, cfg.inner_cells);
            let (all_sum, all_n) = block(u, v, cfg.surround_cells);
            let ring_n = all_n - in_n;
            let contrast = if in_n == 0 || ring_n == 0 {
                0.0
            } else {
                let inner = in_sum as f64 / in_n as f64;
                let ring = (all_sum - in_sum) as f64 / ring_n as f64;
                (inner - ring).abs()
            };
            raw.push(contrast);
        }
    }

    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scores = if hi > lo {
        raw.iter().map(|&c| ((c - lo) / (hi - lo)) as f32).collect()
    } else {
        vec![0.0; raw.len()]
    };
    let stride = ((w as f64 / grid_w as f64).round() as u32).max(1);
    Ok(ResponseMap::with_geometry(
        grid_w,
        grid_h,
        stride,
        stride / 2,
        scores,
    )?)
}

/// The perfect scorer for a dataset frame: its Gaussian ground-truth heatmap.
pub fn oracle_scorer(
    frame: &Frame,
    grid_w: usize,
    grid_h: usize,
    sigma: f64,
    stride: u32,
) -> Result<ResponseMap, IngestError> {
    Ok(oracle_response_map(
        &frame.targets,
        grid_w,
        grid_h,
        sigma,
        stride,
        stride / 2,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_image(blocks: &[(u32, u32)]) -> GrayImage {
        let mut img = GrayImage::filled(640, 640, 0);
        for &(bx, by) in blocks {
            for y in by..by + 8 {
                for x in bx..bx + 8 {
                    img.set(x, y, 255);
                }
            }
        }
        img
    }

    #[test]
    fn constant_image_is_all_zero() {
        let map = baseline_scorer(
            &GrayImage::filled(640, 640, 77),
            80,
            80,
            &BaselineConfig::default(),
        )
        .unwrap();
        assert!(map.scores().iter().all(|&s| s == 0.0));
        assert_eq!((map.stride(), map.offset()), (8, 4));
    }

    #[test]
    fn bright_block_cell_is_maximal() {
        let map = baseline_scorer(
            &block_image(&[(160, 240)]),
            80,
            80,
            &BaselineConfig::default(),
        )
        .unwrap();
        // Inner mean 255, ring mean 0.
        assert_eq!(map.get(20, 30), 1.0);
        let ties = map.scores().iter().filter(|&&s| s == 1.0).count();
        assert_eq!(ties, 1);
        // A neighbour sees the block in its ring: |0 − 255·64/512| relative to 255.
        assert!((map.get(21, 30) - 0.125).abs() < 1e-6);
    }

    #[test]
    fn identical_blocks_tie() {
        let map = baseline_scorer(
            &block_image(&[(80, 80), (400, 320)]),
            80,
            80,
            &BaselineConfig::default(),
        )
        .unwrap();
        assert_eq!(map.get(10, 10), 1.0);
        assert_eq!(map.get(50, 40), 1.0);
    }

    #[test]
    fn brightness_offset_preserves_scores() {
        let mut a = block_image(&[(160, 240)]);
        a.samples
            .iter_mut()
            .for_each(|s| *s = s.saturating_sub(100));
        let b = {
            let mut b = a.clone();
            b.samples.iter_mut().for_each(|s| *s += 50);
            b
        };
        let cfg = BaselineConfig::default();
        assert_eq!(
            baseline_scorer(&a, 80, 80, &cfg).unwrap(),
            baseline_scorer(&b, 80, 80, &cfg).unwrap()
        );
    }

    #[test]
    fn grid_larger_than_image() {
        let err = baseline_scorer(
            &GrayImage::filled(4, 4, 0),
            8,
            8,
            &BaselineConfig::default(),
        );
        assert!(matches!(err, Err(IngestError::GridLargerThanImage { .. })));
    }
}
