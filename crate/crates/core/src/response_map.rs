//! Dense response maps and the decode path that turns them into ranked,
//! budget-truncated patch selections.
//!
//! Decoding runs in four steps: a `k×k` local-maximum filter, a descending
//! sort of the surviving cells, truncation to the budget `K`, and a remap of
//! lattice indices to pixel coordinates (`x = stride·u + offset`). Each
//! selected center then yields an evaluation cell (used only for coverage
//! accounting, never clamped) and a backend crop (fixed size, translated to
//! stay inside the frame).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default lattice stride in proxy pixels.
pub const DEFAULT_STRIDE: u32 = 8;
/// Default local-maximum window.
pub const DEFAULT_WINDOW: usize = 3;
/// Default evaluation cell side in pixels.
pub const DEFAULT_EVAL_CELL: f64 = 64.0;
/// Default backend crop side in pixels.
pub const DEFAULT_CROP: f64 = 640.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("grid dimensions must be positive (got {grid_w}x{grid_h})")]
    EmptyGrid { grid_w: usize, grid_h: usize },
    #[error("score count {actual} does not match grid {grid_w}x{grid_h}")]
    ScoreCount {
        grid_w: usize,
        grid_h: usize,
        actual: usize,
    },
    #[error("score {value} at cell {index} is outside [0, 1]")]
    ScoreOutOfRange { index: usize, value: f32 },
    #[error("stride must be positive")]
    ZeroStride,
    #[error("local-max window must be odd and positive (got {0})")]
    InvalidWindow(usize),
    #[error("image dimensions must be positive (got {0}x{1})")]
    InvalidImage(u32, u32),
}

/// A lattice of scores in `[0, 1]` together with the stride/offset geometry
/// that places each cell in proxy-image pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawResponseMap")]
pub struct ResponseMap {
    grid_w: usize,
    grid_h: usize,
    stride: u32,
    offset: u32,
    scores: Vec<f32>,
}

#[derive(Deserialize)]
struct RawResponseMap {
    grid_w: usize,
    grid_h: usize,
    stride: u32,
    offset: u32,
    scores: Vec<f32>,
}

impl TryFrom<RawResponseMap> for ResponseMap {
    type Error = MapError;

    fn try_from(raw: RawResponseMap) -> Result<Self, MapError> {
        ResponseMap::with_geometry(raw.grid_w, raw.grid_h, raw.stride, raw.offset, raw.scores)
    }
}

impl ResponseMap {
    /// Builds a map with the default geometry (stride 8, offset 4).
    pub fn new(grid_w: usize, grid_h: usize, scores: Vec<f32>) -> Result<Self, MapError> {
        Self::with_geometry(grid_w, grid_h, DEFAULT_STRIDE, DEFAULT_STRIDE / 2, scores)
    }

    pub fn with_geometry(
        grid_w: usize,
        grid_h: usize,
        stride: u32,
        offset: u32,
        scores: Vec<f32>,
    ) -> Result<Self, MapError> {
        if grid_w == 0 || grid_h == 0 {
            return Err(MapError::EmptyGrid { grid_w, grid_h });
        }
        if stride == 0 {
            return Err(MapError::ZeroStride);
        }
        if scores.len() != grid_w * grid_h {
            return Err(MapError::ScoreCount {
                grid_w,
                grid_h,
                actual: scores.len(),
            });
        }
        // NaN fails the range check as well.
        if let Some((index, &value)) = scores
            .iter()
            .enumerate()
            .find(|(_, s)| !(0.0..=1.0).contains(*s))
        {
            return Err(MapError::ScoreOutOfRange { index, value });
        }
        Ok(Self {
            grid_w,
            grid_h,
            stride,
            offset,
            scores,
        })
    }

    /// An all-zero map.
    pub fn zeros(grid_w: usize, grid_h: usize) -> Result<Self, MapError> {
        Self::new(grid_w, grid_h, vec![0.0; grid_w * grid_h])
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    pub fn offset(&self) -> u32 {
        self.offset
    }

    /// Row-major scores.
    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    pub fn into_scores(self) -> Vec<f32> {
        self.scores
    }

    /// Score at column `u`, row `v`.
    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.scores[v * self.grid_w + u]
    }

    /// Width of the proxy image this lattice covers, in pixels.
    pub fn proxy_w(&self) -> f64 {
        self.grid_w as f64 * f64::from(self.stride)
    }

    pub fn proxy_h(&self) -> f64 {
        self.grid_h as f64 * f64::from(self.stride)
    }

    /// Replaces the scores, keeping grid and geometry.
    pub fn map_scores(&self, mut f: impl FnMut(f32) -> f32) -> Result<Self, MapError> {
        let scores = self.scores.iter().map(|&s| f(s)).collect();
        Self::with_geometry(self.grid_w, self.grid_h, self.stride, self.offset, scores)
    }
}

/// A retained lattice cell: column `u`, row `v` and its score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub u: usize,
    pub v: usize,
    pub score: f32,
}

/// Keeps every cell equal to the maximum of its `k×k` neighbourhood and zeroes
/// the rest. The window is clipped at the borders, and plateaus of equal
/// maxima keep every cell.
pub fn local_max_filter(map: &ResponseMap, k: usize) -> Result<ResponseMap, MapError> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(MapError::InvalidWindow(k));
    }
    let (w, h) = (map.grid_w, map.grid_h);
    let r = k / 2;
    let src = &map.scores;

    // Separable max: rows, then columns. Max over a clipped rectangle factors
    // exactly into the two passes.
    let mut row_max = vec![0.0f32; w * h];
    for v in 0..h {
        let row = &src[v * w..(v + 1) * w];
        for u in 0..w {
            let lo = u.saturating_sub(r);
            let hi = (u + r).min(w - 1);
            row_max[v * w + u] = row[lo..=hi].iter().copied().fold(f32::MIN, f32::max);
        }
    }
    let mut scores = vec![0.0f32; w * h];
    for v in 0..h {
        let lo = v.saturating_sub(r);
        let hi = (v + r).min(h - 1);
        for u in 0..w {
            let window_max = (lo..=hi)
                .map(|vv| row_max[vv * w + u])
                .fold(f32::MIN, f32::max);
            let s = src[v * w + u];
            if s == window_max {
                scores[v * w + u] = s;
            }
        }
    }
    Ok(ResponseMap {
        scores,
        ..map.clone()
    })
}

/// Descending score order, ties broken by row-major cell index.
fn peak_order(grid_w: usize) -> impl Fn(&Peak, &Peak) -> Ordering {
    move |a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| (a.v * grid_w + a.u).cmp(&(b.v * grid_w + b.u)))
    }
}

/// All cells scoring strictly above `min_score`, best first.
pub fn extract_peaks_sorted(filtered: &ResponseMap, min_score: f32) -> Vec<Peak> {
    let w = filtered.grid_w;
    let mut peaks: Vec<Peak> = filtered
        .scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > min_score)
        .map(|(i, &score)| Peak {
            u: i % w,
            v: i / w,
            score,
        })
        .collect();
    peaks.sort_by(peak_order(w));
    peaks
}

/// The first `min(k, peaks.len())` peaks.
pub fn top_k(peaks: &[Peak], k: usize) -> &[Peak] {
    &peaks[..k.min(peaks.len())]
}

/// Lattice cell to proxy-image pixel center.
pub fn remap_to_image(peak: &Peak, stride: u32, offset: u32) -> (f64, f64) {
    let s = f64::from(stride);
    let o = f64::from(offset);
    (s * peak.u as f64 + o, s * peak.v as f64 + o)
}

/// An axis-aligned rectangle `[x0, x1] × [y0, y1]` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn centered(cx: f64, cy: f64, side: f64) -> Self {
        let h = side / 2.0;
        Self {
            x0: cx - h,
            y0: cy - h,
            x1: cx + h,
            y1: cy + h,
        }
    }

    /// A `side`-square around the center, translated (not shrunk) so that it
    /// lies inside `[0, w] × [0, h]`. Sides larger than the frame collapse to
    /// the frame extent along that axis.
    pub fn centered_clamped(cx: f64, cy: f64, side: f64, w: f64, h: f64) -> Self {
        fn axis(c: f64, side: f64, limit: f64) -> (f64, f64) {
            if side >= limit {
                return (0.0, limit);
            }
            let lo = (c - side / 2.0).clamp(0.0, limit - side);
            (lo, lo + side)
        }
        let (x0, x1) = axis(cx, side, w);
        let (y0, y1) = axis(cy, side, h);
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        (self.x1 - self.x0).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y1 - self.y0).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    /// Intersection with `[0, w] × [0, h]`; may be empty.
    pub fn clip(&self, w: f64, h: f64) -> Self {
        Self {
            x0: self.x0.clamp(0.0, w),
            y0: self.y0.clamp(0.0, h),
            x1: self.x1.clamp(0.0, w),
            y1: self.y1.clamp(0.0, h),
        }
    }
}

/// One selected location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPatch {
    pub u: usize,
    pub v: usize,
    pub score: f32,
    /// Center in frame pixels.
    pub x: f64,
    pub y: f64,
    pub eval_cell: Rect,
    pub crop: Rect,
}

/// The ranked, budget-truncated selection for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSelection {
    pub image_w: u32,
    pub image_h: u32,
    pub budget: usize,
    pub patches: Vec<SelectedPatch>,
}

impl PatchSelection {
    /// An empty selection for a frame.
    pub fn empty(image_w: u32, image_h: u32) -> Self {
        Self {
            image_w,
            image_h,
            budget: 0,
            patches: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn centers(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.patches.iter().map(|p| (p.x, p.y))
    }

    pub fn scores(&self) -> impl Iterator<Item = f32> + '_ {
        self.patches.iter().map(|p| p.score)
    }

    /// The first `k` patches, as if decoded with budget `k`.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            image_w: self.image_w,
            image_h: self.image_h,
            budget: k,
            patches: self.patches[..k.min(self.patches.len())].to_vec(),
        }
    }
}

/// Decode parameters shared by every budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    /// Local-maximum window (odd).
    pub window: usize,
    pub min_score: f32,
    pub eval_cell: f64,
    pub crop: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            min_score: 0.0,
            eval_cell: DEFAULT_EVAL_CELL,
            crop: DEFAULT_CROP,
        }
    }
}

/// Runs the full decode path for one frame.
///
/// Proxy-pixel centers are scaled by `image_w / proxy_w` (and likewise
/// vertically) so that a lattice computed on a downscaled proxy lands in
/// frame coordinates. When the frame is the proxy the scale is exactly 1.
pub fn select_patches(
    map: &ResponseMap,
    budget: usize,
    params: &DecodeParams,
    image_w: u32,
    image_h: u32,
) -> Result<PatchSelection, MapError> {
    if image_w == 0 || image_h == 0 {
        return Err(MapError::InvalidImage(image_w, image_h));
    }
    let filtered = local_max_filter(map, params.window)?;
    let peaks = extract_peaks_sorted(&filtered, params.min_score);
    let (w, h) = (f64::from(image_w), f64::from(image_h));
    let sx = w / map.proxy_w();
    let sy = h / map.proxy_h();
    let patches = top_k(&peaks, budget)
        .iter()
        .map(|peak| {
            let (px, py) = remap_to_image(peak, map.stride, map.offset);
            let (x, y) = (px * sx, py * sy);
            SelectedPatch {
                u: peak.u,
                v: peak.v,
                score: peak.score,
                x,
                y,
                eval_cell: Rect::centered(x, y, params.eval_cell),
                crop: Rect::centered_clamped(x, y, params.crop, w, h),
            }
        })
        .collect();
    Ok(PatchSelection {
        image_w,
        image_h,
        budget,
        patches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_local_max(map: &ResponseMap, k: usize) -> Vec<f32> {
        let (w, h) = (map.grid_w() as isize, map.grid_h() as isize);
        let r = (k / 2) as isize;
        let mut out = vec![0.0; map.scores().len()];
        for v in 0..h {
            for u in 0..w {
                let mut m = f32::NEG_INFINITY;
                for dv in -r..=r {
                    for du in -r..=r {
                        let (uu, vv) = (u + du, v + dv);
                        if uu >= 0 && uu < w && vv >= 0 && vv < h {
                            m = m.max(map.get(uu as usize, vv as usize));
                        }
                    }
                }
                let s = map.get(u as usize, v as usize);
                if s == m {
                    out[(v * w + u) as usize] = s;
                }
            }
        }
        out
    }

    #[test]
    fn constant_map_keeps_every_cell() {
        let map = ResponseMap::zeros(4, 4).unwrap();
        let f = local_max_filter(&map, 3).unwrap();
        assert!(f.scores().iter().all(|&s| s == 0.0));
        let map = ResponseMap::new(4, 4, vec![0.25; 16]).unwrap();
        let f = local_max_filter(&map, 3).unwrap();
        assert!(f.scores().iter().all(|&s| s == 0.25));
    }

    #[test]
    fn single_spike_survives_alone() {
        let mut s = vec![0.0; 25];
        s[2 * 5 + 2] = 1.0;
        let map = ResponseMap::new(5, 5, s).unwrap();
        let f = local_max_filter(&map, 3).unwrap();
        let peaks = extract_peaks_sorted(&f, 0.0);
        assert_eq!(
            peaks,
            vec![Peak {
                u: 2,
                v: 2,
                score: 1.0
            }]
        );
    }

    #[test]
    fn pyramid_keeps_only_center() {
        let s = vec![0.1, 0.2, 0.1, 0.2, 0.5, 0.2, 0.1, 0.2, 0.1];
        let map = ResponseMap::new(3, 3, s).unwrap();
        let f = local_max_filter(&map, 3).unwrap();
        assert_eq!(f.scores(), brute_force_local_max(&map, 3).as_slice());
        assert_eq!(f.scores(), &[0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn plateau_keeps_all_cells() {
        let s = vec![0.0, 0.7, 0.7, 0.0, 0.0, 0.0, 0.0, 0.0];
        let map = ResponseMap::new(4, 2, s).unwrap();
        let f = local_max_filter(&map, 3).unwrap();
        assert_eq!(f.get(1, 0), 0.7);
        assert_eq!(f.get(2, 0), 0.7);
    }

    #[test]
    fn window_one_is_identity() {
        let s: Vec<f32> = (0..12).map(|i| (i as f32 * 0.37) % 1.0).collect();
        let map = ResponseMap::new(4, 3, s).unwrap();
        assert_eq!(local_max_filter(&map, 1).unwrap(), map);
    }

    #[test]
    fn even_or_zero_window_rejected() {
        let map = ResponseMap::zeros(3, 3).unwrap();
        assert_eq!(local_max_filter(&map, 2), Err(MapError::InvalidWindow(2)));
        assert_eq!(local_max_filter(&map, 0), Err(MapError::InvalidWindow(0)));
    }

    #[test]
    fn invalid_maps_rejected() {
        assert!(matches!(
            ResponseMap::new(2, 2, vec![0.0; 3]),
            Err(MapError::ScoreCount { .. })
        ));
        assert!(matches!(
            ResponseMap::new(2, 2, vec![0.0, 0.5, 1.5, 0.0]),
            Err(MapError::ScoreOutOfRange { index: 2, .. })
        ));
        assert!(matches!(
            ResponseMap::new(1, 1, vec![f32::NAN]),
            Err(MapError::ScoreOutOfRange { .. })
        ));
        assert!(matches!(
            ResponseMap::new(0, 3, vec![]),
            Err(MapError::EmptyGrid { .. })
        ));
    }

    #[test]
    fn tie_break_is_row_major() {
        let mut s = vec![0.0; 15];
        s[5 + 1] = 0.9; // (1,1)
        s[3] = 0.9; // (3,0)
        s[2 * 5] = 0.5; // (0,2)
        let map = ResponseMap::new(5, 3, s).unwrap();
        let peaks = extract_peaks_sorted(&map, 0.0);
        let order: Vec<_> = peaks.iter().map(|p| (p.u, p.v)).collect();
        assert_eq!(order, vec![(3, 0), (1, 1), (0, 2)]);
    }

    #[test]
    fn zero_map_has_no_peaks() {
        let map = ResponseMap::zeros(6, 6).unwrap();
        assert!(extract_peaks_sorted(&map, 0.0).is_empty());
    }

    #[test]
    fn top_k_truncates() {
        let peaks: Vec<Peak> = (0..10)
            .map(|i| Peak {
                u: i,
                v: 0,
                score: 1.0 - i as f32 * 0.05,
            })
            .collect();
        assert_eq!(top_k(&peaks, 4), &peaks[..4]);
        assert_eq!(top_k(&peaks[..2], 9).len(), 2);
        assert!(top_k(&peaks, 0).is_empty());
    }

    #[test]
    fn remap_matches_stride_geometry() {
        let p = |u, v| Peak { u, v, score: 1.0 };
        assert_eq!(remap_to_image(&p(0, 0), 8, 4).0, 4.0);
        assert_eq!(remap_to_image(&p(79, 0), 8, 4).0, 636.0);
        assert_eq!(remap_to_image(&p(40, 40), 8, 4), (324.0, 324.0));
    }

    #[test]
    fn spike_decodes_to_one_center() {
        let mut s = vec![0.0; 80 * 80];
        s[10 * 80 + 10] = 0.8;
        let map = ResponseMap::new(80, 80, s).unwrap();
        let sel = select_patches(&map, 9, &DecodeParams::default(), 640, 640).unwrap();
        assert_eq!(sel.len(), 1);
        assert_eq!((sel.patches[0].x, sel.patches[0].y), (84.0, 84.0));
        assert_eq!(sel.patches[0].eval_cell, Rect::centered(84.0, 84.0, 64.0));
    }

    #[test]
    fn corner_crop_is_clamped_into_4k_frame() {
        let mut s = vec![0.0; 80 * 80];
        s[0] = 1.0;
        let map = ResponseMap::new(80, 80, s).unwrap();
        let sel = select_patches(&map, 9, &DecodeParams::default(), 3840, 2160).unwrap();
        let crop = sel.patches[0].crop;
        assert_eq!(
            (crop.x0, crop.y0, crop.x1, crop.y1),
            (0.0, 0.0, 640.0, 640.0)
        );
        // Proxy (4, 4) scaled by 3840/640 and 2160/640.
        assert_eq!((sel.patches[0].x, sel.patches[0].y), (24.0, 13.5));
    }

    #[test]
    fn crop_clamps_at_far_edge_and_collapses_when_oversized() {
        let r = Rect::centered_clamped(630.0, 10.0, 64.0, 640.0, 480.0);
        assert_eq!((r.x0, r.x1, r.y0, r.y1), (576.0, 640.0, 0.0, 64.0));
        let r = Rect::centered_clamped(100.0, 100.0, 640.0, 320.0, 240.0);
        assert_eq!((r.x0, r.x1, r.y0, r.y1), (0.0, 320.0, 0.0, 240.0));
    }

    #[test]
    fn json_form_validates() {
        let json = r#"{"grid_w":2,"grid_h":1,"stride":8,"offset":4,"scores":[0.5,2.0]}"#;
        assert!(serde_json::from_str::<ResponseMap>(json).is_err());
        let json = r#"{"grid_w":2,"grid_h":1,"stride":8,"offset":4,"scores":[0.5,1.0]}"#;
        let map: ResponseMap = serde_json::from_str(json).unwrap();
        assert_eq!(map.scores(), &[0.5, 1.0]);
    }
}
