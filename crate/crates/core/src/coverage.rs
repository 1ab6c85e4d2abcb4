//! Coverage accounting: hit tests, pooled recall, union-area budget ratio and
//! the Recall@K / Recall@Ratio evaluation protocol.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Dataset;
use crate::response_map::{
    select_patches, DecodeParams, MapError, PatchSelection, Rect, ResponseMap,
};
use crate::supervision::TargetSet;

/// Half-side of the evaluation cell in pixels.
pub const DEFAULT_HALF_EXTENT: f64 = 32.0;
/// Area of one 64×64 evaluation unit, used to turn area ratios into counts.
pub const DEFAULT_PATCH_UNIT_AREA: f64 = 64.0 * 64.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverageError {
    #[error("recall is undefined: there are no ground-truth targets")]
    NoTargets,
    #[error("no response map for frame {0}")]
    MissingMap(String),
    #[error("frame {image_id}: {source}")]
    Decode {
        image_id: String,
        #[source]
        source: MapError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageConfig {
    pub eval_half_extent: f64,
    pub patch_unit_area: f64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            eval_half_extent: DEFAULT_HALF_EXTENT,
            patch_unit_area: DEFAULT_PATCH_UNIT_AREA,
        }
    }
}

/// True iff some selected center lies within `half` of the target on both
/// axes (inclusive).
pub fn is_covered(target: (f64, f64), selection: &PatchSelection, half: f64) -> bool {
    selection
        .centers()
        .any(|(x, y)| (x - target.0).abs() <= half && (y - target.1).abs() <= half)
}

/// Covered and total target counts for one frame.
pub fn frame_hits(targets: &TargetSet, selection: &PatchSelection, half: f64) -> (usize, usize) {
    let hits = targets
        .pixel_centers()
        .filter(|&t| is_covered(t, selection, half))
        .count();
    (hits, targets.len())
}

/// Micro-averaged recall over all targets of all frames.
pub fn coverage_recall<'a, I>(frames: I, half: f64) -> Result<f64, CoverageError>
where
    I: IntoIterator<Item = (&'a TargetSet, &'a PatchSelection)>,
{
    let (hits, total) = frames
        .into_iter()
        .map(|(t, s)| frame_hits(t, s, half))
        .fold((0, 0), |(h, n), (fh, fn_)| (h + fh, n + fn_));
    if total == 0 {
        return Err(CoverageError::NoTargets);
    }
    Ok(hits as f64 / total as f64)
}

/// Exact area of a union of rectangles by coordinate compression.
pub fn union_area(rects: &[Rect]) -> f64 {
    let rects: Vec<&Rect> = rects.iter().filter(|r| r.area() > 0.0).collect();
    let mut xs: Vec<f64> = rects.iter().flat_map(|r| [r.x0, r.x1]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut area = 0.0;
    let mut spans: Vec<(f64, f64)> = Vec::new();
    for slab in xs.windows(2) {
        let (xa, xb) = (slab[0], slab[1]);
        spans.clear();
        spans.extend(
            rects
                .iter()
                .filter(|r| r.x0 <= xa && r.x1 >= xb)
                .map(|r| (r.y0, r.y1)),
        );
        if spans.is_empty() {
            continue;
        }
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut covered = 0.0;
        let (mut lo, mut hi) = spans[0];
        for &(y0, y1) in &spans[1..] {
            if y0 > hi {
                covered += hi - lo;
                (lo, hi) = (y0, y1);
            } else if y1 > hi {
                hi = y1;
            }
        }
        covered += hi - lo;
        area += covered * (xb - xa);
    }
    area
}

/// Which rectangles a budget ratio is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetArea {
    /// 64×64 evaluation cells; the offline default.
    #[default]
    EvalCells,
    /// Backend crops, for deployment budgets.
    Crops,
}

/// Union area of the selection's rectangles (clipped to the frame) over the
/// frame area.
pub fn budget_ratio(selection: &PatchSelection, area: BudgetArea) -> f64 {
    let (w, h) = (f64::from(selection.image_w), f64::from(selection.image_h));
    let rects: Vec<Rect> = selection
        .patches
        .iter()
        .map(|p| match area {
            BudgetArea::EvalCells => p.eval_cell,
            BudgetArea::Crops => p.crop,
        })
        .map(|r| r.clip(w, h))
        .collect();
    union_area(&rects) / (w * h)
}

/// Patch count for an area ratio: `floor(ratio·W·H / unit)`, at least 1.
///
/// Products that land within 1e-9 (relative) of an integer are snapped to
/// it first, so that e.g. 0.01·640·640/4096 is 1 and not 0.
pub fn ratio_to_budget(ratio: f64, image_w: u32, image_h: u32, patch_unit_area: f64) -> usize {
    let exact = ratio * f64::from(image_w) * f64::from(image_h) / patch_unit_area;
    let nearest = exact.round();
    let k = if (exact - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest
    } else {
        exact.floor()
    };
    (k as usize).max(1)
}

/// How a row's budget was specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetSpec {
    K(usize),
    Ratio(f64),
}

impl BudgetSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            BudgetSpec::K(_) => "k",
            BudgetSpec::Ratio(_) => "ratio",
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            BudgetSpec::K(k) => k as f64,
            BudgetSpec::Ratio(r) => r,
        }
    }
}

impl fmt::Display for BudgetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BudgetSpec::K(k) => write!(f, "{k}"),
            BudgetSpec::Ratio(r) => write!(f, "{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallRow {
    pub method: String,
    pub budget: BudgetSpec,
    pub recall: f64,
    pub frames: usize,
    pub targets: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecallTable {
    pub rows: Vec<RecallRow>,
}

pub const RECALL_CSV_HEADER: &str = "method,budget_type,budget_value,recall,frames,targets";

impl RecallTable {
    pub fn extend(&mut self, other: RecallTable) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(RECALL_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.method,
                r.budget.kind(),
                r.budget,
                r.recall,
                r.frames,
                r.targets
            ));
        }
        out
    }

    /// Rows of one method and budget kind, in insertion order.
    pub fn series<'a>(
        &'a self,
        method: &'a str,
        kind: &'a str,
    ) -> impl Iterator<Item = &'a RecallRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.method == method && r.budget.kind() == kind)
    }
}

/// Decodes every frame once at `max_budget`; smaller budgets are prefixes.
fn decode_all(
    dataset: &Dataset,
    maps: &HashMap<String, ResponseMap>,
    max_budget: usize,
    params: &DecodeParams,
) -> Result<Vec<PatchSelection>, CoverageError> {
    dataset
        .frames
        .par_iter()
        .map(|f| {
            let map = maps
                .get(&f.image_id)
                .ok_or_else(|| CoverageError::MissingMap(f.image_id.clone()))?;
            select_patches(map, max_budget, params, f.width, f.height).map_err(|source| {
                CoverageError::Decode {
                    image_id: f.image_id.clone(),
                    source,
                }
            })
        })
        .collect()
}

fn pooled_recall(
    method: &str,
    budget: BudgetSpec,
    dataset: &Dataset,
    selections: &[PatchSelection],
    per_frame_k: impl Fn(usize) -> usize,
    half: f64,
) -> Result<RecallRow, CoverageError> {
    let truncated: Vec<PatchSelection> = selections
        .iter()
        .enumerate()
        .map(|(i, s)| s.truncated(per_frame_k(i)))
        .collect();
    let recall = coverage_recall(
        dataset.frames.iter().map(|f| &f.targets).zip(&truncated),
        half,
    )?;
    Ok(RecallRow {
        method: method.to_string(),
        budget,
        recall,
        frames: dataset.len(),
        targets: dataset.total_targets(),
    })
}

/// Recall@K for each budget in `budgets`, pooled over the dataset.
pub fn recall_at_k(
    method: &str,
    dataset: &Dataset,
    maps: &HashMap<String, ResponseMap>,
    budgets: &[usize],
    params: &DecodeParams,
    cov: &CoverageConfig,
) -> Result<RecallTable, CoverageError> {
    if dataset.is_empty() {
        return Ok(RecallTable::default());
    }
    let max_k = budgets.iter().copied().max().unwrap_or(0);
    let selections = decode_all(dataset, maps, max_k, params)?;
    let rows = budgets
        .iter()
        .map(|&k| {
            pooled_recall(
                method,
                BudgetSpec::K(k),
                dataset,
                &selections,
                |_| k,
                cov.eval_half_extent,
            )
        })
        .collect::<Result<_, _>>()?;
    Ok(RecallTable { rows })
}

/// Recall@Ratio: each frame gets `ratio_to_budget(ratio)` patches.
pub fn recall_at_ratio(
    method: &str,
    dataset: &Dataset,
    maps: &HashMap<String, ResponseMap>,
    ratios: &[f64],
    params: &DecodeParams,
    cov: &CoverageConfig,
) -> Result<RecallTable, CoverageError> {
    if dataset.is_empty() {
        return Ok(RecallTable::default());
    }
    let budget_for = |ratio: f64, i: usize| {
        let f = &dataset.frames[i];
        ratio_to_budget(ratio, f.width, f.height, cov.patch_unit_area)
    };
    let max_k = ratios
        .iter()
        .flat_map(|&r| (0..dataset.len()).map(move |i| budget_for(r, i)))
        .max()
        .unwrap_or(0);
    let selections = decode_all(dataset, maps, max_k, params)?;
    let rows = ratios
        .iter()
        .map(|&r| {
            pooled_recall(
                method,
                BudgetSpec::Ratio(r),
                dataset,
                &selections,
                |i| budget_for(r, i),
                cov.eval_half_extent,
            )
        })
        .collect::<Result<_, _>>()?;
    Ok(RecallTable { rows })
}
