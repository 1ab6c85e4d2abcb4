//! Gaussian heatmap supervision and the CenterNet-style focal loss.
//!
//! Nothing here trains anything. The loss and its analytic gradient exist so
//! that the supervision math can be checked against finite differences, and
//! the Gaussian heatmap doubles as a perfect scorer for end-to-end checks of
//! the decode and coverage paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::response_map::{MapError, ResponseMap};

/// Default Gaussian spread in lattice cells.
pub const DEFAULT_SIGMA: f64 = 2.0;
/// Default floor used to clamp scores away from 0 and 1 before taking logs.
pub const DEFAULT_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("score grid has {scores} cells but supervision has {target} ({grid_w}x{grid_h})")]
    DimensionMismatch {
        scores: usize,
        target: usize,
        grid_w: usize,
        grid_h: usize,
    },
    #[error("invalid loss configuration: {0}")]
    InvalidConfig(&'static str),
}

/// A normalized target center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub x: f64,
    pub y: f64,
}

/// Ground-truth tiny-target centers of one frame, normalized to `[0, 1]²`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetSet {
    pub image_w: u32,
    pub image_h: u32,
    pub targets: Vec<Target>,
}

impl TargetSet {
    pub fn new(image_w: u32, image_h: u32, targets: Vec<Target>) -> Self {
        Self {
            image_w,
            image_h,
            targets,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Target centers in frame pixels.
    pub fn pixel_centers(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (w, h) = (f64::from(self.image_w), f64::from(self.image_h));
        self.targets.iter().map(move |t| (t.x * w, t.y * h))
    }
}

/// Continuous lattice coordinates `(grid_w·x, grid_h·y)` of each target.
pub fn map_centers_to_lattice(
    targets: &TargetSet,
    grid_w: usize,
    grid_h: usize,
) -> Vec<(f64, f64)> {
    targets
        .targets
        .iter()
        .map(|t| (grid_w as f64 * t.x, grid_h as f64 * t.y))
        .collect()
}

/// Nearest cell index for a continuous lattice coordinate. Exact halves round
/// toward the lower index; anything at or past `cells` lands in the last cell.
pub fn lattice_cell(coord: f64, cells: usize) -> usize {
    let idx = (coord - 0.5).ceil().max(0.0) as usize;
    idx.min(cells - 1)
}

/// Gaussian supervision `Y ∈ [0, 1]` on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisionMap {
    pub grid_w: usize,
    pub grid_h: usize,
    pub values: Vec<f64>,
}

impl SupervisionMap {
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.grid_w + u]
    }

    /// Number of cells with `Y == 1`.
    pub fn positive_count(&self) -> usize {
        self.values.iter().filter(|&&y| y == 1.0).count()
    }
}

/// `Y(u,v) = max_m exp(−((u−u_m)² + (v−v_m)²) / 2σ²)` at integer cells, with
/// each target's rounded cell forced to exactly 1.
pub fn gaussian_heatmap(
    targets: &TargetSet,
    grid_w: usize,
    grid_h: usize,
    sigma: f64,
) -> SupervisionMap {
    assert!(grid_w > 0 && grid_h > 0, "grid must be non-empty");
    assert!(sigma > 0.0, "sigma must be positive");
    let centers = map_centers_to_lattice(targets, grid_w, grid_h);
    let denom = 2.0 * sigma * sigma;
    let mut values = vec![0.0f64; grid_w * grid_h];
    for &(cu, cv) in &centers {
        for v in 0..grid_h {
            let dv = v as f64 - cv;
            for u in 0..grid_w {
                let du = u as f64 - cu;
                let g = (-(du * du + dv * dv) / denom).exp();
                let cell = &mut values[v * grid_w + u];
                if g > *cell {
                    *cell = g;
                }
            }
        }
    }
    for &(cu, cv) in &centers {
        let (u, v) = (lattice_cell(cu, grid_w), lattice_cell(cv, grid_h));
        values[v * grid_w + u] = 1.0;
    }
    SupervisionMap {
        grid_w,
        grid_h,
        values,
    }
}

/// The perfect scorer: the supervision heatmap itself, as a response map.
pub fn oracle_response_map(
    targets: &TargetSet,
    grid_w: usize,
    grid_h: usize,
    sigma: f64,
    stride: u32,
    offset: u32,
) -> Result<ResponseMap, MapError> {
    let y = gaussian_heatmap(targets, grid_w, grid_h, sigma);
    let scores = y.values.iter().map(|&v| v as f32).collect();
    ResponseMap::with_geometry(grid_w, grid_h, stride, offset, scores)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub sigma: f64,
    /// Exponent on `(1 − S)` for positives and on `S` for negatives.
    pub alpha: u32,
    /// Exponent on `(1 − Y)` for negatives.
    pub beta: u32,
    pub eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            alpha: 2,
            beta: 4,
            eps: DEFAULT_EPS,
        }
    }
}

impl LossConfig {
    fn validate(&self) -> Result<(), LossError> {
        if !(self.sigma > 0.0) {
            return Err(LossError::InvalidConfig("sigma must be positive"));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(LossError::InvalidConfig("eps must lie in (0, 0.5)"));
        }
        Ok(())
    }
}

/// Focal loss value with the per-cell contributions that sum to it.
#[derive(Debug, Clone, PartialEq)]
pub struct FocalLoss {
    pub total: f64,
    /// Each cell's share of `total`, already negated and normalized.
    pub per_cell: Vec<f64>,
    pub positives: usize,
}

fn check_dims(scores: &[f64], y: &SupervisionMap) -> Result<(), LossError> {
    if scores.len() != y.values.len() || y.values.len() != y.grid_w * y.grid_h {
        return Err(LossError::DimensionMismatch {
            scores: scores.len(),
            target: y.values.len(),
            grid_w: y.grid_w,
            grid_h: y.grid_h,
        });
    }
    Ok(())
}

fn pow(x: f64, n: u32) -> f64 {
    x.powi(n as i32)
}

/// Normalizer: `|P|` when positives exist, otherwise 1.
fn normalizer(y: &SupervisionMap) -> (usize, f64) {
    let p = y.positive_count();
    (p, if p > 0 { p as f64 } else { 1.0 })
}

/// Focal loss of scores `S` (row-major, same lattice as `y`).
///
/// Positives (`Y = 1`) contribute `(1−S)^α log S`, all other cells
/// `(1−Y)^β S^α log(1−S)`. The total is the negated sum divided by `|P|`, or
/// just the negated sum when there are no positives. Scores are clamped into
/// `[eps, 1−eps]` first.
pub fn focal_loss(
    scores: &[f64],
    y: &SupervisionMap,
    cfg: &LossConfig,
) -> Result<FocalLoss, LossError> {
    cfg.validate()?;
    check_dims(scores, y)?;
    let (positives, norm) = normalizer(y);
    let per_cell: Vec<f64> = scores
        .iter()
        .zip(&y.values)
        .map(|(&s, &yv)| {
            let s = s.clamp(cfg.eps, 1.0 - cfg.eps);
            let term = if yv == 1.0 {
                pow(1.0 - s, cfg.alpha) * s.ln()
            } else {
                pow(1.0 - yv, cfg.beta) * pow(s, cfg.alpha) * (1.0 - s).ln()
            };
            -term / norm
        })
        .collect();
    let total = per_cell.iter().sum();
    Ok(FocalLoss {
        total,
        per_cell,
        positives,
    })
}

/// Convenience wrapper scoring a [`ResponseMap`] directly.
pub fn focal_loss_map(
    map: &ResponseMap,
    y: &SupervisionMap,
    cfg: &LossConfig,
) -> Result<FocalLoss, LossError> {
    let scores: Vec<f64> = map.scores().iter().map(|&s| f64::from(s)).collect();
    focal_loss(&scores, y, cfg)
}

/// Analytic `∂L/∂S_uv` of [`focal_loss`]'s total. Zero where the clamp is
/// active.
pub fn focal_loss_grad(
    scores: &[f64],
    y: &SupervisionMap,
    cfg: &LossConfig,
) -> Result<Vec<f64>, LossError> {
    cfg.validate()?;
    check_dims(scores, y)?;
    let (_, norm) = normalizer(y);
    let a = cfg.alpha;
    let af = f64::from(a);
    Ok(scores
        .iter()
        .zip(&y.values)
        .map(|(&s, &yv)| {
            if s < cfg.eps || s > 1.0 - cfg.eps {
                return 0.0;
            }
            let d = if yv == 1.0 {
                // d/dS (1−S)^α ln S
                let lead = if a == 0 {
                    0.0
                } else {
                    -af * pow(1.0 - s, a - 1) * s.ln()
                };
                lead + pow(1.0 - s, a) / s
            } else {
                // d/dS (1−Y)^β S^α ln(1−S)
                let lead = if a == 0 {
                    0.0
                } else {
                    af * pow(s, a - 1) * (1.0 - s).ln()
                };
                pow(1.0 - yv, cfg.beta) * (lead - pow(s, a) / (1.0 - s))
            };
            -d / norm
        })
        .collect())
}

/// Which branch of the normalization a random instance exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    /// Gaussian supervision from 1–3 random targets (`|P| > 0`).
    Gaussian,
    /// Uniform `Y` strictly below 1 (`|P| = 0`).
    NoPositives,
    /// Uniform `Y` with a few cells forced to 1.
    Mixed,
}

/// A seeded random `(S, Y)` pair for gradient checking.
pub fn random_instance(seed: u64, grid: usize, kind: InstanceKind) -> (Vec<f64>, SupervisionMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Keep S off the clamp boundaries so the loss is smooth at every probe.
    let scores: Vec<f64> = (0..grid * grid)
        .map(|_| rng.random_range(0.02..0.98))
        .collect();
    let y = match kind {
        InstanceKind::Gaussian => {
            let n = rng.random_range(1..=3);
            let targets = (0..n)
                .map(|_| Target {
                    x: rng.random_range(0.0..1.0),
                    y: rng.random_range(0.0..1.0),
                })
                .collect();
            let sigma = rng.random_range(0.8..2.5);
            gaussian_heatmap(&TargetSet::new(64, 64, targets), grid, grid, sigma)
        }
        InstanceKind::NoPositives | InstanceKind::Mixed => {
            let mut values: Vec<f64> = (0..grid * grid)
                .map(|_| rng.random_range(0.0..0.999))
                .collect();
            if kind == InstanceKind::Mixed {
                for _ in 0..rng.random_range(1..=4) {
                    let i = rng.random_range(0..values.len());
                    values[i] = 1.0;
                }
            }
            SupervisionMap {
                grid_w: grid,
                grid_h: grid,
                values,
            }
        }
    };
    (scores, y)
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub instances: usize,
    pub with_positives: usize,
    pub without_positives: usize,
    pub max_rel_err: f64,
    /// Seed of the instance that produced `max_rel_err`.
    pub worst_seed: u64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

/// Settings for [`gradient_check`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub first_seed: u64,
    pub seeds: u64,
    pub grid: usize,
    pub fd_step: f64,
    pub tolerance: f64,
    /// Gradients smaller than this in magnitude are compared absolutely.
    pub abs_floor: f64,
    /// Restrict to `|P| = 0` instances.
    pub only_no_positives: bool,
    /// Negate the analytic gradient; used as a negative control.
    pub flip_sign: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            first_seed: 0,
            seeds: 100,
            grid: 8,
            fd_step: 1e-5,
            tolerance: 1e-4,
            abs_floor: 1e-6,
            only_no_positives: false,
            flip_sign: false,
        }
    }
}

/// Compares [`focal_loss_grad`] with central differences of [`focal_loss`]
/// over seeded random instances. Seeds cycle through the three
/// [`InstanceKind`]s so both normalization branches are always covered.
pub fn gradient_check(
    check: &GradCheckConfig,
    cfg: &LossConfig,
) -> Result<GradCheckReport, LossError> {
    let mut report = GradCheckReport {
        instances: 0,
        with_positives: 0,
        without_positives: 0,
        max_rel_err: 0.0,
        worst_seed: 0,
        tolerance: check.tolerance,
    };
    for seed in check.first_seed..check.first_seed + check.seeds {
        let kind = if check.only_no_positives {
            InstanceKind::NoPositives
        } else {
            [
                InstanceKind::Gaussian,
                InstanceKind::NoPositives,
                InstanceKind::Mixed,
            ][(seed % 3) as usize]
        };
        let (mut s, y) = random_instance(seed, check.grid, kind);
        let mut grad = focal_loss_grad(&s, &y, cfg)?;
        if check.flip_sign {
            grad.iter_mut().for_each(|g| *g = -*g);
        }
        if y.positive_count() > 0 {
            report.with_positives += 1;
        } else {
            report.without_positives += 1;
        }
        for i in 0..s.len() {
            let orig = s[i];
            s[i] = orig + check.fd_step;
            let up = focal_loss(&s, &y, cfg)?.total;
            s[i] = orig - check.fd_step;
            let down = focal_loss(&s, &y, cfg)?.total;
            s[i] = orig;
            let fd = (up - down) / (2.0 * check.fd_step);
            let denom = grad[i].abs().max(fd.abs()).max(check.abs_floor);
            let err = (grad[i] - fd).abs() / denom;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_seed = seed;
            }
        }
        report.instances += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(points: &[(f64, f64)]) -> TargetSet {
        TargetSet::new(
            640,
            640,
            points.iter().map(|&(x, y)| Target { x, y }).collect(),
        )
    }

    #[test]
    fn lattice_mapping() {
        let c = map_centers_to_lattice(&ts(&[(0.5, 0.0), (1.0, 1.0)]), 80, 80);
        assert_eq!(c, vec![(40.0, 0.0), (80.0, 80.0)]);
        assert_eq!(lattice_cell(80.0, 80), 79);
        assert_eq!(lattice_cell(0.0, 80), 0);
        assert_eq!(lattice_cell(2.5, 80), 2);
        assert_eq!(lattice_cell(2.500001, 80), 3);
        assert_eq!(lattice_cell(2.4, 80), 2);
    }

    #[test]
    fn empty_targets_give_zero_map() {
        let y = gaussian_heatmap(&ts(&[]), 8, 6, 2.0);
        assert!(y.values.iter().all(|&v| v == 0.0));
        assert_eq!(y.positive_count(), 0);
    }

    #[test]
    fn single_centered_target() {
        // u = 80 * 0.125 = 10 exactly.
        let sigma = 1.5;
        let y = gaussian_heatmap(&ts(&[(0.125, 0.125)]), 80, 80, sigma);
        assert_eq!(y.get(10, 10), 1.0);
        let expect = (-1.0 / (2.0 * sigma * sigma)).exp();
        for (u, v) in [(9, 10), (11, 10), (10, 9), (10, 11)] {
            assert_eq!(y.get(u, v), expect);
        }
        assert_eq!(y.positive_count(), 1);
    }

    #[test]
    fn two_targets_midpoint() {
        let y = gaussian_heatmap(&ts(&[(0.125, 0.125), (0.25, 0.125)]), 80, 80, 2.0);
        assert_eq!(y.get(15, 10), (-3.125f64).exp());
    }

    #[test]
    fn off_center_target_still_has_one_positive() {
        let y = gaussian_heatmap(&ts(&[(0.1234, 0.5678)]), 80, 80, 2.0);
        assert_eq!(y.positive_count(), 1);
        let (u, v) = (
            lattice_cell(80.0 * 0.1234, 80),
            lattice_cell(80.0 * 0.5678, 80),
        );
        assert_eq!(y.get(u, v), 1.0);
    }

    #[test]
    fn zero_scores_zero_supervision_is_zero_loss() {
        let y = gaussian_heatmap(&ts(&[]), 4, 4, 2.0);
        let l = focal_loss(&[0.0; 16], &y, &LossConfig::default()).unwrap();
        assert!(l.total.abs() < 1e-15);
    }

    #[test]
    fn saturated_positive_is_near_zero() {
        let y = gaussian_heatmap(&ts(&[(0.5, 0.5)]), 4, 4, 0.5);
        let mut s = vec![0.0; 16];
        s[2 * 4 + 2] = 1.0;
        let l = focal_loss(&s, &y, &LossConfig::default()).unwrap();
        assert!(l.per_cell[2 * 4 + 2].abs() < 1e-15);
        assert!(l.total.is_finite() && l.total >= 0.0);
    }

    /// A straight-line transcription of the loss used as an oracle.
    fn reference_loss(s: &[f64], y: &[f64], eps: f64) -> f64 {
        let mut pos = 0.0;
        let mut neg = 0.0;
        let mut npos = 0usize;
        for i in 0..s.len() {
            let si = if s[i] < eps {
                eps
            } else if s[i] > 1.0 - eps {
                1.0 - eps
            } else {
                s[i]
            };
            if y[i] == 1.0 {
                npos += 1;
                pos += (1.0 - si) * (1.0 - si) * si.ln();
            } else {
                let w = (1.0 - y[i]) * (1.0 - y[i]) * (1.0 - y[i]) * (1.0 - y[i]);
                neg += w * si * si * (1.0 - si).ln();
            }
        }
        if npos > 0 {
            -(pos + neg) / npos as f64
        } else {
            -neg
        }
    }

    #[test]
    fn matches_reference_transcription() {
        for seed in 0..30 {
            let kind = [
                InstanceKind::Gaussian,
                InstanceKind::NoPositives,
                InstanceKind::Mixed,
            ][seed % 3];
            let (s, y) = random_instance(seed as u64, 8, kind);
            let got = focal_loss(&s, &y, &LossConfig::default()).unwrap().total;
            let want = reference_loss(&s, &y.values, 1e-6);
            assert!((got - want).abs() <= 1e-12 * want.abs(), "{got} vs {want}");
        }
    }

    #[test]
    fn grad_vanishes_far_from_positives() {
        let y = SupervisionMap {
            grid_w: 1,
            grid_h: 1,
            values: vec![0.0],
        };
        let g = focal_loss_grad(&[1e-4], &y, &LossConfig::default()).unwrap();
        assert!(g[0].abs() < 1e-7);
    }

    #[test]
    fn grad_without_positives_is_unnormalized() {
        let (s, y) = random_instance(7, 4, InstanceKind::NoPositives);
        let g = focal_loss_grad(&s, &y, &LossConfig::default()).unwrap();
        for i in 0..s.len() {
            let w = (1.0 - y.values[i]).powi(4);
            let want = -w * (2.0 * s[i] * (1.0 - s[i]).ln() - s[i] * s[i] / (1.0 - s[i]));
            assert!((g[i] - want).abs() <= 1e-14 * want.abs().max(1e-300));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let y = gaussian_heatmap(&ts(&[]), 4, 4, 2.0);
        assert!(matches!(
            focal_loss(&[0.5; 15], &y, &LossConfig::default()),
            Err(LossError::DimensionMismatch { .. })
        ));
        assert!(focal_loss_grad(&[0.5; 17], &y, &LossConfig::default()).is_err());
    }

    #[test]
    fn gradient_check_passes_and_negative_control_fails() {
        let check = GradCheckConfig {
            seeds: 12,
            ..Default::default()
        };
        let r = gradient_check(&check, &LossConfig::default()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.with_positives > 0 && r.without_positives > 0);
        let flipped = GradCheckConfig {
            flip_sign: true,
            ..check
        };
        assert!(!gradient_check(&flipped, &LossConfig::default())
            .unwrap()
            .passed());
    }

    #[test]
    fn oracle_map_is_supervision() {
        let t = ts(&[(0.3, 0.7)]);
        let m = oracle_response_map(&t, 80, 80, 2.0, 8, 4).unwrap();
        let y = gaussian_heatmap(&t, 80, 80, 2.0);
        assert!(m
            .scores()
            .iter()
            .zip(&y.values)
            .all(|(&a, &b)| a == b as f32));
        let empty = oracle_response_map(&ts(&[]), 80, 80, 2.0, 8, 4).unwrap();
        assert!(empty.scores().iter().all(|&s| s == 0.0));
    }
}
