//! Transport-aware end-to-end latency simulation.
//!
//! A frame's latency is the sum of eleven stages:
//!
//! ```text
//! e2e = acq + pre + (sel_npu + sel_cpu_post) + topk + crop
//!     + (copy + sync + queue) + det + post
//! ```
//!
//! Each stage is drawn from a lognormal centered (in log space) on its base
//! value. The zero-copy transport path replaces `copy` and `sync` with reduced
//! values. With several streams the accelerator work of every frame
//! (`sel_npu + det`) runs as one job on a single shared FIFO resource, and
//! the time spent waiting for it is added to that frame's `queue` stage.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Acq,
    Pre,
    SelNpu,
    SelCpuPost,
    TopK,
    Crop,
    Copy,
    Sync,
    Queue,
    Det,
    Post,
}

impl Stage {
    /// Column order of the trace CSV.
    pub const ALL: [Stage; 11] = [
        Stage::Acq,
        Stage::Pre,
        Stage::SelNpu,
        Stage::SelCpuPost,
        Stage::TopK,
        Stage::Crop,
        Stage::Copy,
        Stage::Sync,
        Stage::Queue,
        Stage::Det,
        Stage::Post,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Acq => "acq",
            Stage::Pre => "pre",
            Stage::SelNpu => "sel_npu",
            Stage::SelCpuPost => "sel_cpu_post",
            Stage::TopK => "topk",
            Stage::Crop => "crop",
            Stage::Copy => "copy",
            Stage::Sync => "sync",
            Stage::Queue => "queue",
            Stage::Det => "det",
            Stage::Post => "post",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

/// Base latency and lognormal spread of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageNoise {
    pub base_ms: f64,
    pub sigma_ln: f64,
}

impl StageNoise {
    pub const fn fixed(base_ms: f64) -> Self {
        Self {
            base_ms,
            sigma_ln: 0.0,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, base_ms: f64, rng: &mut R) -> f64 {
        // One draw per stage regardless of parameters keeps the random
        // stream aligned across configs that differ only in their values.
        let z: f64 = rand_distr::StandardNormal.sample(rng);
        if self.sigma_ln == 0.0 || base_ms == 0.0 {
            base_ms
        } else {
            base_ms * (self.sigma_ln * z).exp()
        }
    }
}

/// Per-stage latency models, indexed by [`Stage`]. `queue` holds the
/// contention-free base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageModel {
    stages: [StageNoise; 11],
}

impl Default for StageModel {
    /// A roughly 3 ms selector-plus-detector pipeline.
    fn default() -> Self {
        let mut m = Self::zero();
        for (stage, base) in [
            (Stage::Acq, 0.30),
            (Stage::Pre, 0.25),
            (Stage::SelNpu, 0.90),
            (Stage::SelCpuPost, 0.10),
            (Stage::TopK, 0.05),
            (Stage::Crop, 0.15),
            (Stage::Copy, 0.05),
            (Stage::Sync, 0.02),
            (Stage::Queue, 0.0),
            (Stage::Det, 1.00),
            (Stage::Post, 0.15),
        ] {
            m.set(
                stage,
                StageNoise {
                    base_ms: base,
                    sigma_ln: 0.02,
                },
            );
        }
        m
    }
}

impl StageModel {
    /// Every stage fixed at 0 ms.
    pub fn zero() -> Self {
        Self {
            stages: [StageNoise::default(); 11],
        }
    }

    /// Noise-free model from base values in [`Stage::ALL`] order.
    pub fn fixed(bases: [f64; 11]) -> Self {
        Self {
            stages: bases.map(StageNoise::fixed),
        }
    }

    pub fn get(&self, stage: Stage) -> StageNoise {
        self.stages[stage.index()]
    }

    pub fn set(&mut self, stage: Stage, noise: StageNoise) {
        self.stages[stage.index()] = noise;
    }

    /// Sum of base values, i.e. the noise-free, contention-free e2e.
    pub fn base_sum(&self) -> f64 {
        self.stages.iter().map(|s| s.base_ms).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum TransportMode {
    #[default]
    Copy,
    /// Copy and sync are replaced by these values.
    ZeroCopy { copy_ms: f64, sync_ms: f64 },
}

impl TransportMode {
    pub fn zero_copy() -> Self {
        TransportMode::ZeroCopy {
            copy_ms: 0.0,
            sync_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    /// Frames per stream.
    pub n_frames: usize,
    pub n_streams: usize,
    pub stages: StageModel,
    pub transport: TransportMode,
    /// Capture period shared by all streams; frame `r` of every stream
    /// arrives at `r · frame_interval_ms`.
    pub frame_interval_ms: f64,
    /// Detector cost per selected patch, added to the det base.
    pub det_per_patch_ms: f64,
    pub budget: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_frames: 1000,
            n_streams: 1,
            stages: StageModel::default(),
            transport: TransportMode::Copy,
            frame_interval_ms: 33.3,
            det_per_patch_ms: 0.0,
            budget: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.n_frames == 0 {
            return bad("n_frames must be at least 1".into());
        }
        if self.n_streams == 0 {
            return bad("n_streams must be at least 1".into());
        }
        for st in Stage::ALL {
            let n = self.stages.get(st);
            if !(n.base_ms >= 0.0 && n.base_ms.is_finite()) {
                return bad(format!("{st} base must be a finite value >= 0"));
            }
            if !(n.sigma_ln >= 0.0 && n.sigma_ln.is_finite()) {
                return bad(format!("{st} sigma_ln must be a finite value >= 0"));
            }
        }
        if !(self.frame_interval_ms >= 0.0 && self.frame_interval_ms.is_finite()) {
            return bad("frame interval must be a finite value >= 0".into());
        }
        if !(self.det_per_patch_ms >= 0.0) {
            return bad("det per-patch cost must be >= 0".into());
        }
        if let TransportMode::ZeroCopy { copy_ms, sync_ms } = self.transport {
            let base_copy = self.stages.get(Stage::Copy).base_ms;
            let base_sync = self.stages.get(Stage::Sync).base_ms;
            if !(0.0..=base_copy).contains(&copy_ms) || !(0.0..=base_sync).contains(&sync_ms) {
                return bad("zero-copy values must lie between 0 and the copy/sync bases".into());
            }
        }
        Ok(())
    }

    fn rng_for_stream(&self, stream: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream as u64);
        rng
    }
}

/// Per-stage latencies of one frame, in [`Stage::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTimes(pub [f64; 11]);

impl StageTimes {
    pub fn get(&self, stage: Stage) -> f64 {
        self.0[stage.index()]
    }

    fn add(&mut self, stage: Stage, ms: f64) {
        self.0[stage.index()] += ms;
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `sel_npu + sel_cpu_post`.
    pub fn selector(&self) -> f64 {
        self.get(Stage::SelNpu) + self.get(Stage::SelCpuPost)
    }

    /// `copy + sync + queue`.
    pub fn transport(&self) -> f64 {
        self.get(Stage::Copy) + self.get(Stage::Sync) + self.get(Stage::Queue)
    }
}

/// Samples one frame's stages without contention.
pub fn simulate_frame<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> StageTimes {
    let mut t = [0.0; 11];
    for st in Stage::ALL {
        let noise = cfg.stages.get(st);
        let base = match st {
            Stage::Det => noise.base_ms + cfg.det_per_patch_ms * cfg.budget as f64,
            _ => noise.base_ms,
        };
        t[st.index()] = noise.sample(base, rng);
    }
    if let TransportMode::ZeroCopy { copy_ms, sync_ms } = cfg.transport {
        t[Stage::Copy.index()] = copy_ms;
        t[Stage::Sync.index()] = sync_ms;
    }
    StageTimes(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub stream_id: u32,
    pub stages: StageTimes,
    pub e2e_ms: f64,
}

impl FrameRecord {
    pub fn new(frame_id: u64, stream_id: u32, stages: StageTimes) -> Self {
        Self {
            frame_id,
            stream_id,
            e2e_ms: stages.sum(),
            stages,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatencyTrace {
    pub records: Vec<FrameRecord>,
}

impl LatencyTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn e2e(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.e2e_ms).collect()
    }
}

/// Simulates all streams. Frame ids follow arrival order
/// (`round · n_streams + stream`).
pub fn simulate_stream(cfg: &SimConfig) -> Result<LatencyTrace, SimError> {
    cfg.validate()?;
    let (n, s) = (cfg.n_frames, cfg.n_streams);
    // samples[round * s + stream]
    let mut samples = vec![StageTimes([0.0; 11]); n * s];
    for stream in 0..s {
        let mut rng = cfg.rng_for_stream(stream);
        for round in 0..n {
            samples[round * s + stream] = simulate_frame(cfg, &mut rng);
        }
    }

    if s > 1 {
        // FIFO on the shared accelerator, ordered by request time with ties
        // going to the earlier arrival.
        let request = |i: usize| {
            let round = i / s;
            let t = &samples[i];
            round as f64 * cfg.frame_interval_ms + t.get(Stage::Acq) + t.get(Stage::Pre)
        };
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| request(a).total_cmp(&request(b)).then(a.cmp(&b)));
        let mut free_at = f64::NEG_INFINITY;
        let mut waits = vec![0.0; samples.len()];
        for &i in &order {
            let req = request(i);
            let start = free_at.max(req);
            waits[i] = start - req;
            free_at = start + samples[i].get(Stage::SelNpu) + samples[i].get(Stage::Det);
        }
        for (t, w) in samples.iter_mut().zip(waits) {
            t.add(Stage::Queue, w);
        }
    }

    let records = samples
        .into_iter()
        .enumerate()
        .map(|(i, t)| FrameRecord::new(i as u64, (i % s) as u32, t))
        .collect();
    Ok(LatencyTrace { records })
}

pub const TRACE_CSV_HEADER: &str =
    "frame_id,stream_id,acq,pre,sel_npu,sel_cpu_post,topk,crop,copy,sync,queue,det,post,e2e";

/// Tolerance on `e2e` against the row's stage sum when loading.
pub const E2E_TOLERANCE_MS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line 1: unexpected header {0:?}")]
    BadHeader(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: e2e {e2e} differs from stage sum {sum}")]
    E2eMismatch { line: usize, e2e: f64, sum: f64 },
    #[error("trace has no frames")]
    Empty,
}

/// Renders a trace as CSV. Floats use shortest round-trip formatting, so the
/// output parses back to identical values.
pub fn trace_to_csv_string(trace: &LatencyTrace) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(TRACE_CSV_HEADER);
    out.push('\n');
    for r in &trace.records {
        out.push_str(&format!("{},{}", r.frame_id, r.stream_id));
        for v in r.stages.0 {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{}\n", r.e2e_ms));
    }
    out
}

pub fn parse_trace_csv(text: &str) -> Result<LatencyTrace, TraceError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == TRACE_CSV_HEADER => {}
        Some((_, h)) => return Err(TraceError::BadHeader(h.to_string())),
        None => return Err(TraceError::Empty),
    }
    let mut records = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let err = |message: String| TraceError::Parse { line, message };
        let fields: Vec<&str> = raw.trim_end().split(',').collect();
        if fields.len() != 14 {
            return Err(err(format!("expected 14 fields, found {}", fields.len())));
        }
        let frame_id: u64 = fields[0]
            .parse()
            .map_err(|_| err(format!("bad frame_id {:?}", fields[0])))?;
        let stream_id: u32 = fields[1]
            .parse()
            .map_err(|_| err(format!("bad stream_id {:?}", fields[1])))?;
        let mut values = [0.0f64; 12];
        for (k, f) in fields[2..].iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| err(format!("bad number {f:?}")))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(err(format!("latency {f} must be finite and >= 0")));
            }
            values[k] = v;
        }
        let stages = StageTimes(values[..11].try_into().expect("11 stages"));
        let e2e = values[11];
        let sum = stages.sum();
        if (e2e - sum).abs() > E2E_TOLERANCE_MS {
            return Err(TraceError::E2eMismatch { line, e2e, sum });
        }
        records.push(FrameRecord {
            frame_id,
            stream_id,
            stages,
            e2e_ms: e2e,
        });
    }
    if records.is_empty() {
        return Err(TraceError::Empty);
    }
    Ok(LatencyTrace { records })
}

pub fn trace_to_csv(trace: &LatencyTrace, path: &Path) -> Result<(), TraceError> {
    fs::write(path, trace_to_csv_string(trace)).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn trace_from_csv(path: &Path) -> Result<LatencyTrace, TraceError> {
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trace_csv(&text)
}
