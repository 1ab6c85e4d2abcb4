use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Budgeted patch selection experiments: decode, recall, QoS and latency
/// simulation.
#[derive(Debug, Parser)]
#[command(name = "tinypatch", version)]
pub struct Cli {
    /// Config file (`key = value` lines under `[section]` headers).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for every random generator.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads for frame-parallel work.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

// Parsed once per process, so the size spread between variants is harmless.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode response maps into per-frame patch selections (JSON).
    Select(SelectArgs),
    /// Recall@K and Recall@Ratio tables with recall-budget curves.
    EvalRecall(EvalRecallArgs),
    /// Deadline-aware QoS metrics and the latency/QoS Pareto frontier.
    EvalQos(EvalQosArgs),
    /// Simulate an end-to-end latency trace.
    Simulate(SimulateArgs),
    /// Check the focal-loss gradient against finite differences.
    LossCheck(LossCheckArgs),
    /// Summarize previously written recall/QoS CSVs.
    Report(ReportArgs),
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Ground-truth JSONL.
    #[arg(long, value_name = "PATH")]
    pub gt: Option<PathBuf>,
    /// Directory of `<image_id>.rmap` files for the `rmap` scorer.
    #[arg(long, value_name = "DIR")]
    pub rmap_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct DecodeArgs {
    /// Local-maximum window (odd).
    #[arg(long)]
    pub window: Option<usize>,
    /// Peaks must score strictly above this.
    #[arg(long)]
    pub min_score: Option<f32>,
    /// Gaussian spread of the oracle scorer, in lattice cells.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Lattice cells per side for generated maps.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Lattice stride in proxy pixels for oracle maps.
    #[arg(long)]
    pub stride: Option<u32>,
    /// Side of the square evaluation cell (px).
    #[arg(long)]
    pub eval_cell: Option<f64>,
    /// Side of the square detector crop (px).
    #[arg(long)]
    pub crop: Option<f64>,
    /// Coverage half-extent in pixels.
    #[arg(long)]
    pub half: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub decode: DecodeArgs,
    /// Scorer: oracle, baseline, rmap or rmap:DIR.
    #[arg(long)]
    pub scorer: Option<String>,
    /// Patch budget.
    #[arg(long)]
    pub k: Option<usize>,
    /// Also write each frame's response map to `<out>/maps`.
    #[arg(long)]
    pub save_maps: bool,
}

#[derive(Debug, Args)]
pub struct EvalRecallArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub decode: DecodeArgs,
    /// Method to evaluate, `[label=]oracle|baseline|rmap[:DIR]`; repeatable.
    #[arg(long = "method")]
    pub methods: Vec<String>,
    /// Comma-separated budgets K.
    #[arg(long)]
    pub k_list: Option<String>,
    /// Comma-separated area ratios in (0, 1].
    #[arg(long)]
    pub ratios: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct SimArgs {
    /// Frames per stream.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Concurrent camera streams sharing the accelerator.
    #[arg(long)]
    pub streams: Option<usize>,
    /// copy or zerocopy.
    #[arg(long)]
    pub transport: Option<String>,
    /// Reduced copy latency on the zero-copy path (ms).
    #[arg(long)]
    pub zc_copy: Option<f64>,
    /// Reduced sync latency on the zero-copy path (ms).
    #[arg(long)]
    pub zc_sync: Option<f64>,
    /// Capture period shared by all streams (ms).
    #[arg(long)]
    pub interval: Option<f64>,
    /// Lognormal spread applied to every stage without its own value.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Stage override `NAME=BASE[:SIGMA]`; repeatable.
    #[arg(long = "stage")]
    pub stages: Vec<String>,
    /// Detector cost per selected patch (ms).
    #[arg(long)]
    pub det_per_patch: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalQosArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Method to evaluate, `[label=]oracle|baseline|rmap[:DIR]`; repeatable.
    #[arg(long = "method")]
    pub methods: Vec<String>,
    /// Measured trace CSV; one for all methods or one per method.
    #[arg(long = "trace")]
    pub traces: Vec<PathBuf>,
    /// Patch budget.
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma-separated deadlines in ms; `inf` disables the deadline.
    #[arg(long)]
    pub tau: Option<String>,
    /// Penalty weight on the budget ratio (> 0).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Rectangles the budget ratio is measured on: eval or crops.
    #[arg(long)]
    pub budget_area: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Selected patches per frame, for the per-patch detector cost.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Output file name inside the output directory.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct LossCheckArgs {
    /// Number of random instances.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Lattice cells per side.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Central finite-difference step.
    #[arg(long)]
    pub fd_step: Option<f64>,
    /// Largest accepted relative error.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Only instances without positive cells.
    #[arg(long)]
    pub only_no_positives: bool,
    /// Negate the analytic gradient (negative control).
    #[arg(long, hide = true)]
    pub flip_sign: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Recall CSVs to include (default `<out>/recall.csv`).
    #[arg(long = "recall")]
    pub recall: Vec<PathBuf>,
    /// QoS CSVs to include (default `<out>/qos.csv`).
    #[arg(long = "qos")]
    pub qos: Vec<PathBuf>,
}
