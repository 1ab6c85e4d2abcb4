use std::path::{Path, PathBuf};
use std::str::FromStr;

use tinypatch::coverage::BudgetArea;
use tinypatch::pipeline_sim::{Stage, StageModel, StageNoise};
use tinypatch::supervision::GradCheckConfig;
use tinypatch::{CoverageConfig, DecodeParams, QosConfig, SimConfig, TransportMode};

use crate::args::{Cli, Command, DataArgs, DecodeArgs, SimArgs};
use crate::config::{parse_list, ConfigFile};
use crate::error::CliError;

/// Keys a config file may set. Anything else is rejected so that typos do
/// not silently fall back to defaults.
const KNOWN_KEYS: &[&str] = &[
    "run.out",
    "run.seed",
    "run.threads",
    "data.gt",
    "data.rmap_dir",
    "select.scorer",
    "select.k",
    "select.save_maps",
    "decode.window",
    "decode.min_score",
    "decode.sigma",
    "decode.grid",
    "decode.stride",
    "decode.eval_cell",
    "decode.crop",
    "decode.half",
    "decode.patch_unit_area",
    "recall.methods",
    "recall.k_list",
    "recall.ratios",
    "qos.methods",
    "qos.traces",
    "qos.k",
    "qos.tau",
    "qos.lambda",
    "qos.budget_area",
    "sim.frames",
    "sim.streams",
    "sim.transport",
    "sim.zc_copy",
    "sim.zc_sync",
    "sim.interval",
    "sim.noise",
    "sim.det_per_patch",
    "sim.budget",
    "sim.name",
    "loss.seeds",
    "loss.grid",
    "loss.fd_step",
    "loss.tol",
    "loss.only_no_positives",
];

pub const DEFAULT_K: usize = 9;
pub const DEFAULT_GRID: usize = 80;
pub const DEFAULT_K_LIST: &[usize] = &[1, 2, 4, 9, 16, 25];
pub const DEFAULT_RATIOS: &[f64] = &[0.005, 0.01, 0.02, 0.04, 0.06, 0.08, 0.1];

/// Where a method's response maps come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Scorer {
    /// Gaussian heatmap of the ground truth.
    Oracle,
    /// Center-surround contrast on the frame's proxy PGM.
    Baseline,
    /// Precomputed RMAP files; `None` falls back to the per-frame path or
    /// the global rmap directory.
    Rmap(Option<PathBuf>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub label: String,
    pub scorer: Scorer,
}

impl MethodSpec {
    /// Parses `[label=]oracle|baseline|rmap[:DIR]`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let text = text.trim();
        let (label, spec) = match text.split_once('=') {
            Some((l, s)) => (Some(l.trim()), s.trim()),
            None => (None, text),
        };
        let scorer = match spec.split_once(':') {
            None if spec == "oracle" => Scorer::Oracle,
            None if spec == "baseline" => Scorer::Baseline,
            None if spec == "rmap" => Scorer::Rmap(None),
            Some(("rmap", dir)) if !dir.is_empty() => Scorer::Rmap(Some(base.join(dir))),
            _ => {
                return Err(CliError::Usage(format!(
                    "unknown method {text:?} (expected oracle, baseline, rmap or rmap:DIR)"
                )))
            }
        };
        let label = label.unwrap_or(spec).to_string();
        if label.is_empty() || label.contains([',', '\n', '"']) {
            return Err(CliError::Usage(format!(
                "method label {label:?} must be non-empty without commas or quotes"
            )));
        }
        Ok(Self { label, scorer })
    }
}

/// Everything a command needs, resolved as flag > config file > default.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: CommandKind,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
    pub gt: Option<PathBuf>,
    pub rmap_dir: Option<PathBuf>,
    pub methods: Vec<MethodSpec>,
    pub k: usize,
    pub k_list: Vec<usize>,
    pub ratios: Vec<f64>,
    pub decode: DecodeParams,
    pub sigma: f64,
    pub grid: usize,
    pub stride: u32,
    pub coverage: CoverageConfig,
    pub save_maps: bool,
    pub traces: Vec<PathBuf>,
    pub taus: Vec<f64>,
    pub qos: QosConfig,
    pub budget_area: BudgetArea,
    pub sim: SimConfig,
    pub trace_name: String,
    pub grad: GradCheckConfig,
    pub report_recall: Vec<PathBuf>,
    pub report_qos: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Select,
    EvalRecall,
    EvalQos,
    Simulate,
    LossCheck,
    Report,
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

struct Sources<'a> {
    file: &'a ConfigFile,
    base: PathBuf,
}

impl Sources<'_> {
    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.file.get(key)
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.file.raw(key).map(|p| self.base.join(p))
    }

    fn paths(&self, key: &str) -> Result<Vec<PathBuf>, CliError> {
        Ok(self
            .file
            .get_list::<String>(key)?
            .unwrap_or_default()
            .into_iter()
            .map(|p| self.base.join(p))
            .collect())
    }
}

fn parse_tau(key: &str, text: &str) -> Result<Vec<f64>, CliError> {
    let taus: Vec<f64> = parse_list(key, text)?;
    if taus.is_empty() || taus.iter().any(|t| t.is_nan() || *t <= 0.0) {
        return Err(CliError::Usage(format!(
            "{key}: deadlines must be > 0 (or inf)"
        )));
    }
    Ok(taus)
}

fn parse_transport(
    text: &str,
    copy: Option<f64>,
    sync: Option<f64>,
) -> Result<TransportMode, CliError> {
    match text {
        "copy" => Ok(TransportMode::Copy),
        "zerocopy" | "zero-copy" | "zero_copy" => Ok(TransportMode::ZeroCopy {
            copy_ms: copy.unwrap_or(0.0),
            sync_ms: sync.unwrap_or(0.0),
        }),
        other => Err(CliError::Usage(format!(
            "unknown transport {other:?} (copy or zerocopy)"
        ))),
    }
}

/// Applies `NAME=BASE[:SIGMA]`; without a sigma the stage keeps its current
/// spread.
fn apply_stage(text: &str, stages: &mut StageModel) -> Result<(), CliError> {
    let bad = || {
        CliError::Usage(format!(
            "stage override {text:?} must look like NAME=BASE[:SIGMA]"
        ))
    };
    let (name, value) = text.split_once('=').ok_or_else(bad)?;
    let stage: Stage = name.trim().parse().map_err(CliError::Usage)?;
    let (base, sigma) = match value.split_once(':') {
        Some((b, s)) => (b, Some(s)),
        None => (value, None),
    };
    let base_ms: f64 = base.trim().parse().map_err(|_| bad())?;
    let sigma_ln = match sigma {
        Some(s) => s.trim().parse().map_err(|_| bad())?,
        None => stages.get(stage).sigma_ln,
    };
    stages.set(stage, StageNoise { base_ms, sigma_ln });
    Ok(())
}

fn require_exists(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

impl RunConfig {
    pub fn resolve(cli: &Cli) -> Result<Self, CliError> {
        let file = match &cli.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        if let Some(key) = file
            .keys()
            .find(|k| !KNOWN_KEYS.contains(k) && !k.starts_with("stage."))
        {
            return Err(CliError::Usage(format!("unknown config key {key:?}")));
        }
        let base = cli
            .config
            .as_deref()
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let src = Sources { file: &file, base };

        let none_data = DataArgs::default();
        let none_decode = DecodeArgs::default();
        let none_sim = SimArgs::default();
        let (kind, data, decode, sim) = match &cli.command {
            Command::Select(a) => (CommandKind::Select, &a.data, &a.decode, &none_sim),
            Command::EvalRecall(a) => (CommandKind::EvalRecall, &a.data, &a.decode, &none_sim),
            Command::EvalQos(a) => (CommandKind::EvalQos, &a.data, &a.decode, &a.sim),
            Command::Simulate(a) => (CommandKind::Simulate, &none_data, &none_decode, &a.sim),
            Command::LossCheck(_) => (CommandKind::LossCheck, &none_data, &none_decode, &none_sim),
            Command::Report(_) => (CommandKind::Report, &none_data, &none_decode, &none_sim),
        };

        let out_dir = cli
            .out
            .clone()
            .or_else(|| src.path("run.out"))
            .unwrap_or_else(|| PathBuf::from("out"));
        let seed = pick(cli.seed, src.get("run.seed")?, 0);
        let threads = cli.threads.or(src.get("run.threads")?);
        if threads == Some(0) {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }

        let gt = data.gt.clone().or_else(|| src.path("data.gt"));
        let rmap_dir = data.rmap_dir.clone().or_else(|| src.path("data.rmap_dir"));

        let defaults = DecodeParams::default();
        let decode_params = DecodeParams {
            window: pick(decode.window, src.get("decode.window")?, defaults.window),
            min_score: pick(
                decode.min_score,
                src.get("decode.min_score")?,
                defaults.min_score,
            ),
            eval_cell: pick(
                decode.eval_cell,
                src.get("decode.eval_cell")?,
                defaults.eval_cell,
            ),
            crop: pick(decode.crop, src.get("decode.crop")?, defaults.crop),
        };
        if decode_params.window.is_multiple_of(2) {
            return Err(CliError::Usage(format!(
                "window must be odd, got {}",
                decode_params.window
            )));
        }
        if !(decode_params.eval_cell > 0.0 && decode_params.crop > 0.0) {
            return Err(CliError::Usage(
                "eval cell and crop sizes must be positive".into(),
            ));
        }
        let sigma = pick(
            decode.sigma,
            src.get("decode.sigma")?,
            tinypatch::supervision::DEFAULT_SIGMA,
        );
        let grid = pick(decode.grid, src.get("decode.grid")?, DEFAULT_GRID);
        let stride = pick(
            decode.stride,
            src.get("decode.stride")?,
            tinypatch::response_map::DEFAULT_STRIDE,
        );
        if !(sigma > 0.0) || grid == 0 || stride == 0 {
            return Err(CliError::Usage(
                "sigma, grid and stride must be positive".into(),
            ));
        }
        let cov_defaults = CoverageConfig::default();
        let coverage = CoverageConfig {
            eval_half_extent: pick(
                decode.half,
                src.get("decode.half")?,
                cov_defaults.eval_half_extent,
            ),
            patch_unit_area: pick(
                None,
                src.get("decode.patch_unit_area")?,
                cov_defaults.patch_unit_area,
            ),
        };
        if !(coverage.eval_half_extent >= 0.0 && coverage.patch_unit_area > 0.0) {
            return Err(CliError::Usage(
                "half extent must be >= 0 and patch unit area > 0".into(),
            ));
        }

        let mut cfg = RunConfig {
            command: kind,
            out_dir,
            seed,
            threads,
            gt,
            rmap_dir,
            methods: Vec::new(),
            k: DEFAULT_K,
            k_list: DEFAULT_K_LIST.to_vec(),
            ratios: DEFAULT_RATIOS.to_vec(),
            decode: decode_params,
            sigma,
            grid,
            stride,
            coverage,
            save_maps: false,
            traces: Vec::new(),
            taus: vec![QosConfig::default().tau_ms],
            qos: QosConfig::default(),
            budget_area: BudgetArea::EvalCells,
            sim: SimConfig {
                seed,
                ..SimConfig::default()
            },
            trace_name: "trace.csv".into(),
            grad: GradCheckConfig::default(),
            report_recall: Vec::new(),
            report_qos: Vec::new(),
        };

        let methods = |flags: &[String], key: &str| -> Result<Vec<MethodSpec>, CliError> {
            if !flags.is_empty() {
                flags
                    .iter()
                    .map(|m| MethodSpec::parse(m, Path::new("")))
                    .collect()
            } else if let Some(list) = src.file.get_list::<String>(key)? {
                list.iter()
                    .map(|m| MethodSpec::parse(m, &src.base))
                    .collect()
            } else {
                Ok(vec![MethodSpec::parse("oracle", Path::new(""))?])
            }
        };

        match &cli.command {
            Command::Select(a) => {
                let scorer = a.scorer.clone().or(src.get("select.scorer")?);
                cfg.methods = match scorer {
                    Some(s) => vec![MethodSpec::parse(&s, Path::new(""))?],
                    None => methods(&[], "select.scorer")?,
                };
                cfg.k = pick(a.k, src.get("select.k")?, DEFAULT_K);
                cfg.save_maps = a.save_maps || src.get("select.save_maps")?.unwrap_or(false);
            }
            Command::EvalRecall(a) => {
                cfg.methods = methods(&a.methods, "recall.methods")?;
                if let Some(list) = match &a.k_list {
                    Some(t) => Some(parse_list("--k-list", t)?),
                    None => src.file.get_list("recall.k_list")?,
                } {
                    cfg.k_list = list;
                }
                if let Some(list) = match &a.ratios {
                    Some(t) => Some(parse_list::<f64>("--ratios", t)?),
                    None => src.file.get_list("recall.ratios")?,
                } {
                    cfg.ratios = list;
                }
                if cfg.k_list.is_empty() && cfg.ratios.is_empty() {
                    return Err(CliError::Usage(
                        "nothing to evaluate: empty K and ratio lists".into(),
                    ));
                }
                if let Some(r) = cfg.ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
                    return Err(CliError::Usage(format!("ratio {r} must lie in (0, 1]")));
                }
            }
            Command::EvalQos(a) => {
                cfg.methods = methods(&a.methods, "qos.methods")?;
                cfg.traces = if a.traces.is_empty() {
                    src.paths("qos.traces")?
                } else {
                    a.traces.clone()
                };
                cfg.k = pick(a.k, src.get("qos.k")?, DEFAULT_K);
                if let Some(t) = &a.tau {
                    cfg.taus = parse_tau("--tau", t)?;
                } else if let Some(t) = src.file.raw("qos.tau") {
                    cfg.taus = parse_tau("qos.tau", t)?;
                }
                cfg.qos.lambda = pick(a.lambda, src.get("qos.lambda")?, cfg.qos.lambda);
                let area: Option<String> = a.budget_area.clone().or(src.get("qos.budget_area")?);
                cfg.budget_area = match area.as_deref() {
                    None | Some("eval") => BudgetArea::EvalCells,
                    Some("crops") => BudgetArea::Crops,
                    Some(other) => {
                        return Err(CliError::Usage(format!(
                            "unknown budget area {other:?} (eval or crops)"
                        )))
                    }
                };
                for tau in &cfg.taus {
                    QosConfig {
                        lambda: cfg.qos.lambda,
                        tau_ms: *tau,
                    }
                    .validate()
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                }
                if cfg.traces.len() > 1 && cfg.traces.len() != cfg.methods.len() {
                    return Err(CliError::Usage(format!(
                        "{} traces given for {} methods; pass one trace or one per method",
                        cfg.traces.len(),
                        cfg.methods.len()
                    )));
                }
                for t in &cfg.traces {
                    require_exists(t, "trace")?;
                }
                cfg.sim = resolve_sim(sim, &src, seed, cfg.k)?;
            }
            Command::Simulate(a) => {
                let budget = pick(a.budget, src.get("sim.budget")?, 0);
                cfg.sim = resolve_sim(sim, &src, seed, budget)?;
                cfg.trace_name = pick(a.name.clone(), src.get("sim.name")?, cfg.trace_name);
                if cfg.trace_name.contains(['/', '\\']) || cfg.trace_name.is_empty() {
                    return Err(CliError::Usage("--name must be a plain file name".into()));
                }
            }
            Command::LossCheck(a) => {
                let d = GradCheckConfig::default();
                cfg.grad = GradCheckConfig {
                    first_seed: seed,
                    seeds: pick(a.seeds, src.get("loss.seeds")?, d.seeds),
                    grid: pick(a.grid, src.get("loss.grid")?, d.grid),
                    fd_step: pick(a.fd_step, src.get("loss.fd_step")?, d.fd_step),
                    tolerance: pick(a.tol, src.get("loss.tol")?, d.tolerance),
                    only_no_positives: a.only_no_positives
                        || src.get("loss.only_no_positives")?.unwrap_or(false),
                    flip_sign: a.flip_sign,
                    ..d
                };
                if cfg.grad.seeds == 0 || cfg.grad.grid == 0 || !(cfg.grad.fd_step > 0.0) {
                    return Err(CliError::Usage(
                        "seeds, grid and fd step must be positive".into(),
                    ));
                }
            }
            Command::Report(a) => {
                cfg.report_recall = a.recall.clone();
                cfg.report_qos = a.qos.clone();
                for p in cfg.report_recall.iter().chain(&cfg.report_qos) {
                    require_exists(p, "input")?;
                }
            }
        }

        if matches!(
            kind,
            CommandKind::Select | CommandKind::EvalRecall | CommandKind::EvalQos
        ) {
            let gt = cfg
                .gt
                .as_ref()
                .ok_or_else(|| CliError::Usage("missing ground truth: pass --gt PATH".into()))?;
            require_exists(gt, "ground truth")?;
            if let Some(dir) = &cfg.rmap_dir {
                require_exists(dir, "rmap directory")?;
            }
            for m in &cfg.methods {
                if let Scorer::Rmap(Some(dir)) = &m.scorer {
                    require_exists(dir, "rmap directory")?;
                }
            }
        }
        Ok(cfg)
    }
}

fn resolve_sim(
    sim: &SimArgs,
    src: &Sources<'_>,
    seed: u64,
    budget: usize,
) -> Result<SimConfig, CliError> {
    let d = SimConfig::default();
    let mut stages = d.stages;
    if let Some(noise) = sim.noise.or(src.get("sim.noise")?) {
        for st in Stage::ALL {
            let n = stages.get(st);
            stages.set(
                st,
                StageNoise {
                    sigma_ln: noise,
                    ..n
                },
            );
        }
    }
    let file_stages: Vec<String> = src
        .file
        .section("stage")
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    for text in file_stages.iter().chain(&sim.stages) {
        apply_stage(text, &mut stages)?;
    }
    let transport_name: String = pick(
        sim.transport.clone(),
        src.get("sim.transport")?,
        "copy".into(),
    );
    let transport = parse_transport(
        &transport_name,
        sim.zc_copy.or(src.get("sim.zc_copy")?),
        sim.zc_sync.or(src.get("sim.zc_sync")?),
    )?;
    let cfg = SimConfig {
        seed,
        n_frames: pick(sim.frames, src.get("sim.frames")?, d.n_frames),
        n_streams: pick(sim.streams, src.get("sim.streams")?, d.n_streams),
        stages,
        transport,
        frame_interval_ms: pick(sim.interval, src.get("sim.interval")?, d.frame_interval_ms),
        det_per_patch_ms: pick(
            sim.det_per_patch,
            src.get("sim.det_per_patch")?,
            d.det_per_patch_ms,
        ),
        budget,
    };
    cfg.validate()?;
    Ok(cfg)
}
