use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use tinypatch::coverage::{budget_ratio, recall_at_k, recall_at_ratio, RECALL_CSV_HEADER};
use tinypatch::ingest::{
    baseline_scorer, load_ground_truth, load_pgm, load_rmap, oracle_scorer, save_rmap,
    BaselineConfig,
};
use tinypatch::pipeline_sim::{simulate_stream, trace_from_csv, trace_to_csv_string};
use tinypatch::qos::{pareto_frontier, qos_report, QosFrame};
use tinypatch::supervision::{gradient_check, LossConfig};
use tinypatch::{
    select_patches, Dataset, Frame, LatencyTrace, PatchSelection, QosConfig, QosReport,
    RecallTable, ResponseMap, SimConfig,
};

use crate::error::{io_err, CliError};
use crate::run_config::{MethodSpec, RunConfig, Scorer};
use crate::svg;

pub const QOS_CSV_HEADER: &str =
    "method,k,tau_ms,lambda,budget_ratio,recall,qos_budget,qos_sys,qos_deploy,dsr,\
fps,p50_ms,p99_ms,jitter_ms,eta_k,eta_k_qos";
pub const PARETO_CSV_HEADER: &str = "tau_ms,method,p50_ms,qos_sys,on_frontier";

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// Frames sorted by id, so every output is ordered the same way.
fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let path = cfg
        .gt
        .as_ref()
        .expect("resolved config has a ground-truth path");
    let mut ds = load_ground_truth(path)?;
    ds.frames.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(ds)
}

/// Maps an image id to a safe file stem.
fn file_stem(image_id: &str) -> String {
    image_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn rmap_path(
    frame: &Frame,
    dir: Option<&Path>,
    global: Option<&Path>,
) -> Result<PathBuf, CliError> {
    let name = format!("{}.rmap", file_stem(&frame.image_id));
    match (dir, &frame.rmap, global) {
        (Some(d), _, _) => Ok(d.join(name)),
        (None, Some(p), _) => Ok(p.clone()),
        (None, None, Some(d)) => Ok(d.join(name)),
        (None, None, None) => Err(CliError::Usage(format!(
            "frame {} has no rmap path; pass --rmap-dir or use rmap:DIR",
            frame.image_id
        ))),
    }
}

fn response_map(
    frame: &Frame,
    method: &MethodSpec,
    cfg: &RunConfig,
) -> Result<ResponseMap, CliError> {
    match &method.scorer {
        Scorer::Oracle => Ok(oracle_scorer(
            frame, cfg.grid, cfg.grid, cfg.sigma, cfg.stride,
        )?),
        Scorer::Baseline => {
            let path = frame.proxy.as_ref().ok_or_else(|| {
                CliError::Usage(format!(
                    "frame {} has no proxy image for the baseline scorer",
                    frame.image_id
                ))
            })?;
            if !path.exists() {
                return Err(CliError::Input(format!(
                    "missing proxy image {} for frame {}",
                    path.display(),
                    frame.image_id
                )));
            }
            let img = load_pgm(path)?;
            Ok(baseline_scorer(
                &img,
                cfg.grid,
                cfg.grid,
                &BaselineConfig::default(),
            )?)
        }
        Scorer::Rmap(dir) => {
            let path = rmap_path(frame, dir.as_deref(), cfg.rmap_dir.as_deref())?;
            if !path.exists() {
                return Err(CliError::Input(format!(
                    "missing response map {} for frame {}",
                    path.display(),
                    frame.image_id
                )));
            }
            Ok(load_rmap(&path)?)
        }
    }
}

fn response_maps(
    ds: &Dataset,
    method: &MethodSpec,
    cfg: &RunConfig,
) -> Result<HashMap<String, ResponseMap>, CliError> {
    ds.frames
        .par_iter()
        .map(|f| Ok((f.image_id.clone(), response_map(f, method, cfg)?)))
        .collect()
}

fn selections(
    ds: &Dataset,
    maps: &HashMap<String, ResponseMap>,
    k: usize,
    cfg: &RunConfig,
) -> Result<Vec<PatchSelection>, CliError> {
    ds.frames
        .par_iter()
        .map(|f| {
            let map = &maps[&f.image_id];
            select_patches(map, k, &cfg.decode, f.width, f.height)
                .map_err(|e| CliError::Data(format!("frame {}: {e}", f.image_id)))
        })
        .collect()
}

#[derive(Serialize)]
struct SelectionFile<'a> {
    image_id: &'a str,
    method: &'a str,
    #[serde(flatten)]
    selection: &'a PatchSelection,
}

pub fn select(cfg: &RunConfig) -> Result<(), CliError> {
    let ds = load_dataset(cfg)?;
    let method = &cfg.methods[0];
    let maps = response_maps(&ds, method, cfg)?;
    let sels = selections(&ds, &maps, cfg.k, cfg)?;
    let dir = cfg.out_dir.join("selections");
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    for (frame, sel) in ds.frames.iter().zip(&sels) {
        let doc = SelectionFile {
            image_id: &frame.image_id,
            method: &method.label,
            selection: sel,
        };
        let mut text =
            serde_json::to_string_pretty(&doc).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        write_file(
            &dir.join(format!("{}.json", file_stem(&frame.image_id))),
            &text,
        )?;
        if cfg.save_maps {
            let path = cfg
                .out_dir
                .join("maps")
                .join(format!("{}.rmap", file_stem(&frame.image_id)));
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
            }
            save_rmap(&maps[&frame.image_id], &path)?;
        }
    }
    let total: usize = sels.iter().map(PatchSelection::len).sum();
    println!(
        "select: {} frames, {} patches ({} per frame max) -> {}",
        ds.len(),
        total,
        cfg.k,
        dir.display()
    );
    Ok(())
}

pub fn eval_recall(cfg: &RunConfig) -> Result<(), CliError> {
    let ds = load_dataset(cfg)?;
    let mut table = RecallTable::default();
    for method in &cfg.methods {
        let maps = response_maps(&ds, method, cfg)?;
        table.extend(recall_at_k(
            &method.label,
            &ds,
            &maps,
            &cfg.k_list,
            &cfg.decode,
            &cfg.coverage,
        )?);
        table.extend(recall_at_ratio(
            &method.label,
            &ds,
            &maps,
            &cfg.ratios,
            &cfg.decode,
            &cfg.coverage,
        )?);
    }
    write_file(&cfg.out_dir.join("recall.csv"), &table.to_csv())?;

    let series = |kind: &str, scale: f64| -> Vec<(String, Vec<(f64, f64)>)> {
        cfg.methods
            .iter()
            .map(|m| {
                let pts = table
                    .series(&m.label, kind)
                    .map(|r| (r.budget.value() * scale, r.recall))
                    .collect();
                (m.label.clone(), pts)
            })
            .collect()
    };
    write_file(
        &cfg.out_dir.join("recall_k.svg"),
        &svg::line_chart("Recall@K", "patch budget K", "recall", &series("k", 1.0)),
    )?;
    write_file(
        &cfg.out_dir.join("recall_ratio.svg"),
        &svg::line_chart(
            "Recall@Ratio",
            "budget ratio (%)",
            "recall",
            &series("ratio", 100.0),
        ),
    )?;
    for r in &table.rows {
        println!(
            "{}\t{}={}\trecall={:.4}",
            r.method,
            r.budget.kind(),
            r.budget,
            r.recall
        );
    }
    Ok(())
}

fn simulated_trace(cfg: &RunConfig, frames: usize) -> Result<LatencyTrace, CliError> {
    let sim = SimConfig {
        n_frames: frames.div_ceil(cfg.sim.n_streams).max(1),
        ..cfg.sim.clone()
    };
    let mut trace = simulate_stream(&sim)?;
    trace.records.truncate(frames);
    Ok(trace)
}

#[derive(Debug, Clone, Serialize)]
struct QosRow {
    method: String,
    k: usize,
    #[serde(serialize_with = "serialize_tau")]
    tau_ms: f64,
    lambda: f64,
    budget_ratio: f64,
    #[serde(flatten)]
    report: QosReport,
}

/// JSON has no infinity; the disabled deadline is written as `"inf"`.
fn serialize_tau<S: serde::Serializer>(tau: &f64, s: S) -> Result<S::Ok, S::Error> {
    if tau.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*tau)
    }
}

impl QosRow {
    fn csv_line(&self) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.method,
            self.k,
            self.tau_ms,
            self.lambda,
            self.budget_ratio,
            r.recall,
            r.qos_budget,
            r.qos_sys,
            r.qos_deploy,
            r.dsr,
            r.fps,
            r.p50_ms,
            r.p99_ms,
            r.jitter_ms,
            r.eta_k,
            r.eta_k_qos
        )
    }
}

pub fn eval_qos(cfg: &RunConfig) -> Result<(), CliError> {
    let ds = load_dataset(cfg)?;
    if ds.total_targets() == 0 {
        return Err(CliError::Data(
            "recall is undefined: there are no ground-truth targets".into(),
        ));
    }
    let mut loaded = Vec::with_capacity(cfg.traces.len());
    for path in &cfg.traces {
        let trace = trace_from_csv(path)?;
        if trace.len() != ds.len() {
            return Err(CliError::Data(format!(
                "trace {} has {} frames but the dataset has {}",
                path.display(),
                trace.len(),
                ds.len()
            )));
        }
        loaded.push(trace);
    }
    let simulated = if loaded.is_empty() {
        Some(simulated_trace(cfg, ds.len())?)
    } else {
        None
    };

    let mut rows = Vec::new();
    for (mi, method) in cfg.methods.iter().enumerate() {
        let trace = match (&simulated, loaded.len()) {
            (Some(t), _) => t,
            (None, 1) => &loaded[0],
            (None, _) => &loaded[mi],
        };
        let maps = response_maps(&ds, method, cfg)?;
        let sels = selections(&ds, &maps, cfg.k, cfg)?;
        let ratio = sels
            .iter()
            .map(|s| budget_ratio(s, cfg.budget_area))
            .sum::<f64>()
            / sels.len() as f64;
        let frames: Vec<QosFrame<'_>> = ds
            .frames
            .iter()
            .zip(&sels)
            .zip(&trace.records)
            .map(|((f, s), r)| QosFrame {
                targets: &f.targets,
                selection: s,
                e2e_ms: r.e2e_ms,
            })
            .collect();
        for &tau in &cfg.taus {
            let qcfg = QosConfig {
                lambda: cfg.qos.lambda,
                tau_ms: tau,
            };
            let report = qos_report(&frames, cfg.k, ratio, &qcfg, cfg.coverage.eval_half_extent)?;
            rows.push(QosRow {
                method: method.label.clone(),
                k: cfg.k,
                tau_ms: tau,
                lambda: cfg.qos.lambda,
                budget_ratio: ratio,
                report,
            });
        }
    }

    let mut csv = String::from(QOS_CSV_HEADER);
    csv.push('\n');
    rows.iter().for_each(|r| csv.push_str(&r.csv_line()));
    write_file(&cfg.out_dir.join("qos.csv"), &csv)?;
    let mut json =
        serde_json::to_string_pretty(&rows).map_err(|e| CliError::Data(e.to_string()))?;
    json.push('\n');
    write_file(&cfg.out_dir.join("qos.json"), &json)?;

    let mut pareto = String::from(PARETO_CSV_HEADER);
    pareto.push('\n');
    for (ti, &tau) in cfg.taus.iter().enumerate() {
        let at_tau: Vec<&QosRow> = rows
            .iter()
            .filter(|r| r.tau_ms.total_cmp(&tau).is_eq())
            .collect();
        let points: Vec<(f64, f64)> = at_tau
            .iter()
            .map(|r| (r.report.p50_ms, r.report.qos_sys))
            .collect();
        let frontier = pareto_frontier(&points);
        for (r, p) in at_tau.iter().zip(&points) {
            let on = frontier.contains(p);
            let _ = writeln!(pareto, "{tau},{},{},{},{on}", r.method, p.0, p.1);
        }
        if ti == 0 {
            let labelled: Vec<(String, f64, f64)> = at_tau
                .iter()
                .zip(&points)
                .map(|(r, p)| (r.method.clone(), p.0, p.1))
                .collect();
            let title = format!("Latency vs QoS (tau = {tau} ms)");
            write_file(
                &cfg.out_dir.join("pareto.svg"),
                &svg::pareto_chart(&title, &labelled, &frontier),
            )?;
        }
    }
    write_file(&cfg.out_dir.join("pareto.csv"), &pareto)?;

    for r in &rows {
        println!(
            "{}\ttau={}\trecall={:.4}\tqos_sys={:.4}\tp50={:.3}ms\tp99={:.3}ms\tjitter={:.3}ms",
            r.method,
            r.tau_ms,
            r.report.recall,
            r.report.qos_sys,
            r.report.p50_ms,
            r.report.p99_ms,
            r.report.jitter_ms
        );
    }
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let trace = simulate_stream(&cfg.sim)?;
    let path = cfg.out_dir.join(&cfg.trace_name);
    write_file(&path, &trace_to_csv_string(&trace))?;
    let stats = tinypatch::qos::fps_and_jitter(&trace.e2e())?;
    println!(
        "simulate: {} frames -> {} (p50 {:.3} ms, p99 {:.3} ms, fps {:.1})",
        trace.len(),
        path.display(),
        stats.p50_ms,
        stats.p99_ms,
        stats.fps
    );
    Ok(())
}

pub fn loss_check(cfg: &RunConfig) -> Result<(), CliError> {
    let report = gradient_check(&cfg.grad, &LossConfig::default())?;
    println!(
        "loss-check: {} instances ({} with positives, {} without), max relative error {:e} (tolerance {:e})",
        report.instances, report.with_positives, report.without_positives, report.max_rel_err, report.tolerance
    );
    if report.passed() {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL (worst seed {})", report.worst_seed);
        Err(CliError::CheckFailed(format!(
            "max relative error {:e} >= {:e} at seed {}",
            report.max_rel_err, report.tolerance, report.worst_seed
        )))
    }
}

/// Header and rows of a CSV written by this tool (no quoting).
fn read_csv(path: &Path, header: &str) -> Result<Vec<Vec<String>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some(header) {
        return Err(CliError::Input(format!(
            "{}: expected header {header:?}",
            path.display()
        )));
    }
    let width = header.split(',').count();
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let cells: Vec<String> = l.split(',').map(str::to_string).collect();
            if cells.len() == width {
                Ok(cells)
            } else {
                Err(CliError::Input(format!(
                    "{} line {}: expected {width} fields, found {}",
                    path.display(),
                    i + 2,
                    cells.len()
                )))
            }
        })
        .collect()
}

fn fixed(cell: &str, digits: usize) -> String {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => format!("{v:.digits$}"),
        _ => cell.to_string(),
    }
}

pub fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let default_if_present = |given: &[PathBuf], name: &str| -> Vec<PathBuf> {
        if given.is_empty() {
            let p = cfg.out_dir.join(name);
            if p.exists() {
                vec![p]
            } else {
                Vec::new()
            }
        } else {
            given.to_vec()
        }
    };
    let recall_files = default_if_present(&cfg.report_recall, "recall.csv");
    let qos_files = default_if_present(&cfg.report_qos, "qos.csv");
    if recall_files.is_empty() && qos_files.is_empty() {
        return Err(CliError::Usage(format!(
            "nothing to report: no recall.csv or qos.csv in {} (pass --recall/--qos)",
            cfg.out_dir.display()
        )));
    }

    let mut md = String::from("# Summary\n");
    if !recall_files.is_empty() {
        md.push_str(
            "\n## Recall\n\n| source | method | budget | value | recall | frames | targets |\n",
        );
        md.push_str("|---|---|---|---:|---:|---:|---:|\n");
        for path in &recall_files {
            let source = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            for row in read_csv(path, RECALL_CSV_HEADER)? {
                let _ = writeln!(
                    md,
                    "| {source} | {} | {} | {} | {} | {} | {} |",
                    row[0],
                    row[1],
                    row[2],
                    fixed(&row[3], 4),
                    row[4],
                    row[5]
                );
            }
        }
    }
    if !qos_files.is_empty() {
        md.push_str("\n## QoS\n\n");
        md.push_str("| source | method | K | tau (ms) | recall | QoS_sys | QoS_deploy | DSR | p50 (ms) | p99 (ms) | jitter (ms) | FPS |\n");
        md.push_str("|---|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n");
        for path in &qos_files {
            let source = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            for row in read_csv(path, QOS_CSV_HEADER)? {
                let _ = writeln!(
                    md,
                    "| {source} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                    row[0],
                    row[1],
                    row[2],
                    fixed(&row[5], 4),
                    fixed(&row[7], 4),
                    fixed(&row[8], 4),
                    fixed(&row[9], 4),
                    fixed(&row[11], 3),
                    fixed(&row[12], 3),
                    fixed(&row[13], 3),
                    fixed(&row[10], 1)
                );
            }
        }
    }
    let path = cfg.out_dir.join("summary.md");
    write_file(&path, &md)?;
    print!("{md}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_stems_are_path_safe() {
        assert_eq!(file_stem("seq01/img 3.jpg"), "seq01_img_3.jpg");
        assert_eq!(file_stem("a-b_c.d"), "a-b_c.d");
    }

    #[test]
    fn tau_serializes_inf_as_string() {
        let row = QosRow {
            method: "m".into(),
            k: 1,
            tau_ms: f64::INFINITY,
            lambda: 1.0,
            budget_ratio: 0.01,
            report: QosReport {
                recall: 1.0,
                qos_budget: 0.99,
                qos_sys: 1.0,
                qos_deploy: 0.99,
                dsr: 1.0,
                fps: 100.0,
                p50_ms: 10.0,
                p99_ms: 10.0,
                jitter_ms: 0.0,
                eta_k: 1.0,
                eta_k_qos: 1.0,
            },
        };
        let json = serde_json::to_string(&row).unwrap();
        assert!(json.contains(r#""tau_ms":"inf""#), "{json}");
        assert!(row.csv_line().starts_with("m,1,inf,1,0.01,1,"));
    }
}
