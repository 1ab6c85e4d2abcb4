#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn tinypatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tinypatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// One synthetic frame: normalized target centers.
#[derive(Debug, Clone)]
pub struct SynthFrame {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub targets: Vec<(f64, f64)>,
}

/// Frames on an 80×80 lattice over 640×640 pixels with 1–9 targets each,
/// at least `border` cells from the edge and pairwise more than `min_dist`
/// cells apart.
pub fn separated_frames(seed: u64, n: usize, border: f64, min_dist: f64) -> Vec<SynthFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = 80.0;
    (0..n)
        .map(|i| {
            let m = rng.random_range(1..=9);
            let mut cells: Vec<(f64, f64)> = Vec::new();
            while cells.len() < m {
                let c = (
                    rng.random_range(border..grid - border),
                    rng.random_range(border..grid - border),
                );
                if cells
                    .iter()
                    .all(|o| ((o.0 - c.0).powi(2) + (o.1 - c.1).powi(2)).sqrt() > min_dist)
                {
                    cells.push(c);
                }
            }
            SynthFrame {
                id: format!("frame{i:04}"),
                width: 640,
                height: 640,
                targets: cells.iter().map(|&(u, v)| (u / grid, v / grid)).collect(),
            }
        })
        .collect()
}

/// Writes ground-truth JSONL; `extra` adds per-frame fields such as
/// `"proxy":"x.pgm"`.
pub fn write_gt(path: &Path, frames: &[SynthFrame], extra: impl Fn(&SynthFrame) -> String) {
    let mut text = String::new();
    for f in frames {
        let targets: Vec<String> = f
            .targets
            .iter()
            .map(|(x, y)| format!(r#"{{"x":{x},"y":{y}}}"#))
            .collect();
        let more = extra(f);
        text.push_str(&format!(
            r#"{{"image_id":"{}","width":{},"height":{},"targets":[{}]{}}}"#,
            f.id,
            f.width,
            f.height,
            targets.join(","),
            if more.is_empty() {
                String::new()
            } else {
                format!(",{more}")
            }
        ));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

/// A P5 image with bright 6×6 blobs at the targets (and a few decoys) on a
/// noisy dark background.
pub fn blob_pgm(frame: &SynthFrame, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (frame.width as usize, frame.height as usize);
    let mut px: Vec<u8> = (0..w * h).map(|_| rng.random_range(20..40)).collect();
    let mut blob = |cx: usize, cy: usize, level: u8| {
        for y in cy.saturating_sub(3)..(cy + 3).min(h) {
            for x in cx.saturating_sub(3)..(cx + 3).min(w) {
                px[y * w + x] = level;
            }
        }
    };
    for &(x, y) in &frame.targets {
        blob((x * w as f64) as usize, (y * h as f64) as usize, 230);
    }
    for _ in 0..3 {
        let (x, y) = (rng.random_range(0..w), rng.random_range(0..h));
        blob(x, y, 140);
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&px);
    out
}

/// Reads a CSV written by the tool into header-keyed rows.
pub fn read_csv(path: &Path) -> Vec<std::collections::BTreeMap<String, String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect();
    lines
        .map(|l| {
            header
                .iter()
                .cloned()
                .zip(l.split(',').map(str::to_string))
                .collect()
        })
        .collect()
}

/// A strict-enough XML well-formedness check for generated SVG: balanced
/// tags, quoted attributes, known entities only, no external references.
pub fn check_svg(text: &str) -> Result<(), String> {
    for banned in ["href", "url(", "<script", "@import"] {
        if text.contains(banned) {
            return Err(format!("external reference or script: {banned}"));
        }
    }
    let bytes = text.as_bytes();
    let mut stack: Vec<String> = Vec::new();
    let mut i = 0;
    let mut saw_root = false;
    while i < bytes.len() {
        match bytes[i] {
            b'<' => {
                let end = text[i..].find('>').ok_or("unterminated tag")? + i;
                let tag = &text[i + 1..end];
                if tag.starts_with('?') {
                    if !tag.ends_with('?') {
                        return Err("bad processing instruction".into());
                    }
                } else if let Some(name) = tag.strip_prefix('/') {
                    let open = stack.pop().ok_or_else(|| format!("unexpected </{name}>"))?;
                    if open != name.trim() {
                        return Err(format!("</{name}> closes <{open}>"));
                    }
                } else {
                    let self_closing = tag.ends_with('/');
                    let body = tag.trim_end_matches('/');
                    let name: String = body.chars().take_while(|c| !c.is_whitespace()).collect();
                    if name.is_empty()
                        || !name
                            .chars()
                            .all(|c| c.is_ascii_alphanumeric() || c == ':' || c == '-')
                    {
                        return Err(format!("bad tag name {name:?}"));
                    }
                    check_attributes(&body[name.len()..])?;
                    if stack.is_empty() {
                        if saw_root {
                            return Err("multiple root elements".into());
                        }
                        if name != "svg" {
                            return Err(format!("root element is {name}"));
                        }
                        saw_root = true;
                    }
                    if !self_closing {
                        stack.push(name);
                    }
                }
                i = end + 1;
            }
            b'&' => {
                let end = text[i..].find(';').ok_or("unterminated entity")? + i;
                let ent = &text[i + 1..end];
                if !["amp", "lt", "gt", "quot", "apos"].contains(&ent) {
                    return Err(format!("unknown entity &{ent};"));
                }
                i = end + 1;
            }
            b'>' => return Err("stray '>'".into()),
            _ => i += 1,
        }
    }
    if !stack.is_empty() {
        return Err(format!("unclosed elements {stack:?}"));
    }
    if !saw_root {
        return Err("no root element".into());
    }
    Ok(())
}

fn check_attributes(mut rest: &str) -> Result<(), String> {
    let mut seen = Vec::new();
    loop {
        rest = rest.trim_start();
        if rest.is_empty() {
            return Ok(());
        }
        let eq = rest
            .find('=')
            .ok_or_else(|| format!("attribute without value in {rest:?}"))?;
        let name = rest[..eq].trim();
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(format!("bad attribute name {name:?}"));
        }
        if seen.contains(&name) {
            return Err(format!("duplicate attribute {name}"));
        }
        seen.push(name);
        let after = &rest[eq + 1..];
        let quote = after.chars().next().ok_or("missing attribute value")?;
        if quote != '"' && quote != '\'' {
            return Err(format!("unquoted attribute {name}"));
        }
        let close = after[1..]
            .find(quote)
            .ok_or("unterminated attribute value")?
            + 1;
        if after[1..close].contains('<') {
            return Err(format!("'<' inside attribute {name}"));
        }
        rest = &after[close + 1..];
    }
}
