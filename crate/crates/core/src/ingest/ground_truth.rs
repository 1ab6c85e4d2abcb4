use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Frame, IngestError};
use crate::supervision::{Target, TargetSet};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    image_id: String,
    width: u32,
    height: u32,
    targets: Vec<Target>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    proxy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rmap: Option<String>,
}

/// Reads a JSONL ground-truth file. Relative `proxy`/`rmap` paths resolve
/// against the file's directory.
pub fn load_ground_truth(path: &Path) -> Result<Dataset, IngestError> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    parse_ground_truth(&text, base)
}

/// Parses JSONL ground truth. Blank lines are skipped.
pub fn parse_ground_truth(text: &str, base: &Path) -> Result<Dataset, IngestError> {
    let mut seen = HashSet::new();
    let mut frames = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(raw).map_err(|e| IngestError::MalformedLine {
            line,
            message: e.to_string(),
        })?;
        if rec.width == 0 || rec.height == 0 {
            return Err(IngestError::InvalidDimensions {
                line,
                image_id: rec.image_id,
            });
        }
        for (index, t) in rec.targets.iter().enumerate() {
            for (axis, value) in [('x', t.x), ('y', t.y)] {
                if !(0.0..=1.0).contains(&value) {
                    return Err(IngestError::CoordinateOutOfRange {
                        line,
                        image_id: rec.image_id.clone(),
                        index,
                        axis,
                        value,
                    });
                }
            }
        }
        if !seen.insert(rec.image_id.clone()) {
            return Err(IngestError::DuplicateImageId {
                line,
                image_id: rec.image_id,
            });
        }
        frames.push(Frame {
            targets: TargetSet::new(rec.width, rec.height, rec.targets),
            proxy: rec.proxy.map(|p| base.join(p)),
            rmap: rec.rmap.map(|p| base.join(p)),
            image_id: rec.image_id,
            width: rec.width,
            height: rec.height,
        });
    }
    Ok(Dataset { frames })
}

/// Writes a dataset as JSONL. Paths are written as given.
pub fn write_ground_truth(dataset: &Dataset, path: &Path) -> Result<(), IngestError> {
    let mut out = String::new();
    for f in &dataset.frames {
        let rec = Record {
            image_id: f.image_id.clone(),
            width: f.width,
            height: f.height,
            targets: f.targets.targets.clone(),
            proxy: f.proxy.as_ref().map(|p| p.to_string_lossy().into_owned()),
            rmap: f.rmap.as_ref().map(|p| p.to_string_lossy().into_owned()),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| IngestError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset, IngestError> {
        parse_ground_truth(text, Path::new("/data"))
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("\n  \n").unwrap().is_empty());
    }

    #[test]
    fn one_frame_one_target() {
        let d = parse(r#"{"image_id":"a","width":640,"height":480,"targets":[{"x":0.5,"y":0.5}]}"#)
            .unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.total_targets(), 1);
        let px: Vec<_> = d.frames[0].targets.pixel_centers().collect();
        assert_eq!(px, vec![(320.0, 240.0)]);
    }

    #[test]
    fn out_of_range_names_image() {
        let err = parse(
            r#"{"image_id":"frame7","width":640,"height":480,"targets":[{"x":1.2,"y":0.5}]}"#,
        )
        .unwrap_err();
        match err {
            IngestError::CoordinateOutOfRange { image_id, axis, .. } => {
                assert_eq!(image_id, "frame7");
                assert_eq!(axis, 'x');
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_and_garbage_rejected() {
        let two = "{\"image_id\":\"a\",\"width\":1,\"height\":1,\"targets\":[]}\n{\"image_id\":\"a\",\"width\":1,\"height\":1,\"targets\":[]}";
        assert!(matches!(
            parse(two),
            Err(IngestError::DuplicateImageId { line: 2, .. })
        ));
        assert!(matches!(
            parse("{not json"),
            Err(IngestError::MalformedLine { line: 1, .. })
        ));
        assert!(matches!(
            parse(r#"{"image_id":"a","width":1,"height":1,"targets":[],"extra":1}"#),
            Err(IngestError::MalformedLine { .. })
        ));
        assert!(matches!(
            parse(r#"{"image_id":"a","width":0,"height":1,"targets":[]}"#),
            Err(IngestError::InvalidDimensions { .. })
        ));
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let d = parse(r#"{"image_id":"a","width":8,"height":8,"targets":[],"rmap":"maps/a.rmap"}"#)
            .unwrap();
        assert_eq!(
            d.frames[0].rmap.as_deref(),
            Some(Path::new("/data/maps/a.rmap"))
        );
    }
}
