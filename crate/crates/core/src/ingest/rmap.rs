//! `RMAP` binary response maps: `RMAP`, version byte 1, little-endian u32
//! `grid_w`, `grid_h`, `stride`, `offset`, then `grid_w·grid_h` little-endian
//! f32 scores in row-major order. A JSON object with the same field names is
//! accepted on load.

use std::fs;
use std::path::Path;

use super::IngestError;
use crate::response_map::ResponseMap;

pub const RMAP_MAGIC: &[u8; 4] = b"RMAP";
pub const RMAP_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 * 4;

pub fn encode_rmap(map: &ResponseMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * map.scores().len());
    out.extend_from_slice(RMAP_MAGIC);
    out.push(RMAP_VERSION);
    for field in [
        map.grid_w() as u32,
        map.grid_h() as u32,
        map.stride(),
        map.offset(),
    ] {
        out.extend_from_slice(&field.to_le_bytes());
    }
    for s in map.scores() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

/// Decodes either the binary form or its JSON equivalent.
pub fn decode_rmap(bytes: &[u8]) -> Result<ResponseMap, IngestError> {
    if !bytes.starts_with(RMAP_MAGIC) {
        let first = bytes.iter().find(|b| !b.is_ascii_whitespace());
        if first == Some(&b'{') {
            return serde_json::from_slice(bytes).map_err(|e| IngestError::MapJson(e.to_string()));
        }
        return Err(IngestError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(IngestError::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if bytes[4] != RMAP_VERSION {
        return Err(IngestError::UnsupportedVersion(bytes[4]));
    }
    let grid_w = read_u32(bytes, 5) as usize;
    let grid_h = read_u32(bytes, 9) as usize;
    let stride = read_u32(bytes, 13);
    let offset = read_u32(bytes, 17);
    let expected = grid_w
        .checked_mul(grid_h)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .unwrap_or(usize::MAX);
    if bytes.len() < expected {
        return Err(IngestError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(IngestError::TrailingData {
            expected,
            actual: bytes.len(),
        });
    }
    let scores = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    Ok(ResponseMap::with_geometry(
        grid_w, grid_h, stride, offset, scores,
    )?)
}

pub fn load_rmap(path: &Path) -> Result<ResponseMap, IngestError> {
    let bytes = fs::read(path).map_err(|e| IngestError::io(path, e))?;
    decode_rmap(&bytes)
}

pub fn save_rmap(map: &ResponseMap, path: &Path) -> Result<(), IngestError> {
    fs::write(path, encode_rmap(map)).map_err(|e| IngestError::io(path, e))
}

/// Writes the JSON form. f32 scores print in shortest round-trip form, so
/// this is lossless as well.
pub fn save_rmap_json(map: &ResponseMap, path: &Path) -> Result<(), IngestError> {
    let text = serde_json::to_string(map).expect("map serializes");
    fs::write(path, text).map_err(|e| IngestError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResponseMap {
        ResponseMap::with_geometry(3, 2, 8, 4, vec![0.0, 0.1, 0.2, 0.3, 1.0, 0.999]).unwrap()
    }

    #[test]
    fn binary_layout() {
        let bytes = encode_rmap(&sample());
        assert_eq!(&bytes[..5], b"RMAP\x01");
        assert_eq!(&bytes[5..9], &3u32.to_le_bytes());
        assert_eq!(bytes.len(), 21 + 6 * 4);
        assert_eq!(decode_rmap(&bytes).unwrap(), sample());
    }

    #[test]
    fn json_equivalent() {
        let text = serde_json::to_vec(&sample()).unwrap();
        assert_eq!(decode_rmap(&text).unwrap(), sample());
    }

    #[test]
    fn named_errors() {
        let good = encode_rmap(&sample());
        assert!(matches!(
            decode_rmap(b"RMAX\x01"),
            Err(IngestError::BadMagic)
        ));
        assert!(matches!(
            decode_rmap(&good[..good.len() - 3]),
            Err(IngestError::Truncated {
                expected: 45,
                actual: 42
            })
        ));
        assert!(matches!(
            decode_rmap(&good[..10]),
            Err(IngestError::Truncated { expected: 21, .. })
        ));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(
            decode_rmap(&long),
            Err(IngestError::TrailingData { .. })
        ));
        let mut v2 = good.clone();
        v2[4] = 2;
        assert!(matches!(
            decode_rmap(&v2),
            Err(IngestError::UnsupportedVersion(2))
        ));
        let mut hot = good;
        hot[21..25].copy_from_slice(&1.5f32.to_le_bytes());
        assert!(matches!(decode_rmap(&hot), Err(IngestError::InvalidMap(_))));
    }
}
