//! Binary PGM (`P5`, maxval 255) reader and writer.

use std::fs;
use std::path::Path;

use super::IngestError;

/// 8-bit luminance image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub samples: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, samples: Vec<u8>) -> Option<Self> {
        (samples.len() == width as usize * height as usize).then_some(Self {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            samples: vec![value; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.samples[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.samples[y as usize * self.width as usize + x as usize] = value;
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    /// Skips whitespace and `#` comments (which run to end of line).
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &'static str) -> Result<u32, IngestError> {
        self.skip_separators();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(IngestError::BadHeader(what));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(IngestError::BadHeader(what))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, IngestError> {
    match bytes {
        [b'P', b'5', ..] => {}
        [b'P', d @ b'1'..=b'7', ..] => {
            return Err(IngestError::UnsupportedVariant(format!("P{}", *d as char)))
        }
        _ => return Err(IngestError::NotPgm),
    }
    let mut h = Header { bytes, pos: 2 };
    if !h
        .bytes
        .get(2)
        .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#')
    {
        return Err(IngestError::NotPgm);
    }
    let width = h.number("missing width")?;
    let height = h.number("missing height")?;
    let maxval = h.number("missing maxval")?;
    if width == 0 || height == 0 {
        return Err(IngestError::BadHeader("zero image dimension"));
    }
    if maxval != 255 {
        return Err(IngestError::UnsupportedDepth(maxval));
    }
    // Exactly one whitespace byte separates maxval from the raster.
    if !h.bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(IngestError::BadHeader("missing separator after maxval"));
    }
    let data = &bytes[h.pos + 1..];
    let n = width as usize * height as usize;
    if data.len() < n {
        return Err(IngestError::Truncated {
            expected: n,
            actual: data.len(),
        });
    }
    if data.len() > n {
        return Err(IngestError::TrailingData {
            expected: n,
            actual: data.len(),
        });
    }
    Ok(GrayImage {
        width,
        height,
        samples: data.to_vec(),
    })
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.samples);
    out
}

pub fn load_pgm(path: &Path) -> Result<GrayImage, IngestError> {
    let bytes = fs::read(path).map_err(|e| IngestError::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn save_pgm(img: &GrayImage, path: &Path) -> Result<(), IngestError> {
    fs::write(path, encode_pgm(img)).map_err(|e| IngestError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let img = decode_pgm(b"P5\n2 2\n255\n\x00\x40\x80\xff").unwrap();
        assert_eq!((img.width, img.height), (2, 2));
        assert_eq!(img.samples, vec![0, 64, 128, 255]);
    }

    #[test]
    fn comments_and_odd_whitespace() {
        let img =
            decode_pgm(b"P5 # made by hand\n# another\n 3\t1 #w h\n255\r\x01\x02\x03").unwrap();
        assert_eq!(img.samples, vec![1, 2, 3]);
        // A raster byte that looks like whitespace is still data.
        let img = decode_pgm(b"P5\n1 1\n255\n\n").unwrap();
        assert_eq!(img.samples, vec![b'\n']);
    }

    #[test]
    fn rejects_other_variants_and_depths() {
        assert!(matches!(
            decode_pgm(b"P2\n2 2\n255\n0 1 2 3"),
            Err(IngestError::UnsupportedVariant(v)) if v == "P2"
        ));
        assert!(matches!(
            decode_pgm(b"P5\n1 1\n65535\n\x00\x00"),
            Err(IngestError::UnsupportedDepth(65535))
        ));
        assert!(matches!(decode_pgm(b"GIF89a"), Err(IngestError::NotPgm)));
        assert!(matches!(
            decode_pgm(b"P5\n2 x\n255\n"),
            Err(IngestError::BadHeader(_))
        ));
    }

    #[test]
    fn short_and_long_rasters() {
        assert!(matches!(
            decode_pgm(b"P5\n2 2\n255\n\x00\x01\x02"),
            Err(IngestError::Truncated {
                expected: 4,
                actual: 3
            })
        ));
        assert!(matches!(
            decode_pgm(b"P5\n1 1\n255\n\x00\x01"),
            Err(IngestError::TrailingData { .. })
        ));
    }

    #[test]
    fn round_trip() {
        let img = GrayImage::new(3, 2, vec![9, 8, 7, 6, 5, 4]).unwrap();
        assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
    }
}
