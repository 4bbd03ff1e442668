//! Binary PGM (`P5`) images, 8- or 16-bit.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{Image, RealField};

/// Sample depth used when writing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    #[default]
    Sixteen,
}

impl BitDepth {
    fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad PGM {what}")))
    }
}

/// Parses a `P5` image and maps samples linearly onto `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(Error::Format(format!("expected binary PGM magic P5, found {magic:?}")));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("PGM dimensions {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("PGM maxval {maxval} outside 1..=65535")));
    }
    match bytes.get(cur.pos) {
        Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::Format("missing whitespace after PGM header".into())),
    }
    let bps = if maxval > 255 { 2 } else { 1 };
    let need = width * height * bps;
    let payload = &bytes[cur.pos..];
    if payload.len() < need {
        return Err(Error::Length(format!("PGM payload has {} bytes, expected {need}", payload.len())));
    }
    let maxval = maxval as f64;
    let data = if bps == 1 {
        payload[..need].iter().map(|&b| b as f64 / maxval).collect()
    } else {
        payload[..need].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / maxval).collect()
    };
    RealField::new(height, width, data)
}

/// Encodes an image; values are clamped to `[0, 1]` and rounded.
pub fn encode_pgm(img: &Image, depth: BitDepth) -> Vec<u8> {
    let maxval = depth.maxval();
    let mut out = format!("P5\n{} {}\n{}\n", img.width(), img.height(), maxval).into_bytes();
    for &v in img.data() {
        let q = (v.clamp(0.0, 1.0) * maxval as f64).round() as u32;
        match depth {
            BitDepth::Eight => out.push(q as u8),
            BitDepth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
        }
    }
    out
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    decode_pgm(&fs::read(path)?)
}

/// Writes a 16-bit PGM.
pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    write_image_with_depth(path, img, BitDepth::Sixteen)
}

pub fn write_image_with_depth(path: impl AsRef<Path>, img: &Image, depth: BitDepth) -> Result<()> {
    fs::write(path, encode_pgm(img, depth))?;
    Ok(())
}

/// Rounds an image to the values a 16-bit PGM can hold.
pub fn quantize16(img: &Image) -> Image {
    img.map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() / 65535.0)
}
