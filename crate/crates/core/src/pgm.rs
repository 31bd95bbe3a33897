//! 8-bit PGM reading (P5 and P2) and P5 writing.

use crate::error::{EedError, Result};
use crate::grid::{Image, Mask};
use std::path::Path;

/// Raw greyscale raster with its declared maximum value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u8>,
}

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn skip_space(&mut self) {
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

    fn next_uint(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| EedError::Format(format!("expected {what} at byte {start}")))
    }
}

impl Pgm {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 2 || bytes[0] != b'P' || !matches!(bytes[1], b'2' | b'5') {
            return Err(EedError::Format("not a P2 or P5 PGM file".into()));
        }
        let binary = bytes[1] == b'5';
        let mut t = Tokens { bytes, pos: 2 };
        let width = t.next_uint("width")?;
        let height = t.next_uint("height")?;
        let maxval = t.next_uint("maxval")?;
        if width == 0 || height == 0 {
            return Err(EedError::Format(format!("empty raster {width}x{height}")));
        }
        if maxval == 0 || maxval > 255 {
            return Err(EedError::Format(format!("maxval {maxval} unsupported (need 1..=255)")));
        }
        let n = width * height;
        let samples: Vec<usize> = if binary {
            match bytes.get(t.pos) {
                Some(c) if c.is_ascii_whitespace() => {}
                _ => return Err(EedError::Format("missing separator before raster".into())),
            }
            let data = &bytes[t.pos + 1..];
            if data.len() < n {
                return Err(EedError::Format(format!("raster truncated: {} of {n} bytes", data.len())));
            }
            data[..n].iter().map(|&v| usize::from(v)).collect()
        } else {
            (0..n).map(|_| t.next_uint("sample")).collect::<Result<_>>()?
        };
        if let Some(v) = samples.iter().find(|&&v| v > maxval) {
            return Err(EedError::Format(format!("sample {v} exceeds maxval {maxval}")));
        }
        let pixels = samples.into_iter().map(|v| v as u8).collect();
        Ok(Self {
            width,
            height,
            maxval: maxval as u16,
            pixels,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read(path)?)
    }

    /// Canonical P5 encoding; always written with maxval 255.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        if self.maxval == 255 {
            out.extend_from_slice(&self.pixels);
        } else {
            let m = f64::from(self.maxval);
            out.extend(self.pixels.iter().map(|&v| (f64::from(v) / m * 255.0).round() as u8));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    /// Grey values in `[0, 1]`: `v / maxval`.
    pub fn to_image(&self) -> Result<Image> {
        let m = f64::from(self.maxval);
        Image::new(
            self.width,
            self.height,
            self.pixels.iter().map(|&v| f64::from(v) / m).collect(),
        )
    }

    /// Samples at or above half range mark known pixels.
    pub fn to_mask(&self) -> Result<Mask> {
        let half = usize::from(self.maxval).div_ceil(2);
        Mask::new(
            self.width,
            self.height,
            self.pixels.iter().map(|&v| usize::from(v) >= half).collect(),
        )
    }

    /// Clamps to `[0, 1]` and rounds `255 v` half away from zero.
    pub fn from_image(img: &Image) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            maxval: 255,
            pixels: img.data().iter().map(|&v| quantize(v)).collect(),
        }
    }

    pub fn from_mask(mask: &Mask) -> Self {
        Self {
            width: mask.width(),
            height: mask.height(),
            maxval: 255,
            pixels: mask.known().iter().map(|&k| if k { 255 } else { 0 }).collect(),
        }
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn read_image(path: &Path) -> Result<Image> {
    Pgm::read(path)?.to_image()
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    Pgm::read(path)?.to_mask()
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    Pgm::from_image(img).write(path)
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    Pgm::from_mask(mask).write(path)
}
