//! Portable anymap I/O: P2/P5 graymaps and P3/P6 pixmaps.

use std::path::Path;

use super::image::ImageBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnmKind {
    /// P2
    GrayAscii,
    /// P3
    RgbAscii,
    /// P5
    GrayBinary,
    /// P6
    RgbBinary,
}

impl PnmKind {
    fn magic(self) -> &'static str {
        match self {
            PnmKind::GrayAscii => "P2",
            PnmKind::RgbAscii => "P3",
            PnmKind::GrayBinary => "P5",
            PnmKind::RgbBinary => "P6",
        }
    }

    fn channels(self) -> usize {
        match self {
            PnmKind::GrayAscii | PnmKind::GrayBinary => 1,
            PnmKind::RgbAscii | PnmKind::RgbBinary => 3,
        }
    }

    fn is_binary(self) -> bool {
        matches!(self, PnmKind::GrayBinary | PnmKind::RgbBinary)
    }

    /// Default kind for an image: binary, gray or RGB by channel count.
    pub fn binary_for(channels: usize) -> Result<Self> {
        match channels {
            1 => Ok(PnmKind::GrayBinary),
            3 => Ok(PnmKind::RgbBinary),
            n => Err(Error::Image(format!("anymaps hold 1 or 3 channels, not {n}"))),
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

    fn token(&mut self) -> Result<&str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() && self.bytes[self.pos] != b'#' {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Image("unexpected end of file".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| Error::Image("non-ASCII header".into()))
    }

    fn number(&mut self) -> Result<usize> {
        let t = self.token()?;
        t.parse().map_err(|_| Error::Image(format!("expected a number, found {t:?}")))
    }
}

/// Parses an anymap and reports which variant it was.
pub fn decode(bytes: &[u8]) -> Result<(ImageBuffer, PnmKind)> {
    let mut cur = Cursor { bytes, pos: 0 };
    let kind = match cur.token()? {
        "P2" => PnmKind::GrayAscii,
        "P3" => PnmKind::RgbAscii,
        "P5" => PnmKind::GrayBinary,
        "P6" => PnmKind::RgbBinary,
        m => return Err(Error::Image(format!("unsupported magic {m:?}"))),
    };
    let width = cur.number()?;
    let height = cur.number()?;
    let maxval = cur.number()?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Image(format!("maxval {maxval} outside 1..=65535")));
    }
    let count = width * height * kind.channels();
    let mut data = Vec::with_capacity(count);
    if kind.is_binary() {
        // Exactly one whitespace byte separates the header from the raster.
        cur.pos += 1;
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let raster = bytes
            .get(cur.pos..cur.pos + need)
            .ok_or_else(|| Error::Image(format!("raster truncated: need {need} bytes")))?;
        if wide {
            data.extend(raster.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as f64));
        } else {
            data.extend(raster.iter().map(|&b| b as f64));
        }
    } else {
        for _ in 0..count {
            data.push(cur.number()? as f64);
        }
    }
    Ok((ImageBuffer::new(width, height, kind.channels(), maxval as f64, data)?, kind))
}

/// Serializes with a minimal header; samples are rounded to integers.
pub fn encode(img: &ImageBuffer, kind: PnmKind) -> Result<Vec<u8>> {
    if img.channels() != kind.channels() {
        return Err(Error::Image(format!(
            "{} needs {} channel(s), image has {}",
            kind.magic(),
            kind.channels(),
            img.channels()
        )));
    }
    let maxval = img.max().round();
    if !(1.0..=65535.0).contains(&maxval) {
        return Err(Error::Image(format!("maxval {maxval} outside 1..=65535")));
    }
    let maxval = maxval as u32;
    let sample = |v: f64| v.round().clamp(0.0, maxval as f64) as u32;
    let mut out = format!("{}\n{} {}\n{}\n", kind.magic(), img.width(), img.height(), maxval).into_bytes();
    if kind.is_binary() {
        for &v in img.data() {
            let s = sample(v);
            if maxval > 255 {
                out.extend_from_slice(&(s as u16).to_be_bytes());
            } else {
                out.push(s as u8);
            }
        }
    } else {
        let row = img.width() * img.channels();
        for line in img.data().chunks(row) {
            let text: Vec<String> = line.iter().map(|&v| sample(v).to_string()).collect();
            out.extend_from_slice(text.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<(ImageBuffer, PnmKind)> {
    decode(&std::fs::read(path)?)
}

pub fn write(path: &Path, img: &ImageBuffer, kind: PnmKind) -> Result<()> {
    std::fs::write(path, encode(img, kind)?)?;
    Ok(())
}
