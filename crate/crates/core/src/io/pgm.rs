use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, Image};

/// Affine map between 16-bit gray levels and absorption values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub min: f64,
    pub max: f64,
}

impl Scaling {
    fn to_level(self, v: f64) -> u16 {
        if self.max <= self.min {
            return 0;
        }
        (((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0) * 65535.0).round() as u16
    }

    fn to_value(self, level: u16) -> f64 {
        self.min + (self.max - self.min) * level as f64 / 65535.0
    }

    pub fn to_text(self) -> String {
        format!("min {:e}\nmax {:e}\n", self.min, self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Top row first.
    pub pixels: Vec<u16>,
}

/// Binary 16-bit PGM of a 2D image (top row is y = 1) and its scaling sidecar.
pub fn write_pgm(img: &Image, mut out: impl Write) -> Result<Scaling> {
    let g = img.grid();
    if g.dim() != 2 {
        return invalid("PGM export needs a 2D image");
    }
    let v = img.values();
    let scaling = Scaling {
        min: v.iter().copied().fold(f64::INFINITY, f64::min),
        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    let n = g.cells_per_edge();
    let mut buf = format!("P5\n{n} {n}\n65535\n").into_bytes();
    for y in (0..n).rev() {
        for x in 0..n {
            buf.extend_from_slice(&scaling.to_level(v[g.index([x, y, 0])]).to_be_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(scaling)
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Parse("PGM: truncated header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = header_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse(format!("PGM: bad {what}")))
}

/// Parses a binary (P5) PGM with 8- or 16-bit samples.
pub fn parse_pgm(bytes: &[u8]) -> Result<PgmImage> {
    let mut pos = 0;
    if header_token(bytes, &mut pos)? != b"P5" {
        return Err(Error::Parse("PGM: expected magic P5".into()));
    }
    let width = header_number(bytes, &mut pos, "width")?;
    let height = header_number(bytes, &mut pos, "height")?;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("PGM: maxval {maxval} out of range")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Parse("PGM: missing separator before raster".into()));
    }
    pos += 1;
    let sample = if maxval > 255 { 2 } else { 1 };
    let count = width.checked_mul(height).ok_or_else(|| Error::Parse("PGM: size overflows".into()))?;
    let raster = &bytes[pos..];
    if count.checked_mul(sample) != Some(raster.len()) {
        return Err(Error::Parse(format!("PGM: expected {count} samples, found {} bytes", raster.len())));
    }
    let pixels: Vec<u16> = if sample == 2 {
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        raster.iter().map(|&b| b as u16).collect()
    };
    if pixels.iter().any(|&p| p as usize > maxval) {
        return Err(Error::Parse("PGM: sample exceeds maxval".into()));
    }
    Ok(PgmImage { width, height, maxval: maxval as u16, pixels })
}

/// Parses the sidecar written next to a PGM ("min v" and "max v" lines).
pub fn parse_scaling(text: &str) -> Result<Scaling> {
    let (mut min, mut max) = (None, None);
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (key, value) = line.split_once(char::is_whitespace).ok_or_else(|| Error::Parse(format!("scaling: bad line {line:?}")))?;
        let value: f64 = value.trim().parse().map_err(|_| Error::Parse(format!("scaling: bad value in {line:?}")))?;
        if !value.is_finite() {
            return Err(Error::Parse("scaling: non-finite value".into()));
        }
        match key {
            "min" => min = Some(value),
            "max" => max = Some(value),
            _ => return Err(Error::Parse(format!("scaling: unknown key {key:?}"))),
        }
    }
    match (min, max) {
        (Some(min), Some(max)) if min <= max => Ok(Scaling { min, max }),
        (Some(_), Some(_)) => Err(Error::Parse("scaling: min exceeds max".into())),
        _ => Err(Error::Parse("scaling: both min and max are required".into())),
    }
}

/// Rebuilds a (quantized) image from a square 16-bit PGM and its sidecar.
pub fn read_pgm_image(pgm: &[u8], sidecar: &str) -> Result<Image> {
    let p = parse_pgm(pgm)?;
    let scaling = parse_scaling(sidecar)?;
    if p.width != p.height || p.width == 0 {
        return Err(Error::Parse("PGM: image must be square and nonempty".into()));
    }
    if p.maxval != 65535 {
        return Err(Error::Parse("PGM: expected 16-bit samples".into()));
    }
    let n = p.width;
    let grid = Grid::new(2, n)?;
    let mut values = vec![0.0; n * n];
    for (row, chunk) in p.pixels.chunks_exact(n).enumerate() {
        let y = n - 1 - row;
        for (x, &level) in chunk.iter().enumerate() {
            values[grid.index([x, y, 0])] = scaling.to_value(level);
        }
    }
    Image::new(grid, values)
}
