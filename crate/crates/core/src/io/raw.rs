use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Image};

/// First line of a raw image file; little-endian f64 values follow, x fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawHeader {
    pub dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
}

pub fn write_raw(img: &Image, mut out: impl Write) -> Result<()> {
    let g = img.grid();
    let header = RawHeader { dim: g.dim(), n: g.cells_per_edge() };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(8 * img.values().len());
    for v in img.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn parse_raw(bytes: &[u8]) -> Result<Image> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse("raw image: missing header line".into()))?;
    let header: RawHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::Parse(format!("raw image header: {e}")))?;
    if header.dim != 2 && header.dim != 3 {
        return Err(Error::Parse(format!("raw image: unsupported dimension {}", header.dim)));
    }
    let body = &bytes[nl + 1..];
    let count = header
        .n
        .checked_pow(header.dim as u32)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Parse("raw image: size overflows".into()))?;
    if body.len() != count {
        return Err(Error::Parse(format!("raw image: expected {count} data bytes, found {}", body.len())));
    }
    let grid = Grid::new(header.dim, header.n).map_err(|e| Error::Parse(e.to_string()))?;
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Image::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let g = Grid::new(3, 3).unwrap();
        let img = Image::from_fn(g, |p| p[0] - 2.0 * p[2]);
        let mut buf = Vec::new();
        write_raw(&img, &mut buf).unwrap();
        assert!(buf.starts_with(b"{\"dim\":3,\"N\":3}\n"));
        assert_eq!(parse_raw(&buf).unwrap(), img);
    }

    #[test]
    fn rejects_truncated_and_huge() {
        assert!(parse_raw(b"{\"dim\":2,\"N\":2}\n1234").is_err());
        assert!(parse_raw(b"{\"dim\":3,\"N\":18446744073709551615}\n").is_err());
        assert!(parse_raw(b"{\"dim\":4,\"N\":1}\n12345678").is_err());
        assert!(parse_raw(b"no header").is_err());
    }
}
