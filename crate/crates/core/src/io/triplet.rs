use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// Header "m n nnz", then one "row col value" line per stored entry.
pub fn write_triplets(m: &CsrMatrix, mut out: impl Write) -> Result<()> {
    writeln!(out, "{} {} {}", m.nrows(), m.ncols(), m.nnz())?;
    for (i, j, v) in m.triplets() {
        writeln!(out, "{i} {j} {v:e}")?;
    }
    Ok(())
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| Error::Parse(format!("line {line}: missing {what}")))?
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad {what}")))
}

pub fn parse_triplets(text: &str) -> Result<CsrMatrix> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty triplet file".into()))?;
    let mut toks = header.split_whitespace();
    let m: usize = field(toks.next(), 1, "row count")?;
    let n: usize = field(toks.next(), 1, "column count")?;
    let nnz: usize = field(toks.next(), 1, "entry count")?;
    if toks.next().is_some() {
        return Err(Error::Parse("line 1: trailing fields".into()));
    }
    let mut entries = Vec::new();
    for (k, line) in lines {
        let mut toks = line.split_whitespace();
        let i: usize = field(toks.next(), k + 1, "row")?;
        let j: usize = field(toks.next(), k + 1, "column")?;
        let v: f64 = field(toks.next(), k + 1, "value")?;
        if toks.next().is_some() {
            return Err(Error::Parse(format!("line {}: trailing fields", k + 1)));
        }
        if i >= m || j >= n {
            return Err(Error::Parse(format!("line {}: entry ({i}, {j}) outside {m}x{n}", k + 1)));
        }
        if !v.is_finite() {
            return Err(Error::Parse(format!("line {}: non-finite value", k + 1)));
        }
        entries.push((i, j, v));
        if entries.len() > nnz {
            break;
        }
    }
    if entries.len() != nnz {
        return Err(Error::Parse(format!("header announces {nnz} entries, found {}", entries.len())));
    }
    CsrMatrix::from_triplets(m, n, &entries).map_err(|e| Error::Parse(e.to_string()))
}
