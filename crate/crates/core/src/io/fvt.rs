//! FVT1 tensor files.
//!
//! Layout: magic `FVT1`, then `H`, `W`, `D` as u32 LE, then `H*W*D` f32 LE
//! values in row-major `(h, w, d)` order. Values are stored as f32, so a
//! tensor reloads to its f32-rounded values; writing a reloaded tensor
//! reproduces the file byte for byte.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::bytes::Reader;
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

const MAGIC: &[u8; 4] = b"FVT1";
const FORMAT: &str = "FVT1";
/// Name of the label manifest written next to a batch of vectors.
pub const MANIFEST: &str = "manifest.tsv";

pub fn write_fvt<W: Write>(mut w: W, t: &Tensor3) -> Result<()> {
    let (h, wd, d) = t.shape();
    let mut buf = Vec::with_capacity(16 + 4 * t.len());
    buf.extend_from_slice(MAGIC);
    for n in [h, wd, d] {
        let n = u32::try_from(n).map_err(|_| Error::format(FORMAT, format!("dimension {n} exceeds u32")))?;
        buf.extend_from_slice(&n.to_le_bytes());
    }
    for &v in t.data() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::NonFinite(format!("{v} is not representable as a finite f32")));
        }
        buf.extend_from_slice(&f.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_fvt<R: Read>(mut r: R) -> Result<Tensor3> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut rd = Reader::new(&buf, FORMAT);
    if rd.take(4)? != MAGIC {
        return Err(Error::format(FORMAT, "bad magic"));
    }
    let h = rd.usize32()?;
    let w = rd.usize32()?;
    let d = rd.usize32()?;
    let n = h
        .checked_mul(w)
        .and_then(|x| x.checked_mul(d))
        .ok_or_else(|| Error::format(FORMAT, "dimensions overflow"))?;
    if n == 0 {
        return Err(Error::format(FORMAT, "zero dimension"));
    }
    if rd.remaining() != n * 4 {
        return Err(Error::format(
            FORMAT,
            format!("expected {} payload bytes, found {}", n * 4, rd.remaining()),
        ));
    }
    let data: Vec<f64> = rd
        .take(n * 4)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(FORMAT, "non-finite value"));
    }
    Tensor3::new(h, w, d, data)
}

pub fn save_fvt(path: impl AsRef<Path>, t: &Tensor3) -> Result<()> {
    let mut buf = Vec::new();
    write_fvt(&mut buf, t)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_fvt(path: impl AsRef<Path>) -> Result<Tensor3> {
    read_fvt(fs::File::open(path)?)
}

/// One encoded vector of a batch and its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorEntry {
    pub name: String,
    pub values: Vec<f64>,
    pub label: usize,
}

/// Writes each vector as a `1 x 1 x D` tensor `<name>.fvt` in `dir`, plus a
/// manifest with one `file<TAB>label` line per vector.
pub fn save_vector_batch(dir: impl AsRef<Path>, entries: &[VectorEntry]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for e in entries {
        if e.name.is_empty() || e.name.contains(['/', '\\', '\t', '\n']) {
            return Err(Error::config(format!("invalid vector name {:?}", e.name)));
        }
        let file = format!("{}.fvt", e.name);
        let t = Tensor3::new(1, 1, e.values.len(), e.values.clone())?;
        save_fvt(dir.join(&file), &t)?;
        manifest.push_str(&format!("{file}\t{}\n", e.label));
    }
    fs::write(dir.join(MANIFEST), manifest)?;
    Ok(())
}

pub fn load_vector_batch(dir: impl AsRef<Path>) -> Result<Vec<VectorEntry>> {
    let dir = dir.as_ref();
    let manifest = fs::read_to_string(dir.join(MANIFEST))?;
    let mut out = Vec::new();
    for (lineno, line) in manifest.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (file, label) = line
            .split_once('\t')
            .ok_or_else(|| Error::format("manifest", format!("line {}: expected file<TAB>label", lineno + 1)))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| Error::format("manifest", format!("line {}: bad label {label:?}", lineno + 1)))?;
        let t = load_fvt(dir.join(file))?;
        if t.height() != 1 || t.width() != 1 {
            return Err(Error::format(FORMAT, format!("{file} is not a 1x1xD vector")));
        }
        out.push(VectorEntry {
            name: file.strip_suffix(".fvt").unwrap_or(file).to_string(),
            values: t.into_data(),
            label,
        });
    }
    Ok(out)
}
