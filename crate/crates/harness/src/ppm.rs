//! Binary PPM (P6, 8-bit) images and tab-separated image manifests.

use std::fs;
use std::path::Path;

use lsdhm_core::{LabeledDataset, Tensor3};

use crate::error::{HarnessError, Result};

/// Decodes a P6 image into an `H x W x 3` tensor with values in `[0, 1]`.
pub fn decode_ppm(bytes: &[u8]) -> std::result::Result<Tensor3, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| "non-ascii header")?);
    }
    if fields[0] != "P6" {
        return Err(format!("expected P6 magic, found {:?}", fields[0]));
    }
    let parse = |s: &str, what: &str| s.parse::<usize>().map_err(|_| format!("bad {what} {s:?}"));
    let width = parse(fields[1], "width")?;
    let height = parse(fields[2], "height")?;
    let maxval = parse(fields[3], "maxval")?;
    if maxval != 255 {
        return Err(format!("only 8-bit images are supported (maxval {maxval})"));
    }
    if width == 0 || height == 0 {
        return Err("zero image dimension".into());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height * 3;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| format!("raster truncated: expected {n} bytes"))?;
    if bytes.len() > pos + n {
        return Err(format!("{} trailing bytes after raster", bytes.len() - pos - n));
    }
    let data = raster.iter().map(|&b| b as f64 / 255.0).collect();
    Tensor3::new(height, width, 3, data).map_err(|e| e.to_string())
}

/// Encodes a 3-channel tensor, clamping to `[0, 1]` and rounding to 8 bits.
pub fn encode_ppm(img: &Tensor3) -> Result<Vec<u8>> {
    if img.channels() != 3 {
        return Err(HarnessError::Data(format!("ppm needs 3 channels, got {}", img.channels())));
    }
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn parse_manifest(text: &str) -> Result<Vec<(String, usize)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (file, label) = line
            .split_once('\t')
            .ok_or_else(|| HarnessError::Data(format!("manifest line {}: expected file<TAB>label", i + 1)))?;
        let label = label
            .trim()
            .parse()
            .map_err(|_| HarnessError::Data(format!("manifest line {}: unknown label {label:?}", i + 1)))?;
        out.push((file.to_string(), label));
    }
    if out.is_empty() {
        return Err(HarnessError::Data("manifest lists no images".into()));
    }
    Ok(out)
}

/// Loads the images listed in `manifest` (paths relative to `dir`). With
/// `num_classes` unset, it is one more than the largest label.
pub fn ingest_images(dir: &Path, manifest: &Path, num_classes: Option<usize>) -> Result<LabeledDataset> {
    let text = fs::read_to_string(manifest)
        .map_err(|e| HarnessError::Data(format!("{}: {e}", manifest.display())))?;
    let entries = parse_manifest(&text)?;
    let n_classes = num_classes.unwrap_or_else(|| entries.iter().map(|(_, l)| l + 1).max().unwrap_or(0));
    let mut items = Vec::with_capacity(entries.len());
    let mut shape = None;
    for (file, label) in entries {
        if label >= n_classes {
            return Err(HarnessError::Data(format!("{file}: unknown label {label}")));
        }
        let bytes =
            fs::read(dir.join(&file)).map_err(|e| HarnessError::Data(format!("{file}: {e}")))?;
        let img = decode_ppm(&bytes).map_err(|e| HarnessError::Data(format!("{file}: {e}")))?;
        match shape {
            None => shape = Some(img.shape()),
            Some(s) if s != img.shape() => {
                return Err(HarnessError::Data(format!(
                    "{file}: size {:?} differs from {:?}",
                    img.shape(),
                    s
                )))
            }
            _ => {}
        }
        items.push((img, label));
    }
    Ok(LabeledDataset::new(items, n_classes)?)
}

/// Writes every image as `<prefix><index>.ppm` plus a manifest.
pub fn write_images(dir: &Path, manifest_name: &str, prefix: &str, data: &LabeledDataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for (i, (img, label)) in data.items().iter().enumerate() {
        let file = format!("{prefix}{i:05}.ppm");
        fs::write(dir.join(&file), encode_ppm(img)?)?;
        manifest.push_str(&format!("{file}\t{label}\n"));
    }
    fs::write(dir.join(manifest_name), manifest)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_values() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend([0u8, 255, 51, 102, 1, 2, 3, 4, 5, 6, 7, 8]);
        let t = decode_ppm(&bytes).unwrap();
        assert_eq!(t.shape(), (2, 2, 3));
        assert_eq!(t.get(0, 0, 1), 1.0);
        assert_eq!(t.get(0, 0, 2), 51.0 / 255.0);
        assert_eq!(t.get(1, 1, 2), 8.0 / 255.0);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P6 # made by hand\n1 1 255\n".to_vec();
        bytes.extend([10u8, 20, 30]);
        assert_eq!(decode_ppm(&bytes).unwrap().data()[2], 30.0 / 255.0);
    }

    #[test]
    fn bad_inputs() {
        assert!(decode_ppm(b"P3\n1 1\n255\n000").is_err());
        assert!(decode_ppm(b"P6\n2 2\n255\n\x00").is_err());
        assert!(decode_ppm(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00").is_err());
        assert!(parse_manifest("").is_err());
        assert!(parse_manifest("a.ppm 3\n").is_err());
    }
}
