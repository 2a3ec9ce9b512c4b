//! Big-endian IDX files as used by MNIST. Gzip-compressed files are detected
//! by their header and decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::numerics::Tensor;
use crate::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Parsed IDX image file header plus raw pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    /// Pixels scaled to `[0, 1]`, one image per row.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
        Tensor::new(vec![self.count, self.rows * self.cols], data).expect("sized")
    }
}

fn format_err(what: &str, detail: String) -> Error {
    Error::Format {
        what: what.to_string(),
        detail,
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| format_err(&path.display().to_string(), format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| format_err(what, format!("truncated header: {} bytes", bytes.len())))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let found = be_u32(bytes, 0, what)?;
    if found != expected {
        return Err(format_err(
            what,
            format!("bad magic: expected 0x{expected:08X}, found 0x{found:08X}"),
        ));
    }
    Ok(())
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages> {
    let what = "IDX images";
    check_magic(bytes, IMAGE_MAGIC, what)?;
    let count = be_u32(bytes, 4, what)? as usize;
    let rows = be_u32(bytes, 8, what)? as usize;
    let cols = be_u32(bytes, 12, what)? as usize;
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() != need {
        return Err(format_err(
            what,
            format!(
                "length mismatch: header promises {need} pixel bytes, found {}",
                body.len()
            ),
        ));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let what = "IDX labels";
    check_magic(bytes, LABEL_MAGIC, what)?;
    let count = be_u32(bytes, 4, what)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(format_err(
            what,
            format!(
                "length mismatch: header promises {count} labels, found {}",
                body.len()
            ),
        ));
    }
    Ok(body.to_vec())
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IMAGE_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend(v.to_be_bytes());
    }
    out.extend(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend(LABEL_MAGIC.to_be_bytes());
    out.extend((labels.len() as u32).to_be_bytes());
    out.extend(labels);
    out
}

/// Loads a matching image/label file pair: features in `[0, 1]` and digit labels.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<(Tensor, Vec<usize>)> {
    let images = parse_images(&read_bytes(images_path.as_ref())?)?;
    let labels = parse_labels(&read_bytes(labels_path.as_ref())?)?;
    if images.count != labels.len() {
        return Err(format_err(
            "IDX pair",
            format!("{} images but {} labels", images.count, labels.len()),
        ));
    }
    Ok((
        images.to_tensor(),
        labels.into_iter().map(usize::from).collect(),
    ))
}

/// Header and raw pixels of an image file, for format audits.
pub fn load_images_raw(path: impl AsRef<Path>) -> Result<IdxImages> {
    parse_images(&read_bytes(path.as_ref())?)
}

pub fn load_labels_raw(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_labels(&read_bytes(path.as_ref())?)
}
