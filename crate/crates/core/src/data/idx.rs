//! IDX files (the MNIST container): big-endian `u32` magic, big-endian `u32`
//! dimension sizes, then a raw `u8` payload.

use std::fs;
use std::path::Path;

use super::{Dataset, DatasetMeta, Generator};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(buf: &[u8], at: usize, what: &'static str) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(what, format!("header truncated at byte {at}")))
}

/// Returns `(n, rows, cols, pixels)`.
pub fn parse_idx_images(buf: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let what = "idx image file";
    let magic = be_u32(buf, 0, what)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            what,
            format!("bad magic 0x{magic:08x} (expected 0x{IDX_IMAGES_MAGIC:08x})"),
        ));
    }
    let n = be_u32(buf, 4, what)? as usize;
    let rows = be_u32(buf, 8, what)? as usize;
    let cols = be_u32(buf, 12, what)? as usize;
    let payload = &buf[16..];
    let expected = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format(what, "dimension product overflows"))?;
    if payload.len() != expected {
        return Err(Error::format(
            what,
            format!(
                "header declares {n}x{rows}x{cols} = {expected} bytes, payload has {}",
                payload.len()
            ),
        ));
    }
    Ok((n, rows, cols, payload))
}

pub fn parse_idx_labels(buf: &[u8]) -> Result<&[u8]> {
    let what = "idx label file";
    let magic = be_u32(buf, 0, what)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            what,
            format!("bad magic 0x{magic:08x} (expected 0x{IDX_LABELS_MAGIC:08x})"),
        ));
    }
    let n = be_u32(buf, 4, what)? as usize;
    let payload = &buf[8..];
    if payload.len() != n {
        return Err(Error::format(
            what,
            format!("header declares {n} labels, payload has {}", payload.len()),
        ));
    }
    Ok(payload)
}

/// Load images (and optionally labels); pixels are scaled `u8 → [0, 1]`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: Option<&Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let buf = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let (n, rows, cols, pixels) = parse_idx_images(&buf)?;
    let values = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let samples = Tensor::matrix(n, rows * cols, values)?;

    let labels = match labels_path {
        Some(lp) => {
            let lbuf = fs::read(lp).map_err(|e| Error::io(lp, e))?;
            let l = parse_idx_labels(&lbuf)?;
            if l.len() != n {
                return Err(Error::format(
                    "idx label file",
                    format!("{} labels for {n} images", l.len()),
                ));
            }
            Some(l.iter().map(|&x| usize::from(x)).collect())
        }
        None => None,
    };

    Dataset::new(
        samples,
        labels,
        DatasetMeta {
            name: images_path
                .file_stem()
                .map_or_else(|| "idx".into(), |s| s.to_string_lossy().into_owned()),
            dim: rows * cols,
            seed: None,
            generator: Generator::Idx {
                images: images_path.display().to_string(),
                labels: labels_path.map(|p| p.display().to_string()),
            },
            pixel: true,
            image_dims: Some((rows, cols)),
        },
    )
}
