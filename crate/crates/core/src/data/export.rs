//! Dataset and sample dumps: CSV for tabular data, binary PGM for images.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Shortest text that still carries 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header row then one row per sample.
pub fn write_csv_matrix(path: impl AsRef<Path>, header: &[String], m: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::format("csv", format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in m.rows().take(m.nrows()) {
        w.write_record(row.iter().map(|&v| format_f64(v))).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a numeric CSV with a header row. Returns `(header, matrix)`.
pub fn read_csv_matrix(path: impl AsRef<Path>) -> Result<(Vec<String>, Tensor)> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::format("csv", format!("{other:?}")),
    })?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::format("csv", e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format("csv", e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    Error::format("csv", format!("{}: row {} has non-numeric `{f}`", path.display(), i + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let m = if rows.is_empty() {
        Tensor::matrix(0, header.len(), vec![])?
    } else {
        Tensor::from_rows(&rows)?
    };
    Ok((header, m))
}

/// Tile images (rows of `images`, each `h × w`) into a P5 PGM grid with a
/// one-pixel black gutter. Values are clamped to `[0, 1]` and scaled to 255.
pub fn write_pgm_grid(
    path: impl AsRef<Path>,
    images: &Tensor,
    (h, w): (usize, usize),
    grid_cols: usize,
) -> Result<()> {
    let path = path.as_ref();
    if images.ncols() != h * w && images.nrows() > 0 {
        return Err(Error::ShapeMismatch {
            op: "write_pgm_grid",
            left: images.shape().to_vec(),
            right: vec![h, w],
        });
    }
    let n = images.nrows();
    let gc = grid_cols.max(1).min(n.max(1));
    let gr = n.div_ceil(gc).max(1);
    let (width, height) = (gc * (w + 1) + 1, gr * (h + 1) + 1);
    let mut px = vec![0u8; width * height];
    for k in 0..n {
        let (tr, tc) = (k / gc, k % gc);
        let img = images.row(k);
        for r in 0..h {
            for c in 0..w {
                let v = img[r * w + c].clamp(0.0, 1.0);
                let y = tr * (h + 1) + 1 + r;
                let x = tc * (w + 1) + 1 + c;
                px[y * width + x] = (v * 255.0).round() as u8;
            }
        }
    }
    let mut out = Vec::with_capacity(px.len() + 32);
    write!(out, "P5\n{width} {height}\n255\n").expect("write to vec");
    out.extend_from_slice(&px);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
