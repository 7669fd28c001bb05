//! Binary parameter files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "DSGP"                      magic, 4 bytes
//! u32 version                 currently 1
//! u32 layer_count
//! per layer: u32 in_dim, u32 out_dim, u8 activation tag, f64 activation param
//! per layer: f64 weight[in_dim * out_dim] (row-major), f64 bias[out_dim]
//! ```
//!
//! Activation tags: 0 identity, 1 leaky_relu (param = slope), 2 sigmoid, 3 tanh.

use std::fs;
use std::path::Path;

use super::{Activation, LinearSpec, MlpModel};
use crate::autodiff::ParamSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PARAM_FILE_MAGIC: &[u8; 4] = b"DSGP";
pub const PARAM_FILE_VERSION: u32 = 1;

fn encode(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PARAM_FILE_MAGIC);
    out.extend_from_slice(&PARAM_FILE_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for l in model.layers() {
        out.extend_from_slice(&(l.in_dim as u32).to_le_bytes());
        out.extend_from_slice(&(l.out_dim as u32).to_le_bytes());
        let (tag, param) = match l.activation {
            Activation::Identity => (0u8, 0.0),
            Activation::LeakyRelu(s) => (1, s),
            Activation::Sigmoid => (2, 0.0),
            Activation::Tanh => (3, 0.0),
        };
        out.push(tag);
        out.extend_from_slice(&param.to_le_bytes());
    }
    for p in model.params.iter() {
        for v in p.value.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                "parameter file",
                format!("truncated at byte {} (needed {n} more)", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

fn decode(buf: &[u8]) -> Result<MlpModel> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != PARAM_FILE_MAGIC {
        return Err(Error::format("parameter file", "bad magic (expected DSGP)"));
    }
    let version = r.u32()?;
    if version != PARAM_FILE_VERSION {
        return Err(Error::Version {
            expected: PARAM_FILE_VERSION,
            found: version,
        });
    }
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let tag = r.u8()?;
        let param = r.f64()?;
        let activation = match tag {
            0 => Activation::Identity,
            1 => Activation::LeakyRelu(param),
            2 => Activation::Sigmoid,
            3 => Activation::Tanh,
            t => return Err(Error::format("parameter file", format!("unknown activation tag {t}"))),
        };
        layers.push(LinearSpec::new(in_dim, out_dim, activation));
    }
    let mut params = ParamSet::new();
    for (i, l) in layers.iter().enumerate() {
        let w = (0..l.in_dim * l.out_dim)
            .map(|_| r.f64())
            .collect::<Result<Vec<_>>>()?;
        let b = (0..l.out_dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        params.push(format!("layer{i}.weight"), Tensor::matrix(l.in_dim, l.out_dim, w)?);
        params.push(format!("layer{i}.bias"), Tensor::vector(b));
    }
    if r.pos != buf.len() {
        return Err(Error::format(
            "parameter file",
            format!("{} trailing bytes", buf.len() - r.pos),
        ));
    }
    MlpModel::from_parts(layers, params)
}

pub fn save_params(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<MlpModel> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf)
}

fn describe(layers: &[LinearSpec]) -> String {
    layers
        .iter()
        .map(|l| format!("{}x{}:{}", l.in_dim, l.out_dim, l.activation.name()))
        .collect::<Vec<_>>()
        .join(" -> ")
}

/// Load and require the file's layer manifest to equal `expected`.
pub fn load_params_expecting(path: impl AsRef<Path>, expected: &[LinearSpec]) -> Result<MlpModel> {
    let model = load_params(path)?;
    if model.layers() != expected {
        return Err(Error::ManifestMismatch {
            expected: describe(expected),
            found: describe(model.layers()),
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{chain, init_params};

    fn model() -> MlpModel {
        init_params(&chain(&[5, 7, 3], Activation::leaky(), Activation::Sigmoid), 42).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact_and_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.dsgp"), dir.path().join("b.dsgp"));
        let m = model();
        save_params(&m, &a).unwrap();
        let back = load_params(&a).unwrap();
        assert_eq!(back, m);
        save_params(&back, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(&fs::read(&a).unwrap()[..4], b"DSGP");
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let bytes = encode(&model());
        for cut in [2, 10, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::Format { .. })), "cut {cut}");
        }
    }

    #[test]
    fn version_and_magic_checked() {
        let mut bytes = encode(&model());
        bytes[4] = 9;
        assert!(matches!(decode(&bytes), Err(Error::Version { found: 9, .. })));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn mismatched_manifest_names_both_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.dsgp");
        save_params(&model(), &p).unwrap();
        let want = chain(&[5, 8, 3], Activation::leaky(), Activation::Sigmoid);
        let err = load_params_expecting(&p, &want).unwrap_err().to_string();
        assert!(err.contains("5x8") && err.contains("5x7"), "{err}");
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_params("/nonexistent/x.dsgp").unwrap_err().to_string();
        assert!(err.contains("/nonexistent/x.dsgp"));
    }
}
