//! The encoder/decoder pair that defines the latent ("dual") space.
//!
//! The map is only approximately invertible; [`reconstruction_error`] is the
//! measure of how approximate. Latent codes handed to the GAN are
//! standardized with statistics frozen at training time.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{BatchPlan, Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::nn::{adam_step, chain, init_params, Activation, AdamConfig, AdamState, MlpModel};
use crate::seed;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub latent_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Decoder output activation.
    pub output: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl AeConfig {
    /// 256-pixel shapes: `256 → 128 → 64 → 16`, sigmoid pixel output.
    pub fn shapes_default() -> Self {
        Self {
            latent_dim: 16,
            hidden: vec![128, 64],
            activation: Activation::leaky(),
            output: Activation::Sigmoid,
            epochs: 80,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig {
                lr: 2e-3,
                beta1: 0.9,
                ..AdamConfig::default()
            },
        }
    }

    /// 2-D ring: `2 → 32 → 1`.
    pub fn ring_default() -> Self {
        Self {
            latent_dim: 1,
            hidden: vec![32],
            activation: Activation::leaky(),
            output: Activation::Identity,
            epochs: 60,
            batch_size: 64,
            seed: 0,
            adam: AdamConfig {
                lr: 1e-3,
                beta1: 0.9,
                ..AdamConfig::default()
            },
        }
    }

    fn encoder_dims(&self, data_dim: usize) -> Vec<usize> {
        let mut dims = vec![data_dim];
        dims.extend(&self.hidden);
        dims.push(self.latent_dim);
        dims
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AeEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub flops: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AeTrainingReport {
    pub epochs: Vec<AeEpoch>,
    pub steps: u64,
    pub flops_per_step: u64,
    pub total_flops: u64,
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel {
    pub encoder: MlpModel,
    pub decoder: MlpModel,
    /// Clamp decoded values to `[0, 1]`.
    pub pixel: bool,
    /// Latent standardization, fitted on the training codes.
    pub stats: Option<Standardizer>,
    pub report: AeTrainingReport,
}

/// Standardized codes in the latent space.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub codes: Tensor,
    pub stats: Standardizer,
    pub source: String,
}

impl AutoencoderModel {
    pub fn from_parts(encoder: MlpModel, decoder: MlpModel, pixel: bool) -> Result<Self> {
        if encoder.out_dim() != decoder.in_dim() || decoder.out_dim() != encoder.in_dim() {
            return Err(Error::InvalidArgument(format!(
                "encoder {}→{} does not pair with decoder {}→{}",
                encoder.in_dim(),
                encoder.out_dim(),
                decoder.in_dim(),
                decoder.out_dim()
            )));
        }
        if encoder.out_dim() >= encoder.in_dim() {
            return Err(Error::InvalidArgument(format!(
                "latent dimension {} must be below data dimension {}",
                encoder.out_dim(),
                encoder.in_dim()
            )));
        }
        Ok(Self {
            encoder,
            decoder,
            pixel,
            stats: None,
            report: AeTrainingReport::default(),
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn data_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    /// Freeze latent standardization statistics from `train` rows.
    pub fn fit_latent_stats(&mut self, train: &Tensor) -> Result<()> {
        let raw = self.encoder.predict(train)?;
        self.stats = Some(Standardizer::fit(&raw, None));
        Ok(())
    }

    /// Matmul FLOPs of one training step on `batch` rows.
    pub fn step_flops(&self, batch: usize) -> u64 {
        3 * (self.encoder.forward_flops(batch) + self.decoder.forward_flops(batch))
    }

    /// Decoder output (clamped for pixel data) of un-standardized codes.
    fn decode_raw(&self, raw: &Tensor) -> Result<Tensor> {
        let out = self.decoder.predict(raw)?;
        Ok(if self.pixel {
            out.map(|v| v.clamp(0.0, 1.0))
        } else {
            out
        })
    }

    /// `decode(encode(x))`, bypassing standardization (which cancels).
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        self.decode_raw(&self.encoder.predict(x)?)
    }
}

pub fn train_autoencoder(d: &Dataset, cfg: &AeConfig) -> Result<AutoencoderModel> {
    train_autoencoder_observed(d, cfg, &mut |_| {})
}

/// Like [`train_autoencoder`]; `observe` sees the dataset row indices of
/// every training batch.
pub fn train_autoencoder_observed(
    d: &Dataset,
    cfg: &AeConfig,
    observe: &mut dyn FnMut(&[usize]),
) -> Result<AutoencoderModel> {
    let data_dim = d.dim();
    if cfg.latent_dim == 0 || cfg.latent_dim >= data_dim {
        return Err(Error::InvalidArgument(format!(
            "latent_dim {} must be in [1, {data_dim})",
            cfg.latent_dim
        )));
    }
    let train_idx = d.training_indices();
    if train_idx.is_empty() {
        return Err(Error::EmptyTraining("no non-held-out samples for the autoencoder".into()));
    }
    let batch = cfg.batch_size.min(train_idx.len()).max(1);

    let enc_dims = cfg.encoder_dims(data_dim);
    let mut dec_dims = enc_dims.clone();
    dec_dims.reverse();
    let encoder = init_params(
        &chain(&enc_dims, cfg.activation, Activation::Identity),
        seed::derive(cfg.seed, "encoder"),
    )?;
    let decoder = init_params(
        &chain(&dec_dims, cfg.activation, cfg.output),
        seed::derive(cfg.seed, "decoder"),
    )?;
    let mut model = AutoencoderModel::from_parts(encoder, decoder, d.meta.pixel)?;

    let mut enc_opt = AdamState::new(&model.encoder.params, cfg.adam);
    let mut dec_opt = AdamState::new(&model.decoder.params, cfg.adam);
    let mut plan = BatchPlan::new(train_idx.clone(), batch, seed::derive(cfg.seed, "ae-batches"))?;
    let flops_per_step = model.step_flops(batch);

    let start = Instant::now();
    let mut report = AeTrainingReport {
        flops_per_step,
        ..AeTrainingReport::default()
    };
    for epoch in 0..cfg.epochs {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (step, rows) in plan.epoch().into_iter().enumerate() {
            observe(&rows);
            let x = d.samples.select_rows(&rows);
            let loss = ae_step(&mut model, &mut enc_opt, &mut dec_opt, x).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Diverged {
                    what: "autoencoder",
                    epoch,
                    step,
                },
                other => other,
            })?;
            sum += loss;
            count += 1;
        }
        let loss = sum / count.max(1) as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                what: "autoencoder",
                epoch,
                step: count,
            });
        }
        report.steps += count as u64;
        report.epochs.push(AeEpoch {
            epoch,
            loss,
            flops: flops_per_step * count as u64,
        });
    }
    report.total_flops = flops_per_step * report.steps;
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    model.report = report;
    model.fit_latent_stats(&d.samples.select_rows(&train_idx))?;
    Ok(model)
}

fn ae_step(
    model: &mut AutoencoderModel,
    enc_opt: &mut AdamState,
    dec_opt: &mut AdamState,
    x: Tensor,
) -> Result<f64> {
    let mut tape = Tape::new();
    let ev = model.encoder.params.bind(&mut tape)?;
    let dv = model.decoder.params.bind(&mut tape)?;
    let xv = tape.constant(x)?;
    let z = model.encoder.forward(&mut tape, &ev, xv)?;
    let y = model.decoder.forward(&mut tape, &dv, z)?;
    let loss = tape.mse_loss(y, xv)?;
    let value = tape.value(loss)?.item();
    let grads = tape.backward(loss)?;
    model.encoder.params.zero_grad();
    model.decoder.params.zero_grad();
    model.encoder.params.accumulate(&grads, &ev)?;
    model.decoder.params.accumulate(&grads, &dv)?;
    adam_step(&mut model.encoder.params, enc_opt)?;
    adam_step(&mut model.decoder.params, dec_opt)?;
    Ok(value)
}

/// Standardized latent codes of `x`.
pub fn encode(m: &AutoencoderModel, x: &Tensor) -> Result<LatentCode> {
    if x.ncols() != m.data_dim() {
        return Err(Error::ShapeMismatch {
            op: "encode",
            left: x.shape().to_vec(),
            right: vec![m.data_dim()],
        });
    }
    let stats = m
        .stats
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("autoencoder has no frozen latent statistics".into()))?;
    let raw = m.encoder.predict(x)?;
    Ok(LatentCode {
        codes: stats.apply(&raw)?,
        stats: stats.clone(),
        source: String::new(),
    })
}

/// De-standardize then decode; pixel outputs are clamped to `[0, 1]`.
pub fn decode(m: &AutoencoderModel, z: &Tensor) -> Result<Tensor> {
    if z.ncols() != m.latent_dim() {
        return Err(Error::ShapeMismatch {
            op: "decode",
            left: z.shape().to_vec(),
            right: vec![m.latent_dim()],
        });
    }
    let stats = m
        .stats
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("autoencoder has no frozen latent statistics".into()))?;
    m.decode_raw(&stats.invert(z)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionError {
    pub mse_heldin: f64,
    /// `None` when nothing is held out.
    pub mse_heldout: Option<f64>,
}

fn mse_rows(m: &AutoencoderModel, x: &Tensor) -> Result<Option<f64>> {
    if x.nrows() == 0 {
        return Ok(None);
    }
    let y = m.reconstruct(x)?;
    let s: f64 = y.values().iter().zip(x.values()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(Some(s / x.len() as f64))
}

/// Mean squared reconstruction error, split by the hold-out mask.
pub fn reconstruction_error(m: &AutoencoderModel, d: &Dataset) -> Result<ReconstructionError> {
    Ok(ReconstructionError {
        mse_heldin: mse_rows(m, &d.training_samples())?.unwrap_or(0.0),
        mse_heldout: mse_rows(m, &d.heldout_samples())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamSet;
    use crate::data::{gen_plane, split_holdout, HoldoutRule};
    use crate::nn::LinearSpec;

    fn linear_cfg(epochs: usize) -> AeConfig {
        AeConfig {
            latent_dim: 2,
            hidden: vec![],
            activation: Activation::Identity,
            output: Activation::Identity,
            epochs,
            batch_size: 32,
            seed: 3,
            adam: AdamConfig {
                lr: 1e-2,
                beta1: 0.9,
                ..AdamConfig::default()
            },
        }
    }

    #[test]
    fn latent_must_compress() {
        let d = gen_plane(2, 4, 16, 0).unwrap();
        let mut cfg = linear_cfg(1);
        cfg.latent_dim = 4;
        assert!(matches!(train_autoencoder(&d, &cfg), Err(Error::InvalidArgument(_))));
        cfg.latent_dim = 5;
        assert!(train_autoencoder(&d, &cfg).is_err());
    }

    #[test]
    fn zero_epochs_keeps_initialization() {
        let d = gen_plane(2, 6, 40, 1).unwrap();
        let cfg = linear_cfg(0);
        let m = train_autoencoder(&d, &cfg).unwrap();
        assert!(m.report.epochs.is_empty());
        let init = init_params(
            &chain(&[6, 2], Activation::Identity, Activation::Identity),
            seed::derive(cfg.seed, "encoder"),
        )
        .unwrap();
        assert_eq!(m.encoder, init);
    }

    #[test]
    fn empty_training_set() {
        let d = crate::data::Dataset::from_matrix("e", Tensor::matrix(0, 5, vec![]).unwrap()).unwrap();
        assert!(matches!(
            train_autoencoder(&d, &linear_cfg(1)),
            Err(Error::EmptyTraining(_))
        ));
    }

    #[test]
    fn encode_decode_contracts() {
        let d = gen_plane(2, 6, 80, 2).unwrap();
        let m = train_autoencoder(&d, &linear_cfg(5)).unwrap();
        let mut x = d.samples.select_rows(&[0, 1, 2]);
        x = Tensor::from_rows(&[x.row(0), x.row(1), x.row(0)]).unwrap();
        let z = encode(&m, &x).unwrap();
        assert_eq!(z.codes.shape(), &[3, 2]);
        assert_eq!(z.codes.row(0), z.codes.row(2));
        let back = decode(&m, &z.codes).unwrap();
        assert_eq!(back.shape(), x.shape());
        assert!(encode(&m, &Tensor::zeros(&[1, 5])).is_err());
        assert!(decode(&m, &Tensor::zeros(&[1, 3])).is_err());
    }

    #[test]
    fn training_codes_are_standardized() {
        let d = gen_plane(2, 6, 200, 4).unwrap();
        let m = train_autoencoder(&d, &linear_cfg(3)).unwrap();
        let z = encode(&m, &d.samples).unwrap().codes;
        for j in 0..2 {
            let col: Vec<f64> = (0..z.nrows()).map(|i| z.get(i, j)).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let sd = (col.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            assert!(mean.abs() < 1e-6 && (sd - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn stats_stay_frozen() {
        let d = gen_plane(2, 6, 100, 5).unwrap();
        let m = train_autoencoder(&d, &linear_cfg(2)).unwrap();
        let before = encode(&m, &d.samples).unwrap().codes;
        let _ = reconstruction_error(&m, &d).unwrap();
        let _ = encode(&m, &Tensor::full(&[4, 6], 3.0)).unwrap();
        assert_eq!(encode(&m, &d.samples).unwrap().codes, before);
    }

    #[test]
    fn pass_through_autoencoder_has_zero_error() {
        // Data on the coordinate plane spanned by the first two axes of R^5.
        let mut rng = seed::rng(8);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                use rand::Rng;
                vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 0.0, 0.0, 0.0]
            })
            .collect();
        let d = Dataset::from_matrix("coord-plane", Tensor::from_rows(&rows).unwrap()).unwrap();
        let mut select = vec![0.0; 10];
        select[0] = 1.0;
        select[3] = 1.0;
        let mut enc = ParamSet::new();
        enc.push("w", Tensor::matrix(5, 2, select.clone()).unwrap());
        enc.push("b", Tensor::zeros(&[2]));
        let mut place = vec![0.0; 10];
        place[0] = 1.0;
        place[6] = 1.0;
        let mut dec = ParamSet::new();
        dec.push("w", Tensor::matrix(2, 5, place).unwrap());
        dec.push("b", Tensor::zeros(&[5]));
        let m = AutoencoderModel::from_parts(
            MlpModel::from_parts(vec![LinearSpec::new(5, 2, Activation::Identity)], enc).unwrap(),
            MlpModel::from_parts(vec![LinearSpec::new(2, 5, Activation::Identity)], dec).unwrap(),
            false,
        )
        .unwrap();
        let e = reconstruction_error(&m, &d).unwrap();
        assert_eq!(e.mse_heldin, 0.0);
        assert_eq!(e.mse_heldout, None);
    }

    #[test]
    fn heldout_error_reported_and_nonnegative() {
        let d = crate::data::gen_gaussian_ring(&crate::data::RingParams::new(8, 2.0, 0.1), 400, 1).unwrap();
        let d = split_holdout(d, &HoldoutRule::parse("labels:3").unwrap()).unwrap();
        let cfg = AeConfig {
            epochs: 2,
            ..AeConfig::ring_default()
        };
        let mut seen = Vec::new();
        let m = train_autoencoder_observed(&d, &cfg, &mut |rows| seen.extend_from_slice(rows)).unwrap();
        let labels = d.labels.as_ref().unwrap();
        assert!(seen.iter().all(|&i| labels[i] != 3));
        let e = reconstruction_error(&m, &d).unwrap();
        assert!(e.mse_heldin >= 0.0);
        let ho = e.mse_heldout.unwrap();
        assert!(ho.is_finite() && ho >= 0.0);
    }

    #[test]
    fn pixel_decoder_output_is_clamped() {
        let ranges = crate::data::ShapeRanges::default_for_side(8);
        let d = crate::data::gen_shapes_dataset(&ranges, 64, 2).unwrap();
        let cfg = AeConfig {
            latent_dim: 4,
            hidden: vec![16],
            epochs: 1,
            ..AeConfig::shapes_default()
        };
        let m = train_autoencoder(&d, &cfg).unwrap();
        let z = Tensor::full(&[5, 4], 40.0);
        let out = decode(&m, &z).unwrap();
        assert!(out.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
