//! Space-agnostic GAN training.
//!
//! [`train_gan`] only sees a matrix of real rows. The direct baseline feeds it
//! raw data, the dual-space arm feeds it standardized latent codes; nothing
//! else differs.

use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::BatchPlan;
use crate::error::{Error, Result};
use crate::nn::{adam_step, chain, init_params, Activation, AdamConfig, AdamState, MlpModel};
use crate::seed;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub noise_dim: usize,
    pub d_steps_per_g_step: usize,
    pub seed: u64,
    pub g_hidden: Vec<usize>,
    pub d_hidden: Vec<usize>,
    /// Generator output activation.
    pub output: Activation,
    pub adam: AdamConfig,
}

impl GanConfig {
    pub fn shapes_default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            noise_dim: 16,
            d_steps_per_g_step: 1,
            seed: 0,
            g_hidden: vec![128],
            d_hidden: vec![128],
            output: Activation::Identity,
            adam: AdamConfig::default(),
        }
    }

    pub fn ring_default() -> Self {
        Self {
            epochs: 60,
            noise_dim: 2,
            g_hidden: vec![64, 64],
            d_hidden: vec![64, 64],
            ..Self::shapes_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("noise_dim", self.noise_dim),
            ("d_steps_per_g_step", self.d_steps_per_g_step),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("gan {name} must be positive")));
            }
        }
        if self.g_hidden.contains(&0) || self.d_hidden.contains(&0) {
            return Err(Error::InvalidArgument("gan hidden widths must be positive".into()));
        }
        Ok(())
    }

    pub fn generator_specs(&self, space_dim: usize) -> Vec<crate::nn::LinearSpec> {
        let mut dims = vec![self.noise_dim];
        dims.extend(&self.g_hidden);
        dims.push(space_dim);
        chain(&dims, Activation::leaky(), self.output)
    }

    pub fn discriminator_specs(&self, space_dim: usize) -> Vec<crate::nn::LinearSpec> {
        let mut dims = vec![space_dim];
        dims.extend(&self.d_hidden);
        dims.push(1);
        chain(&dims, Activation::leaky(), Activation::Sigmoid)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GanEpoch {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub flops: u64,
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GanTrainingReport {
    pub epochs: Vec<GanEpoch>,
    pub steps: u64,
    pub flops_per_step: u64,
    pub total_flops: u64,
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanModel {
    pub generator: MlpModel,
    pub discriminator: MlpModel,
    pub noise_dim: usize,
    pub space_dim: usize,
    pub report: GanTrainingReport,
}

/// Matmul FLOPs of one generator step together with the
/// `d_steps` discriminator steps that precede it.
///
/// A discriminator step runs the generator forward on `batch` noise rows and
/// trains the discriminator on `batch` real plus `batch` fake rows; the
/// generator step trains through both networks on `batch` rows. Training a
/// network costs three forward passes (backward = 2 × forward).
pub fn gan_step_flops(g: &MlpModel, d: &MlpModel, batch: usize, d_steps: usize) -> u64 {
    let d_step = g.forward_flops(batch) + 3 * d.forward_flops(2 * batch);
    let g_step = 3 * (g.forward_flops(batch) + d.forward_flops(batch));
    d_steps as u64 * d_step + g_step
}

fn noise(rng: &mut impl rand::Rng, rows: usize, cols: usize) -> Tensor {
    let v = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::matrix(rows, cols, v).expect("rows × cols")
}

pub fn init_gan(space_dim: usize, cfg: &GanConfig) -> Result<GanModel> {
    cfg.validate()?;
    Ok(GanModel {
        generator: init_params(&cfg.generator_specs(space_dim), seed::derive(cfg.seed, "generator"))?,
        discriminator: init_params(
            &cfg.discriminator_specs(space_dim),
            seed::derive(cfg.seed, "discriminator"),
        )?,
        noise_dim: cfg.noise_dim,
        space_dim,
        report: GanTrainingReport::default(),
    })
}

pub fn train_gan(real: &Tensor, cfg: &GanConfig) -> Result<GanModel> {
    train_gan_observed(real, cfg, &mut |_| {})
}

/// Like [`train_gan`]; `observe` sees the row indices of every real batch.
pub fn train_gan_observed(
    real: &Tensor,
    cfg: &GanConfig,
    observe: &mut dyn FnMut(&[usize]),
) -> Result<GanModel> {
    cfg.validate()?;
    let n = real.nrows();
    if n == 0 {
        return Err(Error::EmptyTraining("no real samples for the gan".into()));
    }
    if n < cfg.batch_size {
        return Err(Error::InvalidArgument(format!(
            "gan needs at least batch_size = {} samples, got {n}",
            cfg.batch_size
        )));
    }
    if !real.is_finite() {
        return Err(Error::NonFinite {
            op: "gan input".into(),
        });
    }
    let mut model = init_gan(real.ncols(), cfg)?;
    let mut g_opt = AdamState::new(&model.generator.params, cfg.adam);
    let mut d_opt = AdamState::new(&model.discriminator.params, cfg.adam);
    let mut plan = BatchPlan::new((0..n).collect(), cfg.batch_size, seed::derive(cfg.seed, "gan-batches"))?;
    let mut noise_rng = seed::stream(cfg.seed, "gan-noise");
    let b = cfg.batch_size;
    let flops_per_step = gan_step_flops(&model.generator, &model.discriminator, b, cfg.d_steps_per_g_step);

    let ones = Tensor::full(&[b, 1], 1.0);
    let zeros = Tensor::zeros(&[b, 1]);
    let mut report = GanTrainingReport {
        flops_per_step,
        ..GanTrainingReport::default()
    };
    let mut last_good = model.clone();
    let start = Instant::now();

    for epoch in 0..cfg.epochs {
        let epoch_start = Instant::now();
        let (mut d_sum, mut g_sum, mut steps) = (0.0, 0.0, 0usize);
        let batches = plan.epoch();
        for group in batches.chunks_exact(cfg.d_steps_per_g_step) {
            let diverged = |model: &GanModel| Error::GanDiverged {
                epoch,
                step: steps,
                last_good: Box::new(model.clone()),
            };
            let mut d_loss = 0.0;
            for rows in group {
                observe(rows);
                let x = real.select_rows(rows);
                let z = noise(&mut noise_rng, b, cfg.noise_dim);
                match discriminator_step(&mut model, &mut d_opt, x, z, &ones, &zeros) {
                    Ok(l) if l.is_finite() => d_loss += l,
                    Ok(_) | Err(Error::NonFinite { .. }) => return Err(diverged(&last_good)),
                    Err(e) => return Err(e),
                }
            }
            let z = noise(&mut noise_rng, b, cfg.noise_dim);
            let g_loss = match generator_step(&mut model, &mut g_opt, z, &ones) {
                Ok(l) if l.is_finite() => l,
                Ok(_) | Err(Error::NonFinite { .. }) => return Err(diverged(&last_good)),
                Err(e) => return Err(e),
            };
            d_sum += d_loss / group.len() as f64;
            g_sum += g_loss;
            steps += 1;
        }
        let denom = steps.max(1) as f64;
        report.steps += steps as u64;
        report.epochs.push(GanEpoch {
            epoch,
            d_loss: d_sum / denom,
            g_loss: g_sum / denom,
            flops: flops_per_step * steps as u64,
            wall_clock_secs: epoch_start.elapsed().as_secs_f64(),
        });
        last_good = model.clone();
    }
    report.total_flops = flops_per_step * report.steps;
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    model.report = report;
    Ok(model)
}

/// Minimize `bce(D(x), 1) + bce(D(G(z)), 0)` over the discriminator.
fn discriminator_step(
    model: &mut GanModel,
    opt: &mut AdamState,
    x: Tensor,
    z: Tensor,
    ones: &Tensor,
    zeros: &Tensor,
) -> Result<f64> {
    let mut tape = Tape::new();
    let gv = model.generator.params.bind_frozen(&mut tape)?;
    let dv = model.discriminator.params.bind(&mut tape)?;
    let zv = tape.constant(z)?;
    let fake = model.generator.forward(&mut tape, &gv, zv)?;
    let xv = tape.constant(x)?;
    let d_real = model.discriminator.forward(&mut tape, &dv, xv)?;
    let d_fake = model.discriminator.forward(&mut tape, &dv, fake)?;
    let one = tape.constant(ones.clone())?;
    let zero = tape.constant(zeros.clone())?;
    let l_real = tape.bce_loss(d_real, one)?;
    let l_fake = tape.bce_loss(d_fake, zero)?;
    let loss = tape.add(l_real, l_fake)?;
    let value = tape.value(loss)?.item();
    let grads = tape.backward(loss)?;
    model.discriminator.params.zero_grad();
    model.discriminator.params.accumulate(&grads, &dv)?;
    adam_step(&mut model.discriminator.params, opt)?;
    Ok(value)
}

/// Non-saturating generator loss: minimize `bce(D(G(z)), 1)`.
fn generator_step(model: &mut GanModel, opt: &mut AdamState, z: Tensor, ones: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let gv = model.generator.params.bind(&mut tape)?;
    let dv = model.discriminator.params.bind_frozen(&mut tape)?;
    let zv = tape.constant(z)?;
    let fake = model.generator.forward(&mut tape, &gv, zv)?;
    let d_fake = model.discriminator.forward(&mut tape, &dv, fake)?;
    let one = tape.constant(ones.clone())?;
    let loss = tape.bce_loss(d_fake, one)?;
    let value = tape.value(loss)?.item();
    let grads = tape.backward(loss)?;
    model.generator.params.zero_grad();
    model.generator.params.accumulate(&grads, &gv)?;
    adam_step(&mut model.generator.params, opt)?;
    Ok(value)
}

/// `k` generator samples from fresh standard-normal noise.
pub fn sample_generator(m: &GanModel, k: usize, seed: u64) -> Result<Tensor> {
    if k == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let mut rng = seed::stream(seed, "gan-sample");
    m.generator.predict(&noise(&mut rng, k, m.noise_dim))
}

/// `D(x)` per row.
pub fn discriminator_score(m: &GanModel, x: &Tensor) -> Result<Vec<f64>> {
    if x.ncols() != m.space_dim || x.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "discriminator_score",
            left: x.shape().to_vec(),
            right: vec![m.space_dim],
        });
    }
    Ok(m.discriminator.predict(x)?.into_values())
}
