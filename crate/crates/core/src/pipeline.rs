//! The two experiment arms and their comparison.
//!
//! The dual-space arm trains an autoencoder on held-in data, a GAN on the
//! standardized codes, then decodes GAN samples. The direct arm hands the raw
//! held-in rows to the same GAN trainer. Both GAN phases see the same row
//! order, batch shuffling seed, noise seed and hyperparameters.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{
    decode, encode, reconstruction_error, train_autoencoder_observed, AeConfig, AeEpoch, AutoencoderModel,
};
use crate::data::{
    format_f64, gen_gaussian_ring, gen_plane, gen_shapes_dataset, load_idx, read_csv_matrix, split_holdout,
    write_csv_matrix, write_pgm_grid, Dataset, HoldoutRule, RingParams, ShapeRanges,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_arm, EvalConfig, MetricsReport};
use crate::gan::{gan_step_flops, sample_generator, train_gan_observed, GanConfig, GanEpoch, GanModel};
use crate::nn::{save_params, MlpModel};
use crate::seed;
use crate::tensor::Tensor;

/// Where the data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSpec {
    Ring { n: usize, params: RingParams },
    Shapes { n: usize, ranges: ShapeRanges },
    Plane { n: usize, rank: usize, dim: usize },
    Idx { images: PathBuf, labels: Option<PathBuf> },
    Csv { path: PathBuf },
}

impl DataSpec {
    pub fn ring_default() -> Self {
        DataSpec::Ring {
            n: 4096,
            params: RingParams::new(8, 2.0, 0.1),
        }
    }

    pub fn shapes_default() -> Self {
        DataSpec::Shapes {
            n: 4096,
            ranges: ShapeRanges::default_for_side(16),
        }
    }

    pub fn build(&self, seed: u64) -> Result<Dataset> {
        match self {
            DataSpec::Ring { n, params } => gen_gaussian_ring(params, *n, seed),
            DataSpec::Shapes { n, ranges } => gen_shapes_dataset(ranges, *n, seed),
            DataSpec::Plane { n, rank, dim } => gen_plane(*rank, *dim, *n, seed),
            DataSpec::Idx { images, labels } => load_idx(images, labels.as_deref()),
            DataSpec::Csv { path } => {
                let (_, m) = read_csv_matrix(path)?;
                let name = path.file_stem().map_or("csv".into(), |s| s.to_string_lossy().into_owned());
                Dataset::from_matrix(&name, m)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub data: DataSpec,
    pub holdout: HoldoutRule,
    pub ae: AeConfig,
    /// Shared by both arms.
    pub gan: GanConfig,
    pub eval: EvalConfig,
    /// Master seed; component seeds are derived from it by [`resolved`].
    ///
    /// [`resolved`]: PipelineConfig::resolved
    pub seed: u64,
}

impl PipelineConfig {
    pub fn ring_default() -> Self {
        Self {
            data: DataSpec::ring_default(),
            holdout: HoldoutRule::None,
            ae: AeConfig::ring_default(),
            gan: GanConfig::ring_default(),
            eval: EvalConfig::default(),
            seed: 0,
        }
    }

    pub fn shapes_default() -> Self {
        Self {
            data: DataSpec::shapes_default(),
            holdout: HoldoutRule::None,
            ae: AeConfig::shapes_default(),
            gan: GanConfig::shapes_default(),
            eval: EvalConfig::default(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Copy with every component seed derived from the master seed.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.ae.seed = seed::derive(self.seed, "ae");
        c.gan.seed = seed::derive(self.seed, "gan");
        c.eval.seed = seed::derive(self.seed, "eval");
        c
    }

    pub fn data_seed(&self) -> u64 {
        seed::derive(self.seed, "data")
    }

    pub fn sample_seed(&self) -> u64 {
        seed::derive(self.seed, "samples")
    }

    /// Field-level checks that need no data.
    pub fn validate(&self) -> Result<()> {
        self.gan.validate().map_err(|e| Error::Config(format!("gan: {e}")))?;
        let positive = [
            ("ae.latent_dim", self.ae.latent_dim),
            ("ae.batch_size", self.ae.batch_size),
            ("eval.min_count", self.eval.min_count),
            ("eval.heldout_refs", self.eval.heldout_refs),
            ("eval.max_points", self.eval.max_points),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.eval.n_samples < 2 {
            return Err(Error::Config("eval.n_samples must be at least 2".into()));
        }
        if !(self.eval.tau_quantile > 0.0 && self.eval.tau_quantile <= 1.0) {
            return Err(Error::Config(format!(
                "eval.tau_quantile must be in (0, 1], got {}",
                self.eval.tau_quantile
            )));
        }
        if let Some(t) = self.eval.tau {
            if !(t > 0.0) {
                return Err(Error::Config(format!("eval.tau must be positive, got {t}")));
            }
        }
        let adam = [("ae.adam", &self.ae.adam), ("gan.adam", &self.gan.adam)];
        for (name, a) in adam {
            if !(a.lr > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
                return Err(Error::Config(format!("{name}: lr, eps must be > 0 and betas in [0, 1)")));
            }
        }
        match &self.data {
            DataSpec::Ring { n, .. } | DataSpec::Shapes { n, .. } | DataSpec::Plane { n, .. } if *n == 0 => {
                Err(Error::Config("data.n must be positive".into()))
            }
            DataSpec::Shapes { ranges, .. } => ranges.validate().map_err(|e| Error::Config(format!("data: {e}"))),
            _ => Ok(()),
        }
    }
}

/// Generate or load the data and apply the hold-out rule.
pub fn prepare_dataset(cfg: &PipelineConfig) -> Result<Dataset> {
    let d = cfg.data.build(cfg.data_seed())?;
    split_holdout(d, &cfg.holdout)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    DualSpace,
    Direct,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::DualSpace => "dual_space",
            Arm::Direct => "direct",
        }
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub name: String,
    pub wall_clock_secs: f64,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub arm: Arm,
    pub seed: u64,
    /// Dimension the GAN was trained in.
    pub gan_space_dim: usize,
    pub phases: Vec<PhaseReport>,
    pub ae_losses: Vec<AeEpoch>,
    pub gan_losses: Vec<GanEpoch>,
    pub ae_flops_per_step: Option<u64>,
    pub gan_flops_per_step: u64,
    pub gan_steps: u64,
    pub metrics: MetricsReport,
    pub config: PipelineConfig,
}

impl ExperimentReport {
    pub fn phase(&self, name: &str) -> Option<&PhaseReport> {
        self.phases.iter().find(|p| p.name == name)
    }

    pub fn total_flops(&self) -> u64 {
        self.phases.iter().map(|p| p.flops).sum()
    }

    pub fn total_wall_clock(&self) -> f64 {
        self.phases.iter().map(|p| p.wall_clock_secs).sum()
    }

    pub fn gan_flops(&self) -> u64 {
        self.phase("gan_train").map_or(0, |p| p.flops)
    }

    pub fn gan_wall_clock(&self) -> f64 {
        self.phase("gan_train").map_or(0.0, |p| p.wall_clock_secs)
    }
}

/// Report plus the artifacts an arm produces.
#[derive(Clone, Debug)]
pub struct ArmOutput {
    pub report: ExperimentReport,
    /// Generated samples in data space.
    pub samples: Tensor,
    /// Raw GAN samples in latent space (dual arm only).
    pub latent_samples: Option<Tensor>,
    pub gan: GanModel,
    pub autoencoder: Option<AutoencoderModel>,
}

/// `steps` training steps of one network: forward plus a backward at twice
/// the forward cost.
pub fn flops_estimate(model: &MlpModel, batch: usize, steps: u64) -> u64 {
    3 * model.forward_flops(batch) * steps
}

fn timed<T>(phases: &mut Vec<PhaseReport>, name: &str, f: impl FnOnce() -> Result<(T, u64)>) -> Result<T> {
    let start = Instant::now();
    let (out, flops) = f()?;
    phases.push(PhaseReport {
        name: name.into(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        flops,
    });
    Ok(out)
}

pub fn run_dual_space(cfg: &PipelineConfig, d: &Dataset) -> Result<ArmOutput> {
    run_dual_space_observed(cfg, d, &mut |_, _| {})
}

/// Like [`run_dual_space`]; `observe(phase, rows)` sees the dataset row
/// indices of every training batch.
pub fn run_dual_space_observed(
    cfg: &PipelineConfig,
    d: &Dataset,
    observe: &mut dyn FnMut(&str, &[usize]),
) -> Result<ArmOutput> {
    let cfg = cfg.resolved();
    let train_idx = d.training_indices();
    let heldin = d.samples.select_rows(&train_idx);
    let mut phases = Vec::new();

    let ae = timed(&mut phases, "ae_train", || {
        let m = train_autoencoder_observed(d, &cfg.ae, &mut |rows| observe("ae_train", rows))?;
        let flops = m.report.total_flops;
        Ok((m, flops))
    })
    .map_err(|e| e.in_phase("ae_train"))?;

    let codes = timed(&mut phases, "encode", || {
        let c = encode(&ae, &heldin)?;
        Ok((c.codes, ae.encoder.forward_flops(heldin.nrows())))
    })
    .map_err(|e| e.in_phase("encode"))?;

    let gan = timed(&mut phases, "gan_train", || {
        let m = train_gan_observed(&codes, &cfg.gan, &mut |rows| {
            let mapped: Vec<usize> = rows.iter().map(|&r| train_idx[r]).collect();
            observe("gan_train", &mapped);
        })?;
        let flops = m.report.total_flops;
        Ok((m, flops))
    })
    .map_err(|e| e.in_phase("gan_train"))?;

    let k = cfg.eval.n_samples;
    let latent = timed(&mut phases, "sample", || {
        Ok((sample_generator(&gan, k, cfg.sample_seed())?, gan.generator.forward_flops(k)))
    })
    .map_err(|e| e.in_phase("sample"))?;

    let samples = timed(&mut phases, "decode", || {
        Ok((decode(&ae, &latent)?, ae.decoder.forward_flops(k)))
    })
    .map_err(|e| e.in_phase("decode"))?;

    let mut metrics = evaluate_arm(&samples, d, &cfg.holdout, &cfg.eval).map_err(|e| e.in_phase("eval"))?;
    metrics.reconstruction = Some(reconstruction_error(&ae, d).map_err(|e| e.in_phase("eval"))?);

    let report = ExperimentReport {
        arm: Arm::DualSpace,
        seed: cfg.seed,
        gan_space_dim: gan.space_dim,
        phases,
        ae_losses: ae.report.epochs.clone(),
        gan_losses: gan.report.epochs.clone(),
        ae_flops_per_step: Some(ae.report.flops_per_step),
        gan_flops_per_step: gan.report.flops_per_step,
        gan_steps: gan.report.steps,
        metrics,
        config: cfg,
    };
    Ok(ArmOutput {
        report,
        samples,
        latent_samples: Some(latent),
        gan,
        autoencoder: Some(ae),
    })
}

pub fn run_direct(cfg: &PipelineConfig, d: &Dataset) -> Result<ArmOutput> {
    run_direct_observed(cfg, d, &mut |_, _| {})
}

/// Like [`run_direct`]; `observe(phase, rows)` sees the dataset row indices
/// of every training batch.
pub fn run_direct_observed(
    cfg: &PipelineConfig,
    d: &Dataset,
    observe: &mut dyn FnMut(&str, &[usize]),
) -> Result<ArmOutput> {
    let cfg = cfg.resolved();
    let train_idx = d.training_indices();
    let heldin = d.samples.select_rows(&train_idx);
    let mut phases = Vec::new();

    let gan = timed(&mut phases, "gan_train", || {
        let m = train_gan_observed(&heldin, &cfg.gan, &mut |rows| {
            let mapped: Vec<usize> = rows.iter().map(|&r| train_idx[r]).collect();
            observe("gan_train", &mapped);
        })?;
        let flops = m.report.total_flops;
        Ok((m, flops))
    })
    .map_err(|e| e.in_phase("gan_train"))?;

    let k = cfg.eval.n_samples;
    let samples = timed(&mut phases, "sample", || {
        Ok((sample_generator(&gan, k, cfg.sample_seed())?, gan.generator.forward_flops(k)))
    })
    .map_err(|e| e.in_phase("sample"))?;

    let metrics = evaluate_arm(&samples, d, &cfg.holdout, &cfg.eval).map_err(|e| e.in_phase("eval"))?;
    let report = ExperimentReport {
        arm: Arm::Direct,
        seed: cfg.seed,
        gan_space_dim: gan.space_dim,
        phases,
        ae_losses: Vec::new(),
        gan_losses: gan.report.epochs.clone(),
        ae_flops_per_step: None,
        gan_flops_per_step: gan.report.flops_per_step,
        gan_steps: gan.report.steps,
        metrics,
        config: cfg,
    };
    Ok(ArmOutput {
        report,
        samples,
        latent_samples: None,
        gan,
        autoencoder: None,
    })
}

pub fn run_arm(arm: Arm, cfg: &PipelineConfig, d: &Dataset) -> Result<ArmOutput> {
    match arm {
        Arm::DualSpace => run_dual_space(cfg, d),
        Arm::Direct => run_direct(cfg, d),
    }
}

/// Analytic GAN-phase per-step FLOPs of an arm trained in `space_dim`.
pub fn gan_flops_per_step(cfg: &GanConfig, space_dim: usize) -> Result<u64> {
    let g = crate::nn::init_params(&cfg.generator_specs(space_dim), 0)?;
    let d = crate::nn::init_params(&cfg.discriminator_specs(space_dim), 0)?;
    Ok(gan_step_flops(&g, &d, cfg.batch_size, cfg.d_steps_per_g_step))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub name: String,
    pub dual_space: Option<f64>,
    pub direct: Option<f64>,
    /// `dual_space − direct`.
    pub delta: Option<f64>,
}

/// Speedups are `direct / dual_space`, so values above 1 favour the dual arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub gan_flops_per_step_ratio: f64,
    pub gan_flops_ratio: f64,
    pub gan_wall_clock_ratio: f64,
    /// Includes autoencoder training, encoding and decoding.
    pub total_flops_ratio: f64,
    pub total_wall_clock_ratio: f64,
    pub metrics: Vec<MetricDelta>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == den {
        1.0
    } else {
        num / den
    }
}

pub fn compare(dual: &ExperimentReport, direct: &ExperimentReport) -> Result<ComparisonSummary> {
    let (a, b) = (&dual.config, &direct.config);
    let checks: [(&str, bool); 6] = [
        ("data", a.data == b.data),
        ("holdout", a.holdout == b.holdout),
        ("seed", a.seed == b.seed),
        ("gan.epochs", a.gan.epochs == b.gan.epochs),
        ("gan.batch_size", a.gan.batch_size == b.gan.batch_size),
        ("gan.d_steps_per_g_step", a.gan.d_steps_per_g_step == b.gan.d_steps_per_g_step),
    ];
    let bad: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    if !bad.is_empty() {
        return Err(Error::Config(format!(
            "reports are not comparable; they differ in {}",
            bad.join(", ")
        )));
    }

    let da = dual.metrics.entries();
    let db = direct.metrics.entries();
    let metrics = da
        .into_iter()
        .zip(db)
        .map(|((name, x), (_, y))| MetricDelta {
            name: name.into(),
            dual_space: x,
            direct: y,
            delta: x.zip(y).map(|(x, y)| x - y),
        })
        .collect();

    Ok(ComparisonSummary {
        gan_flops_per_step_ratio: ratio(direct.gan_flops_per_step as f64, dual.gan_flops_per_step as f64),
        gan_flops_ratio: ratio(direct.gan_flops() as f64, dual.gan_flops() as f64),
        gan_wall_clock_ratio: ratio(direct.gan_wall_clock(), dual.gan_wall_clock()),
        total_flops_ratio: ratio(direct.total_flops() as f64, dual.total_flops() as f64),
        total_wall_clock_ratio: ratio(direct.total_wall_clock(), dual.total_wall_clock()),
        metrics,
    })
}

/// Per-epoch losses as CSV. Wall-clock is left out so reruns are
/// byte-identical.
pub fn write_losses_csv(path: &Path, r: &ExperimentReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rec = |fields: [String; 6]| w.write_record(&fields).map_err(|e| csv_err(path, e));
    rec(["phase", "epoch", "loss", "d_loss", "g_loss", "flops"].map(String::from))?;
    for e in &r.ae_losses {
        rec([
            "ae_train".into(),
            e.epoch.to_string(),
            format_f64(e.loss),
            String::new(),
            String::new(),
            e.flops.to_string(),
        ])?;
    }
    for e in &r.gan_losses {
        rec([
            "gan_train".into(),
            e.epoch.to_string(),
            String::new(),
            format_f64(e.d_loss),
            format_f64(e.g_loss),
            e.flops.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format("csv", format!("{}: {other:?}", path.display())),
    }
}

/// Images per row in sample grids.
pub const GRID_COLS: usize = 16;
/// Samples shown in a grid.
pub const GRID_SAMPLES: usize = 128;

/// Losses, samples and model files for one arm under `dir`.
pub fn write_arm_artifacts(dir: &Path, out: &ArmOutput, d: &Dataset) -> Result<()> {
    let arm = out.report.arm.name();
    let models = dir.join("models");
    fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;

    write_losses_csv(&dir.join(format!("losses_{arm}.csv")), &out.report)?;

    let header: Vec<String> = (0..out.samples.ncols()).map(|j| format!("x{j}")).collect();
    write_csv_matrix(dir.join(format!("samples_{arm}.csv")), &header, &out.samples)?;
    if let (true, Some(dims)) = (d.meta.pixel, d.meta.image_dims) {
        let k = out.samples.nrows().min(GRID_SAMPLES);
        let shown = out.samples.select_rows(&(0..k).collect::<Vec<_>>());
        write_pgm_grid(dir.join(format!("samples_{arm}.pgm")), &shown, dims, GRID_COLS)?;
    }
    if let Some(z) = &out.latent_samples {
        let header: Vec<String> = (0..z.ncols()).map(|j| format!("z{j}")).collect();
        write_csv_matrix(dir.join(format!("latent_samples_{arm}.csv")), &header, z)?;
    }

    save_params(&out.gan.generator, models.join(format!("{arm}_generator.params")))?;
    save_params(&out.gan.discriminator, models.join(format!("{arm}_discriminator.params")))?;
    if let Some(ae) = &out.autoencoder {
        save_params(&ae.encoder, models.join("encoder.params"))?;
        save_params(&ae.decoder, models.join("decoder.params"))?;
        let stats = models.join("latent_stats.json");
        let json = serde_json::to_string_pretty(&ae.stats).map_err(|e| Error::format("json", e.to_string()))?;
        fs::write(&stats, json).map_err(|e| Error::io(&stats, e))?;
    }
    Ok(())
}
