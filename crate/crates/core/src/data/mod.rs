//! Datasets: generation, ingestion, hold-out masks, batching and
//! standardization.
//!
//! Held-out samples are masked, never deleted: they stay in the dataset for
//! evaluation, and [`BatchPlan`] only ever draws from the training indices.

mod export;
mod idx;
mod ring;
mod shapes;
mod standardize;

pub use export::{read_csv_matrix, write_csv_matrix, write_pgm_grid, format_f64};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use ring::{gen_gaussian_ring, ring_centers, RingParams};
pub use shapes::{
    gen_shapes_dataset, rasterize, sample_shape_specs, ShapeKind, ShapeParam, ShapeRanges, ShapeSpec,
};
pub use standardize::{standardize, Standardizer, STD_FLOOR};

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

/// How a dataset was produced; enough to regenerate it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Ring(RingParams),
    Shapes(ShapeRanges),
    Plane { rank: usize, dim: usize },
    Idx { images: String, labels: Option<String> },
    Csv { path: String },
    Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub dim: usize,
    pub seed: Option<u64>,
    pub generator: Generator,
    /// Values live in `[0, 1]` (images).
    pub pixel: bool,
    /// `(rows, cols)` for image data.
    pub image_dims: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Tensor,
    pub labels: Option<Vec<usize>>,
    heldout: Vec<bool>,
    /// Generator parameters per sample (shapes data only).
    pub shape_specs: Option<Vec<ShapeSpec>>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(samples: Tensor, labels: Option<Vec<usize>>, meta: DatasetMeta) -> Result<Self> {
        if samples.shape().len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "dataset samples must be a matrix, got shape {:?}",
                samples.shape()
            )));
        }
        if !samples.is_finite() {
            return Err(Error::NonFinite {
                op: "dataset".into(),
            });
        }
        let n = samples.nrows();
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "{} labels for {n} samples",
                    l.len()
                )));
            }
        }
        Ok(Self {
            samples,
            labels,
            heldout: vec![false; n],
            shape_specs: None,
            meta,
        })
    }

    /// Wrap a bare matrix.
    pub fn from_matrix(name: &str, samples: Tensor) -> Result<Self> {
        let dim = samples.ncols();
        Self::new(
            samples,
            None,
            DatasetMeta {
                name: name.into(),
                dim,
                seed: None,
                generator: Generator::Matrix,
                pixel: false,
                image_dims: None,
            },
        )
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn heldout_mask(&self) -> &[bool] {
        &self.heldout
    }

    pub fn training_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.heldout[i]).collect()
    }

    pub fn heldout_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.heldout[i]).collect()
    }

    pub fn training_samples(&self) -> Tensor {
        self.samples.select_rows(&self.training_indices())
    }

    pub fn heldout_samples(&self) -> Tensor {
        self.samples.select_rows(&self.heldout_indices())
    }

    /// Shuffled mini-batches over the training (non-held-out) rows.
    pub fn batch_plan(&self, batch_size: usize, seed: u64) -> Result<BatchPlan> {
        BatchPlan::new(self.training_indices(), batch_size, seed)
    }
}

/// Which samples to exclude from training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum HoldoutRule {
    #[default]
    None,
    /// Exclude every sample carrying one of these labels (mixture modes).
    Labels { labels: BTreeSet<usize> },
    /// Exclude shapes whose generator parameter lies in `[min, max]`.
    ParamRange { param: ShapeParam, min: f64, max: f64 },
}

impl HoldoutRule {
    /// Parse `none`, `labels:3,5` or `<param>:<min>..<max>`
    /// (e.g. `rotation:60..120`).
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(HoldoutRule::None);
        }
        let (head, tail) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("hold-out rule `{s}` needs `kind:args`")))?;
        if head == "labels" {
            let labels = tail
                .split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad label `{t}` in hold-out rule")))
                })
                .collect::<Result<BTreeSet<_>>>()?;
            return Ok(HoldoutRule::Labels { labels });
        }
        let param = ShapeParam::parse(head)?;
        let (lo, hi) = tail
            .split_once("..")
            .ok_or_else(|| Error::Config(format!("range `{tail}` must look like `min..max`")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number `{t}` in hold-out rule")))
        };
        let (min, max) = (parse(lo)?, parse(hi)?);
        if min > max {
            return Err(Error::Config(format!("empty hold-out range {min}..{max}")));
        }
        Ok(HoldoutRule::ParamRange { param, min, max })
    }

    pub fn is_none(&self) -> bool {
        match self {
            HoldoutRule::None => true,
            HoldoutRule::Labels { labels } => labels.is_empty(),
            HoldoutRule::ParamRange { .. } => false,
        }
    }
}

impl std::fmt::Display for HoldoutRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HoldoutRule::None => write!(f, "none"),
            HoldoutRule::Labels { labels } => {
                let l: Vec<String> = labels.iter().map(ToString::to_string).collect();
                write!(f, "labels:{}", l.join(","))
            }
            HoldoutRule::ParamRange { param, min, max } => {
                write!(f, "{}:{min}..{max}", param.name())
            }
        }
    }
}

/// Apply `rule`, replacing any existing mask.
pub fn split_holdout(mut d: Dataset, rule: &HoldoutRule) -> Result<Dataset> {
    let mask: Vec<bool> = match rule {
        HoldoutRule::None => vec![false; d.len()],
        HoldoutRule::Labels { labels } => {
            if labels.is_empty() {
                vec![false; d.len()]
            } else {
                let l = d.labels.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("label hold-out rule on an unlabeled dataset".into())
                })?;
                l.iter().map(|x| labels.contains(x)).collect()
            }
        }
        HoldoutRule::ParamRange { param, min, max } => {
            let specs = d.shape_specs.as_ref().ok_or_else(|| {
                Error::InvalidArgument(
                    "parameter-range hold-out rule needs a dataset with generator parameters".into(),
                )
            })?;
            specs
                .iter()
                .map(|s| {
                    let v = s.param(*param);
                    v >= *min && v <= *max
                })
                .collect()
        }
    };
    if !d.is_empty() && mask.iter().all(|&m| m) {
        return Err(Error::EmptyTraining(format!(
            "hold-out rule `{rule}` excludes every sample"
        )));
    }
    d.heldout = mask;
    Ok(d)
}

/// Shuffled index batches. Each call to [`BatchPlan::epoch`] reshuffles and
/// drops the trailing partial batch, so every step sees exactly `batch_size`
/// rows.
#[derive(Clone, Debug)]
pub struct BatchPlan {
    indices: Vec<usize>,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BatchPlan {
    pub fn new(indices: Vec<usize>, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        Ok(Self {
            indices,
            batch_size,
            rng: seed::stream(seed, "batches"),
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.indices.len() / self.batch_size
    }

    pub fn epoch(&mut self) -> Vec<Vec<usize>> {
        let mut order = self.indices.clone();
        order.shuffle(&mut self.rng);
        order
            .chunks_exact(self.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }
}

/// Points on a random `rank`-dimensional linear subspace of `R^dim`:
/// `x = z · B` with `z ~ N(0, I_rank)` and Gaussian `B`.
pub fn gen_plane(rank: usize, dim: usize, n: usize, seed: u64) -> Result<Dataset> {
    if rank == 0 || rank >= dim {
        return Err(Error::InvalidArgument(format!(
            "plane rank {rank} must be in [1, {dim})"
        )));
    }
    let mut rng = seed::stream(seed, "plane");
    let basis: Vec<f64> = (0..rank * dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut values = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let z: Vec<f64> = (0..rank).map(|_| StandardNormal.sample(&mut rng)).collect();
        for j in 0..dim {
            values.push((0..rank).map(|r| z[r] * basis[r * dim + j]).sum());
        }
    }
    Dataset::new(
        Tensor::matrix(n, dim, values)?,
        None,
        DatasetMeta {
            name: format!("plane{rank}in{dim}"),
            dim,
            seed: Some(seed),
            generator: Generator::Plane { rank, dim },
            pixel: false,
            image_dims: None,
        },
    )
}
