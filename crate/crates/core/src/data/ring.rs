use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetMeta, Generator};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

/// Mixture of `n_modes` isotropic Gaussians evenly spaced on a circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingParams {
    pub n_modes: usize,
    pub radius: f64,
    pub sigma: f64,
}

impl RingParams {
    pub fn new(n_modes: usize, radius: f64, sigma: f64) -> Self {
        Self {
            n_modes,
            radius,
            sigma,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_modes < 2 {
            return Err(Error::InvalidArgument(format!(
                "ring needs at least 2 modes, got {}",
                self.n_modes
            )));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("ring sigma must be > 0, got {}", self.sigma)));
        }
        if !self.radius.is_finite() || self.radius <= 0.0 {
            return Err(Error::InvalidArgument(format!("ring radius must be > 0, got {}", self.radius)));
        }
        Ok(())
    }
}

/// Mode `k` sits at angle `2πk / n_modes`.
pub fn ring_centers(p: &RingParams) -> Tensor {
    let values = (0..p.n_modes)
        .flat_map(|k| {
            let a = 2.0 * PI * k as f64 / p.n_modes as f64;
            [p.radius * a.cos(), p.radius * a.sin()]
        })
        .collect();
    Tensor::matrix(p.n_modes, 2, values).expect("n_modes × 2")
}

/// `n` samples; the mode of each is drawn uniformly and stored as its label.
pub fn gen_gaussian_ring(p: &RingParams, n: usize, seed: u64) -> Result<Dataset> {
    p.validate()?;
    let centers = ring_centers(p);
    let mut rng = seed::stream(seed, "ring");
    let mut values = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rand::Rng::random_range(&mut rng, 0..p.n_modes);
        let c = centers.row(k);
        let ex: f64 = StandardNormal.sample(&mut rng);
        let ey: f64 = StandardNormal.sample(&mut rng);
        values.push(c[0] + p.sigma * ex);
        values.push(c[1] + p.sigma * ey);
        labels.push(k);
    }
    Dataset::new(
        Tensor::matrix(n, 2, values)?,
        Some(labels),
        DatasetMeta {
            name: format!("ring{}", p.n_modes),
            dim: 2,
            seed: Some(seed),
            generator: Generator::Ring(*p),
            pixel: false,
            image_dims: None,
        },
    )
}
