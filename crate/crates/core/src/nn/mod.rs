//! Multi-layer perceptrons on top of the autodiff tape.

mod io;
mod optim;

pub use io::{load_params, load_params_expecting, save_params, PARAM_FILE_MAGIC, PARAM_FILE_VERSION};
pub use optim::{adam_step, sgd_step, AdamConfig, AdamState};

use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

/// Hidden-layer slope used throughout the encoder and discriminator.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu(LEAKY_SLOPE)
    }

    pub fn apply(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::LeakyRelu(s) => tape.leaky_relu(x, s),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Identity => Ok(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::LeakyRelu(_) => "leaky_relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "leaky_relu" => Ok(Activation::leaky()),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::InvalidArgument(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LinearSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
        }
    }
}

/// Build a layer stack `dims[0] → dims[1] → … → dims[last]` with `hidden`
/// activations between layers and `output` on the last one.
pub fn chain(dims: &[usize], hidden: Activation, output: Activation) -> Vec<LinearSpec> {
    let n = dims.len().saturating_sub(1);
    (0..n)
        .map(|i| {
            let act = if i + 1 == n { output } else { hidden };
            LinearSpec::new(dims[i], dims[i + 1], act)
        })
        .collect()
}

/// An MLP: per layer a `weight[in × out]` and a `bias[out]`, applied as
/// `act(x · W + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layers: Vec<LinearSpec>,
    pub params: ParamSet,
}

pub(crate) fn validate_chain(specs: &[LinearSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("an MLP needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(Error::InvalidArgument(format!("layer {i} has a zero dimension")));
        }
        if let Activation::LeakyRelu(slope) = s.activation {
            if !(slope > 0.0 && slope < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "layer {i}: leaky_relu slope {slope} outside (0, 1)"
                )));
            }
        }
    }
    for (i, w) in specs.windows(2).enumerate() {
        if w[0].out_dim != w[1].in_dim {
            return Err(Error::InvalidArgument(format!(
                "layer {i} outputs {} but layer {} expects {}",
                w[0].out_dim,
                i + 1,
                w[1].in_dim
            )));
        }
    }
    Ok(())
}

/// Glorot-uniform weights, zero biases, deterministic per seed.
pub fn init_params(specs: &[LinearSpec], seed: u64) -> Result<MlpModel> {
    validate_chain(specs)?;
    let mut rng = seed::rng(seed);
    let mut params = ParamSet::new();
    for (i, s) in specs.iter().enumerate() {
        let bound = glorot_bound(s.in_dim, s.out_dim);
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let w: Vec<f64> = (0..s.in_dim * s.out_dim).map(|_| rng.sample(dist)).collect();
        params.push(format!("layer{i}.weight"), Tensor::matrix(s.in_dim, s.out_dim, w)?);
        params.push(format!("layer{i}.bias"), Tensor::zeros(&[s.out_dim]));
    }
    Ok(MlpModel {
        layers: specs.to_vec(),
        params,
    })
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl MlpModel {
    /// Wrap explicit parameters. `params` must hold `weight, bias` pairs
    /// matching `layers`.
    pub fn from_parts(layers: Vec<LinearSpec>, params: ParamSet) -> Result<Self> {
        validate_chain(&layers)?;
        if params.len() != 2 * layers.len() {
            return Err(Error::InvalidArgument(format!(
                "{} parameter tensors for {} layers",
                params.len(),
                layers.len()
            )));
        }
        for (i, s) in layers.iter().enumerate() {
            let w = params.get(2 * i).value.shape();
            let b = params.get(2 * i + 1).value.shape();
            if w != [s.in_dim, s.out_dim] || b != [s.out_dim] {
                return Err(Error::ShapeMismatch {
                    op: "MlpModel::from_parts",
                    left: vec![s.in_dim, s.out_dim],
                    right: w.to_vec(),
                });
            }
        }
        Ok(Self { layers, params })
    }

    pub fn layers(&self) -> &[LinearSpec] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Forward pass on `tape` using parameter vars from [`ParamSet::bind`]
    /// (or [`ParamSet::bind_frozen`]).
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var> {
        let cols = tape.value(x)?.ncols();
        if cols != self.in_dim() || tape.value(x)?.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "mlp_forward",
                left: tape.value(x)?.shape().to_vec(),
                right: vec![self.in_dim()],
            });
        }
        let mut h = x;
        for (i, spec) in self.layers.iter().enumerate() {
            let z = tape.matmul(h, bound[2 * i])?;
            let z = tape.add_row_broadcast(z, bound[2 * i + 1])?;
            h = spec.activation.apply(tape, z)?;
        }
        Ok(h)
    }

    /// Inference on a `[batch × in]` matrix without recording gradients.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape)?;
        let xv = tape.constant(x.clone())?;
        let y = self.forward(&mut tape, &bound, xv)?;
        Ok(tape.value(y)?.clone())
    }

    /// Matmul FLOPs of one forward pass: `Σ 2·in·out·batch`.
    pub fn forward_flops(&self, batch: usize) -> u64 {
        self.layers
            .iter()
            .map(|l| 2 * (l.in_dim * l.out_dim * batch) as u64)
            .sum()
    }
}
