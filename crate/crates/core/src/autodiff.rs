//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of one forward pass. Values live on the
//! tape; callers hold [`Var`] handles. [`Tape::backward`] walks the recording
//! in reverse exactly once and returns [`Gradients`] for every node that
//! requires them. The tape is then spent; build a fresh one for the next pass.
//!
//! Every op checks its output for NaN/Inf and fails with
//! [`Error::NonFinite`] instead of propagating it.
//!
//! ```
//! use dualspace::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::scalar(3.0), true).unwrap();
//! let y = tape.mul(x, x).unwrap();
//! let loss = tape.sum(y).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap(), &[6.0]);
//! ```

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{matmul_kernel, Tensor};

/// Probability clamp used by [`Tape::bce_loss`].
pub const BCE_EPS: f64 = 1e-7;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a specific [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    idx: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.idx
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Mul(Var, Var),
    Sum(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Mse(Var, Var),
    Bce(Var, Var),
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Matmul multiply-add counts observed on a tape, two FLOPs per multiply-add.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopCounter {
    pub forward: u64,
    pub backward: u64,
}

pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    consumed: bool,
    flops: FlopCounter,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            consumed: false,
            flops: FlopCounter::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn flops(&self) -> FlopCounter {
        self.flops
    }

    /// Record an input tensor. Non-finite inputs are rejected.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                op: "leaf".into(),
            });
        }
        self.ensure_live()?;
        Ok(self.push(value, requires_grad, Op::Leaf))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        self.check(v)?;
        Ok(&self.nodes[v.idx].value)
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn ensure_live(&self) -> Result<()> {
        if self.consumed {
            Err(Error::TapeConsumed)
        } else {
            Ok(())
        }
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(Error::UnknownVar(v.idx));
        }
        Ok(())
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.idx]
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.idx].requires_grad)
    }

    fn emit(&mut self, name: &str, value: Tensor, inputs: &[Var], op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name.into() });
        }
        let rg = self.rg(inputs);
        Ok(self.push(value, rg, op))
    }

    fn prepare(&self, vars: &[Var]) -> Result<()> {
        self.ensure_live()?;
        vars.iter().try_for_each(|&v| self.check(v))
    }

    fn matrix_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let s = self.node(v).value.shape();
        if s.len() != 2 {
            return Err(Error::ShapeMismatch {
                op,
                left: s.to_vec(),
                right: vec![],
            });
        }
        Ok((s[0], s[1]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.node(a).value.shape(), self.node(b).value.shape());
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.prepare(&[a, b])?;
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (k2, n) = self.matrix_dims("matmul", b)?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let out = matmul_kernel(
            self.node(a).value.values(),
            self.node(b).value.values(),
            m,
            k,
            n,
        );
        self.flops.forward += 2 * (m * k * n) as u64;
        self.emit("matmul", Tensor::matrix(m, n, out)?, &[a, b], Op::MatMul(a, b))
    }

    /// `out[i, j] = a[i, j] + bias[j]`.
    pub fn add_row_broadcast(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.prepare(&[a, bias])?;
        let (m, n) = self.matrix_dims("add_row_broadcast", a)?;
        let bv = &self.node(bias).value;
        if bv.len() != n {
            return Err(Error::ShapeMismatch {
                op: "add_row_broadcast",
                left: vec![m, n],
                right: bv.shape().to_vec(),
            });
        }
        let b = bv.values();
        let mut out = self.node(a).value.values().to_vec();
        for row in out.chunks_exact_mut(n.max(1)) {
            for (o, &bj) in row.iter_mut().zip(b) {
                *o += bj;
            }
        }
        self.emit(
            "add_row_broadcast",
            Tensor::matrix(m, n, out)?,
            &[a, bias],
            Op::AddRow(a, bias),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.prepare(&[a, b])?;
        self.same_shape("add", a, b)?;
        let (av, bv) = (&self.node(a).value, &self.node(b).value);
        let out: Vec<f64> = av.values().iter().zip(bv.values()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(av.shape().to_vec(), out)?;
        self.emit("add", t, &[a, b], Op::Add(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.prepare(&[a])?;
        let t = self.node(a).value.map(|x| c * x);
        self.emit("scale", t, &[a], Op::Scale(a, c))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.prepare(&[a, b])?;
        self.same_shape("mul", a, b)?;
        let (av, bv) = (&self.node(a).value, &self.node(b).value);
        let out: Vec<f64> = av.values().iter().zip(bv.values()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(av.shape().to_vec(), out)?;
        self.emit("mul", t, &[a, b], Op::Mul(a, b))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.prepare(&[a])?;
        let s = self.node(a).value.values().iter().sum();
        self.emit("sum", Tensor::scalar(s), &[a], Op::Sum(a))
    }

    /// `x` for `x > 0`, otherwise `slope · x`. The derivative at 0 is `slope`.
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.prepare(&[a])?;
        if !(slope > 0.0 && slope < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "leaky_relu slope must be in (0, 1), got {slope}"
            )));
        }
        let t = self
            .node(a)
            .value
            .map(|x| if x > 0.0 { x } else { slope * x });
        self.emit("leaky_relu", t, &[a], Op::LeakyRelu(a, slope))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.prepare(&[a])?;
        let t = self.node(a).value.map(stable_sigmoid);
        self.emit("sigmoid", t, &[a], Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.prepare(&[a])?;
        let t = self.node(a).value.map(f64::tanh);
        self.emit("tanh", t, &[a], Op::Tanh(a))
    }

    /// Mean of `(pred - target)^2` over every element.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.prepare(&[pred, target])?;
        self.same_shape("mse_loss", pred, target)?;
        let (p, t) = (&self.node(pred).value, &self.node(target).value);
        let n = p.len().max(1) as f64;
        let s: f64 = p
            .values()
            .iter()
            .zip(t.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.emit(
            "mse_loss",
            Tensor::scalar(s / n),
            &[pred, target],
            Op::Mse(pred, target),
        )
    }

    /// Mean binary cross-entropy with probabilities clamped to
    /// `[BCE_EPS, 1 - BCE_EPS]`. Targets receive no gradient.
    pub fn bce_loss(&mut self, prob: Var, target: Var) -> Result<Var> {
        self.prepare(&[prob, target])?;
        self.same_shape("bce_loss", prob, target)?;
        let (p, y) = (&self.node(prob).value, &self.node(target).value);
        let n = p.len().max(1) as f64;
        let s: f64 = p
            .values()
            .iter()
            .zip(y.values())
            .map(|(&p, &y)| {
                let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        self.emit(
            "bce_loss",
            Tensor::scalar(s / n),
            &[prob],
            Op::Bce(prob, target),
        )
    }

    /// Reverse sweep from a scalar `loss`. Spends the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        self.ensure_live()?;
        self.check(loss)?;
        let lv = &self.node(loss).value;
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.node(loss).requires_grad {
            grads[loss.idx] = Some(vec![1.0]);
        }

        for idx in (0..=loss.idx).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let op = self.nodes[idx].op;
            self.backprop_node(idx, op, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        for (i, g) in grads.iter_mut().enumerate() {
            if !self.nodes[i].requires_grad {
                *g = None;
            }
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    fn backprop_node(
        &mut self,
        idx: usize,
        op: Op,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) -> Result<()> {
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.idx].requires_grad;
        let acc = |v: Var, delta: Vec<f64>, grads: &mut [Option<Vec<f64>>]| {
            match &mut grads[v.idx] {
                Some(existing) => {
                    for (e, d) in existing.iter_mut().zip(delta) {
                        *e += d;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        };

        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (&nodes[a.idx].value, &nodes[b.idx].value);
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if wants(a) {
                    // dA = dC · Bᵀ
                    let bvals = bv.values();
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bvals[p * n..(p + 1) * n];
                            da[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    self.flops.backward += 2 * (m * k * n) as u64;
                    acc(a, da, grads);
                }
                if wants(b) {
                    // dB = Aᵀ · dC
                    let avals = av.values();
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = avals[i * k + p];
                            for (d, &gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += aip * gv;
                            }
                        }
                    }
                    self.flops.backward += 2 * (m * k * n) as u64;
                    acc(b, db, grads);
                }
            }
            Op::AddRow(a, bias) => {
                let n = nodes[bias.idx].value.len();
                if wants(a) {
                    acc(a, g.to_vec(), grads);
                }
                if wants(bias) {
                    let mut db = vec![0.0; n];
                    for row in g.chunks_exact(n.max(1)) {
                        for (d, &gv) in db.iter_mut().zip(row) {
                            *d += gv;
                        }
                    }
                    acc(bias, db, grads);
                }
            }
            Op::Add(a, b) => {
                if wants(a) {
                    acc(a, g.to_vec(), grads);
                }
                if wants(b) {
                    acc(b, g.to_vec(), grads);
                }
            }
            Op::Scale(a, c) => {
                if wants(a) {
                    acc(a, g.iter().map(|x| c * x).collect(), grads);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (nodes[a.idx].value.values(), nodes[b.idx].value.values());
                if wants(a) {
                    acc(a, g.iter().zip(bv).map(|(x, y)| x * y).collect(), grads);
                }
                if wants(b) {
                    acc(b, g.iter().zip(av).map(|(x, y)| x * y).collect(), grads);
                }
            }
            Op::Sum(a) => {
                if wants(a) {
                    let n = nodes[a.idx].value.len();
                    acc(a, vec![g[0]; n], grads);
                }
            }
            Op::LeakyRelu(a, slope) => {
                if wants(a) {
                    let x = nodes[a.idx].value.values();
                    let d = g
                        .iter()
                        .zip(x)
                        .map(|(&gv, &xv)| if xv > 0.0 { gv } else { slope * gv })
                        .collect();
                    acc(a, d, grads);
                }
            }
            Op::Sigmoid(a) => {
                if wants(a) {
                    let y = nodes[idx].value.values();
                    let d = g.iter().zip(y).map(|(&gv, &s)| gv * s * (1.0 - s)).collect();
                    acc(a, d, grads);
                }
            }
            Op::Tanh(a) => {
                if wants(a) {
                    let y = nodes[idx].value.values();
                    let d = g.iter().zip(y).map(|(&gv, &t)| gv * (1.0 - t * t)).collect();
                    acc(a, d, grads);
                }
            }
            Op::Mse(p, t) => {
                let (pv, tv) = (nodes[p.idx].value.values(), nodes[t.idx].value.values());
                let scale = 2.0 * g[0] / pv.len().max(1) as f64;
                let diff: Vec<f64> = pv.iter().zip(tv).map(|(a, b)| scale * (a - b)).collect();
                if wants(t) {
                    acc(t, diff.iter().map(|d| -d).collect(), grads);
                }
                if wants(p) {
                    acc(p, diff, grads);
                }
            }
            Op::Bce(p, t) => {
                if wants(p) {
                    let (pv, yv) = (nodes[p.idx].value.values(), nodes[t.idx].value.values());
                    let n = pv.len().max(1) as f64;
                    let d = pv
                        .iter()
                        .zip(yv)
                        .map(|(&p, &y)| {
                            if p <= BCE_EPS || p >= 1.0 - BCE_EPS {
                                0.0
                            } else {
                                g[0] * (-y / p + (1.0 - y) / (1.0 - p)) / n
                            }
                        })
                        .collect();
                    acc(p, d, grads);
                }
            }
        }
        Ok(())
    }
}

pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of [`Tape::backward`]: one gradient buffer per node that requires one.
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` when `v` does not require grad
    /// (or comes from a different tape).
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.idx)?.as_deref()
    }
}

/// A trainable parameter: a named tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Ordered collection of named trainable tensors with accumulated gradients.
///
/// Gradients accumulate across [`ParamSet::accumulate`] calls; zeroing them
/// is the caller's job.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    params: Vec<Param>,
    #[serde(skip)]
    grads: Option<Vec<Vec<f64>>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.push(Param {
            name: name.into(),
            value,
        });
        if let Some(g) = &mut self.grads {
            g.push(vec![0.0; self.params.last().map_or(0, |p| p.value.len())]);
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn get(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn value_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.params[i].value
    }

    /// Record every parameter on `tape` as a leaf requiring gradients.
    pub fn bind(&self, tape: &mut Tape) -> Result<Vec<Var>> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), true))
            .collect()
    }

    /// Record every parameter as a constant (inference, frozen networks).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Result<Vec<Var>> {
        self.params
            .iter()
            .map(|p| tape.constant(p.value.clone()))
            .collect()
    }

    pub fn zero_grad(&mut self) {
        self.grads = Some(self.params.iter().map(|p| vec![0.0; p.value.len()]).collect());
    }

    /// Add the gradients of `vars` (as returned by [`ParamSet::bind`]) into
    /// this set's accumulators.
    pub fn accumulate(&mut self, grads: &Gradients, vars: &[Var]) -> Result<()> {
        if vars.len() != self.params.len() {
            return Err(Error::InvalidArgument(format!(
                "{} bound vars for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        if self.grads.is_none() {
            self.zero_grad();
        }
        let acc = self.grads.as_mut().expect("initialized above");
        for (slot, &v) in acc.iter_mut().zip(vars) {
            if let Some(g) = grads.get(v) {
                for (a, b) in slot.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        Ok(())
    }

    pub fn grads(&self) -> Option<&[Vec<f64>]> {
        self.grads.as_deref()
    }

    pub(crate) fn params_and_grads_mut(&mut self) -> Result<(&mut [Param], &[Vec<f64>])> {
        match &self.grads {
            Some(g) => Ok((&mut self.params, g)),
            None => Err(Error::MissingGrad),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
        let (mm, k, n) = (a.nrows(), a.ncols(), b.ncols());
        let mut out = vec![0.0; mm * n];
        for i in 0..mm {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.get(i, p) * b.get(p, j);
                }
                out[i * n + j] = s;
            }
        }
        Tensor::matrix(mm, n, out).unwrap()
    }

    #[test]
    fn matmul_identity_zero_and_oracle() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let eye = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let zero = Tensor::zeros(&[2, 2]);
        let b = m(&[&[5.0, 6.0], &[7.0, 8.0]]);
        let mut t = Tape::new();
        let (va, vi, vz, vb) = (
            t.constant(a.clone()).unwrap(),
            t.constant(eye).unwrap(),
            t.constant(zero).unwrap(),
            t.constant(b.clone()).unwrap(),
        );
        let r = t.matmul(va, vi).unwrap();
        assert_eq!(t.value(r).unwrap(), &a);
        let r = t.matmul(va, vz).unwrap();
        assert!(t.value(r).unwrap().values().iter().all(|&v| v == 0.0));
        let r = t.matmul(va, vb).unwrap();
        assert_eq!(t.value(r).unwrap().values(), &[19.0, 22.0, 43.0, 50.0]);
        assert_eq!(t.value(r).unwrap(), &naive_matmul(&a, &b));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3])).unwrap();
        let b = t.constant(Tensor::zeros(&[2, 3])).unwrap();
        let err = t.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::matrix(1, 1, vec![1e300]).unwrap()).unwrap();
        let b = t.constant(Tensor::matrix(1, 1, vec![1e300]).unwrap()).unwrap();
        assert!(matches!(t.matmul(a, b), Err(Error::NonFinite { .. })));
        assert!(matches!(
            t.leaf(Tensor::scalar(f64::NAN), true),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn add_row_broadcast_cases() {
        let mut t = Tape::new();
        let z = t.constant(Tensor::zeros(&[2, 2])).unwrap();
        let b = t.constant(Tensor::vector(vec![1.0, 2.0])).unwrap();
        let r = t.add_row_broadcast(z, b).unwrap();
        assert_eq!(t.value(r).unwrap().values(), &[1.0, 2.0, 1.0, 2.0]);

        let a = t.constant(m(&[&[1.0, -2.0]])).unwrap();
        let zb = t.constant(Tensor::vector(vec![0.0, 0.0])).unwrap();
        let r = t.add_row_broadcast(a, zb).unwrap();
        assert_eq!(t.value(r).unwrap().values(), &[1.0, -2.0]);

        let bad = t.constant(Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        assert!(matches!(
            t.add_row_broadcast(z, bad),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn add_row_broadcast_bias_grad_sums_rows() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::full(&[3, 2], 1.0)).unwrap();
        let b = t.leaf(Tensor::vector(vec![0.5, -0.5]), true).unwrap();
        let y = t.add_row_broadcast(a, b).unwrap();
        let s = t.sum(y).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(b).unwrap(), &[3.0, 3.0]);
        assert!(g.get(a).is_none());
    }

    #[test]
    fn leaky_relu_values_and_grads() {
        let mut t = Tape::new();
        let x = t
            .leaf(Tensor::vector(vec![0.0, -1.0, 3.0]), true)
            .unwrap();
        let y = t.leaky_relu(x, 0.2).unwrap();
        assert_eq!(t.value(y).unwrap().values(), &[0.0, -0.2, 3.0]);
        let s = t.sum(y).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &[0.2, 0.2, 1.0]);
    }

    #[test]
    fn leaky_relu_rejects_bad_slope() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::scalar(1.0)).unwrap();
        assert!(t.leaky_relu(x, 1.5).is_err());
        assert!(t.leaky_relu(x, 0.0).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        let mut t = Tape::new();
        let x = t
            .leaf(Tensor::vector(vec![0.0, 50.0, -50.0, -800.0]), true)
            .unwrap();
        let y = t.sigmoid(x).unwrap();
        let v = t.value(y).unwrap().values().to_vec();
        assert_eq!(v[0], 0.5);
        assert!((v[1] - 1.0).abs() < 1e-15);
        assert!(v[2] > 0.0 && v[2] < 1e-20);
        assert_eq!(v[3], 0.0);
        let s = t.sum(y).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap()[0], 0.25);
    }

    #[test]
    fn tanh_values() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![0.0, 1.0]), true).unwrap();
        let y = t.tanh(x).unwrap();
        let v = t.value(y).unwrap().values().to_vec();
        assert_eq!(v[0], 0.0);
        // tanh(1) = (e² - 1)/(e² + 1), e² from its series.
        let e2: f64 = (0..30).map(|k| 2f64.powi(k) / (1..=k).map(f64::from).product::<f64>()).sum();
        let oracle = (e2 - 1.0) / (e2 + 1.0);
        assert!((v[1] - oracle).abs() < 1e-14);
        assert!((v[1] - 0.76159).abs() < 1e-5);
        let s = t.sum(y).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap()[0], 1.0);
    }

    #[test]
    fn mse_examples() {
        let mut t = Tape::new();
        let p = t.constant(Tensor::vector(vec![1.0, 3.0])).unwrap();
        let y = t.constant(Tensor::vector(vec![0.0, 1.0])).unwrap();
        let l = t.mse_loss(p, y).unwrap();
        assert_eq!(t.value(l).unwrap().item(), 2.5);
        let l = t.mse_loss(p, p).unwrap();
        assert_eq!(t.value(l).unwrap().item(), 0.0);
        let one = t.constant(Tensor::vector(vec![1.0])).unwrap();
        let zero = t.constant(Tensor::vector(vec![0.0])).unwrap();
        let l = t.mse_loss(one, zero).unwrap();
        assert_eq!(t.value(l).unwrap().item(), 1.0);
        assert!(t.mse_loss(one, p).is_err());
    }

    #[test]
    fn bce_examples() {
        let mut t = Tape::new();
        let p = t.constant(Tensor::vector(vec![0.5])).unwrap();
        let one = t.constant(Tensor::vector(vec![1.0])).unwrap();
        let l = t.bce_loss(p, one).unwrap();
        assert!((t.value(l).unwrap().item() - std::f64::consts::LN_2).abs() < 1e-15);

        let p = t.constant(Tensor::vector(vec![1.0 - BCE_EPS])).unwrap();
        let l = t.bce_loss(p, one).unwrap();
        assert!(t.value(l).unwrap().item() < 1e-6);

        // Saturated probabilities are clamped, not log(0).
        let p = t.constant(Tensor::vector(vec![0.0])).unwrap();
        let l = t.bce_loss(p, one).unwrap();
        assert!((t.value(l).unwrap().item() - (-(BCE_EPS.ln()))).abs() < 1e-9);

        let p = t.constant(Tensor::vector(vec![0.9, 0.1])).unwrap();
        let y = t.constant(Tensor::vector(vec![1.0, 0.0])).unwrap();
        let l = t.bce_loss(p, y).unwrap();
        let oracle = (-(0.9f64.ln()) - (0.9f64).ln()) / 2.0;
        assert!((t.value(l).unwrap().item() - oracle).abs() < 1e-15);
        assert!((t.value(l).unwrap().item() - 0.10536).abs() < 1e-5);
    }

    #[test]
    fn backward_square_and_independent_param() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0), true).unwrap();
        let p = t.leaf(Tensor::scalar(7.0), true).unwrap();
        let zero = t.constant(Tensor::scalar(0.0)).unwrap();
        let _unused = t.scale(p, 2.0).unwrap();
        let l = t.mse_loss(x, zero).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap(), &[6.0]);
        assert!(g.get(p).is_none_or(|d| d == [0.0]));
    }

    #[test]
    fn backward_errors() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]), true).unwrap();
        assert!(matches!(t.backward(x), Err(Error::NonScalarLoss(_))));
        let s = t.sum(x).unwrap();
        t.backward(s).unwrap();
        assert!(matches!(t.backward(s), Err(Error::TapeConsumed)));
        assert!(matches!(t.sum(x), Err(Error::TapeConsumed)));

        let mut other = Tape::new();
        let y = other.leaf(Tensor::scalar(1.0), true).unwrap();
        let mut t2 = Tape::new();
        assert!(matches!(t2.sum(y), Err(Error::UnknownVar(_))));
    }

    #[test]
    fn fanout_accumulates() {
        // loss = sum(x * x + x) => d/dx = 2x + 1
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, -2.0]), true).unwrap();
        let sq = t.mul(x, x).unwrap();
        let y = t.add(sq, x).unwrap();
        let l = t.sum(y).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap(), &[3.0, -3.0]);
    }

    #[test]
    fn matmul_flop_counter() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(&[3, 4]), true).unwrap();
        let b = t.leaf(Tensor::zeros(&[4, 5]), true).unwrap();
        let c = t.matmul(a, b).unwrap();
        let s = t.sum(c).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.flops().forward, 2 * 3 * 4 * 5);
        assert_eq!(t.flops().backward, 2 * t.flops().forward);
    }

    #[test]
    fn paramset_grad_lifecycle() {
        let mut ps = ParamSet::new();
        ps.push("w", Tensor::vector(vec![2.0]));
        assert!(ps.grads().is_none());
        for _ in 0..2 {
            let mut t = Tape::new();
            let vars = ps.bind(&mut t).unwrap();
            let sq = t.mul(vars[0], vars[0]).unwrap();
            let l = t.sum(sq).unwrap();
            let g = t.backward(l).unwrap();
            ps.accumulate(&g, &vars).unwrap();
        }
        assert_eq!(ps.grads().unwrap()[0], vec![8.0]);
        ps.zero_grad();
        assert_eq!(ps.grads().unwrap()[0], vec![0.0]);
    }
}
