//! Feedforward layers with hand-written backward passes.
//!
//! Every forward returns a tape holding exactly what its backward needs.
//! Backward passes *accumulate* into the gradient buffers of the owning
//! [`ParamSet`]; zeroing is the optimizer's job.

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamSet};
use crate::tensor::Tensor;

/// Elementwise nonlinearity. Both variants are monotone nondecreasing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Elu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
        }
    }
}

/// `out[b,j] = Σ_i input[b,i]·weight[i,j] + bias[j]`.
pub fn linear_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if input.shape().len() != 2 || weight.shape().len() != 2 || bias.shape().len() != 1 {
        return Err(Error::Shape(format!(
            "linear expects 2-d input/weight and 1-d bias, got {:?}, {:?}, {:?}",
            input.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let (rows, fan_in) = (input.shape()[0], input.shape()[1]);
    let fan_out = weight.shape()[1];
    if weight.shape()[0] != fan_in || bias.shape()[0] != fan_out {
        return Err(Error::Shape(format!(
            "linear: input {:?}, weight {:?}, bias {:?} do not conform",
            input.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let w = weight.data();
    let x = input.data();
    let mut out = Vec::with_capacity(rows * fan_out);
    for r in 0..rows {
        out.extend_from_slice(bias.data());
        let out_row = &mut out[r * fan_out..];
        for i in 0..fan_in {
            let xi = x[r * fan_in + i];
            if xi == 0.0 {
                continue;
            }
            for (o, wij) in out_row.iter_mut().zip(&w[i * fan_out..(i + 1) * fan_out]) {
                *o += xi * wij;
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![rows, fan_out], out))
}

/// Accumulates `dW += inputᵀ·dout`, `db += Σ_rows dout` and returns
/// `d input = dout·Wᵀ` when `want_input_grad` is set.
pub fn linear_backward(
    input: &Tensor,
    weight: &Tensor,
    dout: &Tensor,
    dweight: &mut Tensor,
    dbias: &mut Tensor,
    want_input_grad: bool,
) -> Option<Tensor> {
    accumulate_weight_grad(input, dout, dweight);
    accumulate_bias_grad(dout, dbias);
    want_input_grad.then(|| input_grad(weight, dout))
}

fn accumulate_weight_grad(input: &Tensor, dout: &Tensor, dweight: &mut Tensor) {
    let (rows, fan_in) = (input.shape()[0], input.shape()[1]);
    let fan_out = dout.cols();
    debug_assert_eq!(dout.shape(), &[rows, fan_out]);
    let x = input.data();
    let d = dout.data();
    let dw = dweight.data_mut();
    for r in 0..rows {
        let d_row = &d[r * fan_out..(r + 1) * fan_out];
        for i in 0..fan_in {
            let xi = x[r * fan_in + i];
            for (g, dj) in dw[i * fan_out..(i + 1) * fan_out].iter_mut().zip(d_row) {
                *g += xi * dj;
            }
        }
    }
}

fn accumulate_bias_grad(dout: &Tensor, dbias: &mut Tensor) {
    let fan_out = dout.cols();
    let d = dout.data();
    let db = dbias.data_mut();
    for r in 0..dout.rows() {
        for (g, dj) in db.iter_mut().zip(&d[r * fan_out..(r + 1) * fan_out]) {
            *g += dj;
        }
    }
}

fn input_grad(weight: &Tensor, dout: &Tensor) -> Tensor {
    let (fan_in, fan_out) = (weight.shape()[0], weight.shape()[1]);
    let rows = dout.rows();
    let w = weight.data();
    let d = dout.data();
    let mut dx = vec![0.0; rows * fan_in];
    for r in 0..rows {
        let d_row = &d[r * fan_out..(r + 1) * fan_out];
        for i in 0..fan_in {
            let w_row = &w[i * fan_out..(i + 1) * fan_out];
            dx[r * fan_in + i] = w_row.iter().zip(d_row).map(|(a, b)| a * b).sum();
        }
    }
    Tensor::from_parts_unchecked(vec![rows, fan_in], dx)
}

/// A dense layer whose weight and bias live in a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Registers `{prefix}.w` and `{prefix}.b`, uniform in ±1/sqrt(fan_in).
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let b: Vec<f64> = (0..fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let weight = params.add(format!("{prefix}.w"), Tensor::new(vec![fan_in, fan_out], w)?)?;
        let bias = params.add(format!("{prefix}.b"), Tensor::new(vec![fan_out], b)?)?;
        Ok(Self {
            weight,
            bias,
            fan_in,
            fan_out,
        })
    }

    /// Re-binds to an existing pair of entries (used when loading checkpoints).
    pub fn bind(params: &ParamSet, prefix: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        let lookup = |suffix: &str, shape: &[usize]| -> Result<ParamId> {
            let name = format!("{prefix}.{suffix}");
            let id = params
                .id(&name)
                .ok_or_else(|| Error::Config(format!("missing parameter {name}")))?;
            if params.value(id).shape() != shape {
                return Err(Error::Config(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    params.value(id).shape()
                )));
            }
            Ok(id)
        };
        Ok(Self {
            weight: lookup("w", &[fan_in, fan_out])?,
            bias: lookup("b", &[fan_out])?,
            fan_in,
            fan_out,
        })
    }

    pub fn forward(&self, params: &ParamSet, input: &Tensor) -> Result<Tensor> {
        linear_forward(input, params.value(self.weight), params.value(self.bias))
    }

    pub fn backward(
        &self,
        params: &mut ParamSet,
        input: &Tensor,
        dout: &Tensor,
        want_input_grad: bool,
    ) -> Option<Tensor> {
        let dx = want_input_grad.then(|| input_grad(params.value(self.weight), dout));
        accumulate_weight_grad(input, dout, params.grad_mut(self.weight));
        accumulate_bias_grad(dout, params.grad_mut(self.bias));
        dx
    }
}

/// Multi-layer perceptron: `Linear → act → … → Linear` (no output activation).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

/// Recorded forward pass of an [`Mlp`].
#[derive(Debug, Clone, Default)]
pub struct MlpTape {
    /// Input to each layer.
    inputs: Vec<Tensor>,
    /// Pre-activation output of every hidden layer.
    pre: Vec<Tensor>,
}

impl MlpTape {
    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

impl Mlp {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        prefix: &str,
        widths: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config("mlp needs at least input and output width".into()));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(params, &format!("{prefix}.fc{i}"), w[0], w[1], rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers, activation })
    }

    pub fn bind(
        params: &ParamSet,
        prefix: &str,
        widths: &[usize],
        activation: Activation,
    ) -> Result<Self> {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::bind(params, &format!("{prefix}.fc{i}"), w[0], w[1]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    pub fn output_layer(&self) -> &Linear {
        self.layers.last().expect("mlp has layers")
    }

    /// Forward without recording.
    pub fn infer(&self, params: &ParamSet, input: &Tensor) -> Result<Tensor> {
        let mut h = input.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(params, &h)?;
            if i < last {
                h.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = self.activation.apply(*v));
            }
        }
        Ok(h)
    }

    pub fn forward(&self, params: &ParamSet, input: &Tensor) -> Result<(Tensor, MlpTape)> {
        let mut tape = MlpTape::default();
        let mut h = input.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let out = layer.forward(params, &h)?;
            tape.inputs.push(h);
            if i < last {
                let mut act = out.clone();
                act.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = self.activation.apply(*v));
                tape.pre.push(out);
                h = act;
            } else {
                h = out;
            }
        }
        Ok((h, tape))
    }

    /// Backpropagates `dout` through a recorded pass, accumulating parameter
    /// gradients. Returns the gradient w.r.t. the network input.
    pub fn backward(&self, params: &mut ParamSet, tape: &MlpTape, dout: &Tensor) -> Result<Tensor> {
        if tape.is_empty() {
            return Err(Error::Usage("backward called without a recorded forward".into()));
        }
        if tape.inputs.len() != self.layers.len() {
            return Err(Error::Usage("tape does not belong to this network".into()));
        }
        let mut grad = dout.clone();
        for i in (0..self.layers.len()).rev() {
            if i < self.layers.len() - 1 {
                let pre = &tape.pre[i];
                for (g, x) in grad.data_mut().iter_mut().zip(pre.data()) {
                    *g *= self.activation.derivative(*x);
                }
            }
            grad = self.layers[i]
                .backward(params, &tape.inputs[i], &grad, true)
                .expect("input grad requested");
        }
        Ok(grad)
    }
}
