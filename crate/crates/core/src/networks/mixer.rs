use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::{Activation, Linear, Mlp, MlpTape};
use crate::params::ParamSet;
use crate::tensor::Tensor;

/// Monotonic mixer whose weights come from state-conditioned hypernetworks.
///
/// `hidden = elu(q·|W1(s)| + b1(s))`, `Q_tot = hidden·|wf(s)| + V(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingNet {
    pub hyper_w1: Linear,
    pub hyper_b1: Linear,
    pub hyper_wf: Linear,
    pub value: Mlp,
    pub n_agents: usize,
    pub state_dim: usize,
    pub hidden_dim: usize,
}

/// Everything the mixer backward pass needs.
#[derive(Debug, Clone)]
pub struct MixTape {
    states: Tensor,
    qs: Tensor,
    w1_raw: Tensor,
    pre: Tensor,
    hidden: Tensor,
    wf_raw: Tensor,
    value: MlpTape,
}

fn abs_grad(raw: f64) -> f64 {
    if raw > 0.0 {
        1.0
    } else if raw < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl MixingNet {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        n_agents: usize,
        state_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let hyper_w1 = Linear::new(params, "mixer.hyper_w1", state_dim, n_agents * hidden_dim, rng)?;
        let hyper_b1 = Linear::new(params, "mixer.hyper_b1", state_dim, hidden_dim, rng)?;
        let hyper_wf = Linear::new(params, "mixer.hyper_wf", state_dim, hidden_dim, rng)?;
        let value = Mlp::new(
            params,
            "mixer.v",
            &[state_dim, hidden_dim, 1],
            Activation::Relu,
            rng,
        )?;
        Ok(Self {
            hyper_w1,
            hyper_b1,
            hyper_wf,
            value,
            n_agents,
            state_dim,
            hidden_dim,
        })
    }

    pub fn bind(
        params: &ParamSet,
        n_agents: usize,
        state_dim: usize,
        hidden_dim: usize,
    ) -> Result<Self> {
        Ok(Self {
            hyper_w1: Linear::bind(params, "mixer.hyper_w1", state_dim, n_agents * hidden_dim)?,
            hyper_b1: Linear::bind(params, "mixer.hyper_b1", state_dim, hidden_dim)?,
            hyper_wf: Linear::bind(params, "mixer.hyper_wf", state_dim, hidden_dim)?,
            value: Mlp::bind(params, "mixer.v", &[state_dim, hidden_dim, 1], Activation::Relu)?,
            n_agents,
            state_dim,
            hidden_dim,
        })
    }

    fn check(&self, qs: &Tensor, states: &Tensor) -> Result<()> {
        if qs.shape().len() != 2
            || qs.cols() != self.n_agents
            || states.shape().len() != 2
            || states.cols() != self.state_dim
            || qs.rows() != states.rows()
        {
            return Err(Error::Shape(format!(
                "mixer expects [B x {}] agent values and [B x {}] states, got {:?} and {:?}",
                self.n_agents,
                self.state_dim,
                qs.shape(),
                states.shape()
            )));
        }
        Ok(())
    }

    /// `Q_tot` per row, plus the tape for [`MixingNet::backward`].
    pub fn forward(
        &self,
        params: &ParamSet,
        qs: &Tensor,
        states: &Tensor,
    ) -> Result<(Vec<f64>, MixTape)> {
        self.check(qs, states)?;
        let (n, h) = (self.n_agents, self.hidden_dim);
        let w1_raw = self.hyper_w1.forward(params, states)?;
        let b1 = self.hyper_b1.forward(params, states)?;
        let wf_raw = self.hyper_wf.forward(params, states)?;
        let (v, value_tape) = self.value.forward(params, states)?;
        let rows = qs.rows();
        let mut pre = b1.into_data();
        let mut hidden = vec![0.0; rows * h];
        let mut out = vec![0.0; rows];
        for b in 0..rows {
            let q = qs.row(b);
            let w1 = w1_raw.row(b);
            let pre_b = &mut pre[b * h..(b + 1) * h];
            for i in 0..n {
                for (k, p) in pre_b.iter_mut().enumerate() {
                    *p += q[i] * w1[i * h + k].abs();
                }
            }
            let wf = wf_raw.row(b);
            let mut total = v.data()[b];
            for k in 0..h {
                let a = Activation::Elu.apply(pre_b[k]);
                hidden[b * h + k] = a;
                total += a * wf[k].abs();
            }
            out[b] = total;
        }
        let tape = MixTape {
            states: states.clone(),
            qs: qs.clone(),
            w1_raw,
            pre: Tensor::from_parts_unchecked(vec![rows, h], pre),
            hidden: Tensor::from_parts_unchecked(vec![rows, h], hidden),
            wf_raw,
            value: value_tape,
        };
        Ok((out, tape))
    }

    pub fn infer(&self, params: &ParamSet, qs: &Tensor, states: &Tensor) -> Result<Vec<f64>> {
        self.forward(params, qs, states).map(|(out, _)| out)
    }

    /// Accumulates parameter gradients for upstream `dout` (one per row) and
    /// returns `∂/∂q` as a `[B x N]` tensor.
    pub fn backward(&self, params: &mut ParamSet, tape: &MixTape, dout: &[f64]) -> Result<Tensor> {
        let rows = tape.qs.rows();
        if dout.len() != rows {
            return Err(Error::Shape(format!(
                "mixer backward got {} upstream values for {rows} rows",
                dout.len()
            )));
        }
        let (n, h) = (self.n_agents, self.hidden_dim);
        let mut d_w1 = vec![0.0; rows * n * h];
        let mut d_b1 = vec![0.0; rows * h];
        let mut d_wf = vec![0.0; rows * h];
        let mut d_q = vec![0.0; rows * n];
        for b in 0..rows {
            let g = dout[b];
            if g == 0.0 {
                continue;
            }
            let wf = tape.wf_raw.row(b);
            let hid = tape.hidden.row(b);
            let pre = tape.pre.row(b);
            let w1 = tape.w1_raw.row(b);
            let q = tape.qs.row(b);
            for k in 0..h {
                d_wf[b * h + k] = g * hid[k] * abs_grad(wf[k]);
                let dpre = g * wf[k].abs() * Activation::Elu.derivative(pre[k]);
                d_b1[b * h + k] = dpre;
                for i in 0..n {
                    let raw = w1[i * h + k];
                    d_w1[b * n * h + i * h + k] = dpre * q[i] * abs_grad(raw);
                    d_q[b * n + i] += dpre * raw.abs();
                }
            }
        }
        let states = &tape.states;
        let d_w1 = Tensor::from_parts_unchecked(vec![rows, n * h], d_w1);
        let d_b1 = Tensor::from_parts_unchecked(vec![rows, h], d_b1);
        let d_wf = Tensor::from_parts_unchecked(vec![rows, h], d_wf);
        self.hyper_w1.backward(params, states, &d_w1, false);
        self.hyper_b1.backward(params, states, &d_b1, false);
        self.hyper_wf.backward(params, states, &d_wf, false);
        let d_v = Tensor::from_parts_unchecked(vec![rows, 1], dout.to_vec());
        self.value.backward(params, &tape.value, &d_v)?;
        Ok(Tensor::from_parts_unchecked(vec![rows, n], d_q))
    }
}
