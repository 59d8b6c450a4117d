use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::{Activation, Mlp, MlpTape};
use crate::params::ParamSet;
use crate::tensor::Tensor;

/// Agent network shared by all agents: `input → hidden (ReLU) → actions`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentQNet {
    pub mlp: Mlp,
    pub input_dim: usize,
    pub action_dim: usize,
}

impl AgentQNet {
    const PREFIX: &'static str = "agent";

    pub fn new<R: Rng>(
        params: &mut ParamSet,
        input_dim: usize,
        hidden_dim: usize,
        action_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mlp = Mlp::new(
            params,
            Self::PREFIX,
            &[input_dim, hidden_dim, action_dim],
            Activation::Relu,
            rng,
        )?;
        Ok(Self {
            mlp,
            input_dim,
            action_dim,
        })
    }

    pub fn bind(
        params: &ParamSet,
        input_dim: usize,
        hidden_dim: usize,
        action_dim: usize,
    ) -> Result<Self> {
        let mlp = Mlp::bind(
            params,
            Self::PREFIX,
            &[input_dim, hidden_dim, action_dim],
            Activation::Relu,
        )?;
        Ok(Self {
            mlp,
            input_dim,
            action_dim,
        })
    }

    fn check(&self, inputs: &Tensor) -> Result<()> {
        if inputs.shape().len() != 2 || inputs.cols() != self.input_dim {
            return Err(Error::Config(format!(
                "agent input has shape {:?}, network expects width {}",
                inputs.shape(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Action values for every input row.
    pub fn infer(&self, params: &ParamSet, inputs: &Tensor) -> Result<Tensor> {
        self.check(inputs)?;
        self.mlp.infer(params, inputs)
    }

    pub fn forward(&self, params: &ParamSet, inputs: &Tensor) -> Result<(Tensor, MlpTape)> {
        self.check(inputs)?;
        self.mlp.forward(params, inputs)
    }

    pub fn backward(&self, params: &mut ParamSet, tape: &MlpTape, dout: &Tensor) -> Result<()> {
        self.mlp.backward(params, tape, dout).map(|_| ())
    }
}
