use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamVector};
use super::tape::{self, SetId, Tape, Var};
use super::tensor::{matmul, Tensor};
use super::NumericsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Elu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Elu => tape::elu(x),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => tape::sigmoid(x),
        }
    }

    fn apply_tape(self, tape: &mut Tape<'_>, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Elu => tape.elu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    weight: ParamId,
    bias: ParamId,
    inputs: usize,
    outputs: usize,
    activation: Activation,
}

/// Dense feed-forward network whose weights live in a shared [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    /// `dims` lists layer widths from input to output; hidden layers use
    /// `hidden`, the last layer uses `output`. Weights are Glorot-uniform,
    /// with the final layer scaled by `out_scale`.
    pub fn new(
        params: &mut ParamVector,
        name: &str,
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        out_scale: f64,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output widths");
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (inputs, outputs) = (dims[i], dims[i + 1]);
                let last = i + 1 == n;
                let limit = (6.0 / (inputs + outputs) as f64).sqrt() * if last { out_scale } else { 1.0 };
                let weight = params.add_uniform(format!("{name}.l{i}.w"), &[inputs, outputs], limit, rng);
                let bias = params.add_constant(format!("{name}.l{i}.b"), &[outputs], 0.0);
                Dense { weight, bias, inputs, outputs, activation: if last { output } else { hidden } }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Parameter tensors owned by this network, in layer order.
    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    /// Batched inference without recording a tape.
    pub fn forward(&self, params: &ParamVector, input: &Tensor) -> Result<Tensor, NumericsError> {
        if input.cols() != self.input_dim() {
            return Err(NumericsError::Shape { expected: self.input_dim(), got: input.cols(), what: "MLP input width" });
        }
        let mut x = input.clone();
        for layer in &self.layers {
            let mut y = matmul(x.view(), false, params.view(layer.weight), false);
            let bias = params.slice(layer.bias);
            for r in 0..y.rows() {
                for (v, b) in y.row_mut(r).iter_mut().zip(bias) {
                    *v = layer.activation.apply(*v + b);
                }
            }
            x = y;
        }
        Ok(x)
    }

    pub fn forward_tape(&self, tape: &mut Tape<'_>, set: SetId, input: Var) -> Var {
        assert_eq!(tape.shape(input).1, self.input_dim(), "MLP input width");
        let mut x = input;
        for layer in &self.layers {
            let w = tape.param(set, layer.weight);
            let b = tape.param(set, layer.bias);
            let y = tape.matmul(x, w);
            let y = tape.add_bias(y, b);
            x = layer.activation.apply_tape(tape, y);
        }
        x
    }
}

/// Single-sample forward pass.
pub fn mlp_forward(params: &ParamVector, input: &[f64], arch: &Mlp) -> Result<Vec<f64>, NumericsError> {
    let out = arch.forward(params, &Tensor::row_vector(input.to_vec()))?;
    Ok(out.into_vec())
}
