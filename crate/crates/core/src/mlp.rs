//! One-hidden-layer dense network trained with full-batch gradient descent.
//!
//! Parameters are stored flat, in the order
//! `[hidden weights (row-major, H x input_dim), hidden biases (H), output weights (H), output bias]`,
//! so that a parameter vector is directly a point of the training dynamical
//! system.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActivationKind {
    Sigmoid,
    #[serde(rename = "ReLU")]
    Relu,
    Linear,
}

impl ActivationKind {
    /// The order used by activation comparisons.
    pub const ALL: [ActivationKind; 3] = [ActivationKind::Sigmoid, ActivationKind::Linear, ActivationKind::Relu];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Linear => x,
        }
    }

    /// Exact derivative. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Sigmoid => "Sigmoid",
            ActivationKind::Relu => "ReLU",
            ActivationKind::Linear => "Linear",
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "relu" => Ok(ActivationKind::Relu),
            "linear" | "identity" => Ok(ActivationKind::Linear),
            other => Err(format!(
                "unknown activation `{other}` (expected sigmoid, relu or linear)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub hidden_activation: ActivationKind,
    pub output_activation: ActivationKind,
    pub output_dim: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_dim: 2,
            hidden_width: 2,
            hidden_activation: ActivationKind::Sigmoid,
            output_activation: ActivationKind::Linear,
            output_dim: 1,
        }
    }
}

impl NetworkConfig {
    pub fn with_hidden(hidden_activation: ActivationKind) -> Self {
        NetworkConfig {
            hidden_activation,
            ..Default::default()
        }
    }

    /// Number of trainable parameters, `H*(input_dim+1) + output_dim*(H+1)`.
    pub fn param_dim(&self) -> usize {
        self.hidden_width * (self.input_dim + 1) + self.output_dim * (self.hidden_width + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(invalid("input_dim", "must be at least 1"));
        }
        if self.hidden_width == 0 {
            return Err(invalid("hidden_width", "must be at least 1"));
        }
        if self.output_dim != 1 {
            return Err(invalid("output_dim", "only a single output is supported"));
        }
        Ok(())
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.param_dim(),
                found: params.len(),
            });
        }
        Ok(())
    }

    fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if data.input_dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                what: "dataset input",
                expected: self.input_dim,
                found: data.input_dim(),
            });
        }
        Ok(())
    }

    // Offsets into the flat layout.
    fn hidden_bias_offset(&self) -> usize {
        self.hidden_width * self.input_dim
    }

    fn output_weight_offset(&self) -> usize {
        self.hidden_width * (self.input_dim + 1)
    }

    fn output_bias_offset(&self) -> usize {
        self.output_weight_offset() + self.hidden_width
    }
}

/// Flattened network state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParameterVector(values)
    }

    pub fn zeros(len: usize) -> Self {
        ParameterVector(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for ParameterVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        ParameterVector(v)
    }
}

/// Training examples stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    input_dim: usize,
}

impl Dataset {
    pub fn new(rows: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if rows.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                what: "dataset targets",
                expected: rows.len(),
                found: targets.len(),
            });
        }
        let input_dim = rows[0].len();
        let mut inputs = Vec::with_capacity(rows.len() * input_dim);
        for row in rows {
            if row.len() != input_dim {
                return Err(Error::DimensionMismatch {
                    what: "dataset row",
                    expected: input_dim,
                    found: row.len(),
                });
            }
            inputs.extend_from_slice(row);
        }
        Ok(Dataset {
            inputs,
            targets: targets.to_vec(),
            input_dim,
        })
    }

    /// The four-row exclusive-or table.
    pub fn xor() -> Self {
        Dataset {
            inputs: vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0],
            targets: vec![0.0, 1.0, 1.0, 0.0],
            input_dim: 2,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn examples(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.inputs
            .chunks_exact(self.input_dim)
            .zip(self.targets.iter().copied())
    }
}

/// Output pre-activation and hidden activations for one example. `hidden`
/// receives `(pre-activation, activation)` per unit.
fn propagate(net: &NetworkConfig, params: &[f64], input: &[f64], hidden: &mut [(f64, f64)]) -> f64 {
    let n_in = net.input_dim;
    let hb = net.hidden_bias_offset();
    let ow = net.output_weight_offset();
    let mut out = params[net.output_bias_offset()];
    for (h, slot) in hidden.iter_mut().enumerate() {
        let row = &params[h * n_in..(h + 1) * n_in];
        let z = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + params[hb + h];
        let a = net.hidden_activation.apply(z);
        *slot = (z, a);
        out += params[ow + h] * a;
    }
    out
}

/// Network output for a single input.
pub fn forward(net: &NetworkConfig, params: &[f64], input: &[f64]) -> Result<f64> {
    net.validate()?;
    net.check_params(params)?;
    if input.len() != net.input_dim {
        return Err(Error::DimensionMismatch {
            what: "input",
            expected: net.input_dim,
            found: input.len(),
        });
    }
    let mut hidden = vec![(0.0, 0.0); net.hidden_width];
    let o = propagate(net, params, input, &mut hidden);
    Ok(net.output_activation.apply(o))
}

/// Mean squared error over the dataset.
pub fn mse_loss(net: &NetworkConfig, params: &[f64], data: &Dataset) -> Result<f64> {
    net.validate()?;
    net.check_params(params)?;
    net.check_dataset(data)?;
    Ok(loss_unchecked(
        net,
        params,
        data,
        &mut vec![(0.0, 0.0); net.hidden_width],
    ))
}

pub(crate) fn loss_unchecked(net: &NetworkConfig, params: &[f64], data: &Dataset, hidden: &mut [(f64, f64)]) -> f64 {
    let total: f64 = data
        .examples()
        .map(|(x, y)| {
            let e = net.output_activation.apply(propagate(net, params, x, hidden)) - y;
            e * e
        })
        .sum();
    total / data.len() as f64
}

/// Exact gradient of [`mse_loss`] in the parameter layout.
pub fn gradient(net: &NetworkConfig, params: &[f64], data: &Dataset) -> Result<ParameterVector> {
    net.validate()?;
    net.check_params(params)?;
    net.check_dataset(data)?;
    let mut grad = vec![0.0; params.len()];
    gradient_unchecked(net, params, data, &mut grad, &mut vec![(0.0, 0.0); net.hidden_width]);
    Ok(ParameterVector(grad))
}

/// Backpropagation into `grad`; returns the loss at `params`. Shapes must
/// already have been validated.
pub(crate) fn gradient_unchecked(
    net: &NetworkConfig,
    params: &[f64],
    data: &Dataset,
    grad: &mut [f64],
    hidden: &mut [(f64, f64)],
) -> f64 {
    grad.fill(0.0);
    let n_in = net.input_dim;
    let hb = net.hidden_bias_offset();
    let ow = net.output_weight_offset();
    let ob = net.output_bias_offset();
    let scale = 2.0 / data.len() as f64;
    let mut loss = 0.0;

    for (x, y) in data.examples() {
        let o = propagate(net, params, x, hidden);
        let err = net.output_activation.apply(o) - y;
        loss += err * err;
        let d_out = scale * err * net.output_activation.derivative(o);
        grad[ob] += d_out;
        for (h, &(z, a)) in hidden.iter().enumerate() {
            grad[ow + h] += d_out * a;
            let d_z = d_out * params[ow + h] * net.hidden_activation.derivative(z);
            grad[hb + h] += d_z;
            for (g, xi) in grad[h * n_in..(h + 1) * n_in].iter_mut().zip(x) {
                *g += d_z * xi;
            }
        }
    }
    loss / data.len() as f64
}

/// One gradient-descent update, `params - alpha * grad`.
pub fn gd_step(params: &[f64], grad: &[f64], alpha: f64) -> Result<ParameterVector> {
    if params.len() != grad.len() {
        return Err(Error::DimensionMismatch {
            what: "gradient",
            expected: params.len(),
            found: grad.len(),
        });
    }
    if alpha.is_nan() || alpha < 0.0 {
        return Err(invalid("alpha", "learning rate must be non-negative"));
    }
    Ok(ParameterVector(
        params.iter().zip(grad).map(|(p, g)| p - alpha * g).collect(),
    ))
}
