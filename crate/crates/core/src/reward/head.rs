use serde::{Deserialize, Serialize};

use crate::domain::EmbeddingVector;
use crate::error::{Error, Result};
use crate::math::{gelu, gelu_derivative, sigmoid, softplus};
use crate::rng::Rng;

pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-4;

/// Gaussian score `r ~ N(mu, sigma)` for one sample-prompt input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub mu: f64,
    pub sigma: f64,
}

impl ScoreDistribution {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "score distribution needs finite mu and sigma > 0, got ({mu}, {sigma})"
            )));
        }
        Ok(ScoreDistribution { mu, sigma })
    }
}

/// MLP score head. Hidden layers use GELU; the final affine layer has two
/// units, `mu` and the pre-activation of `sigma`, with
/// `sigma = sigma_floor + softplus(raw)`.
///
/// All parameters live in one flat vector in declaration order: for each
/// layer, the `out × in` weight matrix row-major, then the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardHead {
    dims: Vec<usize>,
    sigma_floor: f64,
    params: Vec<f64>,
}

/// Forward activations kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Activations {
    /// Layer inputs: `inputs[0]` is the embedding, `inputs[l]` the output of hidden layer `l - 1`.
    inputs: Vec<Vec<f64>>,
    /// Hidden pre-activations.
    pre: Vec<Vec<f64>>,
    pub raw_sigma: f64,
    pub score: ScoreDistribution,
}

pub(crate) fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

fn validate_dims(dims: &[usize], sigma_floor: f64) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidHead("need at least input and output dims".into()));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidHead(format!("zero-width layer in {dims:?}")));
    }
    if *dims.last().unwrap() != 2 {
        return Err(Error::InvalidHead(format!(
            "output layer must have 2 units (mu, sigma), got {dims:?}"
        )));
    }
    if !(sigma_floor.is_finite() && sigma_floor > 0.0) {
        return Err(Error::InvalidHead(format!("sigma floor must be > 0, got {sigma_floor}")));
    }
    Ok(())
}

impl RewardHead {
    pub fn zeros(dims: &[usize], sigma_floor: f64) -> Result<Self> {
        validate_dims(dims, sigma_floor)?;
        Ok(RewardHead {
            dims: dims.to_vec(),
            sigma_floor,
            params: vec![0.0; param_count(dims)],
        })
    }

    /// Uniform `±1/√fan_in` weights, zero biases.
    pub fn init(dims: &[usize], sigma_floor: f64, rng: &mut Rng) -> Result<Self> {
        let mut head = Self::zeros(dims, sigma_floor)?;
        let mut offset = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut head.params[offset..offset + fan_in * fan_out] {
                *p = rng.uniform_range(-bound, bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(head)
    }

    pub fn from_params(dims: &[usize], sigma_floor: f64, params: Vec<f64>) -> Result<Self> {
        validate_dims(dims, sigma_floor)?;
        let expected = param_count(dims);
        if params.len() != expected {
            return Err(Error::InvalidHead(format!(
                "{} parameters for dims {dims:?}, expected {expected}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidHead("non-finite parameter".into()));
        }
        Ok(RewardHead {
            dims: dims.to_vec(),
            sigma_floor,
            params,
        })
    }

    /// Single affine layer whose `mu` row is `probe`; `sigma` sits at
    /// `sigma_floor + ln 2`.
    pub fn linear_probe(probe: &[f64], sigma_floor: f64) -> Result<Self> {
        let d = probe.len();
        let mut head = Self::zeros(&[d, 2], sigma_floor)?;
        head.params[..d].copy_from_slice(probe);
        Ok(head)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Offset of each layer's weight block in the flat parameter vector.
    pub fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.dims.len() - 1);
        let mut off = 0;
        for w in self.dims.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        offsets
    }

    /// Shift the `mu` output bias; leaves every ordering of scores intact.
    pub fn shift_mu(&mut self, delta: f64) {
        let last = self.dims.len() - 2;
        let off = self.layer_offsets()[last] + self.dims[last] * 2;
        self.params[off] += delta;
    }

    pub fn forward(&self, embedding: &EmbeddingVector) -> Result<ScoreDistribution> {
        Ok(self.forward_cached(embedding)?.score)
    }

    /// `mu` only; the reported score of a sample.
    pub fn score(&self, embedding: &EmbeddingVector) -> Result<f64> {
        Ok(self.forward(embedding)?.mu)
    }

    pub(crate) fn forward_cached(&self, embedding: &EmbeddingVector) -> Result<Activations> {
        if embedding.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: embedding.dim(),
            });
        }
        let n_layers = self.dims.len() - 1;
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers - 1);
        let mut a: Vec<f64> = embedding.values().iter().map(|&v| v as f64).collect();
        let mut off = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let weights = &self.params[off..off + fan_in * fan_out];
            let bias = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let z: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &weights[o * fan_in..(o + 1) * fan_in];
                    bias[o] + row.iter().zip(&a).map(|(w, x)| w * x).sum::<f64>()
                })
                .collect();
            off += fan_in * fan_out + fan_out;
            inputs.push(a);
            if l + 1 < n_layers {
                a = z.iter().map(|&v| gelu(v)).collect();
                pre.push(z);
            } else {
                a = z;
            }
        }
        let raw_sigma = a[1];
        let score = ScoreDistribution {
            mu: a[0],
            sigma: self.sigma_floor + softplus(raw_sigma),
        };
        Ok(Activations {
            inputs,
            pre,
            raw_sigma,
            score,
        })
    }

    /// Accumulate `∂L/∂params` into `grad` given `∂L/∂mu` and `∂L/∂sigma`.
    pub(crate) fn backward(&self, acts: &Activations, d_mu: f64, d_sigma: f64, grad: &mut [f64]) {
        let offsets = self.layer_offsets();
        let n_layers = self.dims.len() - 1;
        let mut delta = vec![d_mu, d_sigma * sigmoid(acts.raw_sigma)];
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let off = offsets[l];
            let input = &acts.inputs[l];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[off + fan_in * fan_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let weights = &self.params[off..off + fan_in * fan_out];
            let pre = &acts.pre[l - 1];
            delta = (0..fan_in)
                .map(|i| {
                    let back: f64 = (0..fan_out).map(|o| weights[o * fan_in + i] * delta[o]).sum();
                    back * gelu_derivative(pre[i])
                })
                .collect();
        }
    }
}
