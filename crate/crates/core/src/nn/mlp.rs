use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Affine map followed by an elementwise activation. `weight` is `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Multi-layer perceptron over row batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MlpRecord", try_from = "MlpRecord")]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Activations saved by [`Mlp::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// `inputs[l]` is the input of layer `l`; `outputs[l]` its activated output.
    inputs: Vec<Matrix>,
    outputs: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Parameter gradients of an [`Mlp`], layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

impl MlpGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()]).collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

impl Mlp {
    /// Xavier-uniform weights, zero biases. `dims = [in, hidden.., out]`.
    pub fn new(dims: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Result<Mlp> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid MLP dimensions {dims:?}")));
        }
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (dims[l], dims[l + 1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)).collect();
                Layer {
                    weight: Matrix::from_vec(fan_in, fan_out, data).expect("sized above"),
                    bias: vec![0.0; fan_out],
                    activation: if l + 1 == n { output } else { hidden },
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Mlp> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for l in &layers {
            if l.bias.len() != l.out_dim() {
                return Err(Error::DimensionMismatch {
                    context: "layer bias",
                    expected: l.out_dim(),
                    actual: l.bias.len(),
                });
            }
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::DimensionMismatch {
                    context: "adjacent layers",
                    expected: pair[0].out_dim(),
                    actual: pair[1].in_dim(),
                });
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.as_slice().len() + l.bias.len()).sum()
    }

    fn layer_forward(layer: &Layer, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul(&layer.weight)?;
        for r in 0..out.rows() {
            for (v, b) in out.row_mut(r).iter_mut().zip(&layer.bias) {
                *v = layer.activation.apply(*v + b);
            }
        }
        Ok(out)
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                context: "mlp input",
                expected: self.in_dim(),
                actual: x.cols(),
            });
        }
        Ok(())
    }

    /// Forward pass keeping what backprop needs.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = outputs.last().cloned().unwrap_or_else(|| x.clone());
            let out = Self::layer_forward(layer, &input)?;
            inputs.push(input);
            outputs.push(out);
        }
        let out = outputs.last().cloned().expect("at least one layer");
        Ok((out, MlpCache { inputs, outputs }))
    }

    /// Forward pass without a cache.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = Self::layer_forward(&self.layers[0], x)?;
        for layer in &self.layers[1..] {
            h = Self::layer_forward(layer, &h)?;
        }
        Ok(h)
    }

    pub fn predict_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.predict(&m)?.into_vec())
    }

    /// Reverse-mode pass: parameter gradients and the gradient w.r.t. the input.
    pub fn backward(&self, cache: &MlpCache, d_output: &Matrix) -> Result<(MlpGrads, Matrix)> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::Config("stale MLP cache: layer count differs".into()));
        }
        let last = &cache.outputs[cache.outputs.len() - 1];
        if (last.rows(), last.cols()) != (d_output.rows(), d_output.cols()) {
            return Err(Error::DimensionMismatch {
                context: "mlp output gradient",
                expected: last.rows() * last.cols(),
                actual: d_output.rows() * d_output.cols(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_output.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let out = &cache.outputs[l];
            if layer.activation != Activation::Identity {
                for (d, y) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *d *= layer.activation.derivative_from_output(*y);
                }
            }
            let weight = cache.inputs[l].t_matmul(&delta)?;
            let mut bias = vec![0.0; layer.out_dim()];
            for r in 0..delta.rows() {
                for (b, d) in bias.iter_mut().zip(delta.row(r)) {
                    *b += d;
                }
            }
            let d_input = delta.matmul_t(&layer.weight)?;
            grads.push(LayerGrads { weight, bias });
            delta = d_input;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, delta))
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weight: Matrix::zeros(l.in_dim(), l.out_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    /// Parameter storage in a fixed order (weights then bias, per layer).
    pub fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params().concat()
    }

    /// Overwrite all parameters from a flat vector in [`Mlp::params`] order.
    pub fn assign(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "mlp parameter vector",
                expected: self.param_count(),
                actual: flat.len(),
            });
        }
        let mut offset = 0;
        for p in self.params_mut() {
            p.copy_from_slice(&flat[offset..offset + p.len()]);
            offset += p.len();
        }
        Ok(())
    }
}

/// Portable checkpoint form: dimensions, activations and one flat parameter array.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MlpRecord {
    dims: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

impl From<Mlp> for MlpRecord {
    fn from(m: Mlp) -> Self {
        MlpRecord {
            dims: m.dims(),
            activations: m.layers.iter().map(|l| l.activation).collect(),
            params: m.flatten(),
        }
    }
}

impl TryFrom<MlpRecord> for Mlp {
    type Error = Error;

    fn try_from(r: MlpRecord) -> Result<Mlp> {
        if r.dims.len() != r.activations.len() + 1 {
            return Err(Error::Config("checkpoint activation count does not match dims".into()));
        }
        let layers = r
            .activations
            .iter()
            .enumerate()
            .map(|(l, act)| Layer {
                weight: Matrix::zeros(r.dims[l], r.dims[l + 1]),
                bias: vec![0.0; r.dims[l + 1]],
                activation: *act,
            })
            .collect();
        let mut m = Mlp::from_layers(layers)?;
        m.assign(&r.params)?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, GradCheckOptions};
    use crate::rng::SeedStream;

    fn rng() -> Rng {
        SeedStream::new(3).stream("mlp-test")
    }

    fn single(weight: Vec<f64>, in_dim: usize, out_dim: usize, bias: Vec<f64>, act: Activation) -> Mlp {
        Mlp::from_layers(vec![Layer {
            weight: Matrix::from_vec(in_dim, out_dim, weight).unwrap(),
            bias,
            activation: act,
        }])
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let m = single(Matrix::identity(3).into_vec(), 3, 3, vec![0.0; 3], Activation::Identity);
        assert_eq!(m.predict_vec(&[1.0, -2.0, 3.5]).unwrap(), vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn zero_weights_return_bias() {
        let m = single(vec![0.0; 6], 3, 2, vec![0.25, -4.0], Activation::Identity);
        assert_eq!(m.predict_vec(&[9.0, 1.0, -7.0]).unwrap(), vec![0.25, -4.0]);
    }

    #[test]
    fn two_two_one_tanh_matches_hand_evaluation() {
        // h = tanh(x W1 + b1), y = tanh(h W2 + b2)
        let layers = vec![
            Layer {
                weight: Matrix::from_vec(2, 2, vec![0.1, -0.2, 0.3, 0.4]).unwrap(),
                bias: vec![0.05, -0.05],
                activation: Activation::Tanh,
            },
            Layer {
                weight: Matrix::from_vec(2, 1, vec![0.5, -0.6]).unwrap(),
                bias: vec![0.1],
                activation: Activation::Tanh,
            },
        ];
        let m = Mlp::from_layers(layers).unwrap();
        let x = [1.0, 2.0];
        let h0 = (1.0f64 * 0.1 + 2.0 * 0.3 + 0.05).tanh();
        let h1 = (1.0f64 * -0.2 + 2.0 * 0.4 - 0.05).tanh();
        let y = (h0 * 0.5 + h1 * -0.6 + 0.1).tanh();
        let out = m.predict_vec(&x).unwrap();
        assert!((out[0] - y).abs() < 1e-15);
    }

    #[test]
    fn zero_output_gradient_gives_zero_grads() {
        let m = Mlp::new(&[4, 3, 2], Activation::Tanh, Activation::Identity, &mut rng()).unwrap();
        let x = Matrix::from_vec(2, 4, vec![0.3; 8]).unwrap();
        let (_, cache) = m.forward(&x).unwrap();
        let (g, dx) = m.backward(&cache, &Matrix::zeros(2, 2)).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
        assert!(dx.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_least_squares_closed_form() {
        // L = 0.5 ||XW + b - Y||², dL/dW = Xᵀ(XW + b - Y), dL/db = colsum(XW + b - Y)
        let m = Mlp::new(&[3, 2], Activation::Tanh, Activation::Identity, &mut rng()).unwrap();
        let x = Matrix::from_vec(4, 3, (0..12).map(|v| v as f64 * 0.1 - 0.4).collect()).unwrap();
        let y = Matrix::from_vec(4, 2, (0..8).map(|v| (v as f64).sin()).collect()).unwrap();
        let (out, cache) = m.forward(&x).unwrap();
        let mut resid = out.clone();
        for (r, t) in resid.as_mut_slice().iter_mut().zip(y.as_slice()) {
            *r -= t;
        }
        let (g, _) = m.backward(&cache, &resid).unwrap();
        let w = m.layers()[0].weight.clone();
        for i in 0..3 {
            for j in 0..2 {
                let mut expected = 0.0;
                for r in 0..4 {
                    let pred: f64 = (0..3).map(|k| x.get(r, k) * w.get(k, j)).sum::<f64>() + m.layers()[0].bias[j];
                    expected += x.get(r, i) * (pred - y.get(r, j));
                }
                assert!((g.layers[0].weight.get(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn three_layer_backprop_matches_finite_differences() {
        for (seed, hidden) in [(1u64, Activation::Tanh), (2, Activation::Relu)] {
            let mut r = SeedStream::new(seed).stream("fd");
            let m = Mlp::new(&[5, 7, 6, 3], hidden, Activation::Identity, &mut r).unwrap();
            let x = Matrix::from_vec(3, 5, (0..15).map(|v| ((v * 7 % 11) as f64 - 5.0) * 0.2).collect()).unwrap();
            let target = Matrix::from_vec(3, 3, (0..9).map(|v| (v as f64).cos()).collect()).unwrap();
            let loss = |p: &[f64]| {
                let mut mm = m.clone();
                mm.assign(p).unwrap();
                let out = mm.predict(&x).unwrap();
                out.as_slice()
                    .iter()
                    .zip(target.as_slice())
                    .map(|(a, b)| 0.5 * (a - b).powi(2))
                    .sum::<f64>()
            };
            let (out, cache) = m.forward(&x).unwrap();
            let mut d = out.clone();
            for (v, t) in d.as_mut_slice().iter_mut().zip(target.as_slice()) {
                *v -= t;
            }
            let (g, _) = m.backward(&cache, &d).unwrap();
            let report = grad_check(loss, &m.flatten(), &g.flatten(), &GradCheckOptions::default());
            assert!(report.max_rel_error < 1e-6, "{hidden:?}: {report:?}");
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let m = Mlp::new(&[6, 4, 5], Activation::Tanh, Activation::Identity, &mut rng()).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: Mlp = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn input_dimension_checked() {
        let m = Mlp::new(&[3, 2], Activation::Tanh, Activation::Identity, &mut rng()).unwrap();
        assert!(m.predict(&Matrix::zeros(1, 4)).is_err());
    }
}
