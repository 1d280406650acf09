use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Matrix, Mlp, MlpCache, MlpGrads};
use crate::rng::Rng;

/// Sinusoidal embedding of timestep `t`: `[cos(t·f_j) .., sin(t·f_j) ..]`
/// with `f_j = exp(−ln(10000)·j/half)`. Odd `dim` gets a trailing zero.
pub fn timestep_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for j in 0..half {
        let freq = (-(10_000f64).ln() * j as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        out[j] = arg.cos();
        out[half + j] = arg.sin();
    }
    out
}

/// MLP predicting `x̂_0` from `[x_t | emb(t)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Denoiser {
    pub mlp: Mlp,
    pub emb_dim: usize,
}

#[derive(Debug, Clone)]
pub struct DenoiserCache {
    mlp: MlpCache,
}

impl Denoiser {
    /// `dims = [hidden..]`; input/output widths come from `data_dim`.
    pub fn new(data_dim: usize, hidden: &[usize], emb_dim: usize, rng: &mut Rng) -> Result<Denoiser> {
        let mut dims = vec![data_dim + emb_dim];
        dims.extend_from_slice(hidden);
        dims.push(data_dim);
        Ok(Denoiser {
            mlp: Mlp::new(&dims, Activation::Tanh, Activation::Identity, rng)?,
            emb_dim,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.mlp.out_dim()
    }

    fn input(&self, x_t: &Matrix, ts: &[usize]) -> Result<Matrix> {
        if x_t.cols() != self.data_dim() || ts.len() != x_t.rows() {
            return Err(Error::DimensionMismatch {
                context: "denoiser input",
                expected: self.data_dim(),
                actual: x_t.cols(),
            });
        }
        let mut emb = Matrix::zeros(ts.len(), self.emb_dim);
        for (r, &t) in ts.iter().enumerate() {
            emb.row_mut(r).copy_from_slice(&timestep_embedding(t, self.emb_dim));
        }
        x_t.hcat(&emb)
    }

    pub fn forward(&self, x_t: &Matrix, ts: &[usize]) -> Result<(Matrix, DenoiserCache)> {
        let (out, mlp) = self.mlp.forward(&self.input(x_t, ts)?)?;
        Ok((out, DenoiserCache { mlp }))
    }

    pub fn predict(&self, x_t: &Matrix, ts: &[usize]) -> Result<Matrix> {
        self.mlp.predict(&self.input(x_t, ts)?)
    }

    /// Same timestep for every row.
    pub fn predict_at(&self, x_t: &Matrix, t: usize) -> Result<Matrix> {
        self.predict(x_t, &vec![t; x_t.rows()])
    }

    /// Parameter gradients and the gradient w.r.t. `x_t` (embedding columns dropped).
    pub fn backward(&self, cache: &DenoiserCache, d_out: &Matrix) -> Result<(MlpGrads, Matrix)> {
        let (grads, d_in) = self.mlp.backward(&cache.mlp, d_out)?;
        Ok((grads, d_in.columns(0, self.data_dim())))
    }
}
