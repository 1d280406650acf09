use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_train, TrainingLog};
use crate::error::{Error, Result};
use crate::model::{dense_batch, Recommender};
use crate::nn::{l2_normalize_rows, log_softmax_rows, Activation, AdamState, Matrix, Mlp, MlpGrads};
use crate::rng::{Rng, SeedStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiVaeParams {
    pub latent_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub dropout: f64,
    pub beta_max: f64,
    pub anneal_steps: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for MultiVaeParams {
    fn default() -> Self {
        Self {
            latent_dim: 200,
            hidden_dims: vec![600],
            dropout: 0.5,
            beta_max: 0.2,
            anneal_steps: 20_000,
            lr: 1e-3,
            epochs: 50,
            batch_size: 500,
        }
    }
}

/// Variational autoencoder with a multinomial likelihood over items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiVaeModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub latent_dim: usize,
    pub log: TrainingLog,
}

/// Loss value, its parts, and parameter gradients for one batch.
#[derive(Debug, Clone)]
pub struct MultiVaeLoss {
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
    pub encoder_grads: MlpGrads,
    pub decoder_grads: MlpGrads,
}

/// Per-row multinomial negative log-likelihood and the gradient of its batch
/// mean w.r.t. the logits.
pub(crate) fn multinomial_nll(logits: &Matrix, target: &Matrix) -> (f64, Matrix) {
    let ls = log_softmax_rows(logits);
    let b = logits.rows() as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        let x = target.row(r);
        let mass: f64 = x.iter().sum();
        total -= ls.row(r).iter().zip(x).map(|(l, xi)| l * xi).sum::<f64>();
        for ((g, l), xi) in grad.row_mut(r).iter_mut().zip(ls.row(r)).zip(x) {
            *g = (l.exp() * mass - xi) / b;
        }
    }
    (total / b, grad)
}

/// Reparameterized Gaussian latent `z = μ + exp(logvar/2)·ε`.
pub(crate) struct GaussianLatent {
    pub mu: Matrix,
    pub logvar: Matrix,
    pub z: Matrix,
    pub eps: Matrix,
}

impl GaussianLatent {
    pub fn new(stats: &Matrix, dim: usize, eps: &Matrix) -> GaussianLatent {
        let mu = stats.columns(0, dim);
        let logvar = stats.columns(dim, 2 * dim);
        let mut z = mu.clone();
        for ((zv, lv), e) in z.as_mut_slice().iter_mut().zip(logvar.as_slice()).zip(eps.as_slice()) {
            *zv += (0.5 * lv).exp() * e;
        }
        GaussianLatent {
            mu,
            logvar,
            z,
            eps: eps.clone(),
        }
    }

    /// Mean over rows of `KL(N(μ, σ²) ‖ N(0, I))`.
    pub fn kl(&self) -> f64 {
        let b = self.mu.rows() as f64;
        self.mu
            .as_slice()
            .iter()
            .zip(self.logvar.as_slice())
            .map(|(m, lv)| 0.5 * (-lv + lv.exp() + m * m - 1.0))
            .sum::<f64>()
            / b
    }

    /// Gradient w.r.t. the encoder output `[μ | logvar]`, given `dz` and the
    /// weight `kl_weight` of [`GaussianLatent::kl`] in the loss.
    pub fn backward(&self, dz: &Matrix, kl_weight: f64) -> Result<Matrix> {
        let b = self.mu.rows() as f64;
        let mut d_mu = dz.clone();
        for (d, m) in d_mu.as_mut_slice().iter_mut().zip(self.mu.as_slice()) {
            *d += kl_weight * m / b;
        }
        let mut d_lv = dz.clone();
        for ((d, lv), e) in d_lv.as_mut_slice().iter_mut().zip(self.logvar.as_slice()).zip(self.eps.as_slice()) {
            *d = *d * e * 0.5 * (0.5 * lv).exp() + kl_weight * 0.5 * (lv.exp() - 1.0) / b;
        }
        d_mu.hcat(&d_lv)
    }
}

pub(crate) fn standard_normal(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

/// Batch loss `mean_u[-Σ_i x_ui log softmax(f(z_u))_i + β·KL_u]` with frozen
/// noise `eps` and input `input` (already normalized / dropped out).
pub fn multivae_loss(model: &MultiVaeModel, input: &Matrix, target: &Matrix, eps: &Matrix, beta: f64) -> Result<MultiVaeLoss> {
    let (stats, enc_cache) = model.encoder.forward(input)?;
    let latent = GaussianLatent::new(&stats, model.latent_dim, eps);
    let (logits, dec_cache) = model.decoder.forward(&latent.z)?;
    let (recon, d_logits) = multinomial_nll(&logits, target);
    let kl = latent.kl();
    let (decoder_grads, dz) = model.decoder.backward(&dec_cache, &d_logits)?;
    let d_stats = latent.backward(&dz, beta)?;
    let (encoder_grads, _) = model.encoder.backward(&enc_cache, &d_stats)?;
    Ok(MultiVaeLoss {
        loss: recon + beta * kl,
        recon,
        kl,
        encoder_grads,
        decoder_grads,
    })
}

impl MultiVaeModel {
    pub fn new(n_items: usize, params: &MultiVaeParams, rng: &mut Rng) -> Result<MultiVaeModel> {
        if params.latent_dim == 0 {
            return Err(Error::Config("MultiVAE latent_dim must be >= 1".into()));
        }
        let mut enc_dims = vec![n_items];
        enc_dims.extend(&params.hidden_dims);
        enc_dims.push(2 * params.latent_dim);
        let mut dec_dims = vec![params.latent_dim];
        dec_dims.extend(params.hidden_dims.iter().rev());
        dec_dims.push(n_items);
        Ok(MultiVaeModel {
            encoder: Mlp::new(&enc_dims, Activation::Tanh, Activation::Identity, rng)?,
            decoder: Mlp::new(&dec_dims, Activation::Tanh, Activation::Identity, rng)?,
            latent_dim: params.latent_dim,
            log: TrainingLog::default(),
        })
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }
}

fn dropout(x: &mut Matrix, rate: f64, rng: &mut Rng) {
    if rate <= 0.0 {
        return;
    }
    let keep = 1.0 - rate;
    for v in x.as_mut_slice() {
        if rng.random::<f64>() < rate {
            *v = 0.0;
        } else {
            *v /= keep;
        }
    }
}

pub fn fit_multivae(train: &[Vec<u32>], n_items: usize, params: &MultiVaeParams, seed: u64) -> Result<MultiVaeModel> {
    check_train(train, n_items)?;
    if !(0.0..1.0).contains(&params.dropout) || params.epochs == 0 || params.batch_size == 0 {
        return Err(Error::Config("MultiVAE needs dropout in [0,1), epochs and batch_size >= 1".into()));
    }
    let seeds = SeedStream::new(seed);
    let mut model = MultiVaeModel::new(n_items, params, &mut seeds.stream("multivae/init"))?;
    let mut adam = AdamState::new(model.param_count(), params.lr);
    let mut users: Vec<usize> = (0..train.len()).filter(|u| !train[*u].is_empty()).collect();
    let mut step = 0usize;
    for epoch in 0..params.epochs {
        let mut rng = seeds.indexed("multivae/epoch", epoch as u64);
        users.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for batch in users.chunks(params.batch_size) {
            let hist: Vec<&[u32]> = batch.iter().map(|&u| train[u].as_slice()).collect();
            let target = dense_batch(&hist, n_items);
            let mut input = target.clone();
            l2_normalize_rows(&mut input);
            dropout(&mut input, params.dropout, &mut rng);
            let eps = standard_normal(batch.len(), params.latent_dim, &mut rng);
            let beta = if params.anneal_steps == 0 {
                params.beta_max
            } else {
                (params.beta_max * step as f64 / params.anneal_steps as f64).min(params.beta_max)
            };
            let out = multivae_loss(&model, &input, &target, &eps, beta)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "MultiVAE loss at epoch {epoch}, step {step} (recon {}, kl {})",
                    out.recon, out.kl
                )));
            }
            let mut grads = out.encoder_grads.slices();
            grads.extend(out.decoder_grads.slices());
            adam.update(model.params_mut(), &grads)?;
            total += out.loss;
            batches += 1;
            step += 1;
        }
        tracing::debug!(epoch, loss = total / batches as f64, "multivae");
        model.log.epoch_losses.push(total / batches.max(1) as f64);
    }
    Ok(model)
}

impl Recommender for MultiVaeModel {
    fn n_items(&self) -> usize {
        self.decoder.out_dim()
    }

    fn score_user(&self, user: usize, history: &[u32]) -> Result<Vec<f64>> {
        Ok(self.score_batch(&[user], &[history])?.into_vec())
    }

    /// Decoder logits at `z = μ`.
    fn score_batch(&self, _users: &[usize], histories: &[&[u32]]) -> Result<Matrix> {
        let mut x = dense_batch(histories, self.n_items());
        l2_normalize_rows(&mut x);
        let stats = self.encoder.predict(&x)?;
        self.decoder.predict(&stats.columns(0, self.latent_dim))
    }
}
