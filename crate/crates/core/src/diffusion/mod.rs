//! DiffRec: Gaussian corruption of interaction vectors, an MLP denoiser
//! predicting the clean vector, and deterministic reverse inference.

mod denoiser;
mod schedule;

pub use denoiser::{timestep_embedding, Denoiser, DenoiserCache};
pub use schedule::{build_schedule, q_sample, q_sample_rows, NoiseSchedule};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baselines::TrainingLog;
use crate::error::{Error, Result};
use crate::model::{dense_batch, Recommender};
use crate::nn::{AdamState, Matrix, MlpGrads};
use crate::rng::{Rng, SeedStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffRecParams {
    pub steps: usize,
    pub noise_scale: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Inference corruption depth as a fraction of `steps` (floored).
    pub infer_fraction: f64,
    pub hidden_dims: Vec<usize>,
    pub emb_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for DiffRecParams {
    fn default() -> Self {
        Self {
            steps: 5,
            noise_scale: 0.1,
            beta_min: 1e-4,
            beta_max: 0.02,
            infer_fraction: 0.0,
            hidden_dims: vec![1000],
            emb_dim: 10,
            lr: 1e-3,
            epochs: 50,
            batch_size: 400,
        }
    }
}

impl DiffRecParams {
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        build_schedule(self.steps, self.noise_scale, self.beta_min, self.beta_max)
    }

    pub fn infer_steps(&self) -> Result<usize> {
        if !(0.0..=1.0).contains(&self.infer_fraction) {
            return Err(Error::Config(format!(
                "infer_fraction must lie in [0, 1], got {}",
                self.infer_fraction
            )));
        }
        Ok((self.infer_fraction * self.steps as f64 + 1e-9).floor() as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffRecModel {
    pub schedule: NoiseSchedule,
    pub denoiser: Denoiser,
    pub infer_steps: usize,
    pub log: TrainingLog,
}

/// Diffusion loss on one batch with fixed timesteps and noise.
#[derive(Debug, Clone)]
pub struct DiffusionLoss {
    pub loss: f64,
    /// Denoiser output `x̂_0`, one row per example.
    pub prediction: Matrix,
    pub grads: MlpGrads,
    /// Gradient w.r.t. `x_0`, through both the corruption and the target.
    pub d_x0: Matrix,
}

/// Draw per-row `t ~ U{1..T}` followed by that row's `ε ~ N(0, I)`.
pub fn draw_noise(rows: usize, dim: usize, steps: usize, rng: &mut Rng) -> (Vec<usize>, Matrix) {
    let mut ts = Vec::with_capacity(rows);
    let mut eps = Vec::with_capacity(rows * dim);
    for _ in 0..rows {
        ts.push(rng.random_range(1..=steps));
        eps.extend((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
    }
    (ts, Matrix::from_vec(rows, dim, eps).expect("sized"))
}

/// `mean_rows ‖f(x_t, t) − x_0‖²` for an arbitrary predictor `f`.
pub fn diffusion_loss_with<F>(x0: &Matrix, ts: &[usize], eps: &Matrix, sched: &NoiseSchedule, f: F) -> Result<f64>
where
    F: Fn(&Matrix, &[usize]) -> Result<Matrix>,
{
    if x0.rows() == 0 {
        return Err(Error::Config("diffusion loss needs a nonempty batch".into()));
    }
    let x_t = q_sample_rows(x0, ts, eps, sched)?;
    let pred = f(&x_t, ts)?;
    let sq: f64 = pred.as_slice().iter().zip(x0.as_slice()).map(|(p, x)| (p - x) * (p - x)).sum();
    Ok(sq / x0.rows() as f64)
}

/// Loss, parameter gradients and `∂loss/∂x_0` with frozen `t` and `ε`.
pub fn diffusion_loss_frozen(x0: &Matrix, ts: &[usize], eps: &Matrix, sched: &NoiseSchedule, denoiser: &Denoiser) -> Result<DiffusionLoss> {
    let pass = DiffusionPass::forward(x0, ts, eps, sched, denoiser)?;
    let loss = pass.loss();
    let (grads, d_x0) = pass.backward(denoiser, sched, None)?;
    Ok(DiffusionLoss {
        loss,
        prediction: pass.prediction,
        grads,
        d_x0,
    })
}

/// Forward half of the diffusion loss, kept so callers can attach a
/// downstream loss to the prediction before backpropagating.
pub(crate) struct DiffusionPass {
    pub prediction: Matrix,
    residual: Matrix,
    ts: Vec<usize>,
    cache: DenoiserCache,
}

impl DiffusionPass {
    pub fn forward(x0: &Matrix, ts: &[usize], eps: &Matrix, sched: &NoiseSchedule, denoiser: &Denoiser) -> Result<Self> {
        if x0.rows() == 0 {
            return Err(Error::Config("diffusion loss needs a nonempty batch".into()));
        }
        let x_t = q_sample_rows(x0, ts, eps, sched)?;
        let (prediction, cache) = denoiser.forward(&x_t, ts)?;
        let mut residual = prediction.clone();
        for (r, x) in residual.as_mut_slice().iter_mut().zip(x0.as_slice()) {
            *r -= x;
        }
        Ok(DiffusionPass {
            prediction,
            residual,
            ts: ts.to_vec(),
            cache,
        })
    }

    pub fn loss(&self) -> f64 {
        self.residual.as_slice().iter().map(|r| r * r).sum::<f64>() / self.residual.rows() as f64
    }

    /// Denoiser gradients and `∂/∂x_0`, with `upstream` added to the
    /// gradient arriving at the prediction.
    pub fn backward(&self, denoiser: &Denoiser, sched: &NoiseSchedule, upstream: Option<&Matrix>) -> Result<(MlpGrads, Matrix)> {
        let b = self.residual.rows() as f64;
        let mut d_pred = self.residual.clone();
        d_pred.as_mut_slice().iter_mut().for_each(|d| *d *= 2.0 / b);
        if let Some(up) = upstream {
            for (d, u) in d_pred.as_mut_slice().iter_mut().zip(up.as_slice()) {
                *d += u;
            }
        }
        let (grads, mut d_x0) = denoiser.backward(&self.cache, &d_pred)?;
        for (row, &t) in self.ts.iter().enumerate() {
            let a = sched.alpha_bar(t).sqrt();
            for (d, r) in d_x0.row_mut(row).iter_mut().zip(self.residual.row(row)) {
                *d = a * *d - 2.0 * r / b;
            }
        }
        Ok((grads, d_x0))
    }
}

/// Draws noise from `rng` (see [`draw_noise`]) and evaluates the loss.
pub fn diffusion_loss(x0: &Matrix, sched: &NoiseSchedule, denoiser: &Denoiser, rng: &mut Rng) -> Result<f64> {
    let (ts, eps) = draw_noise(x0.rows(), x0.cols(), sched.steps(), rng);
    let loss = diffusion_loss_with(x0, &ts, &eps, sched, |x, t| denoiser.predict(x, t))?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("diffusion loss {loss} on a batch of {}", x0.rows())));
    }
    Ok(loss)
}

/// Deterministic reverse process from `x` corrupted to depth `infer_steps`
/// with zero noise; returns the last `x̂_0`. `f(x_t, t)` predicts `x̂_0`.
pub fn reverse_denoise_with<F>(x: &Matrix, sched: &NoiseSchedule, infer_steps: usize, f: F) -> Result<Matrix>
where
    F: Fn(&Matrix, usize) -> Result<Matrix>,
{
    if infer_steps > sched.steps() {
        return Err(Error::Config(format!(
            "inference steps {infer_steps} exceed schedule length {}",
            sched.steps()
        )));
    }
    if infer_steps == 0 {
        return f(x, 0);
    }
    let mut x_t = x.clone();
    let a = sched.alpha_bar(infer_steps).sqrt();
    x_t.as_mut_slice().iter_mut().for_each(|v| *v *= a);
    let mut x0_hat = Matrix::zeros(x.rows(), x.cols());
    for t in (1..=infer_steps).rev() {
        x0_hat = f(&x_t, t)?;
        let (c0, ct) = sched.posterior_coefficients(t);
        for (xt, p) in x_t.as_mut_slice().iter_mut().zip(x0_hat.as_slice()) {
            *xt = c0 * p + ct * *xt;
        }
    }
    Ok(x0_hat)
}

/// Scores for one history vector.
pub fn reverse_denoise(x: &[f64], m: &DiffRecModel) -> Result<Vec<f64>> {
    let row = Matrix::from_vec(1, x.len(), x.to_vec())?;
    Ok(m.reverse_rows(&row)?.into_vec())
}

impl DiffRecModel {
    pub fn reverse_rows(&self, x: &Matrix) -> Result<Matrix> {
        reverse_denoise_with(x, &self.schedule, self.infer_steps, |x_t, t| self.denoiser.predict_at(x_t, t))
    }
}

pub fn fit_diffrec(train: &[Vec<u32>], n_items: usize, params: &DiffRecParams, seed: u64) -> Result<DiffRecModel> {
    crate::baselines::check_train(train, n_items)?;
    if params.epochs == 0 || params.batch_size == 0 {
        return Err(Error::Config("DiffRec needs epochs and batch_size >= 1".into()));
    }
    let schedule = params.schedule()?;
    let infer_steps = params.infer_steps()?;
    let seeds = SeedStream::new(seed);
    let denoiser = Denoiser::new(n_items, &params.hidden_dims, params.emb_dim, &mut seeds.stream("diffrec/init"))?;
    let mut model = DiffRecModel {
        schedule,
        denoiser,
        infer_steps,
        log: TrainingLog::default(),
    };
    let mut adam = AdamState::new(model.denoiser.mlp.param_count(), params.lr);
    let mut users: Vec<usize> = (0..train.len()).filter(|u| !train[*u].is_empty()).collect();
    for epoch in 0..params.epochs {
        let mut rng = seeds.indexed("diffrec/epoch", epoch as u64);
        users.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for batch in users.chunks(params.batch_size) {
            let hist: Vec<&[u32]> = batch.iter().map(|&u| train[u].as_slice()).collect();
            let x0 = dense_batch(&hist, n_items);
            let (ts, eps) = draw_noise(x0.rows(), n_items, model.schedule.steps(), &mut rng);
            let out = diffusion_loss_frozen(&x0, &ts, &eps, &model.schedule, &model.denoiser)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "DiffRec loss at epoch {epoch}, batch {batches}: {}",
                    out.loss
                )));
            }
            adam.update(model.denoiser.mlp.params_mut(), &out.grads.slices())?;
            total += out.loss;
            batches += 1;
        }
        tracing::debug!(epoch, loss = total / batches as f64, "diffrec");
        model.log.epoch_losses.push(total / batches.max(1) as f64);
    }
    Ok(model)
}

impl Recommender for DiffRecModel {
    fn n_items(&self) -> usize {
        self.denoiser.data_dim()
    }

    fn score_user(&self, _user: usize, history: &[u32]) -> Result<Vec<f64>> {
        Ok(self.reverse_rows(&dense_batch(&[history], self.n_items()))?.into_vec())
    }

    fn score_batch(&self, _users: &[usize], histories: &[&[u32]]) -> Result<Matrix> {
        self.reverse_rows(&dense_batch(histories, self.n_items()))
    }
}
