//! L-DiffRec: items are clustered on pretrained embeddings, each cluster's
//! slice of the interaction vector is compressed by its own VAE, and a single
//! denoiser runs diffusion on the concatenated latent.

mod cluster;

pub use cluster::{kmeans_cluster, kmeans_traced, merge_clusters, split_by_cluster, ClusterPartition, KMeansTrace};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::baselines::{check_train, fit_bprmf, multinomial_nll, standard_normal, BprParams, GaussianLatent, TrainingLog};
use crate::diffusion::{build_schedule, draw_noise, reverse_denoise_with, Denoiser, DiffRecModel, DiffusionPass};
use crate::error::{Error, Result};
use crate::model::{dense_batch, Recommender};
use crate::nn::{l2_normalize_rows, Activation, AdamState, Matrix, Mlp, MlpGrads};
use crate::par;
use crate::rng::{Rng, SeedStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LDiffRecParams {
    pub clusters: usize,
    /// Per-cluster latent width as a fraction of the cluster size.
    pub compression: f64,
    pub vae_hidden_dims: Vec<usize>,
    pub steps: usize,
    pub noise_scale: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub infer_fraction: f64,
    pub denoiser_hidden_dims: Vec<usize>,
    pub emb_dim: usize,
    /// Weight of the VAE terms in the joint loss.
    pub gamma: f64,
    pub beta_kl: f64,
    pub freeze_vae: bool,
    pub embedding_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for LDiffRecParams {
    fn default() -> Self {
        Self {
            clusters: 2,
            compression: 0.1,
            vae_hidden_dims: vec![200],
            steps: 5,
            noise_scale: 0.1,
            beta_min: 1e-4,
            beta_max: 0.02,
            infer_fraction: 0.0,
            denoiser_hidden_dims: vec![300],
            emb_dim: 10,
            gamma: 1.0,
            beta_kl: 0.1,
            freeze_vae: false,
            embedding_dim: 64,
            lr: 1e-3,
            epochs: 50,
            batch_size: 400,
        }
    }
}

/// `max(1, round(ρ·|c|))` for every cluster size.
pub fn latent_dims(sizes: &[usize], compression: f64) -> Vec<usize> {
    sizes.iter().map(|&s| ((compression * s as f64).round() as usize).max(1)).collect()
}

/// One encoder/decoder pair per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterVae {
    pub encoders: Vec<Mlp>,
    pub decoders: Vec<Mlp>,
    pub latent_dims: Vec<usize>,
}

impl ClusterVae {
    pub fn new(sizes: &[usize], latent_dims: &[usize], hidden: &[usize], rng: &mut Rng) -> Result<ClusterVae> {
        let mut encoders = Vec::with_capacity(sizes.len());
        let mut decoders = Vec::with_capacity(sizes.len());
        for (&n, &d) in sizes.iter().zip(latent_dims) {
            let mut enc = vec![n];
            enc.extend_from_slice(hidden);
            enc.push(2 * d);
            let mut dec = vec![d];
            dec.extend(hidden.iter().rev());
            dec.push(n);
            encoders.push(Mlp::new(&enc, Activation::Tanh, Activation::Identity, rng)?);
            decoders.push(Mlp::new(&dec, Activation::Tanh, Activation::Identity, rng)?);
        }
        Ok(ClusterVae {
            encoders,
            decoders,
            latent_dims: latent_dims.to_vec(),
        })
    }

    pub fn total_latent(&self) -> usize {
        self.latent_dims.iter().sum()
    }

    fn param_count(&self) -> usize {
        self.encoders.iter().chain(&self.decoders).map(Mlp::param_count).sum()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.encoders
            .iter_mut()
            .chain(self.decoders.iter_mut())
            .flat_map(Mlp::params_mut)
            .collect()
    }

    /// Encoder means per cluster, concatenated.
    pub fn encode_means(&self, parts: &[Matrix]) -> Result<Matrix> {
        let mus = par::map_range(parts.len(), |c| {
            let stats = self.encoders[c].predict(&parts[c])?;
            Ok(stats.columns(0, self.latent_dims[c]))
        });
        hcat_all(&mus.into_iter().collect::<Result<Vec<_>>>()?)
    }

    /// Decoder logits per cluster from a concatenated latent.
    pub fn decode(&self, z: &Matrix) -> Result<Vec<Matrix>> {
        let blocks = split_dims(z, &self.latent_dims);
        par::map_range(blocks.len(), |c| self.decoders[c].predict(&blocks[c]))
            .into_iter()
            .collect()
    }
}

fn hcat_all(parts: &[Matrix]) -> Result<Matrix> {
    let mut out = parts[0].clone();
    for p in &parts[1..] {
        out = out.hcat(p)?;
    }
    Ok(out)
}

fn split_dims(z: &Matrix, dims: &[usize]) -> Vec<Matrix> {
    let mut start = 0;
    dims.iter()
        .map(|&d| {
            let block = z.columns(start, start + d);
            start += d;
            block
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LDiffRecModel {
    pub partition: ClusterPartition,
    pub vae: ClusterVae,
    /// Diffusion over the concatenated latent.
    pub latent: DiffRecModel,
    pub gamma: f64,
    pub beta_kl: f64,
    pub log: TrainingLog,
}

/// Frozen randomness for one batch of the joint loss.
#[derive(Debug, Clone)]
pub struct LDiffRecNoise {
    /// Reparameterization noise per cluster, `batch × d_c`.
    pub vae_eps: Vec<Matrix>,
    pub ts: Vec<usize>,
    pub diff_eps: Matrix,
}

impl LDiffRecNoise {
    pub fn draw(rows: usize, latent_dims: &[usize], steps: usize, rng: &mut Rng) -> LDiffRecNoise {
        let vae_eps = latent_dims.iter().map(|&d| standard_normal(rows, d, rng)).collect();
        let (ts, diff_eps) = draw_noise(rows, latent_dims.iter().sum(), steps, rng);
        LDiffRecNoise { vae_eps, ts, diff_eps }
    }
}

#[derive(Debug, Clone)]
pub struct LDiffRecLoss {
    pub loss: f64,
    pub diffusion: f64,
    pub recon: f64,
    pub kl: f64,
    pub encoder_grads: Vec<MlpGrads>,
    pub decoder_grads: Vec<MlpGrads>,
    pub denoiser_grads: MlpGrads,
}

impl LDiffRecLoss {
    /// Gradient slices in the order of [`LDiffRecModel`]'s parameter layout:
    /// encoders, decoders, denoiser.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.encoder_grads
            .iter()
            .chain(&self.decoder_grads)
            .chain(std::iter::once(&self.denoiser_grads))
            .flat_map(MlpGrads::slices)
            .collect()
    }
}

impl LDiffRecModel {
    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.vae.params_mut();
        p.extend(self.latent.denoiser.mlp.params_mut());
        p
    }

    /// Flat parameter vector: encoders, decoders, denoiser.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for m in self.vae.encoders.iter().chain(&self.vae.decoders) {
            out.extend(m.flatten());
        }
        out.extend(self.latent.denoiser.mlp.flatten());
        out
    }

    pub fn assign(&mut self, flat: &[f64]) -> Result<()> {
        let mut offset = 0;
        for m in self.vae.encoders.iter_mut().chain(self.vae.decoders.iter_mut()) {
            let n = m.param_count();
            m.assign(&flat[offset..offset + n])?;
            offset += n;
        }
        self.latent.denoiser.mlp.assign(&flat[offset..])
    }

    fn input_parts(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        let mut input = x.clone();
        l2_normalize_rows(&mut input);
        self.partition.split_columns(&input)
    }

    /// Scores with an arbitrary latent predictor `f(z_t, t)` in place of the denoiser.
    pub fn score_rows_with<F>(&self, x: &Matrix, f: F) -> Result<Matrix>
    where
        F: Fn(&Matrix, usize) -> Result<Matrix>,
    {
        let z0 = self.vae.encode_means(&self.input_parts(x)?)?;
        let z = reverse_denoise_with(&z0, &self.latent.schedule, self.latent.infer_steps, f)?;
        self.partition.merge_columns(&self.vae.decode(&z)?)
    }

    pub fn score_rows(&self, x: &Matrix) -> Result<Matrix> {
        self.score_rows_with(x, |z, t| self.latent.denoiser.predict_at(z, t))
    }
}

/// Joint loss `L_diff + γ·(L_recon + β_KL·KL)` with frozen noise. `x` holds
/// binary interaction rows; encoders see them L2-normalized.
pub fn ldiffrec_loss(model: &LDiffRecModel, x: &Matrix, noise: &LDiffRecNoise, gamma: f64, beta_kl: f64) -> Result<LDiffRecLoss> {
    let vae = &model.vae;
    let n_c = vae.latent_dims.len();
    let parts = model.input_parts(x)?;
    let encoded = par::map_range(n_c, |c| vae.encoders[c].forward(&parts[c]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let latents: Vec<GaussianLatent> = encoded
        .iter()
        .enumerate()
        .map(|(c, (stats, _))| GaussianLatent::new(stats, vae.latent_dims[c], &noise.vae_eps[c]))
        .collect();
    let z0 = hcat_all(&latents.iter().map(|l| l.z.clone()).collect::<Vec<_>>())?;

    let den = &model.latent.denoiser;
    let sched = &model.latent.schedule;
    let pass = DiffusionPass::forward(&z0, &noise.ts, &noise.diff_eps, sched, den)?;
    let diffusion = pass.loss();

    let pred_blocks = split_dims(&pass.prediction, &vae.latent_dims);
    let decoded = par::map_range(n_c, |c| vae.decoders[c].forward(&pred_blocks[c]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let logits = model
        .partition
        .merge_columns(&decoded.iter().map(|(l, _)| l.clone()).collect::<Vec<_>>())?;
    let (recon, mut d_logits) = multinomial_nll(&logits, x);
    d_logits.as_mut_slice().iter_mut().for_each(|d| *d *= gamma);
    let d_logit_parts = model.partition.split_columns(&d_logits)?;
    let dec_back = par::map_range(n_c, |c| vae.decoders[c].backward(&decoded[c].1, &d_logit_parts[c]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let d_pred = hcat_all(&dec_back.iter().map(|(_, d)| d.clone()).collect::<Vec<_>>())?;
    let (denoiser_grads, d_z0) = pass.backward(den, sched, Some(&d_pred))?;

    let kl: f64 = latents.iter().map(GaussianLatent::kl).sum();
    let d_z_blocks = split_dims(&d_z0, &vae.latent_dims);
    let encoder_grads = par::map_range(n_c, |c| {
        let d_stats = latents[c].backward(&d_z_blocks[c], gamma * beta_kl)?;
        Ok(vae.encoders[c].backward(&encoded[c].1, &d_stats)?.0)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(LDiffRecLoss {
        loss: diffusion + gamma * (recon + beta_kl * kl),
        diffusion,
        recon,
        kl,
        encoder_grads,
        decoder_grads: dec_back.into_iter().map(|(g, _)| g).collect(),
        denoiser_grads,
    })
}

/// Item factors of a BPRMF fit with default settings and dimension `dim`.
pub fn pretrain_item_embeddings(train: &[Vec<u32>], n_items: usize, dim: usize, seed: u64) -> Result<Matrix> {
    let params = BprParams {
        dim,
        ..BprParams::default()
    };
    Ok(fit_bprmf(train, n_items, &params, seed)?.item_factors)
}

/// Untrained model on a given partition.
pub fn init_ldiffrec(partition: ClusterPartition, params: &LDiffRecParams, seed: u64) -> Result<LDiffRecModel> {
    if params.compression.is_nan() || params.compression <= 0.0 {
        return Err(Error::Config(format!("compression must be positive, got {}", params.compression)));
    }
    let seeds = SeedStream::new(seed);
    let dims = latent_dims(&partition.sizes(), params.compression);
    let vae = ClusterVae::new(
        &partition.sizes(),
        &dims,
        &params.vae_hidden_dims,
        &mut seeds.stream("ldiffrec/vae"),
    )?;
    let schedule = build_schedule(params.steps, params.noise_scale, params.beta_min, params.beta_max)?;
    if !(0.0..=1.0).contains(&params.infer_fraction) {
        return Err(Error::Config(format!(
            "infer_fraction must lie in [0, 1], got {}",
            params.infer_fraction
        )));
    }
    let infer_steps = (params.infer_fraction * params.steps as f64 + 1e-9).floor() as usize;
    let denoiser = Denoiser::new(
        vae.total_latent(),
        &params.denoiser_hidden_dims,
        params.emb_dim,
        &mut seeds.stream("ldiffrec/denoiser"),
    )?;
    Ok(LDiffRecModel {
        partition,
        vae,
        latent: DiffRecModel {
            schedule,
            denoiser,
            infer_steps,
            log: TrainingLog::default(),
        },
        gamma: params.gamma,
        beta_kl: params.beta_kl,
        log: TrainingLog::default(),
    })
}

pub fn fit_ldiffrec(train: &[Vec<u32>], n_items: usize, params: &LDiffRecParams, seed: u64) -> Result<LDiffRecModel> {
    check_train(train, n_items)?;
    if params.epochs == 0 || params.batch_size == 0 {
        return Err(Error::Config("L-DiffRec needs epochs and batch_size >= 1".into()));
    }
    let embeddings = pretrain_item_embeddings(train, n_items, params.embedding_dim, seed)?;
    let partition = kmeans_cluster(&embeddings, params.clusters, seed)?;
    let mut model = init_ldiffrec(partition, params, seed)?;
    train_ldiffrec(&mut model, train, params, seed)?;
    Ok(model)
}

/// Joint training of an initialized model.
pub fn train_ldiffrec(model: &mut LDiffRecModel, train: &[Vec<u32>], params: &LDiffRecParams, seed: u64) -> Result<()> {
    let n_items = model.partition.n_items();
    let seeds = SeedStream::new(seed);
    let vae_params = model.vae.param_count();
    let mut adam = AdamState::new(vae_params + model.latent.denoiser.mlp.param_count(), params.lr);
    let vae_slices = model
        .vae
        .encoders
        .iter()
        .chain(&model.vae.decoders)
        .map(|m| m.params().len())
        .sum::<usize>();
    let widest = model
        .vae
        .encoders
        .iter()
        .chain(&model.vae.decoders)
        .flat_map(Mlp::params)
        .map(<[f64]>::len)
        .max()
        .unwrap_or(0);
    let zeros = vec![0.0; widest];
    let mut users: Vec<usize> = (0..train.len()).filter(|u| !train[*u].is_empty()).collect();
    for epoch in 0..params.epochs {
        let mut rng = seeds.indexed("ldiffrec/epoch", epoch as u64);
        users.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for batch in users.chunks(params.batch_size) {
            let hist: Vec<&[u32]> = batch.iter().map(|&u| train[u].as_slice()).collect();
            let x = dense_batch(&hist, n_items);
            let noise = LDiffRecNoise::draw(x.rows(), &model.vae.latent_dims, model.latent.schedule.steps(), &mut rng);
            let out = ldiffrec_loss(model, &x, &noise, params.gamma, params.beta_kl)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "L-DiffRec loss at epoch {epoch}, batch {batches} (diffusion {}, recon {}, kl {})",
                    out.diffusion, out.recon, out.kl
                )));
            }
            let mut grads = out.slices();
            if params.freeze_vae {
                // zero VAE gradients keep Adam's moments, and so the VAE, at rest
                for g in grads.iter_mut().take(vae_slices) {
                    *g = &zeros[..g.len()];
                }
            }
            adam.update(model.params_mut(), &grads)?;
            total += out.loss;
            batches += 1;
        }
        tracing::debug!(epoch, loss = total / batches as f64, "ldiffrec");
        model.log.epoch_losses.push(total / batches.max(1) as f64);
    }
    Ok(())
}

impl Recommender for LDiffRecModel {
    fn n_items(&self) -> usize {
        self.partition.n_items()
    }

    fn score_user(&self, _user: usize, history: &[u32]) -> Result<Vec<f64>> {
        Ok(self.score_rows(&dense_batch(&[history], self.n_items()))?.into_vec())
    }

    fn score_batch(&self, _users: &[usize], histories: &[&[u32]]) -> Result<Matrix> {
        self.score_rows(&dense_batch(histories, self.n_items()))
    }
}

/// Score one history vector.
pub fn score_ldiffrec(x: &[f64], m: &LDiffRecModel) -> Result<Vec<f64>> {
    let row = Matrix::from_vec(1, x.len(), x.to_vec())?;
    Ok(m.score_rows(&row)?.into_vec())
}
