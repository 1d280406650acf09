use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_train, TrainingLog};
use crate::error::{Error, Result};
use crate::model::Recommender;
use crate::nn::Matrix;
use crate::rng::SeedStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BprParams {
    pub dim: usize,
    pub lr: f64,
    pub reg: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub init_std: f64,
}

impl Default for BprParams {
    fn default() -> Self {
        Self {
            dim: 64,
            lr: 1e-3,
            reg: 1e-4,
            epochs: 30,
            batch_size: 256,
            init_std: 0.1,
        }
    }
}

/// Matrix factorization trained with the BPR pairwise objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BprMfModel {
    pub user_factors: Matrix,
    pub item_factors: Matrix,
    pub item_bias: Vec<f64>,
    pub log: TrainingLog,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `ln(1 + e^-x)` without overflow.
fn softplus_neg(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(x̂_ui - x̂_uj) + reg·(‖p_u‖² + ‖q_i‖² + ‖q_j‖²)`, with `x̂_ui = p_u·q_i + b_i`.
pub fn bpr_triple_loss(p_u: &[f64], q_i: &[f64], q_j: &[f64], b_i: f64, b_j: f64, reg: f64) -> f64 {
    let diff = dot(p_u, q_i) + b_i - dot(p_u, q_j) - b_j;
    softplus_neg(diff) + reg * (sq(p_u) + sq(q_i) + sq(q_j))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleGrad {
    pub p_u: Vec<f64>,
    pub q_i: Vec<f64>,
    pub q_j: Vec<f64>,
    pub b_i: f64,
    pub b_j: f64,
}

/// Analytic gradient of [`bpr_triple_loss`].
pub fn bpr_triple_grad(p_u: &[f64], q_i: &[f64], q_j: &[f64], b_i: f64, b_j: f64, reg: f64) -> TripleGrad {
    let diff = dot(p_u, q_i) + b_i - dot(p_u, q_j) - b_j;
    // d/d(diff) of -ln σ(diff)
    let g = -sigmoid(-diff);
    TripleGrad {
        p_u: p_u
            .iter()
            .zip(q_i.iter().zip(q_j))
            .map(|(p, (qi, qj))| g * (qi - qj) + 2.0 * reg * p)
            .collect(),
        q_i: p_u.iter().zip(q_i).map(|(p, q)| g * p + 2.0 * reg * q).collect(),
        q_j: p_u.iter().zip(q_j).map(|(p, q)| -g * p + 2.0 * reg * q).collect(),
        b_i: g,
        b_j: -g,
    }
}

/// Uniform negative among items the user has not interacted with in train.
fn sample_negative(rng: &mut crate::rng::Rng, positives: &[u32], n_items: usize) -> Option<u32> {
    if positives.len() >= n_items {
        return None;
    }
    loop {
        let j = rng.random_range(0..n_items) as u32;
        if positives.binary_search(&j).is_err() {
            return Some(j);
        }
    }
}

/// Fit BPRMF with mini-batch Adam over `(u, i⁺, j⁻)` triples; negatives are
/// resampled every epoch.
pub fn fit_bprmf(train: &[Vec<u32>], n_items: usize, params: &BprParams, seed: u64) -> Result<BprMfModel> {
    if params.dim == 0 || params.epochs == 0 || params.batch_size == 0 {
        return Err(Error::Config("BPRMF needs dim, epochs and batch_size >= 1".into()));
    }
    check_train(train, n_items)?;
    let seeds = SeedStream::new(seed);
    let n_users = train.len();
    let d = params.dim;
    let normal = Normal::new(0.0, params.init_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut init = seeds.stream("bpr/init");
    let mut users = Matrix::from_vec(n_users, d, (0..n_users * d).map(|_| normal.sample(&mut init)).collect())?;
    let mut items = Matrix::from_vec(n_items, d, (0..n_items * d).map(|_| normal.sample(&mut init)).collect())?;
    let mut bias = Matrix::zeros(n_items, 1);

    let sorted: Vec<Vec<u32>> = train
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.sort_unstable();
            t
        })
        .collect();
    let mut pairs: Vec<(u32, u32)> = sorted
        .iter()
        .enumerate()
        .flat_map(|(u, items)| items.iter().map(move |&i| (u as u32, i)))
        .collect();

    let mut user_opt = RowAdam::new(n_users, d, params.lr);
    let mut item_opt = RowAdam::new(n_items, d, params.lr);
    let mut bias_opt = RowAdam::new(n_items, 1, params.lr);
    let mut g_users = Matrix::zeros(n_users, d);
    let mut g_items = Matrix::zeros(n_items, d);
    let mut g_bias = Matrix::zeros(n_items, 1);
    let mut touched_users = Touched::new(n_users);
    let mut touched_items = Touched::new(n_items);
    let mut log = TrainingLog::default();

    for epoch in 0..params.epochs {
        let mut rng = seeds.indexed("bpr/epoch", epoch as u64);
        pairs.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut counted = 0usize;
        for batch in pairs.chunks(params.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &(u, i) in batch {
                let Some(j) = sample_negative(&mut rng, &sorted[u as usize], n_items) else {
                    continue;
                };
                let (u, i, j) = (u as usize, i as usize, j as usize);
                let (p, qi, qj) = (users.row(u), items.row(i), items.row(j));
                let (bi, bj) = (bias.get(i, 0), bias.get(j, 0));
                epoch_loss += bpr_triple_loss(p, qi, qj, bi, bj, params.reg);
                counted += 1;
                let g = bpr_triple_grad(p, qi, qj, bi, bj, params.reg);
                touched_users.mark(u);
                touched_items.mark(i);
                touched_items.mark(j);
                for (a, b) in g_users.row_mut(u).iter_mut().zip(&g.p_u) {
                    *a += scale * b;
                }
                for (a, b) in g_items.row_mut(i).iter_mut().zip(&g.q_i) {
                    *a += scale * b;
                }
                for (a, b) in g_items.row_mut(j).iter_mut().zip(&g.q_j) {
                    *a += scale * b;
                }
                g_bias.row_mut(i)[0] += scale * g.b_i;
                g_bias.row_mut(j)[0] += scale * g.b_j;
            }
            user_opt.step(&mut users, &mut g_users, touched_users.rows())?;
            item_opt.step(&mut items, &mut g_items, touched_items.rows())?;
            bias_opt.step(&mut bias, &mut g_bias, touched_items.rows())?;
            touched_users.clear();
            touched_items.clear();
        }
        let mean = epoch_loss / counted.max(1) as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("BPR loss at epoch {epoch}")));
        }
        tracing::debug!(epoch, loss = mean, "bprmf");
        log.epoch_losses.push(mean);
    }
    Ok(BprMfModel {
        user_factors: users,
        item_factors: items,
        item_bias: bias.into_vec(),
        log,
    })
}

/// Rows that received a gradient in the current batch, in first-touch order.
struct Touched {
    flag: Vec<bool>,
    rows: Vec<usize>,
}

impl Touched {
    fn new(n: usize) -> Self {
        Touched {
            flag: vec![false; n],
            rows: Vec::new(),
        }
    }

    fn mark(&mut self, r: usize) {
        if !self.flag[r] {
            self.flag[r] = true;
            self.rows.push(r);
        }
    }

    fn rows(&self) -> &[usize] {
        &self.rows
    }

    fn clear(&mut self) {
        for &r in &self.rows {
            self.flag[r] = false;
        }
        self.rows.clear();
    }
}

/// Adam whose moments are only advanced for rows present in the batch
/// (lazy Adam); bias correction uses the global step count.
struct RowAdam {
    lr: f64,
    step: i32,
    first: Matrix,
    second: Matrix,
}

impl RowAdam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(rows: usize, cols: usize, lr: f64) -> Self {
        RowAdam {
            lr,
            step: 0,
            first: Matrix::zeros(rows, cols),
            second: Matrix::zeros(rows, cols),
        }
    }

    /// Apply and then zero the gradient rows listed in `rows`.
    fn step(&mut self, params: &mut Matrix, grads: &mut Matrix, rows: &[usize]) -> Result<()> {
        self.step += 1;
        if rows.iter().any(|&r| grads.row(r).iter().any(|g| !g.is_finite())) {
            return Err(Error::NonFinite("BPR gradient".into()));
        }
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for &r in rows {
            let g = grads.row_mut(r);
            let m = self.first.row_mut(r);
            for (m, g) in m.iter_mut().zip(g.iter()) {
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            }
            let v = self.second.row_mut(r);
            for (v, g) in v.iter_mut().zip(g.iter()) {
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            }
            g.fill(0.0);
            let (m, v) = (self.first.row(r), self.second.row(r));
            for ((p, m), v) in params.row_mut(r).iter_mut().zip(m).zip(v) {
                *p -= self.lr * (m / c1) / ((v / c2).sqrt() + Self::EPS);
            }
        }
        Ok(())
    }
}

impl Recommender for BprMfModel {
    fn n_items(&self) -> usize {
        self.item_factors.rows()
    }

    fn score_user(&self, user: usize, _history: &[u32]) -> Result<Vec<f64>> {
        if user >= self.user_factors.rows() {
            return Err(Error::Config(format!("user {user} unknown to BPRMF")));
        }
        let p = self.user_factors.row(user);
        Ok((0..self.n_items())
            .map(|i| dot(p, self.item_factors.row(i)) + self.item_bias[i])
            .collect())
    }

    fn score_batch(&self, users: &[usize], _histories: &[&[u32]]) -> Result<Matrix> {
        if let Some(u) = users.iter().find(|u| **u >= self.user_factors.rows()) {
            return Err(Error::Config(format!("user {u} unknown to BPRMF")));
        }
        let mut scores = self.user_factors.select_rows(users).matmul_t(&self.item_factors)?;
        for r in 0..scores.rows() {
            for (s, b) in scores.row_mut(r).iter_mut().zip(&self.item_bias) {
                *s += b;
            }
        }
        Ok(scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, GradCheckOptions};

    #[test]
    fn saturated_margin_has_vanishing_gradient() {
        let p = [50.0, 0.0];
        let g = bpr_triple_grad(&p, &[50.0, 0.0], &[-50.0, 0.0], 0.0, 0.0, 0.0);
        assert!(g.b_i.abs() < 1e-300);
        assert!(g.p_u.iter().chain(&g.q_i).chain(&g.q_j).all(|v| v.abs() < 1e-300));
        assert!(bpr_triple_loss(&p, &[50.0, 0.0], &[-50.0, 0.0], 0.0, 0.0, 0.0) < 1e-300);
    }

    #[test]
    fn triple_gradient_matches_finite_differences() {
        let d = 4;
        let flat: Vec<f64> = (0..3 * d + 2).map(|k| ((k * 37 % 17) as f64 - 8.0) * 0.07).collect();
        let reg = 0.01;
        let split = |v: &[f64]| -> f64 { bpr_triple_loss(&v[..d], &v[d..2 * d], &v[2 * d..3 * d], v[3 * d], v[3 * d + 1], reg) };
        let g = bpr_triple_grad(&flat[..d], &flat[d..2 * d], &flat[2 * d..3 * d], flat[3 * d], flat[3 * d + 1], reg);
        let analytic: Vec<f64> = [g.p_u, g.q_i, g.q_j, vec![g.b_i, g.b_j]].concat();
        let r = grad_check(split, &flat, &analytic, &GradCheckOptions::default());
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn prefers_the_universally_chosen_item() {
        // 40 users, all interacted with item 0 only; item 1 is never chosen.
        let train = vec![vec![0u32]; 40];
        let params = BprParams {
            dim: 8,
            lr: 0.01,
            epochs: 50,
            batch_size: 8,
            ..Default::default()
        };
        let m = fit_bprmf(&train, 2, &params, 1).unwrap();
        let ranked_right = (0..40)
            .filter(|&u| {
                let s = m.score_user(u, &train[u]).unwrap();
                s[0] > s[1]
            })
            .count();
        assert!(ranked_right as f64 >= 0.95 * 40.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let train = vec![vec![0, 2], vec![1, 2], vec![0, 3], vec![3]];
        let params = BprParams {
            dim: 4,
            epochs: 3,
            ..Default::default()
        };
        assert_eq!(fit_bprmf(&train, 4, &params, 9).unwrap(), fit_bprmf(&train, 4, &params, 9).unwrap());
    }

    #[test]
    fn empty_train_is_an_error() {
        assert!(fit_bprmf(&[vec![], vec![]], 3, &BprParams::default(), 0).is_err());
    }

    #[test]
    fn batch_matches_single() {
        let train = vec![vec![0, 2], vec![1, 2], vec![0, 3]];
        let params = BprParams {
            dim: 3,
            epochs: 2,
            ..Default::default()
        };
        let m = fit_bprmf(&train, 4, &params, 2).unwrap();
        let hist: Vec<&[u32]> = train.iter().map(Vec::as_slice).collect();
        let b = m.score_batch(&[2, 0], &[hist[2], hist[0]]).unwrap();
        let s = m.score_user(2, hist[2]).unwrap();
        for (x, y) in b.row(0).iter().zip(&s) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
