use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::check_train;
use super::itemknn::{cooccurrence_row, item_users};
use crate::error::{Error, Result};
use crate::model::{dense_batch, Recommender};
use crate::nn::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EaseParams {
    pub lambda: f64,
}

impl Default for EaseParams {
    fn default() -> Self {
        Self { lambda: 100.0 }
    }
}

/// Closed-form shallow autoencoder: scores are `x_u · B` with `diag(B) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EaseModel {
    pub lambda: f64,
    /// Dense `n_items × n_items`, row-major.
    pub weights: Matrix,
}

pub fn fit_ease(train: &[Vec<u32>], n_items: usize, params: &EaseParams) -> Result<EaseModel> {
    if !(params.lambda > 0.0 && params.lambda.is_finite()) {
        return Err(Error::Config(format!("EASE lambda must be positive, got {}", params.lambda)));
    }
    check_train(train, n_items)?;
    let by_item = item_users(train, n_items);
    let rows = crate::par::map_range(n_items, |i| cooccurrence_row(i, &by_item, train, n_items));
    let mut gram = DMatrix::<f64>::zeros(n_items, n_items);
    for (i, row) in rows.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            gram[(i, j)] = f64::from(*c);
        }
        gram[(i, i)] += params.lambda;
    }
    let precision = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("EASE Gram matrix is not positive definite".into()))?
        .inverse();

    // B = I - P diag(1/diag(P)), then diag(B) = 0: B_ij = -P_ij / P_jj.
    let mut weights = Matrix::zeros(n_items, n_items);
    for i in 0..n_items {
        let row = weights.row_mut(i);
        for (j, w) in row.iter_mut().enumerate() {
            if i != j {
                *w = -precision[(i, j)] / precision[(j, j)];
            }
        }
    }
    if !weights.is_finite() {
        return Err(Error::NonFinite("EASE weights".into()));
    }
    Ok(EaseModel {
        lambda: params.lambda,
        weights,
    })
}

impl Recommender for EaseModel {
    fn n_items(&self) -> usize {
        self.weights.rows()
    }

    fn score_user(&self, _user: usize, history: &[u32]) -> Result<Vec<f64>> {
        let mut scores = vec![0.0; self.n_items()];
        for &i in history {
            for (s, w) in scores.iter_mut().zip(self.weights.row(i as usize)) {
                *s += w;
            }
        }
        Ok(scores)
    }

    fn score_batch(&self, _users: &[usize], histories: &[&[u32]]) -> Result<Matrix> {
        dense_batch(histories, self.n_items()).matmul(&self.weights)
    }
}
