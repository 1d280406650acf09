//! The scoring contract shared by every recommender, and the serializable
//! container holding any trained model.

use serde::{Deserialize, Serialize};

use crate::baselines::{BprMfModel, EaseModel, ItemKnnModel, MultiVaeModel, PopularityModel};
use crate::diffusion::DiffRecModel;
use crate::error::Result;
use crate::ldiffrec::LDiffRecModel;
use crate::nn::Matrix;

/// A trained scorer mapping a user's training history to one score per item.
pub trait Recommender: Send + Sync {
    fn n_items(&self) -> usize;

    /// Scores for user `user` whose training items are `history` (sorted indices).
    fn score_user(&self, user: usize, history: &[u32]) -> Result<Vec<f64>>;

    /// Scores for many users at once; row `r` belongs to `users[r]`.
    fn score_batch(&self, users: &[usize], histories: &[&[u32]]) -> Result<Matrix> {
        let rows = crate::par::map_range(users.len(), |r| self.score_user(users[r], histories[r]));
        let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
        Matrix::from_rows(&rows)
    }
}

/// Dense binary rows for a batch of histories.
pub fn dense_batch(histories: &[&[u32]], n_items: usize) -> Matrix {
    let mut x = Matrix::zeros(histories.len(), n_items);
    for (r, h) in histories.iter().enumerate() {
        let row = x.row_mut(r);
        for &i in h.iter() {
            row[i as usize] = 1.0;
        }
    }
    x
}

/// Names of the implemented recommenders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "ItemkNN", alias = "itemknn")]
    ItemKnn,
    #[serde(rename = "BPRMF", alias = "bprmf")]
    BprMf,
    #[serde(rename = "EASE", alias = "ease")]
    Ease,
    #[serde(rename = "MultiVAE", alias = "multivae")]
    MultiVae,
    #[serde(rename = "DiffRec", alias = "diffrec")]
    DiffRec,
    #[serde(rename = "L-DiffRec", alias = "ldiffrec")]
    LDiffRec,
    #[serde(rename = "Pop", alias = "pop")]
    Popularity,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::BprMf,
        ModelKind::ItemKnn,
        ModelKind::Ease,
        ModelKind::MultiVae,
        ModelKind::DiffRec,
        ModelKind::LDiffRec,
        ModelKind::Popularity,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::ItemKnn => "ItemkNN",
            ModelKind::BprMf => "BPRMF",
            ModelKind::Ease => "EASE",
            ModelKind::MultiVae => "MultiVAE",
            ModelKind::DiffRec => "DiffRec",
            ModelKind::LDiffRec => "L-DiffRec",
            ModelKind::Popularity => "Pop",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Any trained model, serializable as a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "state")]
pub enum TrainedModel {
    ItemKnn(ItemKnnModel),
    BprMf(BprMfModel),
    Ease(EaseModel),
    MultiVae(MultiVaeModel),
    DiffRec(DiffRecModel),
    LDiffRec(LDiffRecModel),
    Popularity(PopularityModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::ItemKnn(_) => ModelKind::ItemKnn,
            TrainedModel::BprMf(_) => ModelKind::BprMf,
            TrainedModel::Ease(_) => ModelKind::Ease,
            TrainedModel::MultiVae(_) => ModelKind::MultiVae,
            TrainedModel::DiffRec(_) => ModelKind::DiffRec,
            TrainedModel::LDiffRec(_) => ModelKind::LDiffRec,
            TrainedModel::Popularity(_) => ModelKind::Popularity,
        }
    }

    fn inner(&self) -> &dyn Recommender {
        match self {
            TrainedModel::ItemKnn(m) => m,
            TrainedModel::BprMf(m) => m,
            TrainedModel::Ease(m) => m,
            TrainedModel::MultiVae(m) => m,
            TrainedModel::DiffRec(m) => m,
            TrainedModel::LDiffRec(m) => m,
            TrainedModel::Popularity(m) => m,
        }
    }
}

impl Recommender for TrainedModel {
    fn n_items(&self) -> usize {
        self.inner().n_items()
    }

    fn score_user(&self, user: usize, history: &[u32]) -> Result<Vec<f64>> {
        self.inner().score_user(user, history)
    }

    fn score_batch(&self, users: &[usize], histories: &[&[u32]]) -> Result<Matrix> {
        self.inner().score_batch(users, histories)
    }
}
