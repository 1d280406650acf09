//! Non-diffusion recommenders: ItemkNN, EASE, BPRMF, MultiVAE and a
//! popularity scorer.

mod bprmf;
mod ease;
mod itemknn;
mod multivae;
mod popularity;

pub use bprmf::{bpr_triple_grad, bpr_triple_loss, fit_bprmf, BprMfModel, BprParams, TripleGrad};
pub use ease::{fit_ease, EaseModel, EaseParams};
pub use itemknn::{cooccurrence_row, fit_itemknn, ItemKnnModel, ItemKnnParams};
pub use multivae::{fit_multivae, multivae_loss, MultiVaeLoss, MultiVaeModel, MultiVaeParams};
pub(crate) use multivae::{multinomial_nll, standard_normal, GaussianLatent};
pub use popularity::{fit_popularity, PopularityModel};

use crate::error::{Error, Result};

/// Per-epoch mean training losses.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainingLog {
    pub epoch_losses: Vec<f64>,
}

impl TrainingLog {
    /// Trailing moving average with the given window.
    pub fn smoothed(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        (0..self.epoch_losses.len())
            .map(|e| {
                let lo = (e + 1).saturating_sub(w);
                let s = &self.epoch_losses[lo..=e];
                s.iter().sum::<f64>() / s.len() as f64
            })
            .collect()
    }
}

pub(crate) fn check_train(train: &[Vec<u32>], n_items: usize) -> Result<()> {
    if train.iter().all(Vec::is_empty) {
        return Err(Error::Config("training set is empty".into()));
    }
    if let Some(bad) = train.iter().flatten().find(|i| **i as usize >= n_items) {
        return Err(Error::Config(format!("item index {bad} out of range for {n_items} items")));
    }
    Ok(())
}
