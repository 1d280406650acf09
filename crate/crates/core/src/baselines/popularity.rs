use serde::{Deserialize, Serialize};

use super::check_train;
use crate::error::Result;
use crate::model::Recommender;

/// Scores every item by its training interaction count, independent of the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityModel {
    pub counts: Vec<f64>,
}

pub fn fit_popularity(train: &[Vec<u32>], n_items: usize) -> Result<PopularityModel> {
    check_train(train, n_items)?;
    let mut counts = vec![0.0; n_items];
    for &i in train.iter().flatten() {
        counts[i as usize] += 1.0;
    }
    Ok(PopularityModel { counts })
}

impl Recommender for PopularityModel {
    fn n_items(&self) -> usize {
        self.counts.len()
    }

    fn score_user(&self, _user: usize, _history: &[u32]) -> Result<Vec<f64>> {
        Ok(self.counts.clone())
    }
}
