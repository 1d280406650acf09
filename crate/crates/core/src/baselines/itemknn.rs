use serde::{Deserialize, Serialize};

use super::check_train;
use crate::error::{Error, Result};
use crate::model::Recommender;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ItemKnnParams {
    pub neighbors: usize,
}

impl Default for ItemKnnParams {
    fn default() -> Self {
        Self { neighbors: 100 }
    }
}

/// Item-based kNN with cosine similarity on binary interaction columns.
///
/// `rows[i]` holds `(j, sim(i, j))` for the top-`neighbors` items `j != i`,
/// ordered by similarity descending then item index ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemKnnModel {
    pub neighbors: usize,
    pub n_items: usize,
    pub rows: Vec<Vec<(u32, f64)>>,
}

/// Co-occurrence counts `|U_i ∩ U_j|` for one item `i` against every item.
pub fn cooccurrence_row(item: usize, item_users: &[Vec<u32>], train: &[Vec<u32>], n_items: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n_items];
    for &u in &item_users[item] {
        for &j in &train[u as usize] {
            counts[j as usize] += 1;
        }
    }
    counts
}

pub(crate) fn item_users(train: &[Vec<u32>], n_items: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new(); n_items];
    for (u, items) in train.iter().enumerate() {
        for &i in items {
            out[i as usize].push(u as u32);
        }
    }
    out
}

pub fn fit_itemknn(train: &[Vec<u32>], n_items: usize, params: &ItemKnnParams) -> Result<ItemKnnModel> {
    if params.neighbors == 0 {
        return Err(Error::Config("ItemkNN needs at least one neighbor".into()));
    }
    check_train(train, n_items)?;
    let by_item = item_users(train, n_items);
    let norms: Vec<f64> = by_item.iter().map(|u| (u.len() as f64).sqrt()).collect();
    let rows = crate::par::map_range(n_items, |i| {
        if by_item[i].is_empty() {
            return Vec::new();
        }
        let counts = cooccurrence_row(i, &by_item, train, n_items);
        let mut row: Vec<(u32, f64)> = counts
            .iter()
            .enumerate()
            .filter(|&(j, c)| j != i && *c > 0)
            .map(|(j, c)| (j as u32, f64::from(*c) / (norms[i] * norms[j])))
            .collect();
        row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        row.truncate(params.neighbors);
        row
    });
    Ok(ItemKnnModel {
        neighbors: params.neighbors,
        n_items,
        rows,
    })
}

impl ItemKnnModel {
    /// Stored (truncated) similarity, 0 when `j` is not a neighbor of `i`.
    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().find(|(k, _)| *k as usize == j).map_or(0.0, |(_, s)| *s)
    }
}

impl Recommender for ItemKnnModel {
    fn n_items(&self) -> usize {
        self.n_items
    }

    fn score_user(&self, _user: usize, history: &[u32]) -> Result<Vec<f64>> {
        let mut x = vec![false; self.n_items];
        for &j in history {
            x[j as usize] = true;
        }
        Ok(self
            .rows
            .iter()
            .map(|row| row.iter().filter(|(j, _)| x[*j as usize]).map(|(_, s)| s).sum())
            .collect())
    }
}
