use serde::{Deserialize, Serialize};

use super::{Dataset, Gender, ItemGroup};
use crate::error::{Error, Result};

/// Train / validation / test proportions of each user's history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<()> {
        let all = [self.train, self.validation, self.test];
        if all.iter().any(|r| !r.is_finite() || *r <= 0.0) || ((all.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios {all:?} must be positive and sum to 1")));
        }
        Ok(())
    }

    /// Partition sizes `(train, validation, test)` for a user with `m` interactions.
    ///
    /// train = max(1, floor(train·m)), validation = floor(validation·m), test = rest.
    pub fn sizes(&self, m: usize) -> (usize, usize, usize) {
        // Absorb representation error such as 0.7 * 10 = 6.999...
        let floor = |r: f64| (r * m as f64 + 1e-9).floor() as usize;
        let train = floor(self.train).max(1).min(m);
        let validation = floor(self.validation).min(m - train);
        (train, validation, m - train - validation)
    }
}

/// Evaluation phase; selects the ground truth and the masked history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Validation,
    Test,
}

/// Per-user temporal hold-out with user and item group partitions.
///
/// `train[u]`, `validation[u]` and `test[u]` hold item indices sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub train: Vec<Vec<u32>>,
    pub validation: Vec<Vec<u32>>,
    pub test: Vec<Vec<u32>>,
    pub user_groups: Vec<Gender>,
    pub item_groups: Vec<ItemGroup>,
    pub head_fraction: f64,
}

impl SplitDataset {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_train(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    /// Ground-truth items of `phase` for user `u`.
    pub fn truth(&self, phase: Phase, u: usize) -> &[u32] {
        match phase {
            Phase::Validation => &self.validation[u],
            Phase::Test => &self.test[u],
        }
    }

    /// Items excluded from user `u`'s recommendations in `phase`, sorted ascending.
    pub fn masked(&self, phase: Phase, u: usize) -> Vec<u32> {
        match phase {
            Phase::Validation => self.train[u].clone(),
            Phase::Test => {
                let mut m = self.train[u].clone();
                m.extend_from_slice(&self.validation[u]);
                m.sort_unstable();
                m
            }
        }
    }

    /// Item-major view of the training interactions: users of each item.
    pub fn item_users(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.n_items()];
        for (u, items) in self.train.iter().enumerate() {
            for &i in items {
                out[i as usize].push(u as u32);
            }
        }
        out
    }

    /// Training interaction count per item.
    pub fn item_popularity(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_items()];
        for items in &self.train {
            for &i in items {
                counts[i as usize] += 1;
            }
        }
        counts
    }

    /// Dense binary training row for user `u`.
    pub fn train_vector(&self, u: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n_items()];
        for &i in &self.train[u] {
            x[i as usize] = 1.0;
        }
        x
    }
}

/// Split every user's history chronologically (ties by item index).
pub fn temporal_split(d: &Dataset, ratios: SplitRatios, head_fraction: f64) -> Result<SplitDataset> {
    ratios.validate()?;
    let mut train = Vec::with_capacity(d.n_users());
    let mut validation = Vec::with_capacity(d.n_users());
    let mut test = Vec::with_capacity(d.n_users());
    for (u, history) in d.by_user().into_iter().enumerate() {
        let m = history.len();
        if m < 3 {
            return Err(Error::TooFewInteractions {
                user: d.users[u].clone(),
                count: m,
                required: 3,
            });
        }
        let (n_train, n_val, _) = ratios.sizes(m);
        let mut tr: Vec<u32> = history[..n_train].iter().map(|it| it.item).collect();
        let mut va: Vec<u32> = history[n_train..n_train + n_val].iter().map(|it| it.item).collect();
        let mut te: Vec<u32> = history[n_train + n_val..].iter().map(|it| it.item).collect();
        tr.sort_unstable();
        va.sort_unstable();
        te.sort_unstable();
        train.push(tr);
        validation.push(va);
        test.push(te);
    }
    let item_groups = partition_items_by_popularity(&train, d.n_items(), head_fraction)?;
    Ok(SplitDataset {
        user_ids: d.users.clone(),
        item_ids: d.items.clone(),
        train,
        validation,
        test,
        user_groups: d.gender.clone(),
        item_groups,
        head_fraction,
    })
}

/// Label the `round(head_fraction·n_items)` most popular training items as
/// head, the rest as tail. Ties on count go to the lower item index.
pub fn partition_items_by_popularity(train: &[Vec<u32>], n_items: usize, head_fraction: f64) -> Result<Vec<ItemGroup>> {
    if train.iter().all(Vec::is_empty) {
        return Err(Error::Config("cannot partition items on an empty training set".into()));
    }
    if !(0.0..=1.0).contains(&head_fraction) {
        return Err(Error::Config(format!("head fraction {head_fraction} outside [0, 1]")));
    }
    let mut counts = vec![0usize; n_items];
    for items in train {
        for &i in items {
            counts[i as usize] += 1;
        }
    }
    let mut order: Vec<usize> = (0..n_items).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let n_head = (head_fraction * n_items as f64).round() as usize;
    let mut groups = vec![ItemGroup::Tail; n_items];
    for &i in order.iter().take(n_head) {
        groups[i] = ItemGroup::Head;
    }
    Ok(groups)
}
