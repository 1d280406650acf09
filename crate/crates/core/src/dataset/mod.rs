//! Interaction data: ingestion, filtering, temporal splitting, group
//! partitions and a synthetic generator with controllable group bias.

mod ingest;
mod split;
mod synthetic;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ingest::{ingest_canonical, ingest_ml1m, write_canonical};
pub use split::{partition_items_by_popularity, temporal_split, Phase, SplitDataset, SplitRatios};
pub use synthetic::{generate_synthetic, SyntheticConfig};

/// Binary user attribute used for consumer-side fairness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

impl Gender {
    pub fn parse(value: &str) -> Option<Gender> {
        match value.trim() {
            "M" => Some(Gender::M),
            "F" => Some(Gender::F),
            _ => None,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gender::M => f.write_str("M"),
            Gender::F => f.write_str("F"),
        }
    }
}

/// Popularity group of an item: the short head or the long tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ItemGroup {
    Head,
    Tail,
}

/// One implicit interaction, referencing users and items by dense index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    /// Seconds since the epoch.
    pub timestamp: f64,
}

/// An interaction as read from a file, before indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawInteraction {
    pub user: String,
    pub item: String,
    pub timestamp: f64,
}

/// Users, items and their implicit interactions.
///
/// Users and items are stored in a canonical order (numeric when every id is
/// numeric, lexicographic otherwise); interactions reference them by index and
/// are sorted by `(user, timestamp, item)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub interactions: Vec<Interaction>,
    pub gender: Vec<Gender>,
}

fn canonical_order(ids: &mut [String]) {
    if ids.iter().all(|id| id.parse::<u64>().is_ok()) {
        ids.sort_by_key(|id| id.parse::<u64>().unwrap_or(0));
    } else {
        ids.sort();
    }
}

impl Dataset {
    /// Build a dataset from raw records.
    ///
    /// Duplicate `(user, item)` pairs keep the earliest timestamp (first seen on
    /// equal timestamps). Every user with at least one interaction needs a
    /// gender; users in `genders` without interactions are dropped.
    pub fn from_records(records: Vec<RawInteraction>, genders: &HashMap<String, Gender>) -> Result<Dataset> {
        let mut earliest: HashMap<(String, String), f64> = HashMap::with_capacity(records.len());
        for rec in records {
            if !rec.timestamp.is_finite() || rec.timestamp < 0.0 {
                return Err(Error::Config(format!(
                    "interaction ({}, {}) has invalid timestamp {}",
                    rec.user, rec.item, rec.timestamp
                )));
            }
            earliest
                .entry((rec.user, rec.item))
                .and_modify(|ts| {
                    if rec.timestamp < *ts {
                        *ts = rec.timestamp;
                    }
                })
                .or_insert(rec.timestamp);
        }

        let mut users: Vec<String> = earliest.keys().map(|(u, _)| u.clone()).collect();
        users.sort();
        users.dedup();
        canonical_order(&mut users);
        let mut items: Vec<String> = earliest.keys().map(|(_, i)| i.clone()).collect();
        items.sort();
        items.dedup();
        canonical_order(&mut items);

        let user_index: HashMap<&str, u32> = users.iter().enumerate().map(|(i, u)| (u.as_str(), i as u32)).collect();
        let item_index: HashMap<&str, u32> = items.iter().enumerate().map(|(i, u)| (u.as_str(), i as u32)).collect();

        let gender = users
            .iter()
            .map(|u| genders.get(u).copied().ok_or_else(|| Error::MissingGender { user: u.clone() }))
            .collect::<Result<Vec<_>>>()?;

        let mut interactions: Vec<Interaction> = earliest
            .iter()
            .map(|((u, i), ts)| Interaction {
                user: user_index[u.as_str()],
                item: item_index[i.as_str()],
                timestamp: *ts,
            })
            .collect();
        sort_interactions(&mut interactions);

        Ok(Dataset {
            users,
            items,
            interactions,
            gender,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_interactions(&self) -> usize {
        self.interactions.len()
    }

    /// Fraction of empty user-item cells.
    pub fn sparsity(&self) -> f64 {
        let cells = (self.n_users() * self.n_items()) as f64;
        if cells == 0.0 {
            return 1.0;
        }
        1.0 - self.n_interactions() as f64 / cells
    }

    /// Fraction of users labelled `g`.
    pub fn gender_share(&self, g: Gender) -> f64 {
        if self.gender.is_empty() {
            return 0.0;
        }
        self.gender.iter().filter(|x| **x == g).count() as f64 / self.gender.len() as f64
    }

    /// Check the structural invariants of a dataset.
    pub fn validate(&self) -> Result<()> {
        if self.gender.len() != self.users.len() {
            return Err(Error::DimensionMismatch {
                context: "gender labels",
                expected: self.users.len(),
                actual: self.gender.len(),
            });
        }
        let mut seen = std::collections::HashSet::with_capacity(self.interactions.len());
        for it in &self.interactions {
            if it.user as usize >= self.users.len() || it.item as usize >= self.items.len() {
                return Err(Error::Config(format!(
                    "interaction references unknown user {} or item {}",
                    it.user, it.item
                )));
            }
            if !it.timestamp.is_finite() || it.timestamp < 0.0 {
                return Err(Error::Config(format!("invalid timestamp {}", it.timestamp)));
            }
            if !seen.insert((it.user, it.item)) {
                return Err(Error::DuplicateInteraction {
                    user: self.users[it.user as usize].clone(),
                    item: self.items[it.item as usize].clone(),
                });
            }
        }
        Ok(())
    }

    /// Iteratively drop users and items with fewer than `min_interactions`
    /// interactions until every remaining user and item meets the threshold.
    pub fn filter_min_interactions(&self, min_interactions: usize) -> Result<Dataset> {
        if min_interactions == 0 {
            return Err(Error::Config("minimum interaction count must be at least 1".into()));
        }
        let mut user_alive = vec![true; self.n_users()];
        let mut item_alive = vec![true; self.n_items()];
        loop {
            let mut user_count = vec![0usize; self.n_users()];
            let mut item_count = vec![0usize; self.n_items()];
            for it in &self.interactions {
                if user_alive[it.user as usize] && item_alive[it.item as usize] {
                    user_count[it.user as usize] += 1;
                    item_count[it.item as usize] += 1;
                }
            }
            let mut changed = false;
            for (alive, count) in user_alive.iter_mut().zip(&user_count) {
                if *alive && *count < min_interactions {
                    *alive = false;
                    changed = true;
                }
            }
            for (alive, count) in item_alive.iter_mut().zip(&item_count) {
                if *alive && *count < min_interactions {
                    *alive = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut user_map = vec![u32::MAX; self.n_users()];
        let mut users = Vec::new();
        let mut gender = Vec::new();
        for (u, alive) in user_alive.iter().enumerate() {
            if *alive {
                user_map[u] = users.len() as u32;
                users.push(self.users[u].clone());
                gender.push(self.gender[u]);
            }
        }
        let mut item_map = vec![u32::MAX; self.n_items()];
        let mut items = Vec::new();
        for (i, alive) in item_alive.iter().enumerate() {
            if *alive {
                item_map[i] = items.len() as u32;
                items.push(self.items[i].clone());
            }
        }
        let mut interactions: Vec<Interaction> = self
            .interactions
            .iter()
            .filter(|it| user_alive[it.user as usize] && item_alive[it.item as usize])
            .map(|it| Interaction {
                user: user_map[it.user as usize],
                item: item_map[it.item as usize],
                timestamp: it.timestamp,
            })
            .collect();
        if interactions.is_empty() {
            return Err(Error::EmptyAfterFiltering { min_interactions });
        }
        sort_interactions(&mut interactions);
        Ok(Dataset {
            users,
            items,
            interactions,
            gender,
        })
    }

    /// Per-user interactions, each list ordered by `(timestamp, item)`.
    pub fn by_user(&self) -> Vec<Vec<Interaction>> {
        let mut out = vec![Vec::new(); self.n_users()];
        for it in &self.interactions {
            out[it.user as usize].push(*it);
        }
        for list in &mut out {
            list.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp).then(a.item.cmp(&b.item)));
        }
        out
    }
}

fn sort_interactions(interactions: &mut [Interaction]) {
    interactions.sort_by(|a, b| {
        a.user
            .cmp(&b.user)
            .then(a.timestamp.total_cmp(&b.timestamp))
            .then(a.item.cmp(&b.item))
    });
}

/// Convenience wrapper matching the free-function style of the other operations.
pub fn filter_min_interactions(d: &Dataset, min_interactions: usize) -> Result<Dataset> {
    d.filter_min_interactions(min_interactions)
}
