use std::collections::{HashMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Dataset, Gender, RawInteraction};
use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Parameters of the synthetic biased interaction generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    /// Target fraction of positive user-item cells.
    pub density: f64,
    /// Item `i` (0-based) has popularity weight `(i + 1)^-popularity_exponent`.
    pub popularity_exponent: f64,
    /// 0 = both genders see the same head share; 1 = maximal gap.
    pub group_bias: f64,
    pub female_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_users: 400,
            n_items: 300,
            density: 0.05,
            popularity_exponent: 1.0,
            group_bias: 0.0,
            female_fraction: 0.3,
            seed: 42,
        }
    }
}

/// Fraction of items treated as the head quantile by the generator.
const HEAD_QUANTILE: f64 = 0.2;

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.n_users < 2 || self.n_items < 2 {
            return Err(Error::Config("synthetic data needs at least 2 users and 2 items".into()));
        }
        if !(self.density > 0.0 && self.density < 1.0) {
            return Err(Error::Config(format!("density {} outside (0, 1)", self.density)));
        }
        if !(0.0..=1.0).contains(&self.group_bias) {
            return Err(Error::Config(format!("group_bias {} outside [0, 1]", self.group_bias)));
        }
        if !(self.female_fraction > 0.0 && self.female_fraction < 1.0) {
            return Err(Error::Config(format!("female_fraction {} outside (0, 1)", self.female_fraction)));
        }
        if !self.popularity_exponent.is_finite() || self.popularity_exponent < 0.0 {
            return Err(Error::Config("popularity_exponent must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Number of head-quantile items (the most popular ones by construction).
    pub fn n_head(&self) -> usize {
        ((HEAD_QUANTILE * self.n_items as f64).round() as usize).clamp(1, self.n_items - 1)
    }

    /// Probability that one interaction of a user of `gender` targets a head item.
    ///
    /// Both groups start at the head's share of popularity mass `h`; males move
    /// towards 1 by `b(1-h)/2`, females towards 0 by `b·h/2`, so the gap is `b/2`.
    pub fn head_probability(&self, gender: Gender) -> f64 {
        let weights = self.weights();
        let total: f64 = weights.iter().sum();
        let h = weights[..self.n_head()].iter().sum::<f64>() / total;
        match gender {
            Gender::M => h + self.group_bias * (1.0 - h) / 2.0,
            Gender::F => h - self.group_bias * h / 2.0,
        }
    }

    fn weights(&self) -> Vec<f64> {
        (0..self.n_items)
            .map(|i| ((i + 1) as f64).powf(-self.popularity_exponent))
            .collect()
    }
}

/// Generate a dataset with power-law item popularity and a gender-dependent
/// preference for head items. Deterministic given `cfg.seed`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let cells = cfg.n_users * cfg.n_items;
    let total = (cfg.density * cells as f64).round() as usize;
    if total > cells {
        return Err(Error::Config(format!(
            "density {} requests {total} interactions but only {cells} cells exist",
            cfg.density
        )));
    }
    let per_user = total / cfg.n_users;
    let remainder = total % cfg.n_users;
    if per_user + usize::from(remainder > 0) > cfg.n_items {
        return Err(Error::Config("density exceeds the item count per user".into()));
    }

    let seeds = SeedStream::new(cfg.seed);
    let n_female = ((cfg.female_fraction * cfg.n_users as f64).round() as usize).clamp(1, cfg.n_users - 1);
    let mut genders = vec![Gender::M; cfg.n_users];
    let mut order: Vec<usize> = (0..cfg.n_users).collect();
    order.shuffle(&mut seeds.stream("synthetic/gender"));
    for &u in &order[..n_female] {
        genders[u] = Gender::F;
    }

    let weights = cfg.weights();
    let n_head = cfg.n_head();
    let head_dist = WeightedIndex::new(&weights[..n_head]).map_err(|e| Error::Config(e.to_string()))?;
    let tail_dist = WeightedIndex::new(&weights[n_head..]).map_err(|e| Error::Config(e.to_string()))?;
    let p_head = [cfg.head_probability(Gender::M), cfg.head_probability(Gender::F)];

    let mut records = Vec::with_capacity(total);
    for (u, gender) in genders.iter().enumerate() {
        let mut rng = seeds.indexed("synthetic/user", u as u64);
        let m = per_user + usize::from(u < remainder);
        let p = p_head[usize::from(*gender == Gender::F)];
        let mut chosen: HashSet<usize> = HashSet::with_capacity(m);
        let (mut head_taken, mut tail_taken) = (0usize, 0usize);
        let mut attempts = 0usize;
        while chosen.len() < m {
            let head_full = head_taken == n_head;
            let tail_full = tail_taken == cfg.n_items - n_head;
            let want_head = (rng.random::<f64>() < p && !head_full) || tail_full;
            let item = if attempts > 50 * m.max(1) {
                // Rejection is stalling on a nearly exhausted group; take the
                // most popular unused item of that group.
                let range = if want_head { 0..n_head } else { n_head..cfg.n_items };
                range.into_iter().find(|i| !chosen.contains(i)).unwrap_or(0)
            } else if want_head {
                head_dist.sample(&mut rng)
            } else {
                n_head + tail_dist.sample(&mut rng)
            };
            attempts += 1;
            if chosen.insert(item) {
                if item < n_head {
                    head_taken += 1;
                } else {
                    tail_taken += 1;
                }
                records.push(RawInteraction {
                    user: u.to_string(),
                    item: item.to_string(),
                    timestamp: (chosen.len() - 1) as f64,
                });
                attempts = 0;
            }
        }
    }

    // Index every item, including ones nobody sampled, so the item set is fixed.
    let gender_map: HashMap<String, Gender> = genders.iter().enumerate().map(|(u, g)| (u.to_string(), *g)).collect();
    let mut d = Dataset::from_records(records, &gender_map)?;
    if d.n_items() < cfg.n_items {
        let old_items = std::mem::take(&mut d.items);
        for it in &mut d.interactions {
            it.item = old_items[it.item as usize].parse::<u32>().unwrap_or(0);
        }
        d.items = (0..cfg.n_items).map(|i| i.to_string()).collect();
    }
    Ok(d)
}
