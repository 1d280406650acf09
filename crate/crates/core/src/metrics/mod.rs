//! Accuracy (Recall, nDCG), consumer fairness (ΔRecall, ΔnDCG) and provider
//! fairness (APLT, ΔExp) on top-k lists.

use serde::{Deserialize, Serialize};

use crate::dataset::{Gender, ItemGroup};
use crate::error::{Error, Result};

/// Ranked recommendation lists for the evaluated users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKLists {
    pub k: usize,
    /// Dense user indices, aligned with `lists`.
    pub users: Vec<u32>,
    pub lists: Vec<Vec<u32>>,
}

impl TopKLists {
    /// Users whose list is shorter than `k` because too few items were unmasked.
    pub fn short_lists(&self) -> usize {
        self.lists.iter().filter(|l| l.len() < self.k).count()
    }
}

/// Position discount `1 / log2(p + 1)` for 1-based `p`.
pub fn discount(p: usize) -> f64 {
    1.0 / ((p + 1) as f64).log2()
}

/// `|list[..k] ∩ R| / |R|`. `relevant` must be sorted.
pub fn recall_at_k(list: &[u32], relevant: &[u32], k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let hits = list.iter().take(k).filter(|i| relevant.binary_search(i).is_ok()).count();
    hits as f64 / relevant.len() as f64
}

/// Binary-relevance nDCG with the ideal list of `min(k, |R|)` hits. `relevant` must be sorted.
pub fn ndcg_at_k(list: &[u32], relevant: &[u32], k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let dcg: f64 = list
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.binary_search(i).is_ok())
        .map(|(p, _)| discount(p + 1))
        .sum();
    let idcg: f64 = (1..=k.min(relevant.len())).map(discount).sum();
    dcg / idcg
}

/// Mean per group, as `(mean_M, mean_F, count_M, count_F)`.
pub fn group_means(values: &[f64], groups: &[Gender]) -> Result<(f64, f64, usize, usize)> {
    if values.len() != groups.len() {
        return Err(Error::DimensionMismatch {
            context: "group_gap labels",
            expected: values.len(),
            actual: groups.len(),
        });
    }
    let (mut sm, mut sf, mut nm, mut nf) = (0.0, 0.0, 0usize, 0usize);
    for (v, g) in values.iter().zip(groups) {
        match g {
            Gender::M => {
                sm += v;
                nm += 1;
            }
            Gender::F => {
                sf += v;
                nf += 1;
            }
        }
    }
    if nm == 0 {
        return Err(Error::EmptyGroup("M".into()));
    }
    if nf == 0 {
        return Err(Error::EmptyGroup("F".into()));
    }
    Ok((sm / nm as f64, sf / nf as f64, nm, nf))
}

/// `|mean_M − mean_F|`.
pub fn group_gap(values: &[f64], groups: &[Gender]) -> Result<f64> {
    let (m, f, _, _) = group_means(values, groups)?;
    Ok((m - f).abs())
}

fn tail_share(list: &[u32], item_groups: &[ItemGroup]) -> f64 {
    if list.is_empty() {
        return 0.0;
    }
    let tail = list.iter().filter(|i| item_groups[**i as usize] == ItemGroup::Tail).count();
    tail as f64 / list.len() as f64
}

/// Mean share of tail items per list; an empty list counts as share 0.
pub fn aplt(lists: &[Vec<u32>], item_groups: &[ItemGroup]) -> f64 {
    if lists.is_empty() {
        return 0.0;
    }
    lists.iter().map(|l| tail_share(l, item_groups)).sum::<f64>() / lists.len() as f64
}

/// `|E_Head − E_Tail| / (E_Head + E_Tail)` with position-discounted exposure.
pub fn delta_exposure(lists: &[Vec<u32>], item_groups: &[ItemGroup]) -> Result<f64> {
    let (mut head, mut tail) = (0.0, 0.0);
    for list in lists {
        for (p, &i) in list.iter().enumerate() {
            match item_groups[i as usize] {
                ItemGroup::Head => head += discount(p + 1),
                ItemGroup::Tail => tail += discount(p + 1),
            }
        }
    }
    if head + tail == 0.0 {
        return Err(Error::Config("delta_exposure: lists carry no exposure".into()));
    }
    Ok((head - tail).abs() / (head + tail))
}

/// Column order of emitted tables.
pub const METRIC_COLUMNS: [&str; 6] = ["Recall", "nDCG", "ΔRecall", "ΔnDCG", "APLT", "ΔExp"];

/// The six metrics of one run, in percent, with per-user and per-group detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub delta_recall: f64,
    pub delta_ndcg: f64,
    pub aplt: f64,
    pub delta_exp: f64,
    pub users: Vec<u32>,
    /// Fractions in `[0, 1]`, aligned with `users`.
    pub per_user_recall: Vec<f64>,
    pub per_user_ndcg: Vec<f64>,
    /// Percent, keyed by group.
    pub recall_by_group: GroupPair,
    pub ndcg_by_group: GroupPair,
    pub users_by_group: GroupCounts,
    pub short_lists: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupPair {
    pub m: f64,
    pub f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub m: usize,
    pub f: usize,
}

impl MetricReport {
    /// Values in [`METRIC_COLUMNS`] order.
    pub fn values(&self) -> [f64; 6] {
        [
            self.recall,
            self.ndcg,
            self.delta_recall,
            self.delta_ndcg,
            self.aplt,
            self.delta_exp,
        ]
    }
}

/// Assemble all six metrics. `truth[u]` is user `u`'s sorted ground truth;
/// `lists` must cover exactly the users with nonempty truth.
pub fn evaluate_run(lists: &TopKLists, truth: &[Vec<u32>], user_groups: &[Gender], item_groups: &[ItemGroup]) -> Result<MetricReport> {
    let expected: Vec<u32> = (0..truth.len() as u32).filter(|u| !truth[*u as usize].is_empty()).collect();
    if lists.users != expected {
        return Err(Error::Config(format!(
            "top-k lists cover {} users, but {} users have ground truth",
            lists.users.len(),
            expected.len()
        )));
    }
    if lists.users.is_empty() {
        return Err(Error::Config("no users to evaluate".into()));
    }
    let k = lists.k;
    let per_user_recall: Vec<f64> = crate::par::map_range(lists.users.len(), |r| {
        recall_at_k(&lists.lists[r], &truth[lists.users[r] as usize], k)
    });
    let per_user_ndcg: Vec<f64> = crate::par::map_range(lists.users.len(), |r| {
        ndcg_at_k(&lists.lists[r], &truth[lists.users[r] as usize], k)
    });
    let groups: Vec<Gender> = lists.users.iter().map(|&u| user_groups[u as usize]).collect();
    let (rm, rf, nm, nf) = group_means(&per_user_recall, &groups)?;
    let (dm, df, _, _) = group_means(&per_user_ndcg, &groups)?;
    let n = lists.users.len() as f64;
    Ok(MetricReport {
        k,
        recall: 100.0 * per_user_recall.iter().sum::<f64>() / n,
        ndcg: 100.0 * per_user_ndcg.iter().sum::<f64>() / n,
        delta_recall: 100.0 * (rm - rf).abs(),
        delta_ndcg: 100.0 * (dm - df).abs(),
        aplt: 100.0 * aplt(&lists.lists, item_groups),
        delta_exp: 100.0 * delta_exposure(&lists.lists, item_groups)?,
        users: lists.users.clone(),
        per_user_recall,
        per_user_ndcg,
        recall_by_group: GroupPair {
            m: 100.0 * rm,
            f: 100.0 * rf,
        },
        ndcg_by_group: GroupPair {
            m: 100.0 * dm,
            f: 100.0 * df,
        },
        users_by_group: GroupCounts { m: nm, f: nf },
        short_lists: lists.short_lists(),
    })
}
