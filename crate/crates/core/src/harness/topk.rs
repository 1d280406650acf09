use crate::dataset::{Phase, SplitDataset};
use crate::error::{Error, Result};
use crate::metrics::TopKLists;
use crate::model::Recommender;

const SCORE_BATCH: usize = 256;

/// Top-k of one score vector, skipping `masked` (sorted); ties by item id.
pub fn top_k_unmasked(scores: &[f64], masked: &[u32], k: usize) -> Result<Vec<u32>> {
    let mut candidates: Vec<(f64, u32)> = Vec::with_capacity(scores.len());
    for (i, &s) in scores.iter().enumerate() {
        if masked.binary_search(&(i as u32)).is_ok() {
            continue;
        }
        if s.is_nan() {
            return Err(Error::NonFinite(format!("score of item {i} is NaN")));
        }
        candidates.push((s, i as u32));
    }
    let cmp = |a: &(f64, u32), b: &(f64, u32)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    let k = k.min(candidates.len());
    if k == 0 {
        return Ok(Vec::new());
    }
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(cmp);
    Ok(candidates.into_iter().map(|(_, i)| i).collect())
}

/// Lists for every user with nonempty ground truth in `phase`, scoring the
/// user's train history and masking train (and, at test time, validation) items.
pub fn recommend_topk(model: &dyn Recommender, split: &SplitDataset, phase: Phase, k: usize) -> Result<TopKLists> {
    if model.n_items() != split.n_items() {
        return Err(Error::DimensionMismatch {
            context: "model item count",
            expected: split.n_items(),
            actual: model.n_items(),
        });
    }
    let users: Vec<u32> = (0..split.n_users() as u32)
        .filter(|&u| !split.truth(phase, u as usize).is_empty())
        .collect();
    let mut lists = Vec::with_capacity(users.len());
    for chunk in users.chunks(SCORE_BATCH) {
        let ids: Vec<usize> = chunk.iter().map(|&u| u as usize).collect();
        let hist: Vec<&[u32]> = ids.iter().map(|&u| split.train[u].as_slice()).collect();
        let scores = model.score_batch(&ids, &hist)?;
        let rows = crate::par::map_range(ids.len(), |r| top_k_unmasked(scores.row(r), &split.masked(phase, ids[r]), k));
        for row in rows {
            lists.push(row?);
        }
    }
    Ok(TopKLists { k, users, lists })
}

/// Number of list entries that are masked for their user in `phase`.
pub fn masked_violations(lists: &TopKLists, split: &SplitDataset, phase: Phase) -> usize {
    lists
        .users
        .iter()
        .zip(&lists.lists)
        .map(|(&u, list)| {
            let masked = split.masked(phase, u as usize);
            list.iter().filter(|i| masked.binary_search(i).is_ok()).count()
        })
        .sum()
}
