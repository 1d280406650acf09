#![allow(dead_code)]

use fairdiff::dataset::ItemGroup;
use fairdiff::dataset::{generate_synthetic, temporal_split, Gender, SplitDataset, SplitRatios, SyntheticConfig};
use fairdiff::rng::SeedStream;
use rand::Rng;

pub fn synthetic_split(n_users: usize, n_items: usize, bias: f64, seed: u64) -> SplitDataset {
    let cfg = SyntheticConfig {
        n_users,
        n_items,
        density: 0.3,
        group_bias: bias,
        seed,
        ..Default::default()
    };
    let d = generate_synthetic(&cfg).unwrap().filter_min_interactions(10).unwrap();
    temporal_split(&d, SplitRatios::default(), 0.2).unwrap()
}

/// Users belong to one of `blocks` communities and interact only with that
/// community's items; each user holds out one item for testing.
pub fn block_split(n_users: usize, n_items: usize, blocks: usize, per_user: usize, seed: u64) -> SplitDataset {
    let mut rng = SeedStream::new(seed).stream("block");
    let width = n_items / blocks;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for u in 0..n_users {
        let b = u % blocks;
        let picks = rand::seq::index::sample(&mut rng, width, per_user + 1);
        let mut items: Vec<u32> = picks.into_iter().map(|i| (b * width + i) as u32).collect();
        let held = items.pop().unwrap();
        items.sort_unstable();
        train.push(items);
        test.push(vec![held]);
    }
    SplitDataset {
        user_ids: (0..n_users).map(|u| format!("u{u}")).collect(),
        item_ids: (0..n_items).map(|i| format!("i{i}")).collect(),
        train,
        validation: vec![Vec::new(); n_users],
        test,
        user_groups: (0..n_users)
            .map(|_| if rng.random::<bool>() { Gender::M } else { Gender::F })
            .collect(),
        item_groups: (0..n_items)
            .map(|i| if i < n_items / 5 { ItemGroup::Head } else { ItemGroup::Tail })
            .collect(),
        head_fraction: 0.2,
    }
}
