//! Acceptance suite: one PASS / FAIL / SKIP line per criterion.
//!
//! Criteria that need the real ML1M and FTKY data run only when
//! `FAIRDIFF_ML1M_DIR` (ratings.dat, users.dat) and `FAIRDIFF_FTKY_DIR`
//! (interactions.tsv, users.tsv) are set; otherwise they print SKIP.

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Instant;

use fairdiff::baselines::{bpr_triple_grad, bpr_triple_loss, fit_popularity, multivae_loss, MultiVaeModel, MultiVaeParams};
use fairdiff::dataset::{generate_synthetic, temporal_split, Gender, ItemGroup, Phase, SplitDataset, SplitRatios, SyntheticConfig};
use fairdiff::diffusion::{build_schedule, diffusion_loss_frozen, diffusion_loss_with, draw_noise, q_sample, Denoiser};
use fairdiff::harness::{
    emit_radar_svg, grid_search, masked_violations, normalize_for_radar, radar_values, recommend_topk, DatasetSource, DatasetSpec,
    ExperimentConfig, RunRecord,
};
use fairdiff::ldiffrec::{init_ldiffrec, ldiffrec_loss, merge_clusters, split_by_cluster, ClusterPartition, LDiffRecNoise, LDiffRecParams};
use fairdiff::metrics::{evaluate_run, TopKLists};
use fairdiff::model::dense_batch;
use fairdiff::nn::{grad_check, l2_normalize_rows, GradCheckOptions, Matrix};
use fairdiff::rng::SeedStream;
use fairdiff::{ModelKind, TrainedModel};
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Map, Value};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

// ---------------------------------------------------------------------------
// 1. metric oracle

struct Oracle {
    recall: f64,
    ndcg: f64,
    d_recall: f64,
    d_ndcg: f64,
    aplt: f64,
    d_exp: f64,
}

fn log2_weight(position: usize) -> f64 {
    std::f64::consts::LN_2 / ((position + 1) as f64).ln()
}

fn brute_force(lists: &[Vec<u32>], users: &[u32], truth: &[Vec<u32>], genders: &[Gender], heads: &HashSet<u32>, k: usize) -> Oracle {
    let mut recall = Vec::new();
    let mut ndcg = Vec::new();
    for (list, &u) in lists.iter().zip(users) {
        let rel: HashSet<u32> = truth[u as usize].iter().copied().collect();
        let mut hits = 0.0;
        let mut dcg = 0.0;
        for (pos, item) in list.iter().enumerate() {
            if pos >= k {
                break;
            }
            if rel.contains(item) {
                hits += 1.0;
                dcg += log2_weight(pos + 1);
            }
        }
        let mut idcg = 0.0;
        let mut p = 1;
        while p <= k && p <= rel.len() {
            idcg += log2_weight(p);
            p += 1;
        }
        recall.push(hits / rel.len() as f64);
        ndcg.push(dcg / idcg);
    }
    let mean_of = |vals: &[f64], g: Gender| {
        let picked: Vec<f64> = vals
            .iter()
            .zip(users)
            .filter(|(_, u)| genders[**u as usize] == g)
            .map(|(v, _)| *v)
            .collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    };
    let mut tail_shares = 0.0;
    let (mut e_head, mut e_tail) = (0.0, 0.0);
    for list in lists {
        let tails = list.iter().filter(|i| !heads.contains(i)).count();
        if !list.is_empty() {
            tail_shares += tails as f64 / list.len() as f64;
        }
        for (pos, item) in list.iter().enumerate() {
            if heads.contains(item) {
                e_head += log2_weight(pos + 1);
            } else {
                e_tail += log2_weight(pos + 1);
            }
        }
    }
    Oracle {
        recall: recall.iter().sum::<f64>() / recall.len() as f64,
        ndcg: ndcg.iter().sum::<f64>() / ndcg.len() as f64,
        d_recall: (mean_of(&recall, Gender::M) - mean_of(&recall, Gender::F)).abs(),
        d_ndcg: (mean_of(&ndcg, Gender::M) - mean_of(&ndcg, Gender::F)).abs(),
        aplt: tail_shares / lists.len() as f64,
        d_exp: (e_head - e_tail).abs() / (e_head + e_tail),
    }
}

fn criterion_1() -> Verdict {
    let mut rng = SeedStream::new(1).stream("acceptance/metrics");
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n_users = rng.random_range(2..=20usize);
        let n_items = rng.random_range(2..=50usize);
        let k = rng.random_range(1..=10usize);
        let mut genders: Vec<Gender> = (0..n_users)
            .map(|_| if rng.random::<bool>() { Gender::M } else { Gender::F })
            .collect();
        genders[0] = Gender::M;
        genders[1] = Gender::F;
        let truth: Vec<Vec<u32>> = (0..n_users)
            .map(|u| {
                // users 0 and 1 always evaluated so both groups are present
                if u > 1 && rng.random::<f64>() < 0.2 {
                    return Vec::new();
                }
                let mut t: Vec<u32> = (0..n_items as u32).filter(|_| rng.random::<f64>() < 0.2).collect();
                if t.is_empty() {
                    t.push(rng.random_range(0..n_items as u32));
                }
                t
            })
            .collect();
        let users: Vec<u32> = (0..n_users as u32).filter(|u| !truth[*u as usize].is_empty()).collect();
        let lists: Vec<Vec<u32>> = users
            .iter()
            .map(|_| {
                let len = rng.random_range(1..=k.min(n_items));
                rand::seq::index::sample(&mut rng, n_items, len)
                    .into_iter()
                    .map(|i| i as u32)
                    .collect()
            })
            .collect();
        let groups: Vec<ItemGroup> = (0..n_items)
            .map(|_| {
                if rng.random::<f64>() < 0.3 {
                    ItemGroup::Head
                } else {
                    ItemGroup::Tail
                }
            })
            .collect();
        let heads: HashSet<u32> = (0..n_items as u32).filter(|i| groups[*i as usize] == ItemGroup::Head).collect();
        let top = TopKLists {
            k,
            users: users.clone(),
            lists: lists.clone(),
        };
        let report = match evaluate_run(&top, &truth, &genders, &groups) {
            Ok(r) => r,
            Err(e) => return Verdict::Fail(format!("evaluate_run failed: {e}")),
        };
        let o = brute_force(&lists, &users, &truth, &genders, &heads, k);
        let expected = [o.recall, o.ndcg, o.d_recall, o.d_ndcg, o.aplt, o.d_exp];
        for (got, want) in report.values().iter().zip(expected) {
            worst = worst.max((got / 100.0 - want).abs());
        }
    }
    check(
        worst <= 1e-9,
        format!("max |diff| {worst:.2e} over 1000 random instances (tolerance 1e-9)"),
    )
}

// ---------------------------------------------------------------------------
// 2. gradients

fn criterion_2() -> Verdict {
    let opts = GradCheckOptions::default();
    let seeds = SeedStream::new(2);
    let mut errors = Vec::new();

    // BPR triple, one triple, parameters packed as [p_u, q_i, q_j, b_i, b_j]
    let d = 4;
    let mut r = seeds.stream("bpr");
    let theta: Vec<f64> = (0..3 * d + 2).map(|_| r.sample::<f64, _>(StandardNormal) * 0.5).collect();
    let unpack = |t: &[f64]| bpr_triple_loss(&t[..d], &t[d..2 * d], &t[2 * d..3 * d], t[3 * d], t[3 * d + 1], 0.01);
    let g = bpr_triple_grad(
        &theta[..d],
        &theta[d..2 * d],
        &theta[2 * d..3 * d],
        theta[3 * d],
        theta[3 * d + 1],
        0.01,
    );
    let analytic: Vec<f64> = [g.p_u, g.q_i, g.q_j, vec![g.b_i, g.b_j]].concat();
    errors.push(("BPR", grad_check(unpack, &theta, &analytic, &opts).max_rel_error));

    // MultiVAE
    let params = MultiVaeParams {
        latent_dim: 3,
        hidden_dims: vec![5],
        ..Default::default()
    };
    let vae = MultiVaeModel::new(8, &params, &mut seeds.stream("vae")).expect("model");
    let hist: Vec<Vec<u32>> = vec![vec![0, 2, 5], vec![1, 3], vec![4, 6, 7, 0]];
    let refs: Vec<&[u32]> = hist.iter().map(Vec::as_slice).collect();
    let target = dense_batch(&refs, 8);
    let mut input = target.clone();
    l2_normalize_rows(&mut input);
    let eps = Matrix::from_vec(3, 3, (0..9).map(|_| r.sample::<f64, _>(StandardNormal)).collect()).unwrap();
    let out = multivae_loss(&vae, &input, &target, &eps, 0.4).expect("loss");
    let n_enc = vae.encoder.param_count();
    let flat = [vae.encoder.flatten(), vae.decoder.flatten()].concat();
    let analytic = [out.encoder_grads.flatten(), out.decoder_grads.flatten()].concat();
    let loss = |p: &[f64]| {
        let mut m = vae.clone();
        m.encoder.assign(&p[..n_enc]).unwrap();
        m.decoder.assign(&p[n_enc..]).unwrap();
        multivae_loss(&m, &input, &target, &eps, 0.4).unwrap().loss
    };
    errors.push(("MultiVAE", grad_check(loss, &flat, &analytic, &opts).max_rel_error));

    // DiffRec
    let sched = build_schedule(10, 0.5, 1e-4, 0.02).unwrap();
    let den = Denoiser::new(8, &[6], 10, &mut seeds.stream("den")).unwrap();
    let (ts, eps) = draw_noise(3, 8, 10, &mut seeds.stream("noise"));
    let out = diffusion_loss_frozen(&target, &ts, &eps, &sched, &den).unwrap();
    let loss = |p: &[f64]| {
        let mut m = den.clone();
        m.mlp.assign(p).unwrap();
        diffusion_loss_with(&target, &ts, &eps, &sched, |x, t| m.predict(x, t)).unwrap()
    };
    errors.push((
        "DiffRec",
        grad_check(loss, &den.mlp.flatten(), &out.grads.flatten(), &opts).max_rel_error,
    ));

    // L-DiffRec joint loss
    let lparams = LDiffRecParams {
        compression: 0.5,
        vae_hidden_dims: vec![4],
        denoiser_hidden_dims: vec![5],
        ..Default::default()
    };
    let partition = ClusterPartition::new(vec![0, 1, 1, 0, 2, 2, 0, 1], 3).unwrap();
    let model = init_ldiffrec(partition, &lparams, 2).unwrap();
    let noise = LDiffRecNoise::draw(3, &model.vae.latent_dims, 5, &mut seeds.stream("lnoise"));
    let out = ldiffrec_loss(&model, &target, &noise, 0.8, 0.2).unwrap();
    let loss = |p: &[f64]| {
        let mut m = model.clone();
        m.assign(p).unwrap();
        ldiffrec_loss(&m, &target, &noise, 0.8, 0.2).unwrap().loss
    };
    errors.push((
        "L-DiffRec",
        grad_check(loss, &model.flatten(), &out.slices().concat(), &opts).max_rel_error,
    ));

    let worst = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let detail = errors.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    check(worst < 1e-5, format!("max relative error: {detail} (tolerance 1e-5)"))
}

// ---------------------------------------------------------------------------
// 3. forward-process moments

fn moments(samples: &[[f64; 3]]) -> ([f64; 3], f64) {
    let n = samples.len() as f64;
    let mut mean = [0.0; 3];
    for s in samples {
        for c in 0..3 {
            mean[c] += s[c] / n;
        }
    }
    // variance pooled over the three isotropic coordinates
    let var = samples
        .iter()
        .map(|s| (0..3).map(|c| (s[c] - mean[c]).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (3.0 * (n - 1.0));
    (mean, var)
}

fn criterion_3() -> Verdict {
    let big_t = 50;
    let sched = build_schedule(big_t, 1.0, 1e-4, 0.02).unwrap();
    let x0 = [1.0, 0.3, 0.7];
    let draws = 100_000;
    let mut worst: f64 = 0.0;
    for t in [1, big_t / 2, big_t] {
        let ab = sched.alpha_bar(t);
        let mut rng = SeedStream::new(3).indexed("acceptance/q_sample", t as u64);
        let closed: Vec<[f64; 3]> = (0..draws)
            .map(|_| {
                let eps: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
                let x = q_sample(&x0, t, &eps, &sched).unwrap();
                [x[0], x[1], x[2]]
            })
            .collect();
        // the same marginal reached by iterating the one-step kernel
        let mut rng = SeedStream::new(3).indexed("acceptance/kernel", t as u64);
        let iterated: Vec<[f64; 3]> = (0..draws)
            .map(|_| {
                let mut x = x0;
                for s in 1..=t {
                    let b = sched.beta(s);
                    for v in x.iter_mut() {
                        *v = (1.0 - b).sqrt() * *v + b.sqrt() * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                x
            })
            .collect();
        for samples in [&closed, &iterated] {
            let (mean, var) = moments(samples);
            // mean error relative to the norm of the target mean vector
            let err: f64 = (0..3).map(|c| (mean[c] - ab.sqrt() * x0[c]).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = x0.iter().map(|v| ab * v * v).sum::<f64>().sqrt();
            worst = worst.max(err / norm);
            worst = worst.max((var - (1.0 - ab)).abs() / (1.0 - ab));
        }
    }
    check(
        worst < 0.01,
        format!(
            "max relative moment error {:.3}% at t in {{1, 25, 50}}, closed form and iterated kernel (tolerance 1%)",
            100.0 * worst
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. synthetic fairness ground truth

fn synthetic_split(bias: f64, seed: u64) -> SplitDataset {
    let cfg = SyntheticConfig {
        n_users: 600,
        n_items: 300,
        density: 0.05,
        popularity_exponent: 1.0,
        group_bias: bias,
        female_fraction: 0.3,
        seed,
    };
    let d = generate_synthetic(&cfg).unwrap().filter_min_interactions(3).unwrap();
    temporal_split(&d, SplitRatios::default(), 0.2).unwrap()
}

fn criterion_7() -> Verdict {
    let mut monotone = 0;
    let mut rows = Vec::new();
    for seed in [1, 2, 3] {
        let gaps: Vec<f64> = [0.0, 0.4, 0.8]
            .iter()
            .map(|&b| {
                let split = synthetic_split(b, seed);
                let pop = TrainedModel::Popularity(fit_popularity(&split.train, split.n_items()).unwrap());
                let lists = recommend_topk(&pop, &split, Phase::Test, 20).unwrap();
                evaluate_run(&lists, &split.test, &split.user_groups, &split.item_groups)
                    .unwrap()
                    .delta_ndcg
            })
            .collect();
        if gaps.windows(2).all(|w| w[0] <= w[1]) {
            monotone += 1;
        }
        rows.push(format!("seed {seed}: {:.2}/{:.2}/{:.2}", gaps[0], gaps[1], gaps[2]));
    }
    check(
        monotone >= 2,
        format!("ΔnDCG at bias 0/0.4/0.8 monotone for {monotone}/3 seeds ({})", rows.join("; ")),
    )
}

// ---------------------------------------------------------------------------
// 8. split/merge bijection and masking

fn bijection_trials() -> Result<(), String> {
    let mut rng = SeedStream::new(8).stream("acceptance/partitions");
    for trial in 0..1000 {
        let n = rng.random_range(1..=60usize);
        let c = rng.random_range(1..=n.min(10));
        let mut assignment: Vec<u32> = (0..n).map(|_| rng.random_range(0..c as u32)).collect();
        for (slot, a) in assignment.iter_mut().take(c).enumerate() {
            *a = slot as u32;
        }
        let p = ClusterPartition::new(assignment, c).map_err(|e| e.to_string())?;
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let parts = split_by_cluster(&x, &p).map_err(|e| e.to_string())?;
        if merge_clusters(&parts, &p).map_err(|e| e.to_string())? != x {
            return Err(format!("roundtrip failed in trial {trial}"));
        }
    }
    Ok(())
}

fn quick_base(kind: ModelKind) -> Map<String, Value> {
    let v = match kind {
        ModelKind::BprMf => json!({"epochs": 5}),
        ModelKind::MultiVae => json!({"epochs": 5, "hidden_dims": [32]}),
        ModelKind::DiffRec => json!({"epochs": 5, "hidden_dims": [32]}),
        ModelKind::LDiffRec => json!({"epochs": 5, "vae_hidden_dims": [16], "denoiser_hidden_dims": [16]}),
        _ => json!({}),
    };
    v.as_object().unwrap().clone()
}

fn quick_grid(kind: ModelKind) -> Value {
    match kind {
        ModelKind::ItemKnn => json!({"neighbors": [20, 50]}),
        ModelKind::Ease => json!({"lambda": [10.0, 100.0]}),
        ModelKind::BprMf => json!({"lr": [3e-3]}),
        ModelKind::MultiVae => json!({"latent_dim": [16]}),
        ModelKind::DiffRec => json!({"steps": [5], "infer_fraction": [0.0, 0.5]}),
        ModelKind::LDiffRec => json!({"clusters": [2, 3]}),
        ModelKind::Popularity => json!({}),
    }
}

/// Sweep every model on a synthetic split; returns records plus masking violations.
fn synthetic_sweep(split: &SplitDataset, out: &std::path::Path) -> Result<(Vec<RunRecord>, usize), String> {
    let mut records = Vec::new();
    let mut violations = 0;
    for kind in ModelKind::ALL {
        let cfg = ExperimentConfig {
            dataset: DatasetSpec {
                name: "synthetic".into(),
                source: DatasetSource::Split { path: PathBuf::new() },
                min_interactions: 3,
                head_fraction: 0.2,
            },
            model: kind,
            base: quick_base(kind),
            grid: Some(serde_json::from_value(quick_grid(kind)).unwrap()),
            k: 20,
            seed: Some(42),
            extra_seeds: vec![],
            output_dir: out.to_path_buf(),
            save_checkpoints: false,
        };
        let outcome = grid_search(&cfg, split, 42).map_err(|e| format!("{kind}: {e}"))?;
        for phase in [Phase::Validation, Phase::Test] {
            let lists = recommend_topk(&outcome.model, split, phase, 20).map_err(|e| e.to_string())?;
            violations += masked_violations(&lists, split, phase);
        }
        records.push(outcome.record);
    }
    Ok((records, violations))
}

fn criterion_8_synthetic(synthetic: &Result<(Vec<RunRecord>, usize), String>) -> Verdict {
    if let Err(e) = bijection_trials() {
        return Verdict::Fail(e);
    }
    match synthetic {
        Ok((_, violations)) => check(
            *violations == 0,
            format!("1000 random partitions round-trip; {violations} masked items in lists of all 7 models on synthetic data"),
        ),
        Err(e) => Verdict::Fail(e.clone()),
    }
}

// ---------------------------------------------------------------------------
// 9. radar normalization

fn radar_orientation(records: &[RunRecord], dataset: &str) -> Result<String, String> {
    let raw = radar_values(records, dataset);
    if raw.is_empty() {
        return Err("no records".into());
    }
    let norm = normalize_for_radar(&raw);
    for axis in 0..3 {
        let col: Vec<f64> = raw.iter().map(|(_, v)| v[axis]).collect();
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        if max == min {
            continue;
        }
        // ΔnDCG is a cost: its best (smallest) raw value must map to 1
        let (best, worst) = if axis == 1 { (min, max) } else { (max, min) };
        for (i, v) in col.iter().enumerate() {
            let n = norm[i].1[axis];
            if (*v == best && n != 1.0) || (*v == worst && n != 0.0) || !(0.0..=1.0).contains(&n) {
                return Err(format!("axis {axis}, model {}: raw {v} normalized to {n}", raw[i].0));
            }
        }
    }
    let svg = emit_radar_svg(dataset, &norm);
    let doc = roxmltree::Document::parse(&svg).map_err(|e| format!("SVG does not parse: {e}"))?;
    let polygons = doc.descendants().filter(|n| n.has_tag_name("polygon")).count();
    if polygons != raw.len() {
        return Err(format!("{polygons} polygons for {} models", raw.len()));
    }
    Ok(format!("{} models, argmax/argmin preserved on 3 axes, SVG well-formed", raw.len()))
}

fn criterion_9_synthetic(synthetic: &Result<(Vec<RunRecord>, usize), String>) -> Verdict {
    match synthetic {
        Ok((records, _)) => match radar_orientation(records, "synthetic") {
            Ok(d) => Verdict::Pass(format!("synthetic records: {d}")),
            Err(e) => Verdict::Fail(e),
        },
        Err(e) => Verdict::Fail(e.clone()),
    }
}

// ---------------------------------------------------------------------------
// 4, 5, 6 and the real-data parts of 8, 9

struct RealData {
    ml1m: Option<PathBuf>,
    ftky: Option<PathBuf>,
    out: tempfile::TempDir,
}

fn env_dir(name: &str) -> Option<PathBuf> {
    std::env::var_os(name).map(PathBuf::from).filter(|p| p.is_dir())
}

fn real_config(name: &str, source: DatasetSource, model: ModelKind, base: Value, out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSpec {
            name: name.into(),
            source,
            min_interactions: 20,
            head_fraction: 0.2,
        },
        model,
        base: base.as_object().unwrap().clone(),
        grid: None,
        k: 20,
        seed: Some(42),
        extra_seeds: vec![],
        output_dir: out.to_path_buf(),
        save_checkpoints: false,
    }
}

/// Default grid; diffusion models train 20 epochs per grid point to fit the CPU budget.
fn tuned(
    name: &str,
    source: DatasetSource,
    split: &SplitDataset,
    model: ModelKind,
    out: &std::path::Path,
) -> Result<(RunRecord, usize), String> {
    let base = match model {
        ModelKind::DiffRec | ModelKind::LDiffRec => json!({"epochs": 20}),
        _ => json!({}),
    };
    let cfg = real_config(name, source, model, base, out);
    let outcome = grid_search(&cfg, split, 42).map_err(|e| format!("{model}: {e}"))?;
    let lists = recommend_topk(&outcome.model, split, Phase::Test, 20).map_err(|e| e.to_string())?;
    Ok((outcome.record, masked_violations(&lists, split, Phase::Test)))
}

fn test_metric(r: &RunRecord, f: impl Fn(&fairdiff::metrics::MetricReport) -> f64) -> f64 {
    r.test.as_ref().map(f).unwrap_or(f64::NAN)
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(&str, &str, Verdict)> = Vec::new();
    let mut run = |id: &'static str, name: &'static str, f: &dyn Fn() -> Verdict| {
        let t = Instant::now();
        let v = f();
        let line = match &v {
            Verdict::Pass(d) => format!("PASS  {d}"),
            Verdict::Fail(d) => format!("FAIL  {d}"),
            Verdict::Skip(d) => format!("SKIP  {d}"),
        };
        println!("criterion {id} [{name}]: {line} ({:.1}s)", t.elapsed().as_secs_f64());
        results.push((id, name, v));
    };

    run("1", "metric oracle equivalence", &criterion_1);
    run("2", "gradient correctness", &criterion_2);
    run("3", "forward-process moments", &criterion_3);

    let real = RealData {
        ml1m: env_dir("FAIRDIFF_ML1M_DIR"),
        ftky: env_dir("FAIRDIFF_FTKY_DIR"),
        out: tempfile::tempdir().expect("tempdir"),
    };
    let ml1m_source = real.ml1m.clone().map(|dir| DatasetSource::Ml1m { dir });
    let ml1m_split: Option<Result<SplitDataset, String>> = ml1m_source.as_ref().map(|src| {
        DatasetSpec {
            name: "ML1M".into(),
            source: src.clone(),
            min_interactions: 20,
            head_fraction: 0.2,
        }
        .load_split()
        .map_err(|e| e.to_string())
    });
    let skip_ml1m = || Verdict::Skip("set FAIRDIFF_ML1M_DIR to a directory with ratings.dat and users.dat".into());

    let ml1m_baselines = std::cell::RefCell::new(Vec::<(RunRecord, usize)>::new());
    run("4", "EASE / ItemkNN on ML1M", &|| {
        let (Some(src), Some(split)) = (&ml1m_source, &ml1m_split) else {
            return skip_ml1m();
        };
        let split = match split {
            Ok(s) => s,
            Err(e) => return Verdict::Fail(e.clone()),
        };
        let items_ok = (split.n_items() as f64 - 3650.0).abs() <= 0.05 * 3650.0;
        let mut detail = vec![format!("{} users, {} items", split.n_users(), split.n_items())];
        let mut ok = items_ok;
        for (kind, target) in [(ModelKind::Ease, 6.45), (ModelKind::ItemKnn, 9.87)] {
            match tuned("ML1M", src.clone(), split, kind, real.out.path()) {
                Ok((rec, viol)) => {
                    let recall = test_metric(&rec, |m| m.recall);
                    ok &= (recall - target).abs() <= 1.5;
                    detail.push(format!("{kind} Recall@20 {recall:.2} (target {target} ± 1.5)"));
                    ml1m_baselines.borrow_mut().push((rec, viol));
                }
                Err(e) => return Verdict::Fail(e),
            }
        }
        check(ok, detail.join(", "))
    });

    let ml1m_diffusion = std::cell::RefCell::new(Vec::<(RunRecord, usize)>::new());
    run("5", "DiffRec on ML1M", &|| {
        let (Some(src), Some(Ok(split))) = (&ml1m_source, &ml1m_split) else {
            return skip_ml1m();
        };
        match tuned("ML1M", src.clone(), split, ModelKind::DiffRec, real.out.path()) {
            Ok((rec, viol)) => {
                let (r, n) = (test_metric(&rec, |m| m.recall), test_metric(&rec, |m| m.ndcg));
                let ok = (r - 10.71).abs() <= 0.2 * 10.71 && (n - 13.19).abs() <= 0.2 * 13.19;
                ml1m_diffusion.borrow_mut().push((rec, viol));
                check(ok, format!("Recall@20 {r:.2} (10.71 ± 20%), nDCG@20 {n:.2} (13.19 ± 20%)"))
            }
            Err(e) => Verdict::Fail(e),
        }
    });

    run("6", "L-DiffRec vs DiffRec provider fairness", &|| {
        let (Some(src), Some(Ok(split))) = (&ml1m_source, &ml1m_split) else {
            return skip_ml1m();
        };
        let Some(ftky_dir) = &real.ftky else {
            return Verdict::Skip("set FAIRDIFF_FTKY_DIR to a directory with interactions.tsv and users.tsv".into());
        };
        let mut detail = Vec::new();
        let mut ok = true;
        let ftky_src = DatasetSource::Canonical {
            interactions: ftky_dir.join("interactions.tsv"),
            users: ftky_dir.join("users.tsv"),
        };
        let ftky_split = match (DatasetSpec {
            name: "FTKY".into(),
            source: ftky_src.clone(),
            min_interactions: 20,
            head_fraction: 0.2,
        })
        .load_split()
        {
            Ok(s) => s,
            Err(e) => return Verdict::Fail(e.to_string()),
        };
        for (name, source, split) in [("ML1M", src.clone(), split), ("FTKY", ftky_src, &ftky_split)] {
            let diffrec = match ml1m_diffusion.borrow().first().filter(|_| name == "ML1M") {
                Some((r, _)) => r.clone(),
                None => match tuned(name, source.clone(), split, ModelKind::DiffRec, real.out.path()) {
                    Ok((r, _)) => r,
                    Err(e) => return Verdict::Fail(e),
                },
            };
            let ldiff = match tuned(name, source, split, ModelKind::LDiffRec, real.out.path()) {
                Ok((r, v)) => {
                    if name == "ML1M" {
                        ml1m_diffusion.borrow_mut().push((r.clone(), v));
                    }
                    r
                }
                Err(e) => return Verdict::Fail(e),
            };
            let (a_l, a_d) = (test_metric(&ldiff, |m| m.aplt), test_metric(&diffrec, |m| m.aplt));
            let (e_l, e_d) = (test_metric(&ldiff, |m| m.delta_exp), test_metric(&diffrec, |m| m.delta_exp));
            ok &= a_l > a_d && e_l < e_d;
            detail.push(format!("{name}: APLT {a_l:.2} vs {a_d:.2}, ΔExp {e_l:.2} vs {e_d:.2}"));
        }
        check(ok, format!("L-DiffRec vs DiffRec: {}", detail.join("; ")))
    });

    let synthetic_out = tempfile::tempdir().expect("tempdir");
    let synthetic = synthetic_sweep(&synthetic_split(0.5, 9), synthetic_out.path());

    run("7", "synthetic fairness ground truth", &criterion_7);
    run("8", "split/merge bijection and masking (synthetic)", &|| {
        criterion_8_synthetic(&synthetic)
    });
    run("8", "masking on full ML1M evaluation", &|| {
        if ml1m_source.is_none() {
            return skip_ml1m();
        }
        let all: Vec<(RunRecord, usize)> = ml1m_baselines
            .borrow()
            .iter()
            .chain(ml1m_diffusion.borrow().iter())
            .cloned()
            .collect();
        if all.is_empty() {
            return Verdict::Fail("criteria 4-5 produced no ML1M runs".into());
        }
        let total: usize = all.iter().map(|(_, v)| v).sum();
        check(total == 0, format!("{total} masked items across {} tuned ML1M models", all.len()))
    });
    run("9", "radar normalization (synthetic)", &|| criterion_9_synthetic(&synthetic));
    run("9", "radar normalization on ML1M records", &|| {
        if ml1m_source.is_none() {
            return skip_ml1m();
        }
        let records: Vec<RunRecord> = ml1m_baselines
            .borrow()
            .iter()
            .chain(ml1m_diffusion.borrow().iter())
            .map(|(r, _)| r.clone())
            .collect();
        match radar_orientation(&records, "ML1M") {
            Ok(d) => Verdict::Pass(d),
            Err(e) => Verdict::Fail(e),
        }
    });

    let failed = results.iter().filter(|(_, _, v)| matches!(v, Verdict::Fail(_))).count();
    let skipped = results.iter().filter(|(_, _, v)| matches!(v, Verdict::Skip(_))).count();
    println!(
        "acceptance: {} passed, {failed} failed, {skipped} skipped in {:.1}s",
        results.len() - failed - skipped,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
