use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::SeedStream;

const MAX_ITERS: usize = 100;
const TOLERANCE: f64 = 1e-6;

/// Assignment of items to `C` non-empty clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "PartitionRecord", try_from = "PartitionRecord")]
pub struct ClusterPartition {
    assignment: Vec<u32>,
    /// Items of each cluster, ascending.
    members: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionRecord {
    clusters: usize,
    assignment: Vec<u32>,
}

impl From<ClusterPartition> for PartitionRecord {
    fn from(p: ClusterPartition) -> Self {
        PartitionRecord {
            clusters: p.n_clusters(),
            assignment: p.assignment,
        }
    }
}

impl TryFrom<PartitionRecord> for ClusterPartition {
    type Error = Error;

    fn try_from(r: PartitionRecord) -> Result<Self> {
        ClusterPartition::new(r.assignment, r.clusters)
    }
}

impl ClusterPartition {
    pub fn new(assignment: Vec<u32>, clusters: usize) -> Result<ClusterPartition> {
        let mut members = vec![Vec::new(); clusters];
        for (item, &c) in assignment.iter().enumerate() {
            let slot = members
                .get_mut(c as usize)
                .ok_or_else(|| Error::Config(format!("item {item} assigned to cluster {c} of {clusters}")))?;
            slot.push(item as u32);
        }
        if let Some(c) = members.iter().position(Vec::is_empty) {
            return Err(Error::Config(format!("cluster {c} is empty")));
        }
        Ok(ClusterPartition { assignment, members })
    }

    pub fn n_clusters(&self) -> usize {
        self.members.len()
    }

    pub fn n_items(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn members(&self, c: usize) -> &[u32] {
        &self.members[c]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_items() {
            return Err(Error::DimensionMismatch {
                context: "cluster split input",
                expected: self.n_items(),
                actual: len,
            });
        }
        Ok(())
    }

    /// Column blocks of `x`, one per cluster.
    pub fn split_columns(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        self.check_len(x.cols())?;
        Ok(self
            .members
            .iter()
            .map(|items| {
                let mut m = Matrix::zeros(x.rows(), items.len());
                for r in 0..x.rows() {
                    let src = x.row(r);
                    for (d, &i) in m.row_mut(r).iter_mut().zip(items) {
                        *d = src[i as usize];
                    }
                }
                m
            })
            .collect())
    }

    /// Inverse of [`ClusterPartition::split_columns`].
    pub fn merge_columns(&self, parts: &[Matrix]) -> Result<Matrix> {
        if parts.len() != self.n_clusters() {
            return Err(Error::DimensionMismatch {
                context: "cluster merge count",
                expected: self.n_clusters(),
                actual: parts.len(),
            });
        }
        let rows = parts[0].rows();
        let mut out = Matrix::zeros(rows, self.n_items());
        for (part, items) in parts.iter().zip(&self.members) {
            if part.cols() != items.len() || part.rows() != rows {
                return Err(Error::DimensionMismatch {
                    context: "cluster merge width",
                    expected: items.len(),
                    actual: part.cols(),
                });
            }
            for r in 0..rows {
                let dst = out.row_mut(r);
                for (v, &i) in part.row(r).iter().zip(items) {
                    dst[i as usize] = *v;
                }
            }
        }
        Ok(out)
    }
}

pub fn split_by_cluster(x: &[f64], partition: &ClusterPartition) -> Result<Vec<Vec<f64>>> {
    partition.check_len(x.len())?;
    Ok(partition
        .members
        .iter()
        .map(|items| items.iter().map(|&i| x[i as usize]).collect())
        .collect())
}

pub fn merge_clusters(parts: &[Vec<f64>], partition: &ClusterPartition) -> Result<Vec<f64>> {
    let mats = parts
        .iter()
        .map(|p| Matrix::from_vec(1, p.len(), p.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(partition.merge_columns(&mats)?.into_vec())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means result with the within-cluster sum of squares after each iteration.
#[derive(Debug, Clone)]
pub struct KMeansTrace {
    pub partition: ClusterPartition,
    pub wcss: Vec<f64>,
    pub iterations: usize,
}

pub fn kmeans_cluster(embeddings: &Matrix, clusters: usize, seed: u64) -> Result<ClusterPartition> {
    Ok(kmeans_traced(embeddings, clusters, seed)?.partition)
}

/// Lloyd's algorithm. Seeding starts at a seed-chosen row and adds the row
/// farthest from all chosen centroids until `clusters` are picked.
pub fn kmeans_traced(embeddings: &Matrix, clusters: usize, seed: u64) -> Result<KMeansTrace> {
    let n = embeddings.rows();
    if clusters == 0 || clusters > n {
        return Err(Error::Config(format!("cannot form {clusters} clusters from {n} items")));
    }
    let points: Vec<&[f64]> = (0..n).map(|i| embeddings.row(i)).collect();
    let first = SeedStream::new(seed).stream("kmeans/seed").random_range(0..n);
    let mut centroids = vec![points[first].to_vec()];
    let mut min_d: Vec<f64> = points.iter().map(|p| sq_dist(p, points[first])).collect();
    while centroids.len() < clusters {
        let mut pick = 0;
        for i in 1..n {
            if min_d[i] > min_d[pick] {
                pick = i;
            }
        }
        centroids.push(points[pick].to_vec());
        for (d, p) in min_d.iter_mut().zip(&points) {
            *d = d.min(sq_dist(p, points[pick]));
        }
    }

    let mut assignment = vec![0u32; n];
    let mut wcss = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_ITERS {
        iterations += 1;
        let mut dist = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            assignment[i] = c as u32;
            dist[i] = d;
        }
        repair_empty(&mut assignment, &mut dist, clusters);

        let dim = embeddings.cols();
        let mut sums = vec![vec![0.0; dim]; clusters];
        let mut counts = vec![0usize; clusters];
        for (i, p) in points.iter().enumerate() {
            let c = assignment[i] as usize;
            counts[c] += 1;
            sums[c].iter_mut().zip(p.iter()).for_each(|(s, v)| *s += v);
        }
        let mut movement: f64 = 0.0;
        for c in 0..clusters {
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            movement = movement.max(sq_dist(&new, &centroids[c]).sqrt());
            centroids[c] = new;
        }
        wcss.push(
            points
                .iter()
                .enumerate()
                .map(|(i, p)| sq_dist(p, &centroids[assignment[i] as usize]))
                .sum(),
        );
        if movement < TOLERANCE {
            break;
        }
    }
    Ok(KMeansTrace {
        partition: ClusterPartition::new(assignment, clusters)?,
        wcss,
        iterations,
    })
}

/// Move the point farthest from its own centroid (taken from a cluster with
/// more than one member) into each empty cluster.
fn repair_empty(assignment: &mut [u32], dist: &mut [f64], clusters: usize) {
    let mut counts = vec![0usize; clusters];
    for &c in assignment.iter() {
        counts[c as usize] += 1;
    }
    for empty in 0..clusters {
        if counts[empty] > 0 {
            continue;
        }
        let mut pick: Option<usize> = None;
        for i in 0..assignment.len() {
            if counts[assignment[i] as usize] > 1 && pick.is_none_or(|p| dist[i] > dist[p]) {
                pick = Some(i);
            }
        }
        let i = pick.expect("clusters <= points guarantees a donor");
        counts[assignment[i] as usize] -= 1;
        assignment[i] = empty as u32;
        counts[empty] = 1;
        dist[i] = 0.0;
    }
}
