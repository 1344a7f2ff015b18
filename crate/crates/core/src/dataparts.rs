//! Synthetic labelled data and its assignment to nodes.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Resampling budget for Dirichlet partitions that leave a node empty.
pub const PARTITION_MAX_TRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        histogram(&self.labels, self.classes, 0..self.len())
    }
}

/// Class centres `±(separation/√2)·e_k`: pairwise distance at least `separation`.
fn class_means(classes: usize, d: usize, separation: f64) -> Vec<Vec<f64>> {
    let r = separation / std::f64::consts::SQRT_2;
    (0..classes)
        .map(|k| {
            let mut m = vec![0.0; d];
            m[k % d] = if k < d { r } else { -r };
            m
        })
        .collect()
}

/// Gaussian blobs with unit covariance, one centre per class, balanced
/// counts. Sample `k` carries label `k % classes`.
pub fn synthetic_blobs<R: Rng + ?Sized>(
    classes: usize,
    d: usize,
    total: usize,
    separation: f64,
    rng: &mut R,
) -> Result<LabeledDataset> {
    if classes < 2 {
        return Err(Error::InfeasibleDataset("need at least 2 classes".into()));
    }
    if total < classes {
        return Err(Error::InfeasibleDataset(format!(
            "{total} samples cannot cover {classes} classes"
        )));
    }
    if d == 0 || classes > 2 * d {
        return Err(Error::InfeasibleDataset(format!(
            "{classes} separated classes need dimension >= {}",
            classes.div_ceil(2)
        )));
    }
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(Error::InfeasibleDataset(format!(
            "bad separation {separation}"
        )));
    }
    let means = class_means(classes, d, separation);
    let mut features = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for k in 0..total {
        let c = k % classes;
        let x = means[c]
            .iter()
            .map(|&m| m + rng.sample::<f64, _>(StandardNormal))
            .collect();
        features.push(x);
        labels.push(c);
    }
    Ok(LabeledDataset {
        features,
        labels,
        classes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase", deny_unknown_fields)]
pub enum PartitionConfig {
    /// Stratified equal shards; `per_node` defaults to `total / n`.
    Iid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        per_node: Option<usize>,
    },
    /// Label skew: per-class node proportions drawn from `Dirichlet(alpha)`.
    Dirichlet { alpha: f64 },
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig::Dirichlet { alpha: 10.0 }
    }
}

impl PartitionConfig {
    /// `alpha = inf` selects the i.i.d. scheme.
    pub fn from_alpha(alpha: f64) -> Self {
        if alpha.is_infinite() && alpha > 0.0 {
            PartitionConfig::Iid { per_node: None }
        } else {
            PartitionConfig::Dirichlet { alpha }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PartitionConfig::Iid { per_node: Some(0) } => {
                Err(invalid("partition.per_node", "must be >= 1"))
            }
            PartitionConfig::Iid { .. } => Ok(()),
            PartitionConfig::Dirichlet { alpha } => {
                if alpha > 0.0 && alpha.is_finite() {
                    Ok(())
                } else {
                    Err(invalid(
                        "partition.alpha",
                        format!("must be finite and > 0 (got {alpha})"),
                    ))
                }
            }
        }
    }
}

pub fn partition<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    n: usize,
    cfg: &PartitionConfig,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    match *cfg {
        PartitionConfig::Iid { per_node } => {
            let per_node = per_node.unwrap_or(dataset.len() / n);
            iid_partition(dataset, n, per_node, rng)
        }
        PartitionConfig::Dirichlet { alpha } => dirichlet_partition(dataset, n, alpha, rng),
    }
}

fn by_class<R: Rng + ?Sized>(dataset: &LabeledDataset, rng: &mut R) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); dataset.classes];
    for (i, &l) in dataset.labels.iter().enumerate() {
        groups[l].push(i);
    }
    for g in &mut groups {
        g.shuffle(rng);
    }
    groups
}

fn iid_partition<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    n: usize,
    per_node: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if per_node == 0 || per_node * n > dataset.len() {
        return Err(Error::InfeasibleDataset(format!(
            "{n} nodes x {per_node} samples exceeds {} available",
            dataset.len()
        )));
    }
    // Interleave classes by fractional rank so any contiguous window holds
    // each class in proportion to its global share.
    let groups = by_class(dataset, rng);
    let mut order: Vec<(f64, usize, usize)> = Vec::with_capacity(dataset.len());
    for (c, g) in groups.iter().enumerate() {
        let len = g.len() as f64;
        for (j, &idx) in g.iter().enumerate() {
            order.push(((j as f64 + 0.5) / len, c, idx));
        }
    }
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(order
        .chunks(per_node)
        .take(n)
        .map(|chunk| chunk.iter().map(|&(_, _, idx)| idx).collect())
        .collect())
}

/// Integer counts summing to `total`, proportional to `shares`, by the
/// largest-remainder rule. Ties go to the lower index.
pub fn apportion(total: usize, shares: &[f64]) -> Vec<usize> {
    let sum: f64 = shares.iter().sum();
    let quotas: Vec<f64> = shares.iter().map(|s| s / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut rema: Vec<(f64, usize)> = quotas
        .iter()
        .enumerate()
        .map(|(i, q)| (q - q.floor(), i))
        .collect();
    rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rema.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// One draw from `Dirichlet(alpha * 1_n)` via normalized Gamma variates.
pub fn dirichlet_proportions<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 {
        draws.iter().map(|g| g / sum).collect()
    } else {
        // Every variate underflowed: the alpha -> 0 limit puts all mass on one node.
        let mut p = vec![0.0; n];
        p[rng.random_range(0..n)] = 1.0;
        p
    }
}

fn dirichlet_partition<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    n: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    for _ in 0..PARTITION_MAX_TRIES {
        let groups = by_class(dataset, rng);
        let mut shards = vec![Vec::new(); n];
        for g in &groups {
            let props = dirichlet_proportions(n, alpha, rng);
            let counts = apportion(g.len(), &props);
            let mut it = g.iter();
            for (node, &c) in counts.iter().enumerate() {
                shards[node].extend(it.by_ref().take(c));
            }
        }
        if shards.iter().all(|s| !s.is_empty()) {
            for s in &mut shards {
                s.sort_unstable();
            }
            return Ok(shards);
        }
    }
    Err(Error::DegeneratePartition(PARTITION_MAX_TRIES))
}

pub fn histogram(
    labels: &[usize],
    classes: usize,
    indices: impl IntoIterator<Item = usize>,
) -> Vec<usize> {
    let mut h = vec![0; classes];
    for i in indices {
        h[labels[i]] += 1;
    }
    h
}

/// Shannon entropy (nats) of the label distribution of one shard.
pub fn label_entropy(dataset: &LabeledDataset, shard: &[usize]) -> f64 {
    let h = histogram(&dataset.labels, dataset.classes, shard.iter().copied());
    let total = shard.len() as f64;
    h.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}
