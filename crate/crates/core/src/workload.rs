//! Builds a [`ProblemSuite`] from a synthetic dataset and a node partition.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataparts::{partition, synthetic_blobs, LabeledDataset, PartitionConfig};
use crate::error::{invalid, Result};
use crate::objective::{GammaWeighting, NodeProblem, ObjectiveKind, ProblemSuite, Targets};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ObjectiveKind,
    /// Feature dimension.
    pub dim: usize,
    pub classes: usize,
    /// Total number of samples, split across nodes by the partition.
    pub samples: usize,
    /// Minimum distance between class centres.
    pub separation: f64,
    pub reg: f64,
    /// Multiplies every feature after sampling.
    pub feature_scale: f64,
    /// Ridge only: standard deviation of the per-class target offset.
    pub class_shift: f64,
    /// Ridge only: observation noise standard deviation.
    pub noise: f64,
    pub gamma_weighting: GammaWeighting,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            kind: ObjectiveKind::Softmax,
            dim: 10,
            classes: 10,
            samples: 14 * 600,
            separation: 3.0,
            reg: 0.01,
            feature_scale: 1.0,
            class_shift: 1.0,
            noise: 0.1,
            gamma_weighting: GammaWeighting::DataShare,
        }
    }
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("problem.dim", "must be >= 1"));
        }
        if self.classes < 2 {
            return Err(invalid("problem.classes", "must be >= 2"));
        }
        if self.samples < self.classes {
            return Err(invalid("problem.samples", "must be >= classes"));
        }
        if !(self.reg > 0.0) || !self.reg.is_finite() {
            return Err(invalid(
                "problem.reg",
                format!("must be finite and > 0 (got {})", self.reg),
            ));
        }
        for (field, v) in [
            ("problem.separation", self.separation),
            ("problem.feature_scale", self.feature_scale),
            ("problem.class_shift", self.class_shift),
            ("problem.noise", self.noise),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(field, format!("must be finite and >= 0 (got {v})")));
            }
        }
        Ok(())
    }
}

/// Everything the engine needs about the learning task of one run.
#[derive(Debug, Clone)]
pub struct Workload {
    pub dataset: LabeledDataset,
    pub shards: Vec<Vec<usize>>,
    pub suite: ProblemSuite,
}

/// Real-valued targets `y = <theta, x> + offset[label] + noise * eps`.
fn regression_targets<R: Rng + ?Sized>(
    ds: &LabeledDataset,
    cfg: &ProblemConfig,
    rng: &mut R,
) -> Vec<f64> {
    let d = cfg.dim;
    let scale = 1.0 / (d as f64).sqrt();
    let theta: Vec<f64> = (0..d)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let offsets: Vec<f64> = (0..ds.classes)
        .map(|_| cfg.class_shift * rng.sample::<f64, _>(StandardNormal))
        .collect();
    ds.features
        .iter()
        .zip(&ds.labels)
        .map(|(x, &l)| {
            let lin: f64 = theta.iter().zip(x).map(|(t, v)| t * v).sum();
            lin + offsets[l] + cfg.noise * rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

/// Generates data from the `Data` stream and shards from the `Partition`
/// stream of `seed`, then builds the suite.
pub fn build_workload(
    problem: &ProblemConfig,
    partition_cfg: &PartitionConfig,
    n: usize,
    seed: u64,
) -> Result<Workload> {
    problem.validate()?;
    let mut data_rng = stream(seed, Stream::Data);
    let mut dataset = synthetic_blobs(
        problem.classes,
        problem.dim,
        problem.samples,
        problem.separation,
        &mut data_rng,
    )?;
    if problem.feature_scale != 1.0 {
        for row in &mut dataset.features {
            row.iter_mut().for_each(|v| *v *= problem.feature_scale);
        }
    }
    let real_targets = match problem.kind {
        ObjectiveKind::Ridge => Some(regression_targets(&dataset, problem, &mut data_rng)),
        ObjectiveKind::Softmax => None,
    };
    let shards = partition(
        &dataset,
        n,
        partition_cfg,
        &mut stream(seed, Stream::Partition),
    )?;
    let problems = shards
        .iter()
        .map(|shard| {
            let features = shard.iter().map(|&i| dataset.features[i].clone()).collect();
            let targets = match &real_targets {
                Some(y) => Targets::Real(shard.iter().map(|&i| y[i]).collect()),
                None => Targets::Class {
                    labels: shard.iter().map(|&i| dataset.labels[i]).collect(),
                    classes: dataset.classes,
                },
            };
            NodeProblem::new(features, targets, problem.reg)
        })
        .collect::<Result<Vec<_>>>()?;
    let suite = ProblemSuite::build(problems, problem.gamma_weighting)?;
    Ok(Workload {
        dataset,
        shards,
        suite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ObjectiveKind) -> ProblemConfig {
        ProblemConfig {
            kind,
            dim: 4,
            classes: 4,
            samples: 200,
            ..Default::default()
        }
    }

    #[test]
    fn builds_both_kinds() {
        for kind in [ObjectiveKind::Ridge, ObjectiveKind::Softmax] {
            let w = build_workload(
                &small(kind),
                &PartitionConfig::Dirichlet { alpha: 1.0 },
                5,
                3,
            )
            .unwrap();
            assert_eq!(w.suite.n(), 5);
            assert_eq!(w.suite.kind(), kind);
            assert!(w.suite.smoothness >= w.suite.mu);
            assert!(w.suite.gamma >= 0.0);
            assert_eq!(w.suite.total_samples(), 200);
        }
    }

    #[test]
    fn seed_determines_suite() {
        let cfg = small(ObjectiveKind::Ridge);
        let p = PartitionConfig::Iid { per_node: None };
        let a = build_workload(&cfg, &p, 4, 11).unwrap();
        let b = build_workload(&cfg, &p, 4, 11).unwrap();
        assert_eq!(a.suite, b.suite);
    }

    #[test]
    fn validation_names_field() {
        let cfg = ProblemConfig {
            reg: 0.0,
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("problem.reg"), "{err}");
    }
}
