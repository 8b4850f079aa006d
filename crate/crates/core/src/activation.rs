//! Dynamic task activation: learnable task vectors composed for an active
//! [`TaskSet`] and added to every row of an acoustic embedding.
//!
//! Two banking strategies exist. `PerCombination` keeps one vector per
//! auxiliary subset (`2^K` vectors) and selects by combination index.
//! `PerTaskSum` keeps one vector per task, primary included (`K + 1`
//! vectors), and sums the vectors of every active task. The primary
//! vector always participates in the sum.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::codec::TaskSet;
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Mat;

/// Standard deviation of the random initialisation.
pub const INIT_SCALE: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationStrategy {
    PerCombination,
    PerTaskSum,
}

impl ActivationStrategy {
    pub const ALL: [ActivationStrategy; 2] = [Self::PerCombination, Self::PerTaskSum];

    pub fn name(self) -> &'static str {
        match self {
            Self::PerCombination => "per_combination",
            Self::PerTaskSum => "per_task_sum",
        }
    }

    /// Number of vectors a bank holds for `k` auxiliary tasks.
    pub fn bank_size(self, k: usize) -> usize {
        match self {
            Self::PerCombination => 1 << k,
            Self::PerTaskSum => k + 1,
        }
    }
}

impl fmt::Display for ActivationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_combination" | "per-combination" | "combination" => Ok(Self::PerCombination),
            "per_task_sum" | "per-task-sum" | "per_task" | "sum" => Ok(Self::PerTaskSum),
            _ => Err(Error::Unknown(format!("activation strategy `{s}`"))),
        }
    }
}

/// Where task vectors are added.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationPosition {
    AfterFeatureEncoder,
    AfterFullEncoder,
    Both,
}

/// A single injection point; `Both` expands to two of these.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InjectionPoint {
    Feature,
    Encoder,
}

impl InjectionPoint {
    pub fn name(self) -> &'static str {
        match self {
            InjectionPoint::Feature => "feature",
            InjectionPoint::Encoder => "encoder",
        }
    }
}

impl ActivationPosition {
    pub const ALL: [ActivationPosition; 3] = [
        Self::AfterFeatureEncoder,
        Self::AfterFullEncoder,
        Self::Both,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::AfterFeatureEncoder => "after_feature_encoder",
            Self::AfterFullEncoder => "after_full_encoder",
            Self::Both => "both",
        }
    }

    pub fn points(self) -> &'static [InjectionPoint] {
        match self {
            Self::AfterFeatureEncoder => &[InjectionPoint::Feature],
            Self::AfterFullEncoder => &[InjectionPoint::Encoder],
            Self::Both => &[InjectionPoint::Feature, InjectionPoint::Encoder],
        }
    }
}

impl fmt::Display for ActivationPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationPosition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "after_feature_encoder" | "feature" => Ok(Self::AfterFeatureEncoder),
            "after_full_encoder" | "encoder" | "full" => Ok(Self::AfterFullEncoder),
            "both" => Ok(Self::Both),
            _ => Err(Error::Unknown(format!("activation position `{s}`"))),
        }
    }
}

/// Learnable task vectors of one injection point.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationBank {
    pub strategy: ActivationStrategy,
    pub num_aux: usize,
    pub dim: usize,
    pub seed: u64,
    pub vectors: Vec<Vec<f64>>,
}

pub fn new_bank(strategy: ActivationStrategy, num_aux: usize, dim: usize, seed: u64) -> Result<ActivationBank> {
    if dim == 0 {
        return Err(Error::Config("activation dimension must be at least 1".into()));
    }
    if num_aux > 16 {
        return Err(Error::Config(format!("K={num_aux} auxiliary tasks is not supported")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_SCALE).expect("valid normal");
    let vectors = (0..strategy.bank_size(num_aux))
        .map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect())
        .collect();
    Ok(ActivationBank {
        strategy,
        num_aux,
        dim,
        seed,
        vectors,
    })
}

/// Index of the auxiliary subset of `tasks` in `[0, 2^k)`.
pub fn combination_index(tasks: TaskSet, k: usize) -> Result<usize> {
    tasks.combination_index(k)
}

/// Which bank vectors make up the activation of `tasks`.
pub fn vector_indices(strategy: ActivationStrategy, tasks: TaskSet, k: usize) -> Result<Vec<usize>> {
    let combo = combination_index(tasks, k)?;
    Ok(match strategy {
        ActivationStrategy::PerCombination => vec![combo],
        ActivationStrategy::PerTaskSum => tasks.indices().collect(),
    })
}

impl ActivationBank {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn num_parameters(&self) -> usize {
        self.vectors.len() * self.dim
    }

    /// Compose the activation vector for `tasks`.
    pub fn activation_vector(&self, tasks: TaskSet) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dim];
        for i in vector_indices(self.strategy, tasks, self.num_aux)? {
            for (a, b) in v.iter_mut().zip(&self.vectors[i]) {
                *a += b;
            }
        }
        Ok(v)
    }
}

/// `X + v` broadcast over rows.
pub fn apply_activation(x: &Mat, v: &[f64]) -> Result<Mat> {
    if v.len() != x.cols {
        return Err(Error::Shape(format!(
            "activation vector of length {} does not match embedding dim {}",
            v.len(),
            x.cols
        )));
    }
    let mut out = x.clone();
    for r in 0..out.rows {
        for (o, a) in out.row_mut(r).iter_mut().zip(v) {
            *o += a;
        }
    }
    Ok(out)
}

/// Differentiable composition: `vectors` are the bank's tape variables
/// (each `1 x d`), in bank order.
pub fn compose_on_tape(
    tape: &mut Tape,
    strategy: ActivationStrategy,
    k: usize,
    vectors: &[Var],
    tasks: TaskSet,
) -> Result<Var> {
    let idx = vector_indices(strategy, tasks, k)?;
    let mut acc = vectors[idx[0]];
    for &i in &idx[1..] {
        acc = tape.add(acc, vectors[i]);
    }
    Ok(acc)
}

/// Differentiable `X + v`.
pub fn apply_on_tape(tape: &mut Tape, x: Var, v: Var) -> Result<Var> {
    tape.add_row(x, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::TaskId;

    #[test]
    fn bank_sizes() {
        let b = new_bank(ActivationStrategy::PerCombination, 4, 8, 1).unwrap();
        assert_eq!(b.len(), 16);
        assert!(b.vectors.iter().all(|v| v.len() == 8));
        assert_eq!(new_bank(ActivationStrategy::PerTaskSum, 4, 8, 1).unwrap().len(), 5);
        assert_eq!(new_bank(ActivationStrategy::PerTaskSum, 0, 8, 1).unwrap().len(), 1);
        assert!(new_bank(ActivationStrategy::PerTaskSum, 4, 0, 1).is_err());
    }

    #[test]
    fn initialisation_is_seeded_and_small() {
        let a = new_bank(ActivationStrategy::PerCombination, 4, 32, 7).unwrap();
        let b = new_bank(ActivationStrategy::PerCombination, 4, 32, 7).unwrap();
        assert_eq!(a, b);
        let all: Vec<f64> = a.vectors.iter().flatten().copied().collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let sd = (all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / all.len() as f64).sqrt();
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((sd - INIT_SCALE).abs() < 0.005, "sd {sd}");
    }

    #[test]
    fn composition() {
        let sum = new_bank(ActivationStrategy::PerTaskSum, 4, 3, 2).unwrap();
        assert_eq!(sum.activation_vector(TaskSet::primary_only()).unwrap(), sum.vectors[0]);
        let tasks = TaskSet::from_tasks([TaskId::Scd, TaskId::Ner]);
        let expected: Vec<f64> = (0..3)
            .map(|j| sum.vectors[0][j] + sum.vectors[1][j] + sum.vectors[3][j])
            .collect();
        assert_eq!(sum.activation_vector(tasks).unwrap(), expected);

        let combo = new_bank(ActivationStrategy::PerCombination, 4, 3, 2).unwrap();
        assert_eq!(combo.activation_vector(TaskSet::primary_only()).unwrap(), combo.vectors[0]);
        assert_eq!(combo.activation_vector(tasks).unwrap(), combo.vectors[5]);
        assert!(combo.activation_vector(TaskSet::all(5)).is_err());
    }

    #[test]
    fn apply_examples() {
        let x = Mat::from_vec(2, 2, vec![1.0; 4]);
        assert_eq!(apply_activation(&x, &[0.0, 0.0]).unwrap(), x);
        let y = apply_activation(&x, &[1.0, -1.0]).unwrap();
        assert_eq!(y.data, vec![2.0, 0.0, 2.0, 0.0]);
        assert!(apply_activation(&x, &[1.0]).is_err());
    }
}
