//! Training loops for the synthetic contextual bandit.
//!
//! Both loops optimize the same `K x b` linear scorer and charge one sample
//! per context presentation, so their sample-efficiency curves compare
//! directly. Score-function ascent explores in the `K`-way action space;
//! the random-search loop explores in the full `K*b` parameter space with
//! two-point evaluations of the greedy policy's batch reward.

use nalgebra::{DMatrix, DVector};

use crate::envs::BanditInstance;
use crate::error::{Error, Result};
use crate::estimators;
use crate::rng::SeededRng;

/// Hyperparameters for score-function (softmax policy gradient) training.
#[derive(Debug, Clone, PartialEq)]
pub struct ReinforceConfig {
    /// Ascent step size.
    pub lr: f64,
    /// Contexts per gradient estimate.
    pub batch_size: usize,
    /// Hard cap on training samples.
    pub max_samples: u64,
    /// Iterations between test-accuracy checkpoints.
    pub eval_every: usize,
}

impl ReinforceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive and finite, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("empty batch".into()));
        }
        if self.max_samples == 0 {
            return Err(Error::InvalidParameter("empty sample budget".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidParameter(
                "checkpoint spacing must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Hyperparameters for two-point random search over the flat scorer matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditArsConfig {
    /// Ascent step size.
    pub alpha: f64,
    /// Perturbation radius in parameter space.
    pub delta: f64,
    /// Directions sampled per iteration.
    pub num_directions: usize,
    /// Directions kept by the two-point gap selection rule.
    pub top_directions: usize,
    /// Contexts per objective evaluation (each sign of each direction).
    pub batch_size: usize,
    /// Hard cap on training samples.
    pub max_samples: u64,
    /// Iterations between test-accuracy checkpoints.
    pub eval_every: usize,
}

impl BanditArsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive and finite, got {}",
                self.alpha
            )));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "perturbation must be positive and finite, got {}",
                self.delta
            )));
        }
        if self.num_directions == 0 || self.top_directions == 0 {
            return Err(Error::InvalidParameter(
                "direction counts must be positive".into(),
            ));
        }
        if self.top_directions > self.num_directions {
            return Err(Error::InvalidParameter(format!(
                "cannot keep {} of {} directions",
                self.top_directions, self.num_directions
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("empty batch".into()));
        }
        if self.max_samples == 0 {
            return Err(Error::InvalidParameter("empty sample budget".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidParameter(
                "checkpoint spacing must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One test-accuracy checkpoint.
#[derive(Debug, Clone)]
pub struct BanditCheckpoint {
    pub iteration: usize,
    /// Training samples consumed when the checkpoint was taken.
    pub samples_used: u64,
    /// Greedy-decision accuracy on the held-out test set (not charged).
    pub test_accuracy: f64,
}

/// Output of one bandit training run.
#[derive(Debug, Clone)]
pub struct BanditTrace {
    pub rows: Vec<BanditCheckpoint>,
    pub final_theta: DMatrix<f64>,
    pub samples_used: u64,
    pub iterations: usize,
}

impl BanditTrace {
    /// Samples consumed at the first checkpoint whose accuracy reached
    /// `target`; `None` if no checkpoint got there.
    pub fn samples_to_accuracy(&self, target: f64) -> Option<u64> {
        self.rows
            .iter()
            .find(|row| row.test_accuracy >= target)
            .map(|row| row.samples_used)
    }
}

/// Greedy decision of a linear scorer: row with the largest logit
/// (lowest index on ties).
pub fn greedy_action(theta: &DMatrix<f64>, x: &DVector<f64>) -> usize {
    (theta * x).imax()
}

fn greedy_test_accuracy(instance: &BanditInstance, theta: &DMatrix<f64>) -> f64 {
    instance.test_accuracy(|x| greedy_action(theta, x))
}

fn sample_categorical(probs: &DVector<f64>, rng: &mut SeededRng) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Mean greedy-policy reward over the given training contexts.
fn batch_reward(instance: &BanditInstance, theta: &DMatrix<f64>, idx: &[usize]) -> f64 {
    let mut total = 0.0;
    for &i in idx {
        let x = instance.train_context(i);
        let a = greedy_action(theta, &x);
        total += BanditInstance::reward(instance.train_label(i), a);
    }
    total / idx.len() as f64
}

/// Train a softmax-linear policy by stochastic score-function ascent:
/// sample a context batch, draw actions from the softmax, observe rewards,
/// and step along the categorical policy-gradient estimate.
pub fn run_reinforce_bandit(
    instance: &BanditInstance,
    cfg: &ReinforceConfig,
    rng: &mut SeededRng,
) -> Result<BanditTrace> {
    cfg.validate()?;
    let k = instance.num_actions();
    let b = instance.context_dim();
    let mut train = rng.child(1);
    let mut theta = DMatrix::zeros(k, b);
    let mut rows = vec![BanditCheckpoint {
        iteration: 0,
        samples_used: 0,
        test_accuracy: greedy_test_accuracy(instance, &theta),
    }];
    let batch = cfg.batch_size;
    let mut samples: u64 = 0;
    let mut iteration = 0usize;
    while samples + batch as u64 <= cfg.max_samples {
        let mut features = DMatrix::zeros(batch, b);
        let mut actions = Vec::with_capacity(batch);
        let mut rewards = DVector::zeros(batch);
        for j in 0..batch {
            let i = instance.sample_train(&mut train);
            let x = instance.train_context(i);
            let probs = estimators::softmax(&(&theta * &x));
            let a = sample_categorical(&probs, &mut train);
            features.set_row(j, &x.transpose());
            actions.push(a);
            rewards[j] = BanditInstance::reward(instance.train_label(i), a);
        }
        let est = estimators::reinforce_categorical_grad(&features, &actions, &rewards, &theta)?;
        // Ascent: the estimate points toward higher expected reward.
        theta += DMatrix::from_column_slice(k, b, est.g.as_slice()) * cfg.lr;
        samples += batch as u64;
        iteration += 1;
        if iteration % cfg.eval_every == 0 {
            rows.push(BanditCheckpoint {
                iteration,
                samples_used: samples,
                test_accuracy: greedy_test_accuracy(instance, &theta),
            });
        }
    }
    Ok(BanditTrace {
        rows,
        final_theta: theta,
        samples_used: samples,
        iterations: iteration,
    })
}

/// Train the greedy linear scorer by two-point random search in parameter
/// space: each direction draws a fresh context batch and presents every
/// context under both `theta + delta u` and `theta - delta u` (two pulls per
/// context, so the pair shares its evaluation noise); the strongest
/// directions by two-point gap are averaged and the scorer ascends the
/// combined estimate.
pub fn run_ars_bandit(
    instance: &BanditInstance,
    cfg: &BanditArsConfig,
    rng: &mut SeededRng,
) -> Result<BanditTrace> {
    cfg.validate()?;
    let k = instance.num_actions();
    let b = instance.context_dim();
    let d = k * b;
    let mut train = rng.child(1);
    let mut flat = DVector::zeros(d);
    let mut rows = vec![BanditCheckpoint {
        iteration: 0,
        samples_used: 0,
        test_accuracy: greedy_test_accuracy(instance, &DMatrix::zeros(k, b)),
    }];
    // Each direction presents two fresh batches, one per sign.
    let iter_cost = cfg.num_directions as u64 * 2 * cfg.batch_size as u64;
    let mut samples: u64 = 0;
    let mut iteration = 0usize;
    while samples + iter_cost <= cfg.max_samples {
        let mut scored: Vec<(f64, DVector<f64>)> = Vec::with_capacity(cfg.num_directions);
        for _ in 0..cfg.num_directions {
            let u = estimators::sample_unit_sphere(&mut train, d)?;
            let theta_plus = DMatrix::from_column_slice(k, b, (&flat + &u * cfg.delta).as_slice());
            let theta_minus = DMatrix::from_column_slice(k, b, (&flat - &u * cfg.delta).as_slice());
            let idx: Vec<usize> = (0..cfg.batch_size)
                .map(|_| instance.sample_train(&mut train))
                .collect();
            let j_plus = batch_reward(instance, &theta_plus, &idx);
            let j_minus = batch_reward(instance, &theta_minus, &idx);
            let est = estimators::two_point_sphere_grad(j_plus, j_minus, &u, cfg.delta)?;
            scored.push(((j_plus - j_minus).abs(), est.g));
        }
        // Stable sort keeps draw order on ties, so selection is deterministic.
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));
        let mut mean = DVector::zeros(d);
        for (_, g) in scored.iter().take(cfg.top_directions) {
            mean += g;
        }
        mean /= cfg.top_directions as f64;
        flat += mean * cfg.alpha;
        samples += iter_cost;
        iteration += 1;
        if iteration % cfg.eval_every == 0 {
            rows.push(BanditCheckpoint {
                iteration,
                samples_used: samples,
                test_accuracy: greedy_test_accuracy(
                    instance,
                    &DMatrix::from_column_slice(k, b, flat.as_slice()),
                ),
            });
        }
    }
    Ok(BanditTrace {
        rows,
        final_theta: DMatrix::from_column_slice(k, b, flat.as_slice()),
        samples_used: samples,
        iterations: iteration,
    })
}
