//! Synthetic contextual bandit: Gaussian cluster contexts, one correct
//! action per cluster, reward +1 for the correct action and -1 otherwise.
//!
//! Stands in for an image-classification bandit: cluster centers are far
//! enough apart that a linear classifier separates them almost perfectly,
//! so any gap to full-supervision accuracy is attributable to the bandit
//! feedback, not to the representation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Distance from the origin at which cluster centers are placed. With
/// unit-variance clusters this separation puts nearest-centroid accuracy
/// far above the 99% bar used in tests.
const CENTER_NORM: f64 = 6.0;

/// Minimum pairwise distance enforced between centers by rejection.
const MIN_CENTER_GAP: f64 = 4.0;

#[derive(Debug, Clone)]
pub struct BanditInstance {
    /// Cluster centers, one column per action.
    centers: DMatrix<f64>,
    /// Training contexts, one column each.
    train_contexts: DMatrix<f64>,
    train_labels: Vec<usize>,
    /// Held-out contexts for accuracy reporting, one column each.
    test_contexts: DMatrix<f64>,
    test_labels: Vec<usize>,
}

impl BanditInstance {
    pub fn context_dim(&self) -> usize {
        self.centers.nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.centers.ncols()
    }

    pub fn num_train(&self) -> usize {
        self.train_labels.len()
    }

    pub fn num_test(&self) -> usize {
        self.test_labels.len()
    }

    pub fn centers(&self) -> &DMatrix<f64> {
        &self.centers
    }

    pub fn train_context(&self, i: usize) -> DVector<f64> {
        self.train_contexts.column(i).into_owned()
    }

    pub fn train_label(&self, i: usize) -> usize {
        self.train_labels[i]
    }

    pub fn test_context(&self, i: usize) -> DVector<f64> {
        self.test_contexts.column(i).into_owned()
    }

    pub fn test_label(&self, i: usize) -> usize {
        self.test_labels[i]
    }

    /// Reward rule: +1 for the correct action, -1 for anything else.
    pub fn reward(label: usize, action: usize) -> f64 {
        if label == action {
            1.0
        } else {
            -1.0
        }
    }

    /// Index of a uniformly drawn training example.
    pub fn sample_train(&self, rng: &mut SeededRng) -> usize {
        rng.below(self.num_train() as u64) as usize
    }

    /// Test accuracy of an arbitrary deterministic decision rule.
    pub fn test_accuracy<F>(&self, mut decide: F) -> f64
    where
        F: FnMut(&DVector<f64>) -> usize,
    {
        let mut hits = 0usize;
        for i in 0..self.num_test() {
            let x = self.test_context(i);
            if decide(&x) == self.test_labels[i] {
                hits += 1;
            }
        }
        hits as f64 / self.num_test() as f64
    }
}

fn draw_labeled_contexts(
    rng: &mut SeededRng,
    centers: &DMatrix<f64>,
    count: usize,
) -> (DMatrix<f64>, Vec<usize>) {
    let b = centers.nrows();
    let k = centers.ncols();
    let mut contexts = DMatrix::zeros(b, count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = rng.below(k as u64) as usize;
        let noise = rng.normal_vec(b);
        contexts.set_column(i, &(centers.column(label) + noise));
        labels.push(label);
    }
    (contexts, labels)
}

/// Generate a clustered bandit instance with `n_train` training and
/// `n_test` held-out contexts in `b` dimensions over `k` actions.
pub fn gen_contextual_bandit(
    rng: &mut SeededRng,
    b: usize,
    k: usize,
    n_train: usize,
    n_test: usize,
) -> Result<BanditInstance> {
    if k < 2 {
        return Err(Error::InvalidParameter(
            "need at least two actions".into(),
        ));
    }
    if b == 0 || n_train == 0 || n_test == 0 {
        return Err(Error::InvalidDimension(
            "context dimension and sample counts must be positive".into(),
        ));
    }
    let mut centers = DMatrix::zeros(b, k);
    for j in 0..k {
        let mut attempts = 0;
        loop {
            let raw = rng.normal_vec(b);
            let norm = raw.norm();
            if norm == 0.0 {
                continue;
            }
            let candidate = raw * (CENTER_NORM / norm);
            let far_enough = (0..j)
                .all(|prev| (&candidate - centers.column(prev)).norm() >= MIN_CENTER_GAP);
            if far_enough {
                centers.set_column(j, &candidate);
                break;
            }
            attempts += 1;
            if attempts > 1000 {
                return Err(Error::InvalidParameter(format!(
                    "cannot place {k} centers {MIN_CENTER_GAP} apart in {b} dimensions"
                )));
            }
        }
    }
    let (train_contexts, train_labels) = draw_labeled_contexts(rng, &centers, n_train);
    let (test_contexts, test_labels) = draw_labeled_contexts(rng, &centers, n_test);
    Ok(BanditInstance {
        centers,
        train_contexts,
        train_labels,
        test_contexts,
        test_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rewards_are_plus_or_minus_one() {
        for label in 0..5 {
            for action in 0..5 {
                let r = BanditInstance::reward(label, action);
                assert!(r == 1.0 || r == -1.0);
                assert_eq!(r == 1.0, label == action);
            }
        }
    }

    #[test]
    fn nearest_centroid_from_training_means_is_almost_perfect() {
        let mut rng = SeededRng::new(8, 0);
        let inst = gen_contextual_bandit(&mut rng, 40, 10, 4000, 2000).unwrap();

        // Full-supervision linear baseline: estimate class means from the
        // training split, decide by argmax of mu_k.x - ||mu_k||^2 / 2.
        let b = inst.context_dim();
        let k = inst.num_actions();
        let mut means = DMatrix::<f64>::zeros(b, k);
        let mut counts = vec![0usize; k];
        for i in 0..inst.num_train() {
            let l = inst.train_label(i);
            let col = means.column(l) + inst.train_context(i);
            means.set_column(l, &col);
            counts[l] += 1;
        }
        for j in 0..k {
            assert!(counts[j] > 0, "class {j} unseen in training data");
            let col = means.column(j) / counts[j] as f64;
            means.set_column(j, &col);
        }
        let acc = inst.test_accuracy(|x| {
            (0..k)
                .map(|j| {
                    let mu = means.column(j);
                    mu.dot(x) - 0.5 * mu.norm_squared()
                })
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .map(|(j, _)| j)
                .unwrap()
        });
        assert!(acc >= 0.99, "linear baseline accuracy {acc}");
    }

    #[test]
    fn same_seed_reproduces_the_instance() {
        let gen = || {
            let mut rng = SeededRng::new(15, 1);
            gen_contextual_bandit(&mut rng, 12, 4, 50, 30).unwrap()
        };
        let (a, b) = (gen(), gen());
        assert_eq!(a.centers(), b.centers());
        assert_eq!(a.train_context(7), b.train_context(7));
        assert_eq!(a.test_label(29), b.test_label(29));
    }

    #[test]
    fn degenerate_requests_are_rejected() {
        let mut rng = SeededRng::new(16, 0);
        assert!(gen_contextual_bandit(&mut rng, 10, 1, 10, 10).is_err());
        assert!(gen_contextual_bandit(&mut rng, 0, 3, 10, 10).is_err());
        assert!(gen_contextual_bandit(&mut rng, 10, 3, 0, 10).is_err());
    }

    #[test]
    fn centers_respect_the_separation_rule() {
        let mut rng = SeededRng::new(17, 0);
        let inst = gen_contextual_bandit(&mut rng, 25, 8, 10, 10).unwrap();
        for i in 0..8 {
            assert!((inst.centers().column(i).norm() - 6.0).abs() < 1e-9);
            for j in 0..i {
                let gap = (inst.centers().column(i) - inst.centers().column(j)).norm();
                assert!(gap >= 4.0, "centers {i},{j} only {gap} apart");
            }
        }
    }
}
