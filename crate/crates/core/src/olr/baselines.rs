//! Full-information baselines for the online regression problem.
//!
//! These see the entire round (features and target) instead of a single
//! scalar evaluation, so they mark how much of the regret is attributable
//! to bandit feedback rather than to the optimization method itself.

use nalgebra::{DMatrix, DVector};

use super::{OlrAlgorithm, OlrInstance, OlrTrace};
use crate::error::{Error, Result};

/// Minibatch gradient descent on squared error with full observations.
///
/// Iterates in round order, accumulating `batch` rounds before each update.
/// The iterate is unconstrained; the trace still records incurred losses
/// round by round so it is directly comparable with the bandit algorithms.
pub fn baseline_sgd(instance: &OlrInstance, lr: f64, batch: usize) -> Result<OlrTrace> {
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "learning rate must be finite and nonnegative, got {lr}"
        )));
    }
    if batch == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    let b = instance.dim();
    let mut trace = OlrTrace::new(
        OlrAlgorithm::BaselineSgd,
        lr,
        0.0,
        b,
        instance.num_rounds(),
        false,
    );
    let mut theta = DVector::<f64>::zeros(b);
    let mut grad_acc = DVector::<f64>::zeros(b);
    let mut in_batch = 0usize;
    let mut cum = 0.0f64;

    instance.for_each_round(|_, s, a, clipped| {
        let err = theta.dot(s) - a;
        let loss = err * err;
        cum += loss;
        trace.incurred.push(loss);
        trace.cum_loss.push(cum);
        // No perturbation is played, so the clean loss is the incurred one.
        trace.clean.push(loss);
        if clipped {
            trace.clipped_rounds += 1;
        }
        // d/dtheta (s.theta - a)^2 = 2 (s.theta - a) s
        grad_acc.axpy(2.0 * err, s, 1.0);
        in_batch += 1;
        if in_batch == batch {
            theta.axpy(-lr / batch as f64, &grad_acc, 1.0);
            grad_acc.fill(0.0);
            in_batch = 0;
        }
        trace.max_theta_norm = trace.max_theta_norm.max(theta.norm());
    });
    if in_batch > 0 {
        theta.axpy(-lr / in_batch as f64, &grad_acc, 1.0);
        trace.max_theta_norm = trace.max_theta_norm.max(theta.norm());
    }
    trace.final_theta = theta;
    Ok(trace)
}

/// Damped Newton steps over full batches.
///
/// Each batch solves its local quadratic model exactly: with squared error
/// the Hessian is `(2/N) X^T X`, so a single step lands on the batch
/// least-squares solution (up to the small damping term that keeps the
/// solve well posed on rank-deficient batches).
pub fn baseline_newton(instance: &OlrInstance, batch: usize) -> Result<OlrTrace> {
    if batch == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    let b = instance.dim();
    let mut trace = OlrTrace::new(
        OlrAlgorithm::BaselineNewton,
        0.0,
        0.0,
        b,
        instance.num_rounds(),
        false,
    );
    let mut theta = DVector::<f64>::zeros(b);
    let mut gram = DMatrix::<f64>::zeros(b, b);
    let mut grad_acc = DVector::<f64>::zeros(b);
    let mut in_batch = 0usize;
    let mut cum = 0.0f64;
    let damping = 1e-8;

    fn newton_step(
        theta: &mut DVector<f64>,
        gram: &mut DMatrix<f64>,
        grad_acc: &mut DVector<f64>,
        n: usize,
        damping: f64,
    ) -> Result<()> {
        let b = theta.len();
        let mut hess = gram.clone() * (2.0 / n as f64);
        for i in 0..b {
            hess[(i, i)] += damping;
        }
        let grad = &*grad_acc * (1.0 / n as f64);
        let chol = hess
            .cholesky()
            .ok_or_else(|| Error::SingularMatrix("batch Hessian not positive definite".into()))?;
        *theta -= chol.solve(&grad);
        gram.fill(0.0);
        grad_acc.fill(0.0);
        Ok(())
    }

    let mut inner_err: Option<Error> = None;
    instance.for_each_round(|_, s, a, clipped| {
        if inner_err.is_some() {
            return;
        }
        let err = theta.dot(s) - a;
        let loss = err * err;
        cum += loss;
        trace.incurred.push(loss);
        trace.cum_loss.push(cum);
        trace.clean.push(loss);
        if clipped {
            trace.clipped_rounds += 1;
        }
        gram.ger(1.0, s, s, 1.0);
        grad_acc.axpy(2.0 * err, s, 1.0);
        in_batch += 1;
        if in_batch == batch {
            if let Err(e) = newton_step(&mut theta, &mut gram, &mut grad_acc, batch, damping) {
                inner_err = Some(e);
                return;
            }
            in_batch = 0;
        }
        trace.max_theta_norm = trace.max_theta_norm.max(theta.norm());
    });
    if let Some(e) = inner_err {
        return Err(e);
    }
    if in_batch > 0 {
        newton_step(&mut theta, &mut gram, &mut grad_acc, in_batch, damping)?;
        trace.max_theta_norm = trace.max_theta_norm.max(theta.norm());
    }
    trace.final_theta = theta;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::olr::hindsight_optimum;
    use crate::rng::SeededRng;
    use nalgebra::{DMatrix, DVector};

    /// Noise-free realizable rounds with known generating weights.
    fn realizable_instance(t: usize, b: usize, seed: u64) -> (OlrInstance, DVector<f64>) {
        let mut rng = SeededRng::new(seed, 0);
        let w = DVector::from_fn(b, |_, _| rng.normal()).normalize();
        let rounds: Vec<(DVector<f64>, f64)> = (0..t)
            .map(|_| {
                let x = DVector::from_fn(b, |_, _| rng.normal());
                let y = w.dot(&x);
                (x, y)
            })
            .collect();
        (OlrInstance::from_rounds(rounds, 2.0).unwrap(), w)
    }

    #[test]
    fn single_full_batch_newton_recovers_realizable_weights() {
        let (inst, w) = realizable_instance(200, 8, 9);
        let trace = baseline_newton(&inst, inst.num_rounds()).unwrap();
        // One exact quadratic solve lands on the generator, modulo the
        // 1e-8 damping used to keep the solve well posed.
        assert!(
            (&trace.final_theta - &w).norm() < 2e-6,
            "residual {}",
            (&trace.final_theta - &w).norm()
        );
    }

    #[test]
    fn zero_learning_rate_leaves_the_iterate_unchanged() {
        let (inst, _) = realizable_instance(50, 4, 10);
        let trace = baseline_sgd(&inst, 0.0, 10).unwrap();
        assert_eq!(trace.final_theta, DVector::zeros(4));
        // Every incurred loss equals the loss of the zero predictor.
        let rounds = inst.collect_rounds();
        for (loss, round) in trace.incurred.iter().zip(rounds.iter()) {
            assert!((loss - round.target * round.target).abs() < 1e-12);
        }
    }

    #[test]
    fn sgd_approaches_hindsight_loss_on_easy_instance() {
        let (inst, _) = realizable_instance(4000, 4, 11);
        let rounds = inst.collect_rounds();
        let x = DMatrix::from_fn(rounds.len(), 4, |i, j| rounds[i].features[j]);
        let y = DVector::from_fn(rounds.len(), |i, _| rounds[i].target);
        let opt = hindsight_optimum(&x, &y, 2.0).unwrap();
        let opt_mse = (&x * &opt - &y).norm_squared() / rounds.len() as f64;

        let trace = baseline_sgd(&inst, 0.05, 10).unwrap();
        let final_mse = (&x * &trace.final_theta - &y).norm_squared() / rounds.len() as f64;
        assert!(
            final_mse - opt_mse < 1e-3,
            "sgd mse {final_mse} exceeds hindsight mse {opt_mse} by too much"
        );
    }

    #[test]
    fn losses_accumulate_consistently() {
        let (inst, _) = realizable_instance(60, 3, 12);
        let trace = baseline_newton(&inst, 20).unwrap();
        assert_eq!(trace.incurred.len(), 60);
        let total: f64 = trace.incurred.iter().sum();
        assert!((trace.total_incurred() - total).abs() < 1e-9);
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        let (inst, _) = realizable_instance(10, 3, 12);
        assert!(baseline_sgd(&inst, f64::NAN, 5).is_err());
        assert!(baseline_sgd(&inst, 0.1, 0).is_err());
        assert!(baseline_newton(&inst, 0).is_err());
    }
}
