//! Single-shot zeroth-order gradient estimates.
//!
//! Each constructor here turns one or two noisy function evaluations into an
//! unbiased (or controllably biased) estimate of a gradient, together with
//! bookkeeping about how many environment interactions the evaluation cost.
//! Multi-step optimizers in [`crate::search`] and the regression loops in
//! [`crate::olr`] are thin drivers around these.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Which estimator produced a [`GradEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorScheme {
    OnePointSphere,
    TwoPointSphere,
    ActionSign,
    ActionSpacePg,
    ReinforceGaussian,
    ReinforceCategorical,
    NaturalReinforce,
}

impl std::fmt::Display for EstimatorScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            EstimatorScheme::OnePointSphere => "one-point-sphere",
            EstimatorScheme::TwoPointSphere => "two-point-sphere",
            EstimatorScheme::ActionSign => "action-sign",
            EstimatorScheme::ActionSpacePg => "action-space-pg",
            EstimatorScheme::ReinforceGaussian => "reinforce-gaussian",
            EstimatorScheme::ReinforceCategorical => "reinforce-categorical",
            EstimatorScheme::NaturalReinforce => "natural-reinforce",
        };
        f.write_str(name)
    }
}

/// A gradient estimate plus the sampling cost that produced it.
#[derive(Debug, Clone)]
pub struct GradEstimate {
    /// Estimate, flattened column-major when the underlying object is a matrix.
    pub g: DVector<f64>,
    pub scheme: EstimatorScheme,
    /// Perturbation radius used; 0.0 for score-function estimators.
    pub delta: f64,
    /// Environment interactions consumed to build this estimate (>= 1).
    pub env_steps: u64,
}

/// Constants entering step-size and perturbation schedules. All values are
/// problem bounds, not measurements; schedules plug them in verbatim.
#[derive(Debug, Clone, Copy)]
pub struct TheoryConstants {
    /// Radius of the parameter ball the iterates are projected onto.
    pub c_theta: f64,
    /// Uniform bound on feature/state norms.
    pub c_s: f64,
    /// Uniform bound on regression targets.
    pub c_a: f64,
    /// Uniform bound on per-round loss values.
    pub loss_bound: f64,
    /// Gradient Lipschitz (smoothness) constant of the loss.
    pub smoothness: f64,
    /// Lipschitz constant of the loss itself.
    pub lipschitz: f64,
    /// Bound on the policy Jacobian norm.
    pub policy_jac_bound: f64,
    /// Smoothness of the cost-to-go in the action argument.
    pub q_smoothness: f64,
    /// Lipschitz constant of the cost-to-go in the action argument.
    pub q_lipschitz: f64,
    /// Bound on total episode cost.
    pub q_bound: f64,
    /// Observation noise standard deviation.
    pub sigma: f64,
}

impl TheoryConstants {
    /// Derive the loss-side constants from regression bounds: residuals obey
    /// |theta^T s - a| <= c_theta*c_s + c_a, squared loss is its square, and
    /// the loss gradient 2(theta^T s - a)s gives the Lipschitz constants.
    pub fn from_olr_bounds(c_theta: f64, c_s: f64, c_a: f64) -> Result<Self> {
        let tc = TheoryConstants {
            c_theta,
            c_s,
            c_a,
            loss_bound: (c_theta * c_s + c_a).powi(2),
            smoothness: (c_theta * c_s + c_a) * c_s,
            lipschitz: 2.0 * (c_theta * c_s + c_a) * c_s,
            policy_jac_bound: c_s,
            q_smoothness: 2.0,
            q_lipschitz: 2.0 * (c_theta * c_s + c_a),
            q_bound: (c_theta * c_s + c_a).powi(2),
            sigma: 0.0,
        };
        tc.validate()?;
        Ok(tc)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("c_theta", self.c_theta),
            ("c_s", self.c_s),
            ("c_a", self.c_a),
            ("loss_bound", self.loss_bound),
            ("smoothness", self.smoothness),
            ("lipschitz", self.lipschitz),
            ("policy_jac_bound", self.policy_jac_bound),
            ("q_smoothness", self.q_smoothness),
            ("q_lipschitz", self.q_lipschitz),
            ("q_bound", self.q_bound),
            ("sigma", self.sigma),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "constant {name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "perturbation radius must be positive and finite, got {delta}"
        )));
    }
    Ok(())
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("{name} = {v}")));
    }
    Ok(())
}

/// Uniform draw from the unit sphere in `R^n`.
pub fn sample_unit_sphere(rng: &mut SeededRng, n: usize) -> Result<DVector<f64>> {
    if n == 0 {
        return Err(Error::InvalidDimension("sphere dimension must be >= 1".into()));
    }
    loop {
        let v = rng.normal_vec(n);
        let norm = v.norm();
        // Degenerate draws are astronomically unlikely; resample for safety.
        if norm > 1e-12 {
            return Ok(v / norm);
        }
    }
}

/// Uniform draw from the closed unit ball in `R^n`.
pub fn sample_unit_ball(rng: &mut SeededRng, n: usize) -> Result<DVector<f64>> {
    let dir = sample_unit_sphere(rng, n)?;
    let r = rng.uniform().powf(1.0 / n as f64);
    Ok(dir * r)
}

/// Fair draw from `{-1.0, +1.0}`.
pub fn sample_rademacher(rng: &mut SeededRng) -> f64 {
    if rng.below(2) == 0 {
        -1.0
    } else {
        1.0
    }
}

/// One-point sphere estimate `g = (n * f / delta) * u` from a single
/// evaluation `f` at the perturbed point. Unbiased for the ball-smoothed
/// objective; variance scales with `f^2 / delta^2`.
pub fn one_point_sphere_grad(f_value: f64, u: &DVector<f64>, delta: f64) -> Result<GradEstimate> {
    check_delta(delta)?;
    check_finite("objective value", f_value)?;
    if u.is_empty() {
        return Err(Error::InvalidDimension("direction must be non-empty".into()));
    }
    let n = u.len() as f64;
    Ok(GradEstimate {
        g: u * (n * f_value / delta),
        scheme: EstimatorScheme::OnePointSphere,
        delta,
        env_steps: 1,
    })
}

/// Antithetic two-point sphere estimate `g = n (f+ - f-) / (2 delta) * u`.
/// The common-value cancellation removes the one-point estimator's
/// level-dependent variance.
pub fn two_point_sphere_grad(
    f_plus: f64,
    f_minus: f64,
    u: &DVector<f64>,
    delta: f64,
) -> Result<GradEstimate> {
    check_delta(delta)?;
    check_finite("objective value (+)", f_plus)?;
    check_finite("objective value (-)", f_minus)?;
    if u.is_empty() {
        return Err(Error::InvalidDimension("direction must be non-empty".into()));
    }
    let n = u.len() as f64;
    Ok(GradEstimate {
        g: u * (n * (f_plus - f_minus) / (2.0 * delta)),
        scheme: EstimatorScheme::TwoPointSphere,
        delta,
        env_steps: 2,
    })
}

/// Sign-perturbation estimate for bandit regression: after predicting with a
/// `+/- delta` offset in the output and observing squared loss `cost`, the
/// descent estimate is `(cost * e / delta) * s`.
pub fn action_sign_grad(cost: f64, e: f64, s: &DVector<f64>, delta: f64) -> Result<GradEstimate> {
    check_delta(delta)?;
    check_finite("cost", cost)?;
    if e != 1.0 && e != -1.0 {
        return Err(Error::InvalidParameter(format!(
            "sign perturbation must be +1 or -1, got {e}"
        )));
    }
    Ok(GradEstimate {
        g: s * (cost * e / delta),
        scheme: EstimatorScheme::ActionSign,
        delta,
        env_steps: 1,
    })
}

/// Action-space estimate for multi-step problems: perturb the action at one
/// uniformly chosen step `t` by `delta * u`, observe the cost-to-go
/// `q_tilde`, and chain through the linear policy's Jacobian:
/// `g = flatten(horizon * (p * q_tilde / delta) * u * s_t^T)` (column-major,
/// matching [`crate::policy::LinearPolicy`]). One full episode is charged.
pub fn action_space_pg_grad(
    q_tilde: f64,
    u: &DVector<f64>,
    s_t: &DVector<f64>,
    horizon: usize,
    delta: f64,
) -> Result<GradEstimate> {
    check_delta(delta)?;
    check_finite("cost-to-go", q_tilde)?;
    if u.is_empty() || s_t.is_empty() {
        return Err(Error::InvalidDimension(
            "action and state vectors must be non-empty".into(),
        ));
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    let p = u.len() as f64;
    let scale = horizon as f64 * p * q_tilde / delta;
    let outer = (u * scale) * s_t.transpose();
    Ok(GradEstimate {
        g: DVector::from_column_slice(outer.as_slice()),
        scheme: EstimatorScheme::ActionSpacePg,
        delta,
        env_steps: horizon as u64,
    })
}

/// Score-function (likelihood-ratio) estimate for a Gaussian prediction
/// policy `y_hat = w^T x + noise(beta)`: ascent direction on expected reward
/// `g = (1/N) sum_i r_i * ((y_hat_i - w^T x_i) / beta^2) * x_i`.
///
/// `features` holds one sample per row.
pub fn reinforce_gaussian_grad(
    features: &DMatrix<f64>,
    noisy_preds: &DVector<f64>,
    rewards: &DVector<f64>,
    w: &DVector<f64>,
    beta: f64,
) -> Result<GradEstimate> {
    let n = features.nrows();
    if n == 0 {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    if noisy_preds.len() != n || rewards.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "batch size mismatch: {n} features, {} predictions, {} rewards",
            noisy_preds.len(),
            rewards.len()
        )));
    }
    if features.ncols() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "feature dim {} != weight dim {}",
            features.ncols(),
            w.len()
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "exploration std must be positive, got {beta}"
        )));
    }
    let mean_preds = features * w;
    let mut g = DVector::zeros(w.len());
    for i in 0..n {
        let score = (noisy_preds[i] - mean_preds[i]) / (beta * beta);
        g.axpy(rewards[i] * score / n as f64, &features.row(i).transpose(), 1.0);
    }
    Ok(GradEstimate {
        g,
        scheme: EstimatorScheme::ReinforceGaussian,
        delta: 0.0,
        env_steps: n as u64,
    })
}

/// Score-function estimate for a softmax-linear policy over `K` classes:
/// ascent direction `(1/N) sum_i r_i (onehot(a_i) - softmax(theta x_i)) x_i^T`,
/// returned flattened column-major as a `K x b` matrix.
pub fn reinforce_categorical_grad(
    features: &DMatrix<f64>,
    actions: &[usize],
    rewards: &DVector<f64>,
    theta: &DMatrix<f64>,
) -> Result<GradEstimate> {
    let n = features.nrows();
    let k = theta.nrows();
    let b = theta.ncols();
    if n == 0 {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    if actions.len() != n || rewards.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "batch size mismatch: {n} features, {} actions, {} rewards",
            actions.len(),
            rewards.len()
        )));
    }
    if features.ncols() != b {
        return Err(Error::DimensionMismatch(format!(
            "feature dim {} != policy input dim {b}",
            features.ncols()
        )));
    }
    let mut grad = DMatrix::zeros(k, b);
    for i in 0..n {
        if actions[i] >= k {
            return Err(Error::InvalidParameter(format!(
                "action {} out of range for {k} classes",
                actions[i]
            )));
        }
        let x = features.row(i).transpose();
        let probs = softmax(&(theta * &x));
        let mut coeff = -probs;
        coeff[actions[i]] += 1.0;
        grad.ger(rewards[i] / n as f64, &coeff, &x, 1.0);
    }
    Ok(GradEstimate {
        g: DVector::from_column_slice(grad.as_slice()),
        scheme: EstimatorScheme::ReinforceCategorical,
        delta: 0.0,
        env_steps: n as u64,
    })
}

/// Numerically stable softmax of a logit vector.
pub fn softmax(logits: &DVector<f64>) -> DVector<f64> {
    let m = logits.max();
    let exps = logits.map(|v| (v - m).exp());
    let z = exps.sum();
    exps / z
}

/// Solve `(F_hat + damping I) x = g` where `F_hat = (1/N) sum s s^T` is the
/// empirical Fisher built from per-sample score vectors. The solution is
/// certified: the residual must come out below `1e-8 * ||g||` or an error is
/// returned.
pub fn natural_direction(
    scores: &[DVector<f64>],
    g: &DVector<f64>,
    damping: f64,
) -> Result<DVector<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidParameter("empty score batch".into()));
    }
    if !(damping >= 0.0) || !damping.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "damping must be nonnegative, got {damping}"
        )));
    }
    let d = g.len();
    if g.norm() == 0.0 {
        return Ok(DVector::zeros(d));
    }
    let mut fisher = DMatrix::zeros(d, d);
    let scale = 1.0 / scores.len() as f64;
    for s in scores {
        if s.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "score vector has dim {}, expected {d}",
                s.len()
            )));
        }
        fisher.ger(scale, s, s, 1.0);
    }
    for i in 0..d {
        fisher[(i, i)] += damping;
    }
    let chol = nalgebra::Cholesky::new(fisher.clone())
        .ok_or_else(|| Error::SingularMatrix("empirical Fisher is singular".into()))?;
    let mut x = chol.solve(g);
    // One round of iterative refinement keeps ill-conditioned systems inside
    // the certified residual.
    let mut residual = g - &fisher * &x;
    if residual.norm() > 1e-8 * g.norm() {
        x += chol.solve(&residual);
        residual = g - &fisher * &x;
    }
    if residual.norm() > 1e-8 * g.norm() {
        return Err(Error::SingularMatrix(format!(
            "solve residual {} exceeds certified tolerance",
            residual.norm()
        )));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rng() -> SeededRng {
        SeededRng::new(2024, 0)
    }

    #[test]
    fn sphere_draws_have_unit_norm() {
        let mut r = rng();
        for n in [1usize, 2, 5, 17] {
            for _ in 0..50 {
                let u = sample_unit_sphere(&mut r, n).unwrap();
                assert_relative_eq!(u.norm(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sphere_in_one_dimension_is_a_sign() {
        let mut r = rng();
        for _ in 0..100 {
            let u = sample_unit_sphere(&mut r, 1).unwrap();
            assert!(u[0] == 1.0 || u[0] == -1.0);
        }
    }

    #[test]
    fn sphere_second_moment_is_identity_over_n() {
        let mut r = rng();
        let n = 5;
        let draws = 100_000;
        let mut second = DMatrix::zeros(n, n);
        for _ in 0..draws {
            let u = sample_unit_sphere(&mut r, n).unwrap();
            second.ger(1.0 / draws as f64, &u, &u, 1.0);
        }
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 / n as f64 } else { 0.0 };
                assert!(
                    (second[(i, j)] - want).abs() < 0.01,
                    "entry ({i},{j}) = {} vs {want}",
                    second[(i, j)]
                );
            }
        }
    }

    #[test]
    fn ball_draws_stay_inside() {
        let mut r = rng();
        for n in [1usize, 3, 8] {
            for _ in 0..200 {
                assert!(sample_unit_ball(&mut r, n).unwrap().norm() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn ball_one_dimensional_mean_abs_is_half() {
        let mut r = rng();
        let draws = 100_000;
        let mean_abs: f64 = (0..draws)
            .map(|_| sample_unit_ball(&mut r, 1).unwrap()[0].abs())
            .sum::<f64>()
            / draws as f64;
        assert!((mean_abs - 0.5).abs() < 0.01, "mean |v| = {mean_abs}");
    }

    #[test]
    fn ball_second_moment_is_identity_over_n_plus_two() {
        let mut r = rng();
        let n = 3;
        let draws = 100_000;
        let mut second = DMatrix::zeros(n, n);
        for _ in 0..draws {
            let v = sample_unit_ball(&mut r, n).unwrap();
            second.ger(1.0 / draws as f64, &v, &v, 1.0);
        }
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 / (n as f64 + 2.0) } else { 0.0 };
                assert!((second[(i, j)] - want).abs() < 0.01);
            }
        }
    }

    #[test]
    fn rademacher_is_fair_and_supported_on_signs() {
        let mut r = rng();
        let draws = 100_000;
        let mut sum = 0.0;
        for _ in 0..draws {
            let e = sample_rademacher(&mut r);
            assert!(e == 1.0 || e == -1.0);
            sum += e;
        }
        assert!((sum / draws as f64).abs() < 0.02);
    }

    #[test]
    fn sampling_replays_identically_for_equal_streams() {
        let mut a = SeededRng::new(5, 9);
        let mut b = SeededRng::new(5, 9);
        for _ in 0..20 {
            let ua = sample_unit_sphere(&mut a, 4).unwrap();
            let ub = sample_unit_sphere(&mut b, 4).unwrap();
            assert_eq!(ua, ub);
            assert_eq!(sample_rademacher(&mut a), sample_rademacher(&mut b));
            assert_eq!(sample_unit_ball(&mut a, 2).unwrap(), sample_unit_ball(&mut b, 2).unwrap());
        }
    }

    #[test]
    fn one_point_zero_value_gives_zero_estimate() {
        let u = DVector::from_column_slice(&[0.6, 0.8]);
        let est = one_point_sphere_grad(0.0, &u, 0.3).unwrap();
        assert_eq!(est.g, DVector::zeros(2));
        assert_eq!(est.env_steps, 1);
    }

    #[test]
    fn one_point_matches_hand_value() {
        let u = DVector::from_column_slice(&[1.0, 0.0]);
        let est = one_point_sphere_grad(1.0, &u, 0.5).unwrap();
        assert_relative_eq!(est.g[0], 4.0);
        assert_relative_eq!(est.g[1], 0.0);
        assert_relative_eq!(est.delta, 0.5);
    }

    #[test]
    fn one_point_mean_recovers_linear_gradient() {
        // f(x) = c^T x is its own smoothed version up to the constant offset,
        // so averaged one-point estimates at the origin recover c.
        let mut r = rng();
        let c = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let n = 3usize;
        let delta = 0.2;
        let draws = 200_000;
        let mut acc = DVector::zeros(n);
        let mut sq = DVector::zeros(n);
        for _ in 0..draws {
            let u = sample_unit_sphere(&mut r, n).unwrap();
            let f = c.dot(&(&u * delta));
            let est = one_point_sphere_grad(f, &u, delta).unwrap();
            acc += &est.g;
            sq += est.g.map(|v| v * v);
        }
        let mean = acc / draws as f64;
        for i in 0..n {
            let var = sq[i] / draws as f64 - mean[i] * mean[i];
            let se = (var / draws as f64).sqrt();
            assert!(
                (mean[i] - c[i]).abs() <= 3.0 * se + 1e-9,
                "coord {i}: mean {} target {} se {se}",
                mean[i],
                c[i]
            );
        }
    }

    #[test]
    fn two_point_equal_values_give_zero() {
        let u = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        let est = two_point_sphere_grad(0.7, 0.7, &u, 0.1).unwrap();
        assert_eq!(est.g, DVector::zeros(3));
        assert_eq!(est.env_steps, 2);
    }

    #[test]
    fn two_point_matches_hand_value() {
        let u = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        let est = two_point_sphere_grad(0.1, -0.1, &u, 0.1).unwrap();
        assert_relative_eq!(est.g[0], 3.0);
        assert_relative_eq!(est.g[1], 0.0);
        assert_relative_eq!(est.g[2], 0.0);
    }

    #[test]
    fn two_point_mean_recovers_quadratic_gradient() {
        // f(x) = x^T A x with diagonal A: exact directional differences, so
        // the estimator is unbiased for the true gradient.
        let mut r = rng();
        let a = [1.0, 2.0];
        let x0 = DVector::from_column_slice(&[1.0, 1.0]);
        let grad_true = DVector::from_column_slice(&[2.0, 4.0]);
        let delta = 0.1;
        let draws = 200_000;
        let f = |x: &DVector<f64>| a[0] * x[0] * x[0] + a[1] * x[1] * x[1];
        let mut acc = DVector::zeros(2);
        let mut sq = DVector::zeros(2);
        for _ in 0..draws {
            let u = sample_unit_sphere(&mut r, 2).unwrap();
            let est = two_point_sphere_grad(
                f(&(&x0 + &u * delta)),
                f(&(&x0 - &u * delta)),
                &u,
                delta,
            )
            .unwrap();
            acc += &est.g;
            sq += est.g.map(|v| v * v);
        }
        let mean = acc / draws as f64;
        for i in 0..2 {
            let var = sq[i] / draws as f64 - mean[i] * mean[i];
            let se = (var / draws as f64).sqrt();
            assert!(
                (mean[i] - grad_true[i]).abs() <= 3.0 * se + 1e-9,
                "coord {i}: mean {} vs {}",
                mean[i],
                grad_true[i]
            );
        }
    }

    #[test]
    fn action_sign_zero_cost_gives_zero() {
        let s = DVector::from_column_slice(&[2.0, -1.0]);
        let est = action_sign_grad(0.0, 1.0, &s, 0.25).unwrap();
        assert_eq!(est.g, DVector::zeros(2));
    }

    #[test]
    fn action_sign_matches_hand_value() {
        let s = DVector::from_column_slice(&[1.0, 0.0]);
        let est = action_sign_grad(0.25, 1.0, &s, 0.5).unwrap();
        assert_relative_eq!(est.g[0], 0.5);
        assert_relative_eq!(est.g[1], 0.0);
    }

    #[test]
    fn action_sign_sign_average_is_exact_loss_gradient() {
        // Averaging the estimate over e in {-1,+1} telescopes to
        // 2(theta^T s - a) s, the true gradient of the squared loss.
        let theta = DVector::from_column_slice(&[0.3, -0.7]);
        let s = DVector::from_column_slice(&[1.2, 0.4]);
        let target = 0.9;
        let delta = 0.05;
        let mut avg = DVector::zeros(2);
        for e in [-1.0, 1.0] {
            let pred = theta.dot(&s) + delta * e;
            let cost = (pred - target) * (pred - target);
            avg += action_sign_grad(cost, e, &s, delta).unwrap().g * 0.5;
        }
        let residual = theta.dot(&s) - target;
        let grad_true = &s * (2.0 * residual);
        assert_relative_eq!(avg[0], grad_true[0], epsilon = 1e-12);
        assert_relative_eq!(avg[1], grad_true[1], epsilon = 1e-12);
    }

    #[test]
    fn action_sign_rejects_bad_sign() {
        let s = DVector::from_column_slice(&[1.0]);
        assert!(action_sign_grad(1.0, 0.5, &s, 0.1).is_err());
    }

    #[test]
    fn pg_zero_cost_to_go_gives_zero() {
        let u = DVector::from_column_slice(&[1.0]);
        let s = DVector::from_column_slice(&[1.0, 2.0]);
        let est = action_space_pg_grad(0.0, &u, &s, 5, 0.3).unwrap();
        assert_eq!(est.g, DVector::zeros(2));
        assert_eq!(est.env_steps, 5);
    }

    #[test]
    fn pg_matches_hand_value_and_charges_full_episode() {
        let u = DVector::from_column_slice(&[1.0]);
        let s = DVector::from_column_slice(&[1.0, 0.0]);
        let est = action_space_pg_grad(2.0, &u, &s, 3, 0.5).unwrap();
        assert_relative_eq!(est.g[0], 12.0);
        assert_relative_eq!(est.g[1], 0.0);
        assert_eq!(est.env_steps, 3);
    }

    #[test]
    fn pg_estimate_is_rank_one_outer_product() {
        let u = DVector::from_column_slice(&[0.6, -0.8]);
        let s = DVector::from_column_slice(&[1.0, 2.0, -1.0]);
        let est = action_space_pg_grad(1.7, &u, &s, 4, 0.2).unwrap();
        let m = DMatrix::from_column_slice(2, 3, est.g.as_slice());
        // Every 2x2 minor of a rank-one matrix vanishes.
        for c1 in 0..3 {
            for c2 in (c1 + 1)..3 {
                let det = m[(0, c1)] * m[(1, c2)] - m[(0, c2)] * m[(1, c1)];
                assert_relative_eq!(det, 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn pg_matches_policy_jacobian_path() {
        use crate::policy::{LinearPolicy, Policy};
        let u = DVector::from_column_slice(&[0.3, 0.9]);
        let s = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let (h, delta, q) = (6usize, 0.4, -1.3);
        let est = action_space_pg_grad(q, &u, &s, h, delta).unwrap();
        let pol = LinearPolicy::zeros(2, 3);
        let scale = h as f64 * 2.0 * q / delta;
        let via_policy = pol.jacobian_transpose_times(&s, &u) * scale;
        assert_relative_eq!((est.g - via_policy).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn reinforce_gaussian_zero_rewards_give_zero() {
        let xs = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let est = reinforce_gaussian_grad(
            &xs,
            &DVector::from_column_slice(&[0.3, -0.2]),
            &DVector::zeros(2),
            &DVector::zeros(2),
            0.5,
        )
        .unwrap();
        assert_eq!(est.g, DVector::zeros(2));
        assert_eq!(est.env_steps, 2);
    }

    #[test]
    fn reinforce_gaussian_matches_hand_value() {
        let xs = DMatrix::from_row_slice(1, 1, &[1.0]);
        let est = reinforce_gaussian_grad(
            &xs,
            &DVector::from_column_slice(&[0.5]),
            &DVector::from_column_slice(&[-0.25]),
            &DVector::zeros(1),
            0.5,
        )
        .unwrap();
        assert_relative_eq!(est.g[0], -0.5);
    }

    #[test]
    fn reinforce_gaussian_ascent_approaches_least_squares() {
        let mut r = rng();
        let w_true = DVector::from_column_slice(&[0.8, -0.5, 0.3]);
        let mut w = DVector::zeros(3);
        let beta = 0.5;
        let batch = 64;
        for _ in 0..3000 {
            let mut xs = DMatrix::zeros(batch, 3);
            let mut preds = DVector::zeros(batch);
            let mut rewards = DVector::zeros(batch);
            for i in 0..batch {
                let x = r.normal_vec(3);
                let y = w_true.dot(&x);
                let noisy = w.dot(&x) + beta * r.normal();
                rewards[i] = -(y - noisy) * (y - noisy);
                preds[i] = noisy;
                xs.set_row(i, &x.transpose());
            }
            let est = reinforce_gaussian_grad(&xs, &preds, &rewards, &w, beta).unwrap();
            w += est.g * 0.02;
        }
        assert!(
            (&w - &w_true).norm() < 0.1,
            "w = {w:?} should approach {w_true:?}"
        );
    }

    #[test]
    fn reinforce_categorical_matches_hand_value() {
        let xs = DMatrix::from_row_slice(1, 1, &[1.0]);
        let est = reinforce_categorical_grad(
            &xs,
            &[0],
            &DVector::from_column_slice(&[1.0]),
            &DMatrix::zeros(2, 1),
        )
        .unwrap();
        assert_relative_eq!(est.g[0], 0.5);
        assert_relative_eq!(est.g[1], -0.5);
    }

    #[test]
    fn reinforce_categorical_zero_rewards_give_zero() {
        let xs = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -0.5, 0.2, 0.1, 0.9]);
        let est = reinforce_categorical_grad(
            &xs,
            &[0, 2],
            &DVector::zeros(2),
            &DMatrix::zeros(3, 3),
        )
        .unwrap();
        assert_eq!(est.g, DVector::zeros(9));
    }

    #[test]
    fn natural_direction_identity_fisher_returns_g() {
        // Scores forming an orthonormal-ish set with unit second moment:
        // two samples (sqrt2, 0) and (0, sqrt2) give F_hat = I.
        let scores = vec![
            DVector::from_column_slice(&[2.0f64.sqrt(), 0.0]),
            DVector::from_column_slice(&[0.0, 2.0f64.sqrt()]),
        ];
        let g = DVector::from_column_slice(&[0.3, -0.7]);
        let x = natural_direction(&scores, &g, 0.0).unwrap();
        assert_relative_eq!((x - g).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn natural_direction_zero_gradient_returns_zero() {
        let scores = vec![DVector::from_column_slice(&[1.0, 0.0])];
        let x = natural_direction(&scores, &DVector::zeros(2), 0.0).unwrap();
        assert_eq!(x, DVector::zeros(2));
    }

    #[test]
    fn natural_direction_solves_diagonal_system() {
        // Scores (2, 0) and (0, 2*sqrt2) give F_hat = diag(2, 4); solving
        // against g = (2, 4) hands back (1, 1).
        let scores = vec![
            DVector::from_column_slice(&[2.0, 0.0]),
            DVector::from_column_slice(&[0.0, 2.0 * 2.0f64.sqrt()]),
        ];
        let g = DVector::from_column_slice(&[2.0, 4.0]);
        let x = natural_direction(&scores, &g, 0.0).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn natural_direction_duplicated_scores_average_out() {
        // (sqrt2,0) and (0,2), each twice: F_hat = diag(1, 2).
        let scores = vec![
            DVector::from_column_slice(&[2.0f64.sqrt(), 0.0]),
            DVector::from_column_slice(&[0.0, 2.0]),
            DVector::from_column_slice(&[2.0f64.sqrt(), 0.0]),
            DVector::from_column_slice(&[0.0, 2.0]),
        ];
        let g = DVector::from_column_slice(&[2.0, 4.0]);
        let x = natural_direction(&scores, &g, 0.0).unwrap();
        assert_relative_eq!(x[0], 2.0, epsilon = 1e-10);
        assert_relative_eq!(x[1], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn natural_direction_rejects_singular_undamped_system() {
        let scores = vec![DVector::from_column_slice(&[1.0, 0.0])];
        let g = DVector::from_column_slice(&[1.0, 1.0]);
        assert!(natural_direction(&scores, &g, 0.0).is_err());
        assert!(natural_direction(&scores, &g, 1e-8).is_ok());
    }

    #[test]
    fn theory_constants_from_olr_bounds() {
        let tc = TheoryConstants::from_olr_bounds(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(tc.loss_bound, 4.0);
        assert_relative_eq!(tc.smoothness, 2.0);
        assert!(tc.smoothness <= (tc.c_theta * tc.c_s + tc.c_a) * tc.c_s + 1e-12);
        assert!(TheoryConstants::from_olr_bounds(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn estimator_inputs_are_validated() {
        let u = DVector::from_column_slice(&[1.0]);
        assert!(one_point_sphere_grad(1.0, &u, 0.0).is_err());
        assert!(one_point_sphere_grad(f64::NAN, &u, 0.1).is_err());
        assert!(two_point_sphere_grad(1.0, 1.0, &u, -0.5).is_err());
        assert!(action_space_pg_grad(1.0, &u, &u, 0, 0.1).is_err());
        assert!(sample_unit_sphere(&mut rng(), 0).is_err());
    }
}
