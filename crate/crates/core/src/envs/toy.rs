//! A minimal environment whose objective is known in closed form.
//!
//! The state is the constant scalar 1, so a linear policy's parameter
//! vector simply is its action. Step cost is `||a - target||^2` plus an
//! optional quartic term (to make the objective non-quadratic in tests)
//! and optional additive Gaussian observation noise on the cost.

use nalgebra::{DMatrix, DVector};

use super::Env;
use crate::error::{Error, Result};
use crate::policy::{LinearPolicy, Policy};
use crate::rng::SeededRng;

#[derive(Debug, Clone)]
pub struct SingleStateQuadratic {
    action_dim: usize,
    target: DVector<f64>,
    horizon: usize,
    noise_std: f64,
    quartic: f64,
    steps: usize,
}

impl SingleStateQuadratic {
    pub fn new(
        target: DVector<f64>,
        horizon: usize,
        noise_std: f64,
        quartic: f64,
    ) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::InvalidDimension("empty action target".into()));
        }
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        if !(noise_std >= 0.0) || !noise_std.is_finite() || !quartic.is_finite() || quartic < 0.0
        {
            return Err(Error::InvalidParameter(
                "noise level and quartic coefficient must be finite and nonnegative".into(),
            ));
        }
        Ok(SingleStateQuadratic {
            action_dim: target.len(),
            target,
            horizon,
            noise_std,
            quartic,
            steps: 0,
        })
    }

    /// Pure quadratic bowl centered at the origin.
    pub fn origin_bowl(action_dim: usize, horizon: usize) -> Self {
        SingleStateQuadratic::new(DVector::zeros(action_dim), horizon, 0.0, 0.0).unwrap()
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    fn mean_step_cost(&self, action: &DVector<f64>) -> f64 {
        let r2 = (action - &self.target).norm_squared();
        r2 + self.quartic * r2 * r2
    }

    /// Closed-form expected episode cost of a linear policy.
    pub fn exact_objective(&self, policy: &LinearPolicy) -> Result<f64> {
        self.check(policy)?;
        let action = policy.action(&DVector::from_column_slice(&[1.0]));
        Ok(self.horizon as f64 * self.mean_step_cost(&action))
    }

    /// Closed-form gradient of [`Self::exact_objective`] over the policy's
    /// flat parameters (which equal the action here).
    pub fn exact_gradient(&self, policy: &LinearPolicy) -> Result<DVector<f64>> {
        self.check(policy)?;
        let action = policy.action(&DVector::from_column_slice(&[1.0]));
        let diff = action - &self.target;
        let r2 = diff.norm_squared();
        Ok(diff * (self.horizon as f64 * (2.0 + 4.0 * self.quartic * r2)))
    }

    /// Policy whose episode cost is minimal: the parameter equals target.
    pub fn optimal_policy(&self) -> LinearPolicy {
        LinearPolicy::new(DMatrix::from_fn(self.action_dim, 1, |i, _| self.target[i]))
    }

    fn check(&self, policy: &LinearPolicy) -> Result<()> {
        if policy.state_dim() != 1 || policy.action_dim() != self.action_dim {
            return Err(Error::DimensionMismatch(format!(
                "policy maps {}->{} but environment needs 1->{}",
                policy.state_dim(),
                policy.action_dim(),
                self.action_dim
            )));
        }
        Ok(())
    }
}

impl Env for SingleStateQuadratic {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&mut self, _rng: &mut SeededRng) -> DVector<f64> {
        self.steps = 0;
        DVector::from_column_slice(&[1.0])
    }

    fn step(
        &mut self,
        action: &DVector<f64>,
        rng: &mut SeededRng,
    ) -> Result<(DVector<f64>, f64)> {
        if action.len() != self.action_dim {
            return Err(Error::DimensionMismatch(format!(
                "action has {} entries, expected {}",
                action.len(),
                self.action_dim
            )));
        }
        if self.steps >= self.horizon {
            return Err(Error::EpisodeOver);
        }
        let mut cost = self.mean_step_cost(action);
        if self.noise_std > 0.0 {
            cost += self.noise_std * rng.normal();
        }
        self.steps += 1;
        Ok((DVector::from_column_slice(&[1.0]), cost))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::rollout;
    use approx::assert_relative_eq;

    #[test]
    fn objective_and_rollout_agree_without_noise() {
        let target = DVector::from_column_slice(&[1.0, -2.0]);
        let mut env = SingleStateQuadratic::new(target, 4, 0.0, 0.1).unwrap();
        let policy = LinearPolicy::new(DMatrix::from_column_slice(2, 1, &[0.5, 0.5]));
        let mut rng = SeededRng::new(1, 0);
        let rec = rollout(&mut env, &policy, &mut rng).unwrap();
        let exact = env.exact_objective(&policy).unwrap();
        assert_relative_eq!(rec.total_cost, exact, epsilon = 1e-12);
        // r^2 = 0.25 + 6.25 = 6.5; step cost = 6.5 + 0.1*42.25 = 10.725.
        assert_relative_eq!(rec.costs[0], 10.725, epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let target = DVector::from_column_slice(&[0.3, -0.7, 2.0]);
        let env = SingleStateQuadratic::new(target, 5, 0.0, 0.25).unwrap();
        let policy = LinearPolicy::new(DMatrix::from_column_slice(3, 1, &[1.0, 0.0, -1.0]));
        let g = env.exact_gradient(&policy).unwrap();
        let h = 1e-6;
        let base = policy.params();
        for i in 0..3 {
            let mut plus = base.clone();
            plus[i] += h;
            let mut minus = base.clone();
            minus[i] -= h;
            let jp = env
                .exact_objective(&LinearPolicy::from_flat(3, 1, &plus).unwrap())
                .unwrap();
            let jm = env
                .exact_objective(&LinearPolicy::from_flat(3, 1, &minus).unwrap())
                .unwrap();
            let fd = (jp - jm) / (2.0 * h);
            assert!((g[i] - fd).abs() < 1e-6, "coord {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn optimum_zeroes_cost_and_gradient() {
        let target = DVector::from_column_slice(&[0.4, 1.2]);
        let env = SingleStateQuadratic::new(target, 3, 0.0, 0.5).unwrap();
        let best = env.optimal_policy();
        assert_relative_eq!(env.exact_objective(&best).unwrap(), 0.0);
        assert_relative_eq!(env.exact_gradient(&best).unwrap().norm(), 0.0);
    }

    #[test]
    fn noise_only_shifts_cost_observations() {
        let target = DVector::zeros(1);
        let mut env = SingleStateQuadratic::new(target, 2000, 0.5, 0.0).unwrap();
        let policy = LinearPolicy::new(DMatrix::from_column_slice(1, 1, &[0.8]));
        let mut rng = SeededRng::new(9, 0);
        let rec = rollout(&mut env, &policy, &mut rng).unwrap();
        let mean = rec.total_cost / 2000.0;
        // Mean observed cost concentrates on the true 0.64 step cost.
        assert!((mean - 0.64).abs() < 0.05, "mean {mean}");
    }
}
