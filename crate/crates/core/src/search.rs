//! Multi-step policy optimizers over [`Env`] rollouts.
//!
//! Two families are implemented with identical sample accounting so their
//! budgets are directly comparable:
//!
//! * parameter-space search: each direction draws a sphere vector in the
//!   full parameter space and evaluates the objective at `theta +- delta u`
//!   with one full episode each (two-point estimate, optional selection of
//!   the strongest directions);
//! * action-space search: each draw perturbs a single timestep's action
//!   inside one episode and forms a rank-one parameter-space estimate from
//!   the observed cost-to-go.
//!
//! Every rollout costs `horizon` environment steps. Evaluation checkpoints
//! use a separate stream of fresh episodes and are not charged against the
//! training budget.

use nalgebra::DVector;

use crate::envs::{lqr_exact_gradient, rollout, rollout_perturbed, Env, LqrEnv, LqrSpec};
use crate::error::{Error, Result};
use crate::estimators;
use crate::policy::{LinearPolicy, Policy};
use crate::rng::SeededRng;

/// Episodes averaged per evaluation checkpoint.
pub const EVAL_ROLLOUTS: usize = 10;

/// Hyperparameters and budget for one optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Step size.
    pub alpha: f64,
    /// Perturbation radius.
    pub delta: f64,
    /// Gradient-estimate draws per iteration.
    pub num_directions: usize,
    /// Directions kept by the selection rule (parameter search only).
    pub top_directions: usize,
    /// Hard cap on environment steps consumed by training.
    pub max_env_steps: u64,
    /// Iterations between evaluation checkpoints.
    pub eval_every: usize,
}

impl SearchConfig {
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
        if self.max_env_steps == 0 {
            return Err(Error::InvalidParameter("empty step budget".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidParameter(
                "checkpoint spacing must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Which optimizer family to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SearchMethod {
    ParamSearch,
    ActionSearch,
}

impl std::fmt::Display for SearchMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SearchMethod::ParamSearch => write!(f, "param_search"),
            SearchMethod::ActionSearch => write!(f, "action_search"),
        }
    }
}

/// One evaluation checkpoint.
#[derive(Debug, Clone)]
pub struct CheckpointRow {
    pub iteration: usize,
    /// Training steps consumed when the checkpoint was taken.
    pub env_steps_used: u64,
    /// Mean episode cost over [`EVAL_ROLLOUTS`] fresh episodes.
    pub mean_cost: f64,
    /// Exact squared gradient norm, when the caller can compute one.
    pub grad_norm_sq: Option<f64>,
}

/// Output of one optimizer run.
#[derive(Debug, Clone)]
pub struct SearchTrace {
    pub rows: Vec<CheckpointRow>,
    pub final_policy: LinearPolicy,
    pub env_steps_used: u64,
    pub iterations: usize,
}

fn check_env_policy<E: Env + ?Sized>(env: &E, policy: &LinearPolicy) -> Result<()> {
    if policy.state_dim() != env.state_dim() || policy.action_dim() != env.action_dim() {
        return Err(Error::DimensionMismatch(format!(
            "policy maps {}->{} but environment needs {}->{}",
            policy.state_dim(),
            policy.action_dim(),
            env.state_dim(),
            env.action_dim()
        )));
    }
    Ok(())
}

fn evaluate<E: Env + ?Sized>(
    env: &mut E,
    policy: &LinearPolicy,
    rng: &mut SeededRng,
) -> Result<f64> {
    let mut total = 0.0;
    for _ in 0..EVAL_ROLLOUTS {
        total += rollout(env, policy, rng)?.total_cost;
    }
    Ok(total / EVAL_ROLLOUTS as f64)
}

/// One parameter-space iteration: sample directions, evaluate both signs,
/// keep the strongest `top_directions` by two-point gap, average, descend.
fn param_step<E: Env + ?Sized>(
    env: &mut E,
    policy: &mut LinearPolicy,
    cfg: &SearchConfig,
    rng: &mut SeededRng,
) -> Result<()> {
    let d = policy.param_count();
    let theta0 = policy.params();
    let mut scored: Vec<(f64, DVector<f64>)> = Vec::with_capacity(cfg.num_directions);
    for _ in 0..cfg.num_directions {
        let u = estimators::sample_unit_sphere(rng, d)?;
        policy.set_params(&(&theta0 + &u * cfg.delta))?;
        let j_plus = rollout(env, policy, rng)?.total_cost;
        policy.set_params(&(&theta0 - &u * cfg.delta))?;
        let j_minus = rollout(env, policy, rng)?.total_cost;
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
    policy.set_params(&(&theta0 - mean * cfg.alpha))?;
    Ok(())
}

/// One action-space iteration: for each draw pick a uniform timestep and a
/// sphere direction in action space, perturb that one action, and build the
/// rank-one estimate from the observed cost-to-go.
fn action_step<E: Env + ?Sized>(
    env: &mut E,
    policy: &mut LinearPolicy,
    cfg: &SearchConfig,
    rng: &mut SeededRng,
) -> Result<()> {
    let h = env.horizon();
    let p = policy.action_dim();
    let d = policy.param_count();
    let mut mean = DVector::zeros(d);
    for _ in 0..cfg.num_directions {
        let t = rng.below(h as u64) as usize;
        let u = estimators::sample_unit_sphere(rng, p)?;
        let (s_t, q_to_go) = rollout_perturbed(env, policy, t, &(&u * cfg.delta), rng)?;
        let est = estimators::action_space_pg_grad(q_to_go, &u, &s_t, h, cfg.delta)?;
        mean += est.g;
    }
    mean /= cfg.num_directions as f64;
    policy.set_params(&(policy.params() - mean * cfg.alpha))?;
    Ok(())
}

fn steps_per_iteration(method: SearchMethod, cfg: &SearchConfig, horizon: usize) -> u64 {
    let per_draw = match method {
        SearchMethod::ParamSearch => 2 * horizon as u64,
        SearchMethod::ActionSearch => horizon as u64,
    };
    cfg.num_directions as u64 * per_draw
}

fn run_search<E: Env + ?Sized>(
    env: &mut E,
    policy0: &LinearPolicy,
    cfg: &SearchConfig,
    method: SearchMethod,
    rng: &mut SeededRng,
) -> Result<SearchTrace> {
    cfg.validate()?;
    check_env_policy(env, policy0)?;
    let mut train = rng.child(1);
    let mut eval = rng.child(2);
    let mut policy = policy0.clone();
    let iter_cost = steps_per_iteration(method, cfg, env.horizon());
    let mut rows = Vec::new();
    let mut steps: u64 = 0;
    let mut iteration = 0usize;
    rows.push(CheckpointRow {
        iteration,
        env_steps_used: steps,
        mean_cost: evaluate(env, &policy, &mut eval)?,
        grad_norm_sq: None,
    });
    while steps + iter_cost <= cfg.max_env_steps {
        match method {
            SearchMethod::ParamSearch => param_step(env, &mut policy, cfg, &mut train)?,
            SearchMethod::ActionSearch => action_step(env, &mut policy, cfg, &mut train)?,
        }
        steps += iter_cost;
        iteration += 1;
        if iteration % cfg.eval_every == 0 {
            rows.push(CheckpointRow {
                iteration,
                env_steps_used: steps,
                mean_cost: evaluate(env, &policy, &mut eval)?,
                grad_norm_sq: None,
            });
        }
    }
    Ok(SearchTrace {
        rows,
        final_policy: policy,
        env_steps_used: steps,
        iterations: iteration,
    })
}

/// Parameter-space search with two-point sphere estimates.
pub fn run_param_search<E: Env + ?Sized>(
    env: &mut E,
    policy0: &LinearPolicy,
    cfg: &SearchConfig,
    rng: &mut SeededRng,
) -> Result<SearchTrace> {
    run_search(env, policy0, cfg, SearchMethod::ParamSearch, rng)
}

/// Action-space search with single-timestep perturbations.
pub fn run_action_search<E: Env + ?Sized>(
    env: &mut E,
    policy0: &LinearPolicy,
    cfg: &SearchConfig,
    rng: &mut SeededRng,
) -> Result<SearchTrace> {
    run_search(env, policy0, cfg, SearchMethod::ActionSearch, rng)
}

/// Optimize on an LQR system until the exact gradient certifies a
/// stationary point or the step budget runs out.
///
/// The exact gradient is consulted before the first iteration and after
/// each one; those evaluations are free (closed form, no rollouts).
/// Returns the environment steps consumed and whether the squared gradient
/// norm reached `threshold`.
pub fn run_until_stationary(
    spec: &LqrSpec,
    policy0: &LinearPolicy,
    cfg: &SearchConfig,
    method: SearchMethod,
    threshold: f64,
    rng: &mut SeededRng,
) -> Result<(u64, bool)> {
    cfg.validate()?;
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "stationarity threshold must be positive and finite, got {threshold}"
        )));
    }
    let mut env = LqrEnv::new(spec.clone());
    check_env_policy(&env, policy0)?;
    let mut train = rng.child(1);
    let mut policy = policy0.clone();
    if lqr_exact_gradient(spec, &policy)?.norm_squared() <= threshold {
        return Ok((0, true));
    }
    let iter_cost = steps_per_iteration(method, cfg, spec.horizon());
    let mut steps: u64 = 0;
    while steps + iter_cost <= cfg.max_env_steps {
        match method {
            SearchMethod::ParamSearch => param_step(&mut env, &mut policy, cfg, &mut train)?,
            SearchMethod::ActionSearch => action_step(&mut env, &mut policy, cfg, &mut train)?,
        }
        steps += iter_cost;
        if lqr_exact_gradient(spec, &policy)?.norm_squared() <= threshold {
            return Ok((steps, true));
        }
    }
    Ok((steps, false))
}
