//! Environments and data generators, plus the episode rollout machinery
//! shared by every policy-search method in the crate.
//!
//! An environment is a finite-horizon cost process: `reset` starts an
//! episode, `step` applies an action and returns the next state with that
//! step's cost, and the episode ends after exactly `horizon` steps. All
//! stochasticity flows through the caller-supplied [`SeededRng`], so an
//! episode is a pure function of (environment, policy, rng state).

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rng::SeededRng;

pub mod bandit;
pub mod lqr;
pub mod regression;
pub mod toy;

pub use bandit::{gen_contextual_bandit, BanditInstance};
pub use lqr::{
    lqr_exact_gradient, lqr_exact_objective, lqr_rollout, make_random_lqr, LqrEnv, LqrSpec,
};
pub use regression::{gen_regression_stream, gen_regression_stream_with};
pub use toy::SingleStateQuadratic;

/// A finite-horizon cost process.
pub trait Env {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn horizon(&self) -> usize;

    /// Start a fresh episode and return its initial state.
    fn reset(&mut self, rng: &mut SeededRng) -> DVector<f64>;

    /// Apply an action, returning the next state and this step's cost.
    /// Calling more than `horizon` times in one episode is an error.
    fn step(&mut self, action: &DVector<f64>, rng: &mut SeededRng)
        -> Result<(DVector<f64>, f64)>;

    /// Upper bound on cumulative episode cost, when the environment can
    /// promise one. Used to size gradient-scale constants.
    fn cost_bound(&self) -> Option<f64> {
        None
    }
}

/// Everything observed during one episode.
#[derive(Debug, Clone)]
pub struct RolloutRecord {
    /// Visited states, `horizon + 1` entries including the terminal state.
    pub states: Vec<DVector<f64>>,
    /// Actions taken, `horizon` entries.
    pub actions: Vec<DVector<f64>>,
    /// Per-step costs, `horizon` entries.
    pub costs: Vec<f64>,
    /// Sum of `costs` in step order.
    pub total_cost: f64,
}

fn check_dims<E: Env + ?Sized, P: Policy + ?Sized>(env: &E, policy: &P) -> Result<()> {
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

/// Run one full episode under `policy`, starting from a fresh `reset`.
/// Consumes exactly `horizon` environment steps.
pub fn rollout<E, P>(env: &mut E, policy: &P, rng: &mut SeededRng) -> Result<RolloutRecord>
where
    E: Env + ?Sized,
    P: Policy + ?Sized,
{
    check_dims(env, policy)?;
    let s0 = env.reset(rng);
    rollout_from(env, s0, policy, rng)
}

/// Run one full episode from an already-reset environment in state
/// `initial_state`. Exists so callers can pin the starting state.
pub fn rollout_from<E, P>(
    env: &mut E,
    initial_state: DVector<f64>,
    policy: &P,
    rng: &mut SeededRng,
) -> Result<RolloutRecord>
where
    E: Env + ?Sized,
    P: Policy + ?Sized,
{
    check_dims(env, policy)?;
    let h = env.horizon();
    let mut states = Vec::with_capacity(h + 1);
    let mut actions = Vec::with_capacity(h);
    let mut costs = Vec::with_capacity(h);
    let mut state = initial_state;
    let mut total = 0.0;
    for _ in 0..h {
        let action = policy.action(&state);
        let (next, cost) = env.step(&action, rng)?;
        if !cost.is_finite() {
            return Err(Error::NonFinite(format!("step cost {cost}")));
        }
        states.push(state);
        actions.push(action);
        costs.push(cost);
        total += cost;
        state = next;
    }
    states.push(state);
    if let Some(bound) = env.cost_bound() {
        if total > bound {
            return Err(Error::InvalidParameter(format!(
                "episode cost {total} exceeds the environment's declared bound {bound}"
            )));
        }
    }
    Ok(RolloutRecord {
        states,
        actions,
        costs,
        total_cost: total,
    })
}

/// Roll in with the unperturbed policy to step `t`, act there with the
/// policy's action plus `delta_u`, then follow the policy to the end.
///
/// Returns the state observed at step `t` and the cost-to-go accumulated
/// from step `t` through the final step. Consumes exactly `horizon`
/// environment steps whatever `t` is, so budget accounting matches a plain
/// rollout.
pub fn rollout_perturbed<E, P>(
    env: &mut E,
    policy: &P,
    t: usize,
    delta_u: &DVector<f64>,
    rng: &mut SeededRng,
) -> Result<(DVector<f64>, f64)>
where
    E: Env + ?Sized,
    P: Policy + ?Sized,
{
    check_dims(env, policy)?;
    let h = env.horizon();
    if t >= h {
        return Err(Error::InvalidParameter(format!(
            "perturbation step {t} outside horizon {h}"
        )));
    }
    if delta_u.len() != env.action_dim() {
        return Err(Error::DimensionMismatch(format!(
            "perturbation has {} entries, action space has {}",
            delta_u.len(),
            env.action_dim()
        )));
    }
    let mut state = env.reset(rng);
    for _ in 0..t {
        let action = policy.action(&state);
        let (next, _) = env.step(&action, rng)?;
        state = next;
    }
    let s_t = state.clone();
    let mut q_to_go = 0.0;
    let perturbed = policy.action(&state) + delta_u;
    let (next, cost) = env.step(&perturbed, rng)?;
    if !cost.is_finite() {
        return Err(Error::NonFinite(format!("step cost {cost}")));
    }
    q_to_go += cost;
    state = next;
    for _ in t + 1..h {
        let action = policy.action(&state);
        let (next, cost) = env.step(&action, rng)?;
        if !cost.is_finite() {
            return Err(Error::NonFinite(format!("step cost {cost}")));
        }
        q_to_go += cost;
        state = next;
    }
    Ok((s_t, q_to_go))
}
