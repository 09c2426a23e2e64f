//! Online linear regression with bandit (loss-only) feedback.
//!
//! The learner predicts `theta^T s` each round, sees only a scalar squared
//! loss, and competes with the best fixed parameter in a norm ball chosen in
//! hindsight. Two single-direction algorithms are implemented: one explores
//! by perturbing the whole parameter vector on the sphere, the other by
//! adding a signed offset to the prediction itself. Their regret guarantees
//! differ exactly in how they depend on the parameter dimension, which is
//! what the dimension-sweep experiment measures.

mod baselines;
mod hindsight;

pub use baselines::{baseline_newton, baseline_sgd};
pub use hindsight::{hindsight_from_gram, hindsight_optimum};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::{self, TheoryConstants};
use crate::rng::SeededRng;

/// One round of the regression stream.
#[derive(Debug, Clone)]
pub struct OlrRound {
    /// Feature vector; first coordinate is a constant bias slot.
    pub features: DVector<f64>,
    pub target: f64,
    /// Whether feature or target clipping fired to keep declared bounds.
    pub clipped: bool,
}

/// Parameters of the synthetic correlated-Gaussian round generator.
///
/// Rounds are produced lazily and deterministically from `(seed, stream)`;
/// replaying the stream any number of times yields bitwise identical rounds.
#[derive(Debug, Clone)]
pub struct SyntheticStream {
    /// Ground-truth weight vector (unit norm), including the bias slot.
    pub weights: DVector<f64>,
    /// Factor `M` with feature covariance `M M^T` for the non-bias block.
    pub factor: DMatrix<f64>,
    pub noise_std: f64,
    pub seed: u64,
    pub stream: u64,
}

#[derive(Debug, Clone)]
enum RoundSource {
    Synthetic(SyntheticStream),
    /// Arbitrary caller-provided rounds. This is the injection point for
    /// adversarial sequences; the crate ships no adversary of its own.
    Explicit(Vec<(DVector<f64>, f64)>),
}

/// A replayable stream of regression rounds plus the declared bounds the
/// algorithms and schedules rely on.
#[derive(Debug, Clone)]
pub struct OlrInstance {
    dim: usize,
    num_rounds: usize,
    c_theta: f64,
    c_s: f64,
    c_a: f64,
    source: RoundSource,
}

/// Rounds are generated in blocks so the correlated-Gaussian transform runs
/// as a matrix-matrix product instead of one matrix-vector product per round.
const GEN_BLOCK: usize = 256;

impl OlrInstance {
    /// Assemble an instance around a synthetic generator. Low-level; most
    /// callers want `envs::regression::gen_regression_stream`.
    pub fn from_synthetic(
        stream: SyntheticStream,
        num_rounds: usize,
        c_theta: f64,
        c_s: f64,
        c_a: f64,
    ) -> Result<Self> {
        let dim = stream.weights.len();
        if dim < 2 {
            return Err(Error::InvalidDimension(
                "need at least a bias slot and one feature".into(),
            ));
        }
        if stream.factor.nrows() != dim - 1 || stream.factor.ncols() != dim - 1 {
            return Err(Error::DimensionMismatch(format!(
                "factor is {}x{}, expected {}x{}",
                stream.factor.nrows(),
                stream.factor.ncols(),
                dim - 1,
                dim - 1
            )));
        }
        Self::check_bounds(c_theta, c_s, c_a)?;
        Ok(OlrInstance {
            dim,
            num_rounds,
            c_theta,
            c_s,
            c_a,
            source: RoundSource::Synthetic(stream),
        })
    }

    /// Instance over explicit rounds (tests, adversarial streams). Bounds
    /// `c_s`, `c_a` are measured from the data.
    pub fn from_rounds(rounds: Vec<(DVector<f64>, f64)>, c_theta: f64) -> Result<Self> {
        if rounds.is_empty() {
            return Err(Error::InvalidParameter("no rounds supplied".into()));
        }
        let dim = rounds[0].0.len();
        if dim == 0 {
            return Err(Error::InvalidDimension("empty feature vectors".into()));
        }
        let mut c_s: f64 = 0.0;
        let mut c_a: f64 = 0.0;
        for (s, a) in &rounds {
            if s.len() != dim {
                return Err(Error::DimensionMismatch(
                    "inconsistent feature dimensions across rounds".into(),
                ));
            }
            if !a.is_finite() || s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("round data".into()));
            }
            c_s = c_s.max(s.norm());
            c_a = c_a.max(a.abs());
        }
        Self::check_bounds(c_theta, c_s.max(1e-12), c_a.max(1e-12))?;
        Ok(OlrInstance {
            dim,
            num_rounds: rounds.len(),
            c_theta,
            c_s: c_s.max(1e-12),
            c_a: c_a.max(1e-12),
            source: RoundSource::Explicit(rounds),
        })
    }

    fn check_bounds(c_theta: f64, c_s: f64, c_a: f64) -> Result<()> {
        for (name, v) in [("c_theta", c_theta), ("c_s", c_s), ("c_a", c_a)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rounds(&self) -> usize {
        self.num_rounds
    }

    pub fn c_theta(&self) -> f64 {
        self.c_theta
    }

    pub fn c_s(&self) -> f64 {
        self.c_s
    }

    pub fn c_a(&self) -> f64 {
        self.c_a
    }

    /// Ground-truth weights when the instance is synthetic.
    pub fn true_weights(&self) -> Option<&DVector<f64>> {
        match &self.source {
            RoundSource::Synthetic(s) => Some(&s.weights),
            RoundSource::Explicit(_) => None,
        }
    }

    /// Schedule constants derived from this instance's declared bounds.
    pub fn theory_constants(&self) -> Result<TheoryConstants> {
        TheoryConstants::from_olr_bounds(self.c_theta, self.c_s, self.c_a)
    }

    /// Visit every round in order. The features reference is to a scratch
    /// buffer reused across rounds; copy it if it must outlive the call.
    pub fn for_each_round<F>(&self, mut f: F)
    where
        F: FnMut(usize, &DVector<f64>, f64, bool),
    {
        match &self.source {
            RoundSource::Explicit(rounds) => {
                for (i, (s, a)) in rounds.iter().take(self.num_rounds).enumerate() {
                    f(i, s, *a, false);
                }
            }
            RoundSource::Synthetic(stream) => {
                // Independent child streams for feature draws and label noise
                // keep the round content independent of the block size.
                let base = SeededRng::new(stream.seed, stream.stream);
                let mut feat_rng = base.child(1);
                let mut noise_rng = base.child(2);
                let z_dim = self.dim - 1;
                let mut x = DVector::zeros(self.dim);
                let mut produced = 0usize;
                while produced < self.num_rounds {
                    let block = GEN_BLOCK.min(self.num_rounds - produced);
                    // Columns are per-round standard normal draws, filled in
                    // draw order (column-major storage is contiguous).
                    let mut gt = DMatrix::zeros(z_dim, block);
                    for c in 0..block {
                        for r in 0..z_dim {
                            gt[(r, c)] = feat_rng.normal();
                        }
                    }
                    let zt = &stream.factor * &gt;

                    for c in 0..block {
                        x[0] = 1.0;
                        x.rows_mut(1, z_dim).copy_from(&zt.column(c));
                        let mut clipped = false;
                        let norm_sq = x.norm_squared();
                        if norm_sq > self.c_s * self.c_s {
                            // Rescale only the random block so the bias slot
                            // stays exactly 1.
                            let scale =
                                ((self.c_s * self.c_s - 1.0) / (norm_sq - 1.0)).sqrt();
                            x.rows_mut(1, z_dim).scale_mut(scale);
                            clipped = true;
                        }
                        let mut target =
                            stream.weights.dot(&x) + stream.noise_std * noise_rng.normal();
                        if target.abs() > self.c_a {
                            target = target.signum() * self.c_a;
                            clipped = true;
                        }
                        f(produced, &x, target, clipped);
                        produced += 1;
                    }
                }
            }
        }
    }

    /// All rounds materialized; intended for small instances and tests.
    pub fn collect_rounds(&self) -> Vec<OlrRound> {
        let mut out = Vec::with_capacity(self.num_rounds);
        self.for_each_round(|_, s, a, clipped| {
            out.push(OlrRound {
                features: s.clone(),
                target: a,
                clipped,
            })
        });
        out
    }

    /// Feature matrix (rounds as rows) and target vector, materialized.
    pub fn materialize(&self) -> (DMatrix<f64>, DVector<f64>) {
        let mut xs = DMatrix::zeros(self.num_rounds, self.dim);
        let mut ys = DVector::zeros(self.num_rounds);
        self.for_each_round(|i, s, a, _| {
            xs.set_row(i, &s.transpose());
            ys[i] = a;
        });
        (xs, ys)
    }
}

/// Sufficient statistics of a full stream pass: everything regret and
/// hindsight computations need without materializing the stream.
#[derive(Debug, Clone)]
pub struct StreamStats {
    /// `sum_i s_i s_i^T`.
    pub gram: DMatrix<f64>,
    /// `sum_i a_i s_i`.
    pub cross: DVector<f64>,
    /// `sum_i a_i^2`.
    pub target_sq_sum: f64,
    pub rounds: usize,
    pub clipped_rounds: usize,
}

impl StreamStats {
    pub fn collect(inst: &OlrInstance) -> Self {
        let mut stats = StreamStats::new(inst.dim);
        inst.for_each_round(|_, s, a, clipped| stats.push(s, a, clipped));
        stats
    }

    fn new(dim: usize) -> Self {
        StreamStats {
            gram: DMatrix::zeros(dim, dim),
            cross: DVector::zeros(dim),
            target_sq_sum: 0.0,
            rounds: 0,
            clipped_rounds: 0,
        }
    }

    fn push(&mut self, s: &DVector<f64>, a: f64, clipped: bool) {
        self.gram.ger(1.0, s, s, 1.0);
        self.cross.axpy(a, s, 1.0);
        self.target_sq_sum += a * a;
        self.rounds += 1;
        self.clipped_rounds += usize::from(clipped);
    }

    /// Total loss of a fixed parameter over the recorded stream.
    pub fn cumulative_loss_of(&self, theta: &DVector<f64>) -> f64 {
        (self.gram.clone() * theta).dot(theta) - 2.0 * self.cross.dot(theta)
            + self.target_sq_sum
    }

    /// Constrained hindsight optimum over the recorded stream.
    pub fn hindsight_optimum(&self, c_theta: f64) -> Result<DVector<f64>> {
        hindsight_from_gram(&self.gram, &self.cross, c_theta)
    }
}

/// Which update rule produced a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OlrAlgorithm {
    /// Parameter-space sphere perturbation, one loss query per round.
    ParamSphere,
    /// Prediction-space sign perturbation, one loss query per round.
    ActionSign,
    /// Full-information minibatch gradient descent baseline.
    BaselineSgd,
    /// Full-information damped Newton baseline.
    BaselineNewton,
}

impl std::fmt::Display for OlrAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            OlrAlgorithm::ParamSphere => "param-sphere",
            OlrAlgorithm::ActionSign => "action-sign",
            OlrAlgorithm::BaselineSgd => "baseline-sgd",
            OlrAlgorithm::BaselineNewton => "baseline-newton",
        };
        f.write_str(s)
    }
}

/// Record of one online run.
#[derive(Debug, Clone)]
pub struct OlrTrace {
    pub algorithm: OlrAlgorithm,
    pub alpha: f64,
    pub delta: f64,
    /// Loss actually incurred each round (at the played, perturbed point).
    pub incurred: Vec<f64>,
    /// Running sum of incurred losses.
    pub cum_loss: Vec<f64>,
    /// Loss the unperturbed iterate would have incurred; diagnostic only.
    pub clean: Vec<f64>,
    /// Iterates after each round's projection; recorded on request.
    pub thetas: Option<Vec<DVector<f64>>>,
    pub final_theta: DVector<f64>,
    /// Largest post-projection iterate norm seen during the run.
    pub max_theta_norm: f64,
    pub clipped_rounds: usize,
}

impl OlrTrace {
    fn new(algorithm: OlrAlgorithm, alpha: f64, delta: f64, dim: usize, rounds: usize, record_thetas: bool) -> Self {
        OlrTrace {
            algorithm,
            alpha,
            delta,
            incurred: Vec::with_capacity(rounds),
            cum_loss: Vec::with_capacity(rounds),
            clean: Vec::with_capacity(rounds),
            thetas: record_thetas.then(Vec::new),
            final_theta: DVector::zeros(dim),
            max_theta_norm: 0.0,
            clipped_rounds: 0,
        }
    }

    pub fn total_incurred(&self) -> f64 {
        self.cum_loss.last().copied().unwrap_or(0.0)
    }

    /// Mean unperturbed loss over the trailing `fraction` of rounds; the
    /// tuning objective for online runs.
    pub fn trailing_clean_loss(&self, fraction: f64) -> f64 {
        if self.clean.is_empty() {
            return 0.0;
        }
        let n = self.clean.len();
        let take = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
        crate::stats::mean(&self.clean[n - take..])
    }
}

/// Project onto the closed ball of radius `c_theta`.
pub fn project_ball(theta: &DVector<f64>, c_theta: f64) -> Result<DVector<f64>> {
    if !(c_theta > 0.0) || !c_theta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "ball radius must be positive and finite, got {c_theta}"
        )));
    }
    let norm = theta.norm();
    if norm <= c_theta {
        Ok(theta.clone())
    } else {
        Ok(theta * (c_theta / norm))
    }
}

fn check_step(alpha: f64, delta: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "step size must be nonnegative and finite, got {alpha}"
        )));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "perturbation must be positive and finite, got {delta}"
        )));
    }
    Ok(())
}

/// One round of the parameter-perturbation rule, exposed for direct testing:
/// play `theta + delta*u`, observe the squared loss, take a one-point sphere
/// step, project. Returns the next iterate and the incurred/clean losses.
pub fn param_sphere_round(
    theta: &DVector<f64>,
    u: &DVector<f64>,
    s: &DVector<f64>,
    a: f64,
    alpha: f64,
    delta: f64,
    c_theta: f64,
) -> Result<(DVector<f64>, f64, f64)> {
    let played = theta + u * delta;
    let resid = played.dot(s) - a;
    let incurred = resid * resid;
    let clean_resid = theta.dot(s) - a;
    let clean = clean_resid * clean_resid;
    if !incurred.is_finite() {
        return Err(Error::NonFinite(format!("round loss {incurred}")));
    }
    let est = estimators::one_point_sphere_grad(incurred, u, delta)?;
    let next = project_ball(&(theta - est.g * alpha), c_theta)?;
    Ok((next, incurred, clean))
}

/// One round of the prediction-perturbation rule: predict
/// `theta^T s + delta*e`, observe the squared loss, step along
/// `(loss * e / delta) s`, project.
pub fn action_sign_round(
    theta: &DVector<f64>,
    e: f64,
    s: &DVector<f64>,
    a: f64,
    alpha: f64,
    delta: f64,
    c_theta: f64,
) -> Result<(DVector<f64>, f64, f64)> {
    let clean_resid = theta.dot(s) - a;
    let resid = clean_resid + delta * e;
    let incurred = resid * resid;
    let clean = clean_resid * clean_resid;
    if !incurred.is_finite() {
        return Err(Error::NonFinite(format!("round loss {incurred}")));
    }
    let est = estimators::action_sign_grad(incurred, e, s, delta)?;
    let next = project_ball(&(theta - est.g * alpha), c_theta)?;
    Ok((next, incurred, clean))
}

/// Specification of one run for the lockstep driver.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub algorithm: OlrAlgorithm,
    pub alpha: f64,
    pub delta: f64,
    pub rng: SeededRng,
    pub record_thetas: bool,
}

struct LiveRun {
    spec: RunSpec,
    theta: DVector<f64>,
    trace: OlrTrace,
    failed: Option<Error>,
}

/// Drive several online runs over a single replay of the stream, and collect
/// the stream's sufficient statistics in the same pass. Each run's output is
/// bitwise identical to running it alone: randomness comes only from the
/// run's own generator.
pub fn run_many_with_stats(
    inst: &OlrInstance,
    specs: Vec<RunSpec>,
) -> (Vec<Result<OlrTrace>>, StreamStats) {
    let dim = inst.dim();
    let rounds = inst.num_rounds();
    let mut stats = StreamStats::new(dim);
    let mut runs: Vec<LiveRun> = specs
        .into_iter()
        .map(|spec| {
            let trace = OlrTrace::new(
                spec.algorithm,
                spec.alpha,
                spec.delta,
                dim,
                rounds,
                spec.record_thetas,
            );
            LiveRun {
                spec,
                theta: DVector::zeros(dim),
                trace,
                failed: None,
            }
        })
        .collect();
    for run in &runs {
        debug_assert!(matches!(
            run.spec.algorithm,
            OlrAlgorithm::ParamSphere | OlrAlgorithm::ActionSign
        ));
    }

    inst.for_each_round(|_, s, a, clipped| {
        stats.push(s, a, clipped);
        for run in runs.iter_mut() {
            if run.failed.is_some() {
                continue;
            }
            let step = match run.spec.algorithm {
                OlrAlgorithm::ParamSphere => {
                    estimators::sample_unit_sphere(&mut run.spec.rng, dim).and_then(|u| {
                        param_sphere_round(
                            &run.theta,
                            &u,
                            s,
                            a,
                            run.spec.alpha,
                            run.spec.delta,
                            inst.c_theta,
                        )
                    })
                }
                OlrAlgorithm::ActionSign => {
                    let e = estimators::sample_rademacher(&mut run.spec.rng);
                    action_sign_round(
                        &run.theta,
                        e,
                        s,
                        a,
                        run.spec.alpha,
                        run.spec.delta,
                        inst.c_theta,
                    )
                }
                _ => Err(Error::InvalidParameter(
                    "lockstep driver only handles the online algorithms".into(),
                )),
            };
            match step {
                Ok((next, incurred, clean)) => {
                    run.theta = next;
                    run.trace.incurred.push(incurred);
                    let cum = run.trace.cum_loss.last().copied().unwrap_or(0.0) + incurred;
                    run.trace.cum_loss.push(cum);
                    run.trace.clean.push(clean);
                    run.trace.clipped_rounds += usize::from(clipped);
                    let norm = run.theta.norm();
                    if norm > run.trace.max_theta_norm {
                        run.trace.max_theta_norm = norm;
                    }
                    if let Some(thetas) = run.trace.thetas.as_mut() {
                        thetas.push(run.theta.clone());
                    }
                }
                Err(e) => run.failed = Some(e),
            }
        }
    });

    let results = runs
        .into_iter()
        .map(|mut run| match run.failed {
            Some(e) => Err(e),
            None => {
                run.trace.final_theta = run.theta;
                Ok(run.trace)
            }
        })
        .collect();
    (results, stats)
}

fn run_single(
    inst: &OlrInstance,
    algorithm: OlrAlgorithm,
    alpha: f64,
    delta: f64,
    rng: SeededRng,
    record_thetas: bool,
) -> Result<OlrTrace> {
    check_step(alpha, delta)?;
    let (mut results, _) = run_many_with_stats(
        inst,
        vec![RunSpec {
            algorithm,
            alpha,
            delta,
            rng,
            record_thetas,
        }],
    );
    results.pop().expect("one spec in, one result out")
}

/// Bandit online regression exploring in parameter space: each round draws a
/// sphere direction, plays the perturbed parameters, and updates from the
/// single observed loss. Regret scales with the dimension through the
/// one-point estimate's magnitude.
pub fn run_alg1(inst: &OlrInstance, alpha: f64, delta: f64, rng: SeededRng) -> Result<OlrTrace> {
    run_single(inst, OlrAlgorithm::ParamSphere, alpha, delta, rng, false)
}

/// Like [`run_alg1`] but recording the per-round iterates.
pub fn run_alg1_traced(
    inst: &OlrInstance,
    alpha: f64,
    delta: f64,
    rng: SeededRng,
) -> Result<OlrTrace> {
    run_single(inst, OlrAlgorithm::ParamSphere, alpha, delta, rng, true)
}

/// Bandit online regression exploring in prediction (action) space: each
/// round offsets the prediction by `±delta` and updates along the feature
/// vector. The update never scales with the parameter dimension.
pub fn run_alg2(inst: &OlrInstance, alpha: f64, delta: f64, rng: SeededRng) -> Result<OlrTrace> {
    run_single(inst, OlrAlgorithm::ActionSign, alpha, delta, rng, false)
}

/// Like [`run_alg2`] but recording the per-round iterates.
pub fn run_alg2_traced(
    inst: &OlrInstance,
    alpha: f64,
    delta: f64,
    rng: SeededRng,
) -> Result<OlrTrace> {
    run_single(inst, OlrAlgorithm::ActionSign, alpha, delta, rng, true)
}

/// Average regret of a finished run against the constrained hindsight
/// optimum of the same stream. May be negative for lucky noise.
pub fn average_regret(
    trace: &OlrTrace,
    features: &DMatrix<f64>,
    targets: &DVector<f64>,
    c_theta: f64,
) -> Result<f64> {
    if features.nrows() != trace.incurred.len() || targets.len() != trace.incurred.len() {
        return Err(Error::DimensionMismatch(format!(
            "trace has {} rounds, data has {} rows / {} targets",
            trace.incurred.len(),
            features.nrows(),
            targets.len()
        )));
    }
    let gram = features.transpose() * features;
    let cross = features.transpose() * targets;
    let stats = StreamStats {
        gram,
        cross,
        target_sq_sum: targets.dot(targets),
        rounds: targets.len(),
        clipped_rounds: 0,
    };
    average_regret_from_stats(trace, &stats, c_theta)
}

/// Same as [`average_regret`] but against pre-collected stream statistics;
/// used when the stream is too large to materialize.
pub fn average_regret_from_stats(
    trace: &OlrTrace,
    stats: &StreamStats,
    c_theta: f64,
) -> Result<f64> {
    if stats.rounds != trace.incurred.len() {
        return Err(Error::DimensionMismatch(format!(
            "trace has {} rounds, stats cover {}",
            trace.incurred.len(),
            stats.rounds
        )));
    }
    if stats.rounds == 0 {
        return Ok(0.0);
    }
    let opt = stats.hindsight_optimum(c_theta)?;
    let opt_loss = stats.cumulative_loss_of(&opt);
    Ok((trace.total_incurred() - opt_loss) / stats.rounds as f64)
}

/// Step size and perturbation radius pair produced by a schedule.
pub type Schedule = (f64, f64);

/// Horizon-optimal schedule for the parameter-perturbation rule. The
/// perturbation balances estimator variance against smoothing error and the
/// resulting regret scales with the square root of the dimension.
pub fn theoretical_schedule_alg1(tc: &TheoryConstants, b: usize, t: usize) -> Result<Schedule> {
    tc.validate()?;
    if b == 0 || t == 0 {
        return Err(Error::InvalidParameter(
            "dimension and round count must be positive".into(),
        ));
    }
    if tc.smoothness <= 0.0 {
        return Err(Error::InvalidParameter(
            "schedule needs a positive smoothness constant".into(),
        ));
    }
    let b = b as f64;
    let t = t as f64;
    let c2 = tc.loss_bound * tc.loss_bound + tc.c_s * tc.c_s;
    let delta = t.powf(-0.25) * (tc.c_theta * b * c2 / (2.0 * tc.smoothness)).sqrt();
    let alpha = tc.c_theta * delta / (b * c2 * t.sqrt());
    Ok((alpha, delta))
}

/// Horizon-optimal schedule for the prediction-perturbation rule; dimension
/// never enters.
pub fn theoretical_schedule_alg2(tc: &TheoryConstants, t: usize) -> Result<Schedule> {
    tc.validate()?;
    if t == 0 {
        return Err(Error::InvalidParameter("round count must be positive".into()));
    }
    if tc.loss_bound <= 0.0 || tc.c_s <= 0.0 {
        return Err(Error::InvalidParameter(
            "schedule needs positive loss and feature bounds".into(),
        ));
    }
    let t = t as f64;
    let c2 = tc.loss_bound * tc.loss_bound + 1.0;
    let delta = t.powf(-0.25) * (tc.c_theta * c2 * tc.c_s / (2.0 * tc.loss_bound)).sqrt();
    let alpha = tc.c_theta * delta / (c2 * tc.c_s * t.sqrt());
    Ok((alpha, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_instance(rounds: usize) -> OlrInstance {
        let data: Vec<(DVector<f64>, f64)> = (0..rounds)
            .map(|i| {
                let s = DVector::from_column_slice(&[1.0, (i as f64 * 0.7).sin()]);
                let a = 0.5 + 0.25 * (i as f64 * 0.7).sin();
                (s, a)
            })
            .collect();
        OlrInstance::from_rounds(data, 2.0).unwrap()
    }

    #[test]
    fn project_inside_is_identity() {
        let v = DVector::from_column_slice(&[0.3, -0.4]);
        assert_eq!(project_ball(&v, 1.0).unwrap(), v);
    }

    #[test]
    fn project_outside_lands_on_boundary() {
        let v = DVector::from_column_slice(&[3.0, 4.0]);
        let p = project_ball(&v, 1.0).unwrap();
        assert_relative_eq!(p.norm(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(p[0] / p[1], v[0] / v[1], epsilon = 1e-12);
    }

    #[test]
    fn projection_is_idempotent() {
        let v = DVector::from_column_slice(&[5.0, -2.0, 1.0]);
        let once = project_ball(&v, 0.7).unwrap();
        let twice = project_ball(&once, 0.7).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn param_sphere_round_matches_hand_update() {
        // theta = 0, u = e1, delta = 0.5, s = e1, a = 0: the played point
        // predicts 0.5, loss 0.25, and the update moves along -e1.
        let theta = DVector::zeros(2);
        let u = DVector::from_column_slice(&[1.0, 0.0]);
        let s = DVector::from_column_slice(&[1.0, 0.0]);
        let alpha = 0.1;
        let (next, incurred, clean) =
            param_sphere_round(&theta, &u, &s, 0.0, alpha, 0.5, 10.0).unwrap();
        assert_relative_eq!(incurred, 0.25);
        assert_relative_eq!(clean, 0.0);
        // one-point estimate: (b/delta) * loss * u = (2/0.5)*0.25 = 1.0
        assert_relative_eq!(next[0], -alpha * 1.0);
        assert_relative_eq!(next[1], 0.0);
    }

    #[test]
    fn action_sign_round_matches_hand_update() {
        let theta = DVector::zeros(2);
        let s = DVector::from_column_slice(&[1.0, 0.0]);
        let alpha = 0.1;
        let (next, incurred, clean) =
            action_sign_round(&theta, 1.0, &s, 1.0, alpha, 0.5, 10.0).unwrap();
        // prediction 0.5 vs target 1: loss 0.25. Estimate (loss*e/delta)*s
        // = 0.5*s, and the descent step subtracts alpha times it.
        assert_relative_eq!(incurred, 0.25);
        assert_relative_eq!(clean, 1.0);
        assert_relative_eq!(next[0], -alpha * 0.5);
    }

    #[test]
    fn empty_instance_is_rejected_and_zero_round_trace_is_empty() {
        assert!(OlrInstance::from_rounds(vec![], 1.0).is_err());
        let inst = tiny_instance(3);
        let inst_zero = OlrInstance {
            num_rounds: 0,
            ..inst
        };
        let trace = run_alg1(&inst_zero, 0.1, 0.1, SeededRng::new(1, 0)).unwrap();
        assert!(trace.incurred.is_empty());
        assert_eq!(trace.final_theta, DVector::zeros(2));
    }

    #[test]
    fn iterates_stay_in_the_ball() {
        let inst = tiny_instance(500);
        for trace in [
            run_alg1_traced(&inst, 0.5, 0.2, SeededRng::new(3, 1)).unwrap(),
            run_alg2_traced(&inst, 0.5, 0.2, SeededRng::new(3, 2)).unwrap(),
        ] {
            assert!(trace.max_theta_norm <= inst.c_theta() + 1e-9);
            for theta in trace.thetas.as_ref().unwrap() {
                assert!(theta.norm() <= inst.c_theta() + 1e-9);
            }
        }
    }

    #[test]
    fn runs_replay_identically() {
        let inst = tiny_instance(200);
        let a = run_alg1(&inst, 0.05, 0.1, SeededRng::new(9, 4)).unwrap();
        let b = run_alg1(&inst, 0.05, 0.1, SeededRng::new(9, 4)).unwrap();
        assert_eq!(a.final_theta, b.final_theta);
        assert_eq!(a.incurred, b.incurred);
    }

    #[test]
    fn lockstep_driver_matches_individual_runs_bitwise() {
        let inst = tiny_instance(300);
        let specs = vec![
            RunSpec {
                algorithm: OlrAlgorithm::ParamSphere,
                alpha: 0.05,
                delta: 0.1,
                rng: SeededRng::new(21, 1),
                record_thetas: false,
            },
            RunSpec {
                algorithm: OlrAlgorithm::ActionSign,
                alpha: 0.08,
                delta: 0.05,
                rng: SeededRng::new(21, 2),
                record_thetas: false,
            },
        ];
        let (results, stats) = run_many_with_stats(&inst, specs);
        let lone1 = run_alg1(&inst, 0.05, 0.1, SeededRng::new(21, 1)).unwrap();
        let lone2 = run_alg2(&inst, 0.08, 0.05, SeededRng::new(21, 2)).unwrap();
        let got1 = results[0].as_ref().unwrap();
        let got2 = results[1].as_ref().unwrap();
        assert_eq!(got1.final_theta, lone1.final_theta);
        assert_eq!(got1.incurred, lone1.incurred);
        assert_eq!(got2.final_theta, lone2.final_theta);
        assert_eq!(got2.incurred, lone2.incurred);
        assert_eq!(stats.rounds, 300);
    }

    #[test]
    fn average_regret_of_played_optimum_is_nonpositive_at_tiny_delta() {
        // Playing the hindsight optimum with a vanishing perturbation leaves
        // only the perturbation's own loss contribution, which vanishes too.
        let inst = tiny_instance(50);
        let (xs, ys) = inst.materialize();
        let opt = hindsight_optimum(&xs, &ys, inst.c_theta()).unwrap();
        // Construct a synthetic trace that "played" the optimum each round.
        let mut incurred = Vec::new();
        let mut cum = Vec::new();
        let mut total = 0.0;
        inst.for_each_round(|_, s, a, _| {
            let r = opt.dot(s) - a;
            total += r * r;
            incurred.push(r * r);
            cum.push(total);
        });
        let trace = OlrTrace {
            algorithm: OlrAlgorithm::ActionSign,
            alpha: 0.0,
            delta: 1e-9,
            incurred,
            cum_loss: cum,
            clean: vec![],
            thetas: None,
            final_theta: opt.clone(),
            max_theta_norm: opt.norm(),
            clipped_rounds: 0,
        };
        let reg = average_regret(&trace, &xs, &ys, inst.c_theta()).unwrap();
        assert!(reg.abs() < 1e-9, "regret of the optimum is {reg}");
    }

    #[test]
    fn average_regret_single_round_arithmetic() {
        // One round, played loss 1.0, best-in-ball loss 0.25.
        let xs = DMatrix::from_row_slice(1, 1, &[1.0]);
        let ys = DVector::from_column_slice(&[1.5]);
        let trace = OlrTrace {
            algorithm: OlrAlgorithm::ParamSphere,
            alpha: 0.0,
            delta: 0.1,
            incurred: vec![1.0],
            cum_loss: vec![1.0],
            clean: vec![],
            thetas: None,
            final_theta: DVector::zeros(1),
            max_theta_norm: 0.0,
            clipped_rounds: 0,
        };
        // c_theta = 1 caps the prediction at 1.0, so the best loss is 0.25.
        let reg = average_regret(&trace, &xs, &ys, 1.0).unwrap();
        assert_relative_eq!(reg, 0.75, epsilon = 1e-9);
    }

    #[test]
    fn schedule_alg1_matches_hand_value() {
        let tc = TheoryConstants {
            c_theta: 1.0,
            c_s: 1.0,
            c_a: 1.0,
            loss_bound: 1.0,
            smoothness: 1.0,
            lipschitz: 1.0,
            policy_jac_bound: 0.0,
            q_smoothness: 0.0,
            q_lipschitz: 0.0,
            q_bound: 0.0,
            sigma: 0.0,
        };
        let (alpha, delta) = theoretical_schedule_alg1(&tc, 1, 16).unwrap();
        assert_relative_eq!(delta, 0.5);
        assert_relative_eq!(alpha, 0.0625);
    }

    #[test]
    fn schedule_alg2_matches_hand_value() {
        let tc = TheoryConstants {
            c_theta: 1.0,
            c_s: 1.0,
            c_a: 1.0,
            loss_bound: 1.0,
            smoothness: 1.0,
            lipschitz: 1.0,
            policy_jac_bound: 0.0,
            q_smoothness: 0.0,
            q_lipschitz: 0.0,
            q_bound: 0.0,
            sigma: 0.0,
        };
        let (alpha, delta) = theoretical_schedule_alg2(&tc, 16).unwrap();
        assert_relative_eq!(delta, 0.5);
        assert_relative_eq!(alpha, 0.0625);
    }

    #[test]
    fn schedule_alg1_dimension_scaling() {
        let tc = TheoryConstants::from_olr_bounds(1.0, 1.0, 1.0).unwrap();
        let (a1, d1) = theoretical_schedule_alg1(&tc, 10, 10_000).unwrap();
        let (a2, d2) = theoretical_schedule_alg1(&tc, 20, 10_000).unwrap();
        assert_relative_eq!(d2 / d1, 2.0f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(a1 / a2, 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn schedules_reject_degenerate_inputs() {
        let tc = TheoryConstants::from_olr_bounds(1.0, 1.0, 1.0).unwrap();
        assert!(theoretical_schedule_alg1(&tc, 0, 10).is_err());
        assert!(theoretical_schedule_alg1(&tc, 10, 0).is_err());
        assert!(theoretical_schedule_alg2(&tc, 0).is_err());
    }
}
