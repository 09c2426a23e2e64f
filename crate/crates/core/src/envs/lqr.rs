//! Finite-horizon stochastic linear-quadratic control.
//!
//! The environment follows `x_{t+1} = A x_t + B u_t + xi_t` with quadratic
//! step cost `x^T Q x + u^T R u` and isotropic Gaussian process noise. For
//! a linear policy `u = Theta x` the episode-cost expectation and its exact
//! parameter gradient have closed forms via covariance recursions, so every
//! sampled quantity in the crate can be checked against ground truth here.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Env;
use crate::error::{Error, Result};
use crate::policy::{LinearPolicy, Policy};
use crate::rng::SeededRng;

/// Problem data for one LQR instance. Construction validates stability and
/// definiteness, so a value of this type is always a well-posed problem.
#[derive(Debug, Clone)]
pub struct LqrSpec {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    noise_std: f64,
    horizon: usize,
    init_cov: DMatrix<f64>,
}

/// File form of a spec: version tag plus matrices as row-major arrays.
#[derive(Serialize, Deserialize)]
struct LqrSpecFile {
    version: u32,
    state_dim: usize,
    action_dim: usize,
    horizon: usize,
    noise_std: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    q: Vec<f64>,
    r: Vec<f64>,
    init_cov: Vec<f64>,
}

const SPEC_FILE_VERSION: u32 = 1;

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max)
}

fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let scale = m.norm().max(1.0);
    if (m - m.transpose()).norm() > 1e-10 * scale {
        return Err(Error::InvalidSpec(format!("{name} is not symmetric")));
    }
    Ok(())
}

fn check_psd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    check_symmetric(m, name)?;
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-10 * max.max(1.0) {
        return Err(Error::InvalidSpec(format!(
            "{name} has negative eigenvalue {min}"
        )));
    }
    Ok(())
}

/// Factor `L` with `L L^T = m`, valid for any PSD matrix.
fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = m.clone().cholesky() {
        return chol.l();
    }
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let sqrt = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
}

impl LqrSpec {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        noise_std: f64,
        horizon: usize,
        init_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::InvalidSpec("dynamics matrix must be square".into()));
        }
        let m = b.ncols();
        if m == 0 || b.nrows() != n {
            return Err(Error::InvalidSpec(format!(
                "input matrix is {}x{}, expected {}or more columns",
                b.nrows(),
                b.ncols(),
                n
            )));
        }
        if q.nrows() != n || q.ncols() != n || init_cov.nrows() != n || init_cov.ncols() != n {
            return Err(Error::InvalidSpec(
                "state cost and initial covariance must match the state dimension".into(),
            ));
        }
        if r.nrows() != m || r.ncols() != m {
            return Err(Error::InvalidSpec(
                "action cost must match the action dimension".into(),
            ));
        }
        if horizon == 0 {
            return Err(Error::InvalidSpec("horizon must be positive".into()));
        }
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "noise level must be finite and nonnegative, got {noise_std}"
            )));
        }
        let any_bad = a.iter().chain(b.iter()).chain(q.iter()).chain(r.iter())
            .chain(init_cov.iter())
            .any(|v| !v.is_finite());
        if any_bad {
            return Err(Error::NonFinite("spec matrices".into()));
        }
        let rho = spectral_radius(&a);
        if rho >= 1.0 {
            return Err(Error::InvalidSpec(format!(
                "open-loop spectral radius {rho} is not below 1"
            )));
        }
        check_psd(&q, "state cost")?;
        check_psd(&init_cov, "initial covariance")?;
        check_symmetric(&r, "action cost")?;
        if r.clone().cholesky().is_none() {
            return Err(Error::InvalidSpec(
                "action cost must be positive definite".into(),
            ));
        }
        Ok(LqrSpec {
            a,
            b,
            q,
            r,
            noise_std,
            horizon,
            init_cov,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn init_cov(&self) -> &DMatrix<f64> {
        &self.init_cov
    }

    /// Same system with a different noise level.
    pub fn with_noise_std(&self, noise_std: f64) -> Result<Self> {
        LqrSpec::new(
            self.a.clone(),
            self.b.clone(),
            self.q.clone(),
            self.r.clone(),
            noise_std,
            self.horizon,
            self.init_cov.clone(),
        )
    }

    /// Same system with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        LqrSpec::new(
            self.a.clone(),
            self.b.clone(),
            self.q.clone(),
            self.r.clone(),
            self.noise_std,
            horizon,
            self.init_cov.clone(),
        )
    }

    /// Versioned JSON form with matrices as row-major arrays, so an exact
    /// environment can be pinned and shared across runs.
    pub fn to_json(&self) -> Result<String> {
        let file = LqrSpecFile {
            version: SPEC_FILE_VERSION,
            state_dim: self.state_dim(),
            action_dim: self.action_dim(),
            horizon: self.horizon,
            noise_std: self.noise_std,
            a: row_major(&self.a),
            b: row_major(&self.b),
            q: row_major(&self.q),
            r: row_major(&self.r),
            init_cov: row_major(&self.init_cov),
        };
        serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Config(format!("spec serialization failed: {e}")))
    }

    /// Parse and re-validate a spec written by [`LqrSpec::to_json`].
    pub fn from_json(text: &str) -> Result<Self> {
        let file: LqrSpecFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidSpec(format!("unparseable spec file: {e}")))?;
        if file.version != SPEC_FILE_VERSION {
            return Err(Error::InvalidSpec(format!(
                "spec file version {} unsupported (expected {SPEC_FILE_VERSION})",
                file.version
            )));
        }
        let (n, m) = (file.state_dim, file.action_dim);
        let expect = |name: &str, got: usize, want: usize| -> Result<()> {
            if got != want {
                return Err(Error::InvalidSpec(format!(
                    "{name} has {got} entries, expected {want}"
                )));
            }
            Ok(())
        };
        expect("a", file.a.len(), n * n)?;
        expect("b", file.b.len(), n * m)?;
        expect("q", file.q.len(), n * n)?;
        expect("r", file.r.len(), m * m)?;
        expect("init_cov", file.init_cov.len(), n * n)?;
        LqrSpec::new(
            DMatrix::from_row_slice(n, n, &file.a),
            DMatrix::from_row_slice(n, m, &file.b),
            DMatrix::from_row_slice(n, n, &file.q),
            DMatrix::from_row_slice(m, m, &file.r),
            file.noise_std,
            file.horizon,
            DMatrix::from_row_slice(n, n, &file.init_cov),
        )
    }
}

/// Random stable system: standard-normal `A` rescaled to spectral radius
/// 0.95, standard-normal `B`, `Q = 1e-3 I`, `R = I`, unit initial state
/// covariance.
pub fn make_random_lqr(
    rng: &mut SeededRng,
    n: usize,
    m: usize,
    noise_std: f64,
    horizon: usize,
) -> Result<LqrSpec> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidDimension(
            "state and action dimensions must be positive".into(),
        ));
    }
    let a = loop {
        let raw = DMatrix::from_fn(n, n, |_, _| rng.normal());
        let rho = spectral_radius(&raw);
        // A zero-spectral-radius draw cannot be rescaled; resample.
        if rho > 1e-9 {
            break raw * (0.95 / rho);
        }
    };
    let b = DMatrix::from_fn(n, m, |_, _| rng.normal());
    LqrSpec::new(
        a,
        b,
        DMatrix::identity(n, n) * 1e-3,
        DMatrix::identity(m, m),
        noise_std,
        horizon,
        DMatrix::identity(n, n),
    )
}

/// Stepped episode view of a spec.
#[derive(Debug, Clone)]
pub struct LqrEnv {
    spec: LqrSpec,
    init_factor: DMatrix<f64>,
    state: DVector<f64>,
    steps: usize,
}

impl LqrEnv {
    pub fn new(spec: LqrSpec) -> Self {
        let init_factor = psd_factor(&spec.init_cov);
        let n = spec.state_dim();
        LqrEnv {
            spec,
            init_factor,
            state: DVector::zeros(n),
            steps: 0,
        }
    }

    pub fn spec(&self) -> &LqrSpec {
        &self.spec
    }

    /// Start an episode from an exact state instead of a random draw.
    pub fn reset_to(&mut self, x0: DVector<f64>) -> DVector<f64> {
        self.state = x0.clone();
        self.steps = 0;
        x0
    }
}

impl Env for LqrEnv {
    fn state_dim(&self) -> usize {
        self.spec.state_dim()
    }

    fn action_dim(&self) -> usize {
        self.spec.action_dim()
    }

    fn horizon(&self) -> usize {
        self.spec.horizon
    }

    fn reset(&mut self, rng: &mut SeededRng) -> DVector<f64> {
        let xi = rng.normal_vec(self.spec.state_dim());
        self.reset_to(&self.init_factor * xi)
    }

    fn step(
        &mut self,
        action: &DVector<f64>,
        rng: &mut SeededRng,
    ) -> Result<(DVector<f64>, f64)> {
        if action.len() != self.spec.action_dim() {
            return Err(Error::DimensionMismatch(format!(
                "action has {} entries, expected {}",
                action.len(),
                self.spec.action_dim()
            )));
        }
        if self.steps >= self.spec.horizon {
            return Err(Error::EpisodeOver);
        }
        let x = &self.state;
        let cost = x.dot(&(&self.spec.q * x)) + action.dot(&(&self.spec.r * action));
        let mut next = &self.spec.a * x + &self.spec.b * action;
        if self.spec.noise_std > 0.0 {
            next += rng.normal_vec(self.spec.state_dim()) * self.spec.noise_std;
        }
        self.steps += 1;
        self.state = next.clone();
        Ok((next, cost))
    }
}

/// One full episode of `spec` under `policy` from a random initial state.
pub fn lqr_rollout(
    spec: &LqrSpec,
    policy: &LinearPolicy,
    rng: &mut SeededRng,
) -> Result<super::RolloutRecord> {
    let mut env = LqrEnv::new(spec.clone());
    super::rollout(&mut env, policy, rng)
}

fn check_policy(spec: &LqrSpec, policy: &LinearPolicy) -> Result<()> {
    if policy.state_dim() != spec.state_dim() || policy.action_dim() != spec.action_dim() {
        return Err(Error::DimensionMismatch(format!(
            "policy maps {}->{} but system needs {}->{}",
            policy.state_dim(),
            policy.action_dim(),
            spec.state_dim(),
            spec.action_dim()
        )));
    }
    Ok(())
}

/// Expected episode cost of the linear policy, by covariance recursion:
/// with `A_c = A + B Theta` and `S = Q + Theta^T R Theta`,
/// `J = sum_t trace(S M_t)` where `M_0` is the initial covariance and
/// `M_{t+1} = A_c M_t A_c^T + noise_std^2 I`.
pub fn lqr_exact_objective(spec: &LqrSpec, policy: &LinearPolicy) -> Result<f64> {
    check_policy(spec, policy)?;
    let theta = policy.theta();
    let a_c = &spec.a + &spec.b * theta;
    let s = &spec.q + theta.transpose() * &spec.r * theta;
    let sigma2 = spec.noise_std * spec.noise_std;
    let mut m = spec.init_cov.clone();
    let mut j = 0.0;
    for _ in 0..spec.horizon {
        j += (&s * &m).trace();
        m = &a_c * m * a_c.transpose();
        for i in 0..spec.state_dim() {
            m[(i, i)] += sigma2;
        }
    }
    Ok(j)
}

/// Exact gradient of [`lqr_exact_objective`] in the policy's flat parameter
/// layout, by an adjoint recursion: `P_H = 0`,
/// `P_t = Q + Theta^T R Theta + A_c^T P_{t+1} A_c`, and
/// `grad = sum_t 2 (R Theta + B^T P_{t+1} A_c) M_t`.
pub fn lqr_exact_gradient(spec: &LqrSpec, policy: &LinearPolicy) -> Result<DVector<f64>> {
    check_policy(spec, policy)?;
    let theta = policy.theta();
    let n = spec.state_dim();
    let h = spec.horizon;
    let a_c = &spec.a + &spec.b * theta;
    let s = &spec.q + theta.transpose() * &spec.r * theta;
    let sigma2 = spec.noise_std * spec.noise_std;

    let mut covs = Vec::with_capacity(h);
    let mut m = spec.init_cov.clone();
    for _ in 0..h {
        covs.push(m.clone());
        m = &a_c * m * a_c.transpose();
        for i in 0..n {
            m[(i, i)] += sigma2;
        }
    }

    let r_theta = &spec.r * theta;
    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut grad = DMatrix::<f64>::zeros(spec.action_dim(), n);
    // Walk backward so `p` holds P_{t+1} when processing step t.
    for t in (0..h).rev() {
        let coeff = &r_theta + spec.b.transpose() * &p * &a_c;
        grad += (coeff * &covs[t]) * 2.0;
        p = &s + a_c.transpose() * &p * &a_c;
    }
    Ok(DVector::from_column_slice(grad.as_slice()))
}
