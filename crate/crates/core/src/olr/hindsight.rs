//! Best fixed parameter in hindsight, constrained to a norm ball.
//!
//! Solves `min ||X theta - y||^2 subject to ||theta|| <= c` exactly: the
//! unconstrained (minimum-norm) least-squares solution when it fits inside
//! the ball, otherwise the boundary solution found by a ridge-parameter
//! bisection. Every returned solution is certified against its first-order
//! optimality conditions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff separating numerical rank from noise.
const RANK_TOL: f64 = 1e-12;

/// Absolute tolerance on the boundary norm |theta(lambda)| = c.
const NORM_TOL: f64 = 1e-10;

/// Residual certification threshold for the stationarity conditions.
const KKT_TOL: f64 = 1e-8;

/// Constrained least squares over explicit data (rounds as rows of `x`).
pub fn hindsight_optimum(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    c_theta: f64,
) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} data rows but {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidDimension("empty data matrix".into()));
    }
    let gram = x.transpose() * x;
    let cross = x.transpose() * y;
    hindsight_from_gram(&gram, &cross, c_theta)
}

/// Constrained least squares from sufficient statistics `gram = X^T X`,
/// `cross = X^T y`. This is the form used on streams too large to hold.
pub fn hindsight_from_gram(
    gram: &DMatrix<f64>,
    cross: &DVector<f64>,
    c_theta: f64,
) -> Result<DVector<f64>> {
    if !(c_theta > 0.0) || !c_theta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "ball radius must be positive and finite, got {c_theta}"
        )));
    }
    let d = gram.nrows();
    if gram.ncols() != d || cross.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "gram is {}x{}, cross has length {}",
            gram.nrows(),
            gram.ncols(),
            cross.len()
        )));
    }
    if gram.iter().any(|v| !v.is_finite()) || cross.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("hindsight statistics".into()));
    }

    let eig = nalgebra::SymmetricEigen::new(gram.clone());
    let lam_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = lam_max * RANK_TOL;
    // Coordinates of the right-hand side in the eigenbasis.
    let coords = eig.eigenvectors.transpose() * cross;

    // Minimum-norm unconstrained solution: invert only the numerical range.
    let norm_sq_at = |ridge: f64| -> f64 {
        let mut acc = 0.0;
        for i in 0..d {
            let lam = eig.eigenvalues[i];
            if ridge == 0.0 && lam <= cutoff {
                continue;
            }
            let w = coords[i] / (lam + ridge);
            acc += w * w;
        }
        acc
    };
    let build = |ridge: f64| -> DVector<f64> {
        let mut weights = DVector::zeros(d);
        for i in 0..d {
            let lam = eig.eigenvalues[i];
            if ridge == 0.0 && lam <= cutoff {
                continue;
            }
            weights[i] = coords[i] / (lam + ridge);
        }
        &eig.eigenvectors * weights
    };

    let interior = build(0.0);
    let (theta, ridge) = if interior.norm() <= c_theta {
        (interior, 0.0)
    } else {
        // ||theta(ridge)|| decreases monotonically; at hi it is under c.
        let mut lo = 0.0f64;
        let mut hi = (cross.norm() / c_theta).max(1e-300);
        while norm_sq_at(hi).sqrt() > c_theta {
            hi *= 2.0;
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            let norm = norm_sq_at(mid).sqrt();
            if (norm - c_theta).abs() <= NORM_TOL {
                lo = mid;
                hi = mid;
                break;
            }
            if norm > c_theta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let ridge = 0.5 * (lo + hi);
        (build(ridge), ridge)
    };

    // Certify stationarity: gram*theta - cross + ridge*theta = 0 on the
    // numerical range, scaled by the problem size.
    let residual = gram * &theta - cross + &theta * ridge;
    let scale = lam_max.max(1.0) * c_theta.max(1.0) + cross.norm();
    if residual.norm() > KKT_TOL * scale {
        return Err(Error::SingularMatrix(format!(
            "stationarity residual {} above certification threshold",
            residual.norm()
        )));
    }
    if ridge > 0.0 && (theta.norm() - c_theta).abs() > 1e-6 * c_theta.max(1.0) {
        return Err(Error::SingularMatrix(format!(
            "boundary solve missed the ball radius: ||theta|| = {}",
            theta.norm()
        )));
    }
    Ok(theta)
}
