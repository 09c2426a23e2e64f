//! Policies mapping states to actions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A differentiable-in-parameters policy. Parameters are exposed as a flat
/// vector so search code can treat every policy as a point in `R^d`.
pub trait Policy {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;

    /// Number of scalar parameters `d`.
    fn param_count(&self) -> usize;

    /// Current parameters as a flat vector (layout is policy-defined but
    /// must round-trip through [`Policy::set_params`]).
    fn params(&self) -> DVector<f64>;

    fn set_params(&mut self, p: &DVector<f64>) -> Result<()>;

    fn action(&self, state: &DVector<f64>) -> DVector<f64>;

    /// `J^T v` where `J = d action / d params` at `state`, returned in the
    /// same flat layout as [`Policy::params`]. This is the only piece of
    /// policy structure action-space search needs.
    fn jacobian_transpose_times(&self, state: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
}

/// Linear policy `a = Theta * s` with `Theta` of shape `p x b`.
///
/// Flat parameter layout is column-major (nalgebra's native order):
/// `flat[i + p*j] = Theta[(i, j)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy {
    theta: DMatrix<f64>,
}

impl LinearPolicy {
    pub fn new(theta: DMatrix<f64>) -> Self {
        LinearPolicy { theta }
    }

    /// All-zero policy with `p` outputs over `b` state features.
    pub fn zeros(p: usize, b: usize) -> Self {
        LinearPolicy {
            theta: DMatrix::zeros(p, b),
        }
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.theta
    }

    pub fn from_flat(p: usize, b: usize, flat: &DVector<f64>) -> Result<Self> {
        if flat.len() != p * b {
            return Err(Error::DimensionMismatch(format!(
                "flat parameter vector has length {}, expected {}",
                flat.len(),
                p * b
            )));
        }
        Ok(LinearPolicy {
            theta: DMatrix::from_column_slice(p, b, flat.as_slice()),
        })
    }
}

impl Policy for LinearPolicy {
    fn state_dim(&self) -> usize {
        self.theta.ncols()
    }

    fn action_dim(&self) -> usize {
        self.theta.nrows()
    }

    fn param_count(&self) -> usize {
        self.theta.len()
    }

    fn params(&self) -> DVector<f64> {
        DVector::from_column_slice(self.theta.as_slice())
    }

    fn set_params(&mut self, p: &DVector<f64>) -> Result<()> {
        if p.len() != self.theta.len() {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector has length {}, expected {}",
                p.len(),
                self.theta.len()
            )));
        }
        self.theta
            .as_mut_slice()
            .copy_from_slice(p.as_slice());
        Ok(())
    }

    fn action(&self, state: &DVector<f64>) -> DVector<f64> {
        &self.theta * state
    }

    fn jacobian_transpose_times(&self, state: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        // For a = Theta s the Jacobian w.r.t. Theta is rank one per output:
        // (J^T v)[(i, j)] = v_i * s_j, i.e. the outer product v s^T flattened.
        let outer = v * state.transpose();
        DVector::from_column_slice(outer.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn flat_roundtrip_is_identity() {
        let theta = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let p = LinearPolicy::new(theta.clone());
        let rebuilt = LinearPolicy::from_flat(2, 3, &p.params()).unwrap();
        assert_eq!(rebuilt.theta(), &theta);
    }

    #[test]
    fn action_is_matrix_vector_product() {
        let p = LinearPolicy::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
        let a = p.action(&DVector::from_column_slice(&[3.0, 4.0]));
        assert_relative_eq!(a[0], 3.0);
        assert_relative_eq!(a[1], 8.0);
    }

    #[test]
    fn jacobian_transpose_matches_finite_difference() {
        let mut p = LinearPolicy::new(DMatrix::from_row_slice(2, 3, &[0.1, -0.2, 0.3, 0.4, 0.5, -0.6]));
        let s = DVector::from_column_slice(&[1.5, -2.0, 0.5]);
        let v = DVector::from_column_slice(&[0.7, -1.1]);
        let analytic = p.jacobian_transpose_times(&s, &v);

        let base = p.params();
        let h = 1e-7;
        for k in 0..p.param_count() {
            let mut bumped = base.clone();
            bumped[k] += h;
            p.set_params(&bumped).unwrap();
            let plus = p.action(&s).dot(&v);
            bumped[k] -= 2.0 * h;
            p.set_params(&bumped).unwrap();
            let minus = p.action(&s).dot(&v);
            assert_relative_eq!(analytic[k], (plus - minus) / (2.0 * h), epsilon = 1e-6);
        }
    }

    #[test]
    fn set_params_rejects_wrong_length() {
        let mut p = LinearPolicy::zeros(2, 2);
        assert!(p.set_params(&DVector::zeros(3)).is_err());
    }
}
