//! Synthetic online-regression streams with correlated Gaussian features.
//!
//! Each round's feature vector has a constant 1 in its first slot and a
//! correlated Gaussian draw in the rest; targets are a fixed unit-norm
//! linear function of the features plus small Gaussian label noise. The
//! declared norm bounds are set far enough into the Gaussian tail that
//! clipping is a once-in-a-run event, recorded when it happens.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::olr::{OlrInstance, SyntheticStream};
use crate::rng::SeededRng;

/// Largest eigenvalue of `M M^T` by power iteration on the factor.
fn top_eigenvalue(factor: &DMatrix<f64>) -> f64 {
    let n = factor.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lam = 0.0;
    for _ in 0..200 {
        let w = factor * (factor.transpose() * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        let new_lam = norm;
        let done = (new_lam - lam).abs() <= 1e-12 * new_lam.max(1.0);
        v = next;
        lam = new_lam;
        if done {
            break;
        }
    }
    lam
}

/// Default stream: label noise 0.001 and comparator-ball radius 2.
pub fn gen_regression_stream(
    rng: &mut SeededRng,
    b: usize,
    num_rounds: usize,
) -> Result<OlrInstance> {
    gen_regression_stream_with(rng, b, num_rounds, 1e-3, 2.0)
}

/// Stream generator with explicit label-noise level and ball radius.
///
/// The feature covariance for the non-bias block is `C^T C` from a
/// standard-normal `C`, rescaled so its trace equals `b`; the ground-truth
/// weight vector is uniform on the unit sphere. Declared bounds: the
/// feature-norm bound sits six covariance-adjusted deviations above the
/// mean square norm, and the target bound adds an eight-deviation noise
/// tail, so either clip fires with probability well under 1e-7 per round.
pub fn gen_regression_stream_with(
    rng: &mut SeededRng,
    b: usize,
    num_rounds: usize,
    noise_std: f64,
    c_theta: f64,
) -> Result<OlrInstance> {
    if b < 2 {
        return Err(Error::InvalidDimension(
            "need at least a bias slot and one feature".into(),
        ));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "label noise must be finite and nonnegative, got {noise_std}"
        )));
    }
    let weights = {
        let raw = rng.normal_vec(b);
        let norm = raw.norm();
        if norm == 0.0 {
            return Err(Error::NonFinite("degenerate weight draw".into()));
        }
        raw / norm
    };
    let z_dim = b - 1;
    let c_raw = DMatrix::from_fn(z_dim, z_dim, |_, _| rng.normal());
    // Covariance C^T C, trace-normalized to b; the factor M = s C^T gives
    // M M^T = s^2 C^T C directly.
    let trace = c_raw.iter().map(|v| v * v).sum::<f64>();
    if trace <= 0.0 {
        return Err(Error::NonFinite("degenerate covariance draw".into()));
    }
    let scale = (b as f64 / trace).sqrt();
    let factor = c_raw.transpose() * scale;

    let lam_max = top_eigenvalue(&factor);
    let c_s = (1.0 + ((b as f64).sqrt() + 6.0 * lam_max.sqrt()).powi(2)).sqrt();
    // |target| <= ||w|| * ||x|| + noise tail, and ||w|| = 1.
    let c_a = c_s + 8.0 * noise_std;

    let tag = rng.next_u64();
    let replay = rng.child(tag);
    let stream = SyntheticStream {
        weights,
        factor,
        noise_std,
        seed: replay.seed(),
        stream: replay.stream(),
    };
    OlrInstance::from_synthetic(stream, num_rounds, c_theta, c_s, c_a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::olr::hindsight_optimum;

    #[test]
    fn bias_slot_is_always_one() {
        let mut rng = SeededRng::new(1, 0);
        let inst = gen_regression_stream(&mut rng, 8, 500).unwrap();
        inst.for_each_round(|_, x, _, _| assert_eq!(x[0], 1.0));
    }

    #[test]
    fn noise_free_stream_is_exactly_realizable() {
        let mut rng = SeededRng::new(2, 0);
        let inst = gen_regression_stream_with(&mut rng, 6, 60, 0.0, 2.0).unwrap();
        let w = inst.true_weights().unwrap();
        let (x, y) = inst.materialize();
        let theta = hindsight_optimum(&x, &y, 2.0).unwrap();
        let mse = (&x * &theta - &y).norm_squared() / y.len() as f64;
        assert!(mse <= 1e-10, "mse {mse}");
        assert!((theta - w).norm() <= 1e-6);
    }

    #[test]
    fn same_seed_reproduces_the_stream_bitwise() {
        let gen = || {
            let mut rng = SeededRng::new(77, 3);
            gen_regression_stream(&mut rng, 10, 300).unwrap()
        };
        let (a, b) = (gen(), gen());
        let ra = a.collect_rounds();
        let rb = b.collect_rounds();
        assert_eq!(ra.len(), rb.len());
        for (p, q) in ra.iter().zip(rb.iter()) {
            assert_eq!(p.features, q.features);
            assert_eq!(p.target, q.target);
        }
    }

    #[test]
    fn distinct_calls_from_one_rng_produce_distinct_streams() {
        let mut rng = SeededRng::new(77, 3);
        let a = gen_regression_stream(&mut rng, 10, 10).unwrap();
        let b = gen_regression_stream(&mut rng, 10, 10).unwrap();
        let ra = a.collect_rounds();
        let rb = b.collect_rounds();
        assert_ne!(ra[0].features, rb[0].features);
    }

    #[test]
    fn clipping_is_rare_and_bounds_hold() {
        let mut rng = SeededRng::new(3, 0);
        let inst = gen_regression_stream(&mut rng, 10, 10_000).unwrap();
        let mut clipped = 0usize;
        inst.for_each_round(|_, x, y, c| {
            assert!(x.norm() <= inst.c_s() + 1e-9);
            assert!(y.abs() <= inst.c_a() + 1e-9);
            if c {
                clipped += 1;
            }
        });
        assert!(clipped <= 10, "{clipped} of 10000 rounds clipped");
    }

    #[test]
    fn mean_square_feature_norm_tracks_the_normalized_trace() {
        let mut rng = SeededRng::new(4, 0);
        let inst = gen_regression_stream(&mut rng, 12, 4000).unwrap();
        let mut acc = 0.0;
        inst.for_each_round(|_, x, _, _| acc += x.norm_squared());
        let mean = acc / 4000.0;
        // E||x||^2 = 1 + trace(Sigma) = 1 + b = 13.
        assert!((mean - 13.0).abs() < 1.5, "mean square norm {mean}");
    }

    #[test]
    fn tiny_dimension_is_rejected() {
        let mut rng = SeededRng::new(5, 0);
        assert!(gen_regression_stream(&mut rng, 1, 10).is_err());
    }
}
