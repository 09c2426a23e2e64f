//! Grid-search hyperparameter tuning over a dedicated set of seeds.

use crate::error::{Error, Result};

/// Result of tuning: the winning grid point plus the per-point mean scores
/// (useful for reports and debugging).
#[derive(Debug, Clone)]
pub struct TuneOutcome<P> {
    pub best: P,
    pub best_index: usize,
    /// Mean score per grid point, in grid order. Failed points are infinite.
    pub mean_scores: Vec<f64>,
}

/// Pick the grid point with the lowest mean score across the tuning seeds.
///
/// A failed or non-finite evaluation poisons its grid point (score becomes
/// infinite) rather than aborting the search; only if every point is poisoned
/// does tuning itself fail. Ties resolve toward the earliest grid entry, so
/// a fixed grid gives a deterministic winner.
pub fn tune_grid<P: Clone>(
    grid: &[P],
    tuning_seeds: &[u64],
    mut score: impl FnMut(&P, u64) -> Result<f64>,
) -> Result<TuneOutcome<P>> {
    if grid.is_empty() {
        return Err(Error::Config("tuning grid is empty".into()));
    }
    if tuning_seeds.is_empty() {
        return Err(Error::Config("tuning seed list is empty".into()));
    }
    let mut mean_scores = Vec::with_capacity(grid.len());
    for point in grid {
        let mut total = 0.0;
        let mut poisoned = false;
        for &seed in tuning_seeds {
            match score(point, seed) {
                Ok(v) if v.is_finite() => total += v,
                _ => {
                    poisoned = true;
                    break;
                }
            }
        }
        mean_scores.push(if poisoned {
            f64::INFINITY
        } else {
            total / tuning_seeds.len() as f64
        });
    }
    let best = best_index(&mean_scores)?;
    Ok(TuneOutcome {
        best: grid[best].clone(),
        best_index: best,
        mean_scores,
    })
}

/// Index of the lowest finite score; ties resolve to the earliest index.
/// Errors when no score is finite.
pub fn best_index(mean_scores: &[f64]) -> Result<usize> {
    if mean_scores.is_empty() {
        return Err(Error::Config("tuning grid is empty".into()));
    }
    let mut best = 0;
    for (i, &s) in mean_scores.iter().enumerate() {
        if s < mean_scores[best] {
            best = i;
        }
    }
    if !mean_scores[best].is_finite() {
        return Err(Error::CellFailed("every tuning grid point failed".into()));
    }
    Ok(best)
}

/// Cartesian product of two grids, row-major (first grid varies slowest).
pub fn product_grid<A: Clone, B: Clone>(a: &[A], b: &[B]) -> Vec<(A, B)> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push((x.clone(), y.clone()));
        }
    }
    out
}
