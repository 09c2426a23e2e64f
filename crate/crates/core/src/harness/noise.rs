//! Stochasticity sweep: samples to stationarity versus process noise.
//!
//! A fixed plant runs the parameter-space optimizer from a random starting
//! gain until the exact squared gradient norm falls below a threshold, once
//! per (noise level, seed) cell under a hard step cap. Hyperparameters are
//! tuned once at a single reference noise level and reused across the whole
//! sweep so cells differ only in the noise.

use rayon::prelude::*;

use crate::envs::{lqr_exact_gradient, make_random_lqr, LqrSpec};
use crate::error::{Error, Result};
use crate::policy::LinearPolicy;
use crate::rng::SeededRng;
use crate::search::{run_until_stationary, SearchConfig, SearchMethod};

use super::config::{ExperimentConfig, NoiseSweepParams};
use super::record::{kv_string, RunRecord};
use super::tune::{product_grid, tune_grid};
use super::{build_pool, cell_stream, stream_tags, TuneReportLine};

const PRESET: &str = "lqr-noise-sweep";

const STREAM_SYSTEM: u64 = 0;
const STREAM_THETA0: u64 = 1;
const STREAM_TUNE: u64 = 2;
/// Evaluation cells start here, one stream per noise level.
const STREAM_CELL_BASE: u64 = 3;

pub fn base_spec(p: &NoiseSweepParams) -> Result<LqrSpec> {
    let mut rng = SeededRng::new(p.system_seed, cell_stream(stream_tags::NOISE, STREAM_SYSTEM));
    make_random_lqr(&mut rng, p.state_dim, p.action_dim, 0.0, p.horizon)
}

/// Per-step noise standard deviation for a covariance level `c I`.
fn noise_std(level: f64) -> f64 {
    level.sqrt()
}

fn theta0(p: &NoiseSweepParams, seed: u64) -> Result<LinearPolicy> {
    let mut rng = SeededRng::new(seed, cell_stream(stream_tags::NOISE, STREAM_THETA0));
    let raw = rng.normal_vec(p.state_dim * p.action_dim);
    let norm = raw.norm();
    if norm == 0.0 {
        return Err(Error::NonFinite("degenerate starting gain draw".into()));
    }
    LinearPolicy::from_flat(p.action_dim, p.state_dim, &(raw * (p.theta0_norm / norm)))
}

fn search_cfg(p: &NoiseSweepParams, (alpha, delta): (f64, f64)) -> SearchConfig {
    SearchConfig {
        alpha,
        delta,
        num_directions: p.num_directions,
        top_directions: p.top_directions,
        max_env_steps: p.max_env_steps,
        eval_every: 1,
    }
}

fn env_kv(p: &NoiseSweepParams, level: f64) -> String {
    kv_string(&[
        ("n", p.state_dim.to_string()),
        ("m", p.action_dim.to_string()),
        ("h", p.horizon.to_string()),
        ("noise_cov", format!("{level}")),
        ("threshold", format!("{}", p.threshold)),
    ])
}

fn hyper_kv(p: &NoiseSweepParams, (alpha, delta): (f64, f64)) -> String {
    kv_string(&[
        ("alpha", format!("{alpha}")),
        ("delta", format!("{delta}")),
        ("dirs", p.num_directions.to_string()),
        ("top", p.top_directions.to_string()),
    ])
}

fn run_one(
    spec: &LqrSpec,
    p: &NoiseSweepParams,
    seed: u64,
    stream: u64,
    setting: (f64, f64),
) -> Result<(u64, bool)> {
    let policy0 = theta0(p, seed)?;
    let mut rng = SeededRng::new(seed, cell_stream(stream_tags::NOISE, stream));
    run_until_stationary(
        spec,
        &policy0,
        &search_cfg(p, setting),
        SearchMethod::ParamSearch,
        p.threshold,
        &mut rng,
    )
}

/// Tune `(alpha, delta)` at the reference noise level. Runs that never
/// reach the threshold score a large finite penalty rather than poisoning
/// the grid point, so a sluggish setting still loses to any that finishes.
fn tune(cfg: &ExperimentConfig, base: &LqrSpec) -> Result<(f64, f64)> {
    let p = &cfg.noise;
    let spec = base.with_noise_std(noise_std(p.tune_noise))?;
    let grid = product_grid(&p.alpha_grid, &p.delta_grid);
    let outcome = tune_grid(&grid, &cfg.tuning_seeds, |&setting, ts| {
        let (steps, reached) = run_one(&spec, p, ts, STREAM_TUNE, setting)?;
        Ok(if reached {
            steps as f64
        } else {
            10.0 * p.max_env_steps as f64
        })
    })?;
    Ok(outcome.best)
}

fn eval_cell(
    cfg: &ExperimentConfig,
    base: &LqrSpec,
    level_index: usize,
    seed: u64,
    setting: (f64, f64),
) -> Vec<RunRecord> {
    let p = &cfg.noise;
    let level = p.noise_grid[level_index];
    let env = env_kv(p, level);
    let hyper = hyper_kv(p, setting);
    let base_row = |metric: &str, at: u64, value: f64| RunRecord {
        preset: PRESET.to_string(),
        algorithm: SearchMethod::ParamSearch.to_string(),
        seed,
        env_params: env.clone(),
        hyperparams: hyper.clone(),
        checkpoint_env_steps: at,
        metric_name: metric.to_string(),
        metric_value: value,
    };
    let mut out = Vec::new();
    let result = base.with_noise_std(noise_std(level)).and_then(|spec| {
        let stream = STREAM_CELL_BASE + level_index as u64;
        run_one(&spec, p, seed, stream, setting)
    });
    match result {
        Ok((steps, reached)) => {
            // Censored at the consumed budget when the threshold was never
            // reached; `reached` disambiguates.
            out.push(base_row("samples_to_stationarity", steps, steps as f64));
            out.push(base_row("reached", steps, if reached { 1.0 } else { 0.0 }));
        }
        Err(_) => out.push(base_row("error", 0, 1.0)),
    }
    out
}

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let p = &cfg.noise;
    let base = base_spec(p)?;
    let setting = tune(cfg, &base)?;
    let mut cells = Vec::new();
    for level_index in 0..p.noise_grid.len() {
        for &seed in &cfg.seeds {
            cells.push((level_index, seed));
        }
    }
    let pool = build_pool()?;
    let per_cell: Vec<Vec<RunRecord>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(level_index, seed)| eval_cell(cfg, &base, level_index, seed, setting))
            .collect()
    });
    Ok(per_cell.into_iter().flatten().collect())
}

pub fn tune_report(cfg: &ExperimentConfig) -> Result<Vec<TuneReportLine>> {
    let base = base_spec(&cfg.noise)?;
    let setting = tune(cfg, &base)?;
    Ok(vec![TuneReportLine {
        algorithm: format!(
            "{} noise_cov={}",
            SearchMethod::ParamSearch,
            cfg.noise.tune_noise
        ),
        chosen: hyper_kv(&cfg.noise, setting),
        mean_score: f64::NAN,
    }])
}

/// Squared gradient norm at the shared starting gain for one (level, seed);
/// exposed so config calibration can verify runs do not start stationary.
pub fn start_grad_norm_sq(cfg: &ExperimentConfig, level: f64, seed: u64) -> Result<f64> {
    let p = &cfg.noise;
    let spec = base_spec(p)?.with_noise_std(noise_std(level))?;
    let policy0 = theta0(p, seed)?;
    Ok(lqr_exact_gradient(&spec, &policy0)?.norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.preset = super::super::Preset::LqrNoiseSweep;
        cfg.seeds = vec![1, 2];
        cfg.tuning_seeds = vec![91];
        cfg.noise.state_dim = 3;
        cfg.noise.action_dim = 1;
        cfg.noise.horizon = 8;
        cfg.noise.noise_grid = vec![1e-4, 1e-2];
        cfg.noise.threshold = 0.05;
        cfg.noise.max_env_steps = 60_000;
        cfg.noise.tune_noise = 1e-4;
        cfg.noise.alpha_grid = vec![1e-3];
        cfg.noise.delta_grid = vec![0.05];
        cfg.noise.num_directions = 4;
        cfg.noise.top_directions = 4;
        cfg.noise.theta0_norm = 0.4;
        cfg
    }

    #[test]
    fn every_cell_reports_samples_and_reached_flag() {
        let cfg = tiny_config();
        let records = run(&cfg).unwrap();
        assert!(records.iter().all(|r| r.metric_name != "error"));
        for level in ["0.0001", "0.01"] {
            for seed in [1, 2] {
                let cell: Vec<_> = records
                    .iter()
                    .filter(|r| {
                        r.seed == seed && r.env_params.contains(&format!("noise_cov={level}"))
                    })
                    .collect();
                let samples: Vec<_> = cell
                    .iter()
                    .filter(|r| r.metric_name == "samples_to_stationarity")
                    .collect();
                let reached: Vec<_> =
                    cell.iter().filter(|r| r.metric_name == "reached").collect();
                assert_eq!(samples.len(), 1);
                assert_eq!(reached.len(), 1);
                assert!(samples[0].metric_value <= cfg.noise.max_env_steps as f64);
                assert!(reached[0].metric_value == 0.0 || reached[0].metric_value == 1.0);
            }
        }
    }

    #[test]
    fn rerun_is_identical() {
        let cfg = tiny_config();
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
    }

    #[test]
    fn starting_gain_is_not_already_stationary() {
        let cfg = tiny_config();
        for seed in [1, 2] {
            let g0 = start_grad_norm_sq(&cfg, 1e-4, seed).unwrap();
            assert!(g0 > cfg.noise.threshold, "seed {seed}: {g0}");
        }
    }

    #[test]
    fn tune_report_is_a_single_line_from_the_grid() {
        let cfg = tiny_config();
        let lines = tune_report(&cfg).unwrap();
        assert_eq!(lines.len(), 1);
        assert!(lines[0].chosen.contains("alpha=0.001"));
        assert!(lines[0].chosen.contains("delta=0.05"));
    }
}
