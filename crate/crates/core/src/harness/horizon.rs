//! Fixed-budget horizon sweep on a shared linear-quadratic system.
//!
//! Both search families train on the same plant at each horizon length,
//! each cell receiving `steps_per_horizon * horizon` environment steps, so
//! longer tasks get proportionally more data. Final policies are scored by
//! the closed-form expected cost, which removes evaluation noise from the
//! comparison.

use rayon::prelude::*;

use crate::envs::{lqr_exact_objective, make_random_lqr, LqrEnv, LqrSpec};
use crate::error::{Error, Result};
use crate::policy::LinearPolicy;
use crate::rng::SeededRng;
use crate::search::{run_action_search, run_param_search, SearchConfig, SearchMethod, SearchTrace};

use super::config::{ExperimentConfig, HorizonParams};
use super::record::{kv_string, RunRecord};
use super::tune::{product_grid, tune_grid};
use super::{build_pool, cell_stream, stream_tags, TuneReportLine};

const PRESET: &str = "horizon-sweep";

const STREAM_SYSTEM: u64 = 0;
const STREAM_THETA0: u64 = 1;
/// Search cells start here: `2 + method_index * horizons + horizon_index`.
const STREAM_CELL_BASE: u64 = 2;

fn method_index(method: SearchMethod) -> u64 {
    match method {
        SearchMethod::ParamSearch => 0,
        SearchMethod::ActionSearch => 1,
    }
}

/// The fixed plant, drawn once from the system seed; horizon and noise are
/// applied per cell.
pub fn base_spec(p: &HorizonParams) -> Result<LqrSpec> {
    let mut rng = SeededRng::new(
        p.system_seed,
        cell_stream(stream_tags::HORIZON, STREAM_SYSTEM),
    );
    make_random_lqr(&mut rng, p.state_dim, p.action_dim, p.noise_std, 1)
}

fn spec_at(base: &LqrSpec, h: usize) -> Result<LqrSpec> {
    base.with_horizon(h)
}

/// Shared random starting gain for one seed; both methods start here.
fn theta0(p: &HorizonParams, seed: u64) -> Result<LinearPolicy> {
    let mut rng = SeededRng::new(seed, cell_stream(stream_tags::HORIZON, STREAM_THETA0));
    let raw = rng.normal_vec(p.state_dim * p.action_dim);
    let norm = raw.norm();
    if norm == 0.0 {
        return Err(Error::NonFinite("degenerate starting gain draw".into()));
    }
    LinearPolicy::from_flat(p.action_dim, p.state_dim, &(raw * (p.theta0_norm / norm)))
}

fn search_cfg(
    p: &HorizonParams,
    method: SearchMethod,
    h: usize,
    (alpha, delta): (f64, f64),
    eval_every: usize,
) -> SearchConfig {
    let dirs = match method {
        SearchMethod::ParamSearch => p.param_directions,
        SearchMethod::ActionSearch => p.action_directions,
    };
    SearchConfig {
        alpha,
        delta,
        num_directions: dirs,
        top_directions: dirs,
        max_env_steps: p.steps_per_horizon * h as u64,
        eval_every,
    }
}

fn env_kv(p: &HorizonParams, h: usize) -> String {
    kv_string(&[
        ("n", p.state_dim.to_string()),
        ("m", p.action_dim.to_string()),
        ("h", h.to_string()),
        ("noise_std", format!("{}", p.noise_std)),
        ("budget", (p.steps_per_horizon * h as u64).to_string()),
    ])
}

fn hyper_kv(p: &HorizonParams, method: SearchMethod, (alpha, delta): (f64, f64)) -> String {
    let dirs = match method {
        SearchMethod::ParamSearch => p.param_directions,
        SearchMethod::ActionSearch => p.action_directions,
    };
    kv_string(&[
        ("alpha", format!("{alpha}")),
        ("delta", format!("{delta}")),
        ("dirs", dirs.to_string()),
    ])
}

/// One training run; the tuning path and the evaluation path share this so
/// scores and records can never disagree. Tuning passes a huge
/// `eval_every` to skip mid-run checkpoints; the final policy is unaffected
/// because evaluation draws from an independent stream.
fn train(
    spec: &LqrSpec,
    p: &HorizonParams,
    method: SearchMethod,
    h_index: usize,
    seed: u64,
    setting: (f64, f64),
    eval_every: usize,
) -> Result<SearchTrace> {
    let policy0 = theta0(p, seed)?;
    let cell = STREAM_CELL_BASE + method_index(method) * p.horizons.len() as u64 + h_index as u64;
    let mut rng = SeededRng::new(seed, cell_stream(stream_tags::HORIZON, cell));
    let cfg = search_cfg(p, method, spec.horizon(), setting, eval_every);
    let mut env = LqrEnv::new(spec.clone());
    match method {
        SearchMethod::ParamSearch => run_param_search(&mut env, &policy0, &cfg, &mut rng),
        SearchMethod::ActionSearch => run_action_search(&mut env, &policy0, &cfg, &mut rng),
    }
}

/// Tune `(alpha, delta)` per (method, horizon); the score is the exact
/// expected cost of the final policy.
fn tune_cell(
    cfg: &ExperimentConfig,
    base: &LqrSpec,
    method: SearchMethod,
    h_index: usize,
) -> Result<(f64, f64)> {
    let p = &cfg.horizon;
    let spec = spec_at(base, p.horizons[h_index])?;
    let grid = product_grid(&p.alpha_grid, &p.delta_grid);
    let outcome = tune_grid(&grid, &cfg.tuning_seeds, |&setting, ts| {
        let trace = train(&spec, p, method, h_index, ts, setting, usize::MAX)?;
        lqr_exact_objective(&spec, &trace.final_policy)
    })?;
    Ok(outcome.best)
}

/// Tuned setting per (method, horizon). A cell whose whole grid failed
/// carries its error so evaluation can record it without sinking the rest
/// of the sweep.
fn tune_all(
    cfg: &ExperimentConfig,
    base: &LqrSpec,
) -> Vec<((SearchMethod, usize), Result<(f64, f64)>)> {
    let mut keys = Vec::new();
    for method in [SearchMethod::ParamSearch, SearchMethod::ActionSearch] {
        for h_index in 0..cfg.horizon.horizons.len() {
            keys.push((method, h_index));
        }
    }
    let settings: Vec<Result<(f64, f64)>> = match build_pool() {
        Ok(pool) => pool.install(|| {
            keys.par_iter()
                .map(|&(method, h_index)| tune_cell(cfg, base, method, h_index))
                .collect()
        }),
        Err(e) => {
            let msg = e.to_string();
            keys.iter().map(|_| Err(Error::Config(msg.clone()))).collect()
        }
    };
    keys.into_iter().zip(settings).collect()
}

fn eval_cell(
    cfg: &ExperimentConfig,
    base: &LqrSpec,
    method: SearchMethod,
    h_index: usize,
    seed: u64,
    setting: Option<(f64, f64)>,
) -> Vec<RunRecord> {
    let p = &cfg.horizon;
    let h = p.horizons[h_index];
    let env = env_kv(p, h);
    let hyper = setting.map(|s| hyper_kv(p, method, s)).unwrap_or_default();
    let base_row = |metric: &str, at: u64, value: f64| RunRecord {
        preset: PRESET.to_string(),
        algorithm: method.to_string(),
        seed,
        env_params: env.clone(),
        hyperparams: hyper.clone(),
        checkpoint_env_steps: at,
        metric_name: metric.to_string(),
        metric_value: value,
    };
    let mut out = Vec::new();
    let result = setting
        .ok_or_else(|| Error::CellFailed("no surviving tuned setting".into()))
        .and_then(|setting| {
            let spec = spec_at(base, h)?;
            let trace = train(&spec, p, method, h_index, seed, setting, p.eval_every)?;
            let final_cost = lqr_exact_objective(&spec, &trace.final_policy)?;
            Ok((trace, final_cost))
        });
    match result {
        Ok((trace, final_cost)) => {
            for row in &trace.rows {
                out.push(base_row("mean_cost", row.env_steps_used, row.mean_cost));
            }
            out.push(base_row("final_exact_cost", trace.env_steps_used, final_cost));
        }
        Err(_) => out.push(base_row("error", 0, 1.0)),
    }
    out
}

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let p = &cfg.horizon;
    let base = base_spec(p)?;
    let tuned = tune_all(cfg, &base);
    let mut cells = Vec::new();
    for ((method, h_index), setting) in &tuned {
        for &seed in &cfg.seeds {
            cells.push((*method, *h_index, seed, setting.as_ref().ok().copied()));
        }
    }
    let pool = build_pool()?;
    let per_cell: Vec<Vec<RunRecord>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(method, h_index, seed, setting)| {
                eval_cell(cfg, &base, method, h_index, seed, setting)
            })
            .collect()
    });
    Ok(per_cell.into_iter().flatten().collect())
}

pub fn tune_report(cfg: &ExperimentConfig) -> Result<Vec<TuneReportLine>> {
    let p = &cfg.horizon;
    let base = base_spec(p)?;
    Ok(tune_all(cfg, &base)
        .into_iter()
        .map(|((method, h_index), setting)| TuneReportLine {
            algorithm: format!("{} h={}", method, p.horizons[h_index]),
            chosen: match setting {
                Ok(s) => hyper_kv(p, method, s),
                Err(e) => format!("tuning failed: {e}"),
            },
            mean_score: f64::NAN,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.preset = super::super::Preset::HorizonSweep;
        cfg.seeds = vec![1, 2];
        cfg.tuning_seeds = vec![91];
        cfg.horizon.state_dim = 3;
        cfg.horizon.action_dim = 1;
        cfg.horizon.horizons = vec![1, 2];
        cfg.horizon.noise_std = 0.05;
        cfg.horizon.steps_per_horizon = 200;
        cfg.horizon.alpha_grid = vec![1e-4, 1e-3];
        cfg.horizon.delta_grid = vec![0.1];
        cfg.horizon.param_directions = 2;
        cfg.horizon.action_directions = 1;
        cfg.horizon.theta0_norm = 0.2;
        cfg.horizon.eval_every = 10;
        cfg
    }

    #[test]
    fn both_methods_cover_every_horizon_and_seed() {
        let cfg = tiny_config();
        let records = run(&cfg).unwrap();
        assert!(records.iter().all(|r| r.metric_name != "error"));
        for method in ["param_search", "action_search"] {
            for h in [1usize, 2] {
                for seed in [1, 2] {
                    let finals: Vec<_> = records
                        .iter()
                        .filter(|r| {
                            r.algorithm == method
                                && r.seed == seed
                                && r.env_params.contains(&format!("h={h};"))
                                && r.metric_name == "final_exact_cost"
                        })
                        .collect();
                    assert_eq!(finals.len(), 1, "{method} h={h} seed={seed}");
                    assert!(finals[0].metric_value.is_finite());
                }
            }
        }
    }

    #[test]
    fn budget_scales_with_horizon_and_is_never_exceeded() {
        let cfg = tiny_config();
        let records = run(&cfg).unwrap();
        for r in &records {
            let budget: u64 = r
                .env_params
                .split(';')
                .find_map(|kv| kv.strip_prefix("budget="))
                .unwrap()
                .parse()
                .unwrap();
            let h: u64 = r
                .env_params
                .split(';')
                .find_map(|kv| kv.strip_prefix("h="))
                .unwrap()
                .parse()
                .unwrap();
            assert_eq!(budget, cfg.horizon.steps_per_horizon * h);
            assert!(r.checkpoint_env_steps <= budget);
        }
    }

    #[test]
    fn rerun_is_identical() {
        let cfg = tiny_config();
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
    }

    #[test]
    fn starting_gains_are_shared_between_methods_and_differ_across_seeds() {
        let p = tiny_config().horizon;
        let a = theta0(&p, 1).unwrap();
        let b = theta0(&p, 1).unwrap();
        let c = theta0(&p, 2).unwrap();
        assert_eq!(a.theta(), b.theta());
        assert_ne!(a.theta(), c.theta());
        assert!((a.theta().norm() - p.theta0_norm).abs() < 1e-12);
    }

    #[test]
    fn tune_report_covers_method_by_horizon() {
        let cfg = tiny_config();
        let lines = tune_report(&cfg).unwrap();
        assert_eq!(lines.len(), 4);
        assert!(lines.iter().any(|l| l.algorithm == "param_search h=1"));
        assert!(lines.iter().any(|l| l.algorithm == "action_search h=2"));
    }
}
