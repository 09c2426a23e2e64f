//! Contextual-bandit comparison where the parameter count dwarfs the
//! action count.
//!
//! One fixed synthetic dataset; a score-function learner (explores in the
//! small action space) races a two-point random-search learner (explores in
//! the large parameter space) to a target test accuracy under a shared
//! sample budget.

use rayon::prelude::*;

use crate::banditsearch::{
    run_ars_bandit, run_reinforce_bandit, BanditArsConfig, BanditTrace, ReinforceConfig,
};
use crate::envs::{gen_contextual_bandit, BanditInstance};
use crate::error::Result;
use crate::rng::SeededRng;

use super::config::{BanditParams, ExperimentConfig};
use super::record::{kv_string, RunRecord};
use super::tune::{product_grid, tune_grid};
use super::{build_pool, cell_stream, stream_tags, TuneReportLine};

const PRESET: &str = "bandit-dvsp";
const ALG_REINFORCE: &str = "reinforce";
const ALG_ARS: &str = "ars";

/// Cell indices inside this preset's stream tag.
const STREAM_DATASET: u64 = 0;
const STREAM_REINFORCE: u64 = 1;
const STREAM_ARS: u64 = 2;

fn dataset(p: &BanditParams) -> Result<BanditInstance> {
    let mut gen = SeededRng::new(
        p.system_seed,
        cell_stream(stream_tags::BANDIT, STREAM_DATASET),
    );
    gen_contextual_bandit(&mut gen, p.context_dim, p.num_actions, p.n_train, p.n_test)
}

fn env_kv(p: &BanditParams) -> String {
    kv_string(&[
        ("b", p.context_dim.to_string()),
        ("k", p.num_actions.to_string()),
        ("n_train", p.n_train.to_string()),
        ("n_test", p.n_test.to_string()),
    ])
}

fn reinforce_cfg(p: &BanditParams, lr: f64) -> ReinforceConfig {
    ReinforceConfig {
        lr,
        batch_size: p.reinforce_batch,
        max_samples: p.max_samples,
        eval_every: p.reinforce_eval_every,
    }
}

fn ars_cfg(p: &BanditParams, (alpha, delta): (f64, f64)) -> BanditArsConfig {
    BanditArsConfig {
        alpha,
        delta,
        num_directions: p.ars_directions,
        top_directions: p.ars_top_directions,
        batch_size: p.ars_batch,
        max_samples: p.max_samples,
        eval_every: p.ars_eval_every,
    }
}

fn reinforce_kv(p: &BanditParams, lr: f64) -> String {
    kv_string(&[
        ("lr", format!("{lr}")),
        ("batch", p.reinforce_batch.to_string()),
    ])
}

fn ars_kv(p: &BanditParams, (alpha, delta): (f64, f64)) -> String {
    kv_string(&[
        ("alpha", format!("{alpha}")),
        ("delta", format!("{delta}")),
        ("dirs", p.ars_directions.to_string()),
        ("top", p.ars_top_directions.to_string()),
        ("batch", p.ars_batch.to_string()),
    ])
}

/// Tuning score: samples to the target accuracy when reached; otherwise a
/// large penalty shrinking with the final accuracy, so near misses still
/// rank above distant ones.
fn score(trace: &BanditTrace, target: f64) -> f64 {
    match trace.samples_to_accuracy(target) {
        Some(s) => s as f64,
        None => {
            let final_acc = trace
                .rows
                .last()
                .map(|r| r.test_accuracy)
                .unwrap_or(0.0);
            1e15 * (2.0 - final_acc)
        }
    }
}

fn tune_both(cfg: &ExperimentConfig, inst: &BanditInstance) -> Result<(f64, (f64, f64))> {
    let p = &cfg.bandit;
    let lr = tune_grid(&p.reinforce_lr_grid, &cfg.tuning_seeds, |&lr, ts| {
        let mut rng = SeededRng::new(ts, cell_stream(stream_tags::BANDIT, STREAM_REINFORCE));
        let trace = run_reinforce_bandit(inst, &reinforce_cfg(p, lr), &mut rng)?;
        Ok(score(&trace, p.target_accuracy))
    })?
    .best;
    let grid = product_grid(&p.ars_alpha_grid, &p.ars_delta_grid);
    let ars = tune_grid(&grid, &cfg.tuning_seeds, |&ad, ts| {
        let mut rng = SeededRng::new(ts, cell_stream(stream_tags::BANDIT, STREAM_ARS));
        let trace = run_ars_bandit(inst, &ars_cfg(p, ad), &mut rng)?;
        Ok(score(&trace, p.target_accuracy))
    })?
    .best;
    Ok((lr, ars))
}

/// Rows for one run: the accuracy curve plus end-of-run summary metrics.
/// `samples_to_target` is right-censored at the consumed budget when the
/// target was never reached; `reached_target` disambiguates.
fn trace_rows(
    out: &mut Vec<RunRecord>,
    p: &BanditParams,
    algorithm: &str,
    seed: u64,
    hyper: String,
    result: &Result<BanditTrace>,
) {
    let env = env_kv(p);
    let base = |metric: &str, at: u64, value: f64| RunRecord {
        preset: PRESET.to_string(),
        algorithm: algorithm.to_string(),
        seed,
        env_params: env.clone(),
        hyperparams: hyper.clone(),
        checkpoint_env_steps: at,
        metric_name: metric.to_string(),
        metric_value: value,
    };
    match result {
        Ok(trace) => {
            for row in &trace.rows {
                out.push(base("test_accuracy", row.samples_used, row.test_accuracy));
            }
            let end = trace.samples_used;
            let (samples, reached) = match trace.samples_to_accuracy(p.target_accuracy) {
                Some(s) => (s as f64, 1.0),
                None => (end as f64, 0.0),
            };
            out.push(base("samples_to_target", end, samples));
            out.push(base("reached_target", end, reached));
            let final_acc = trace.rows.last().map(|r| r.test_accuracy).unwrap_or(0.0);
            out.push(base("final_accuracy", end, final_acc));
        }
        Err(_) => out.push(base("error", 0, 1.0)),
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let p = &cfg.bandit;
    let inst = dataset(p)?;
    let (lr, ars) = tune_both(cfg, &inst)?;
    let pool = build_pool()?;
    let cells: Vec<(&str, u64)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| [(ALG_REINFORCE, s), (ALG_ARS, s)])
        .collect();
    let per_cell: Vec<Vec<RunRecord>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(alg, seed)| {
                let mut out = Vec::new();
                match alg {
                    ALG_REINFORCE => {
                        let mut rng = SeededRng::new(
                            seed,
                            cell_stream(stream_tags::BANDIT, STREAM_REINFORCE),
                        );
                        let result = run_reinforce_bandit(&inst, &reinforce_cfg(p, lr), &mut rng);
                        trace_rows(&mut out, p, alg, seed, reinforce_kv(p, lr), &result);
                    }
                    _ => {
                        let mut rng = SeededRng::new(
                            seed,
                            cell_stream(stream_tags::BANDIT, STREAM_ARS),
                        );
                        let result = run_ars_bandit(&inst, &ars_cfg(p, ars), &mut rng);
                        trace_rows(&mut out, p, alg, seed, ars_kv(p, ars), &result);
                    }
                }
                out
            })
            .collect()
    });
    Ok(per_cell.into_iter().flatten().collect())
}

pub fn tune_report(cfg: &ExperimentConfig) -> Result<Vec<TuneReportLine>> {
    let p = &cfg.bandit;
    let inst = dataset(p)?;
    let (lr, ars) = tune_both(cfg, &inst)?;
    Ok(vec![
        TuneReportLine {
            algorithm: ALG_REINFORCE.to_string(),
            chosen: reinforce_kv(p, lr),
            mean_score: f64::NAN,
        },
        TuneReportLine {
            algorithm: ALG_ARS.to_string(),
            chosen: ars_kv(p, ars),
            mean_score: f64::NAN,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.preset = super::super::Preset::BanditDvsP;
        cfg.seeds = vec![1, 2];
        cfg.tuning_seeds = vec![91];
        cfg.bandit.context_dim = 6;
        cfg.bandit.num_actions = 3;
        cfg.bandit.n_train = 150;
        cfg.bandit.n_test = 80;
        cfg.bandit.max_samples = 2_000;
        cfg.bandit.target_accuracy = 0.99;
        cfg.bandit.reinforce_lr_grid = vec![0.2];
        cfg.bandit.reinforce_batch = 16;
        cfg.bandit.reinforce_eval_every = 4;
        cfg.bandit.ars_alpha_grid = vec![0.02];
        cfg.bandit.ars_delta_grid = vec![0.1];
        cfg.bandit.ars_directions = 2;
        cfg.bandit.ars_top_directions = 2;
        cfg.bandit.ars_batch = 8;
        cfg.bandit.ars_eval_every = 4;
        cfg
    }

    #[test]
    fn emits_curves_and_summary_metrics_per_cell() {
        let cfg = tiny_config();
        let records = run(&cfg).unwrap();
        assert!(records.iter().all(|r| r.metric_name != "error"));
        for alg in [ALG_REINFORCE, ALG_ARS] {
            for seed in [1, 2] {
                let cell: Vec<_> = records
                    .iter()
                    .filter(|r| r.algorithm == alg && r.seed == seed)
                    .collect();
                assert!(cell.iter().any(|r| r.metric_name == "test_accuracy"));
                let stt: Vec<_> = cell
                    .iter()
                    .filter(|r| r.metric_name == "samples_to_target")
                    .collect();
                assert_eq!(stt.len(), 1);
                assert!(stt[0].metric_value <= cfg.bandit.max_samples as f64);
                assert!(cell.iter().any(|r| r.metric_name == "reached_target"));
                assert!(cell.iter().any(|r| r.metric_name == "final_accuracy"));
            }
        }
    }

    #[test]
    fn accuracy_checkpoints_use_sample_counts() {
        let cfg = tiny_config();
        let records = run(&cfg).unwrap();
        let mut last = 0;
        for r in records
            .iter()
            .filter(|r| r.algorithm == ALG_REINFORCE && r.seed == 1 && r.metric_name == "test_accuracy")
        {
            assert!(r.checkpoint_env_steps >= last);
            last = r.checkpoint_env_steps;
        }
        assert!(last > 0);
    }

    #[test]
    fn rerun_is_identical() {
        let cfg = tiny_config();
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
    }

    #[test]
    fn tune_report_names_both_algorithms() {
        let cfg = tiny_config();
        let lines = tune_report(&cfg).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].algorithm, ALG_REINFORCE);
        assert!(lines[0].chosen.contains("lr=0.2"));
        assert_eq!(lines[1].algorithm, ALG_ARS);
        assert!(lines[1].chosen.contains("delta=0.1"));
    }
}
