//! Dimension sweep for online regression with bandit feedback.
//!
//! For each feature dimension the two single-query algorithms run on the
//! same synthetic streams and report cumulative loss checkpoints plus the
//! final average regret against the certified hindsight optimum. Because
//! both algorithms and every grid point can share one pass over a stream,
//! tuning and evaluation replay each stream exactly once.

use rayon::prelude::*;

use crate::envs::gen_regression_stream;
use crate::error::{Error, Result};
use crate::olr::{
    average_regret_from_stats, run_many_with_stats, theoretical_schedule_alg1,
    theoretical_schedule_alg2, OlrAlgorithm, OlrTrace, RunSpec, Schedule, StreamStats,
};
use crate::rng::SeededRng;

use super::config::{ExperimentConfig, ScheduleMode};
use super::record::{kv_string, RunRecord};
use super::tune::{best_index, product_grid};
use super::{build_pool, cell_stream, stream_tags, TuneReportLine};

const PRESET: &str = "olr-dim-sweep";

/// Child-stream tags inside one cell generator.
const SPEC_PARAM: u64 = 1;
const SPEC_ACTION: u64 = 2;
const TUNE_PARAM_BASE: u64 = 1_000;
const TUNE_ACTION_BASE: u64 = 2_000;

/// Winning schedules for one dimension, with their mean tuning scores.
#[derive(Debug, Clone, Copy)]
struct Chosen {
    param: Schedule,
    action: Schedule,
    param_score: f64,
    action_score: f64,
}

fn env_kv(b: usize, rounds: usize) -> String {
    kv_string(&[("b", b.to_string()), ("rounds", rounds.to_string())])
}

fn hyper_kv(schedule: ScheduleMode, (alpha, delta): Schedule) -> String {
    let mode = match schedule {
        ScheduleMode::Tuned => "tuned",
        ScheduleMode::Theory => "theory",
    };
    kv_string(&[
        ("alpha", format!("{alpha}")),
        ("delta", format!("{delta}")),
        ("schedule", mode.to_string()),
    ])
}

/// Evenly spaced checkpoint rounds, always ending at `rounds`.
fn checkpoint_rounds(rounds: usize, checkpoints: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=checkpoints)
        .map(|k| ((rounds as u128 * k as u128) / checkpoints as u128) as usize)
        .map(|t| t.max(1))
        .collect();
    out.dedup();
    out
}

/// Grid-tune both algorithms for one dimension. All grid points of both
/// algorithms run over a single replay per tuning seed; the score is the
/// total incurred loss, whose ranking equals average-regret ranking because
/// the hindsight term is shared within a stream.
fn tune_dim(cfg: &ExperimentConfig, b_index: usize, b: usize) -> Result<Chosen> {
    let p = &cfg.olr;
    let grid = product_grid(&p.alpha_grid, &p.delta_grid);
    let mut param_total = vec![0.0f64; grid.len()];
    let mut action_total = vec![0.0f64; grid.len()];
    let mut param_bad = vec![false; grid.len()];
    let mut action_bad = vec![false; grid.len()];
    for &ts in &cfg.tuning_seeds {
        let mut gen = SeededRng::new(ts, cell_stream(stream_tags::OLR, b_index as u64));
        let inst = gen_regression_stream(&mut gen, b, p.rounds)?;
        let mut specs = Vec::with_capacity(2 * grid.len());
        for (i, &(alpha, delta)) in grid.iter().enumerate() {
            specs.push(RunSpec {
                algorithm: OlrAlgorithm::ParamSphere,
                alpha,
                delta,
                rng: gen.child(TUNE_PARAM_BASE + i as u64),
                record_thetas: false,
            });
        }
        for (i, &(alpha, delta)) in grid.iter().enumerate() {
            specs.push(RunSpec {
                algorithm: OlrAlgorithm::ActionSign,
                alpha,
                delta,
                rng: gen.child(TUNE_ACTION_BASE + i as u64),
                record_thetas: false,
            });
        }
        let (results, _) = run_many_with_stats(&inst, specs);
        for (i, res) in results.iter().enumerate() {
            let (total, bad) = if i < grid.len() {
                (&mut param_total[i], &mut param_bad[i])
            } else {
                (&mut action_total[i - grid.len()], &mut action_bad[i - grid.len()])
            };
            match res {
                Ok(trace) => *total += trace.total_incurred(),
                Err(_) => *bad = true,
            }
        }
    }
    let n = cfg.tuning_seeds.len() as f64;
    let means = |totals: &[f64], bad: &[bool]| -> Vec<f64> {
        totals
            .iter()
            .zip(bad)
            .map(|(&t, &b)| if b || !t.is_finite() { f64::INFINITY } else { t / n })
            .collect()
    };
    let param_means = means(&param_total, &param_bad);
    let action_means = means(&action_total, &action_bad);
    let pi = best_index(&param_means)?;
    let ai = best_index(&action_means)?;
    Ok(Chosen {
        param: grid[pi],
        action: grid[ai],
        param_score: param_means[pi],
        action_score: action_means[ai],
    })
}

fn tune_all(cfg: &ExperimentConfig) -> Result<Vec<Chosen>> {
    let pool = build_pool()?;
    pool.install(|| {
        cfg.olr
            .dims
            .par_iter()
            .enumerate()
            .map(|(i, &b)| tune_dim(cfg, i, b))
            .collect()
    })
}

/// Rows for one finished run, or a single error row if it failed.
fn trace_rows(
    out: &mut Vec<RunRecord>,
    cfg: &ExperimentConfig,
    seed: u64,
    b: usize,
    schedule: Schedule,
    algorithm: OlrAlgorithm,
    result: &Result<OlrTrace>,
    stats: &StreamStats,
    c_theta: f64,
) {
    let p = &cfg.olr;
    let env = env_kv(b, p.rounds);
    let hyper = hyper_kv(p.schedule, schedule);
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
            for &t in &checkpoint_rounds(p.rounds, p.checkpoints) {
                out.push(base("cum_loss", t as u64, trace.cum_loss[t - 1]));
            }
            match average_regret_from_stats(trace, stats, c_theta) {
                Ok(r) => out.push(base("avg_regret", p.rounds as u64, r)),
                Err(_) => out.push(base("error", 0, 1.0)),
            }
        }
        Err(_) => out.push(base("error", 0, 1.0)),
    }
}

/// One evaluation cell: both algorithms on the stream of `(b, seed)`.
/// Failures surface as `error` rows, never as panics or early exits.
fn eval_cell(
    cfg: &ExperimentConfig,
    b_index: usize,
    seed: u64,
    chosen: Option<Chosen>,
) -> Vec<RunRecord> {
    let p = &cfg.olr;
    let b = p.dims[b_index];
    let mut out = Vec::new();
    let mut gen = SeededRng::new(seed, cell_stream(stream_tags::OLR, b_index as u64));
    let inst = match gen_regression_stream(&mut gen, b, p.rounds) {
        Ok(inst) => inst,
        Err(_) => {
            for alg in [OlrAlgorithm::ParamSphere, OlrAlgorithm::ActionSign] {
                out.push(RunRecord {
                    preset: PRESET.to_string(),
                    algorithm: alg.to_string(),
                    seed,
                    env_params: env_kv(b, p.rounds),
                    hyperparams: String::new(),
                    checkpoint_env_steps: 0,
                    metric_name: "error".to_string(),
                    metric_value: 1.0,
                });
            }
            return out;
        }
    };
    let schedules = match chosen {
        Some(c) => Ok((c.param, c.action)),
        None => inst.theory_constants().and_then(|tc| {
            Ok((
                theoretical_schedule_alg1(&tc, b, p.rounds)?,
                theoretical_schedule_alg2(&tc, p.rounds)?,
            ))
        }),
    };
    let ((pa, pd), (aa, ad)) = match schedules {
        Ok(s) => s,
        Err(_) => {
            for alg in [OlrAlgorithm::ParamSphere, OlrAlgorithm::ActionSign] {
                out.push(RunRecord {
                    preset: PRESET.to_string(),
                    algorithm: alg.to_string(),
                    seed,
                    env_params: env_kv(b, p.rounds),
                    hyperparams: String::new(),
                    checkpoint_env_steps: 0,
                    metric_name: "error".to_string(),
                    metric_value: 1.0,
                });
            }
            return out;
        }
    };
    let specs = vec![
        RunSpec {
            algorithm: OlrAlgorithm::ParamSphere,
            alpha: pa,
            delta: pd,
            rng: gen.child(SPEC_PARAM),
            record_thetas: false,
        },
        RunSpec {
            algorithm: OlrAlgorithm::ActionSign,
            alpha: aa,
            delta: ad,
            rng: gen.child(SPEC_ACTION),
            record_thetas: false,
        },
    ];
    let (results, stats) = run_many_with_stats(&inst, specs);
    trace_rows(
        &mut out,
        cfg,
        seed,
        b,
        (pa, pd),
        OlrAlgorithm::ParamSphere,
        &results[0],
        &stats,
        inst.c_theta(),
    );
    trace_rows(
        &mut out,
        cfg,
        seed,
        b,
        (aa, ad),
        OlrAlgorithm::ActionSign,
        &results[1],
        &stats,
        inst.c_theta(),
    );
    out
}

/// Execute the sweep: tune (when configured), then run every
/// (dimension, seed) cell.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let chosen = match cfg.olr.schedule {
        ScheduleMode::Tuned => Some(tune_all(cfg)?),
        ScheduleMode::Theory => None,
    };
    let mut cells = Vec::new();
    for b_index in 0..cfg.olr.dims.len() {
        for &seed in &cfg.seeds {
            cells.push((b_index, seed));
        }
    }
    let pool = build_pool()?;
    let per_cell: Vec<Vec<RunRecord>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(bi, seed)| eval_cell(cfg, bi, seed, chosen.as_ref().map(|c| c[bi])))
            .collect()
    });
    Ok(per_cell.into_iter().flatten().collect())
}

/// Tuning stage only, for the `tune` subcommand. In theory mode this
/// reports the closed-form schedules computed from the first tuning
/// stream's declared bounds (score is meaningless and reported as NaN).
pub fn tune_report(cfg: &ExperimentConfig) -> Result<Vec<TuneReportLine>> {
    let p = &cfg.olr;
    let mut lines = Vec::new();
    match p.schedule {
        ScheduleMode::Tuned => {
            let chosen = tune_all(cfg)?;
            for (i, &b) in p.dims.iter().enumerate() {
                lines.push(TuneReportLine {
                    algorithm: format!("{} b={b}", OlrAlgorithm::ParamSphere),
                    chosen: hyper_kv(p.schedule, chosen[i].param),
                    mean_score: chosen[i].param_score,
                });
                lines.push(TuneReportLine {
                    algorithm: format!("{} b={b}", OlrAlgorithm::ActionSign),
                    chosen: hyper_kv(p.schedule, chosen[i].action),
                    mean_score: chosen[i].action_score,
                });
            }
        }
        ScheduleMode::Theory => {
            let ts = *cfg.tuning_seeds.first().ok_or_else(|| {
                Error::Config("tuning seed list is empty".into())
            })?;
            for (i, &b) in p.dims.iter().enumerate() {
                let mut gen = SeededRng::new(ts, cell_stream(stream_tags::OLR, i as u64));
                let inst = gen_regression_stream(&mut gen, b, p.rounds)?;
                let tc = inst.theory_constants()?;
                lines.push(TuneReportLine {
                    algorithm: format!("{} b={b}", OlrAlgorithm::ParamSphere),
                    chosen: hyper_kv(p.schedule, theoretical_schedule_alg1(&tc, b, p.rounds)?),
                    mean_score: f64::NAN,
                });
                lines.push(TuneReportLine {
                    algorithm: format!("{} b={b}", OlrAlgorithm::ActionSign),
                    chosen: hyper_kv(p.schedule, theoretical_schedule_alg2(&tc, p.rounds)?),
                    mean_score: f64::NAN,
                });
            }
        }
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.preset = super::super::Preset::OlrDimSweep;
        cfg.seeds = vec![1, 2];
        cfg.tuning_seeds = vec![91];
        cfg.olr.dims = vec![4, 8];
        cfg.olr.rounds = 300;
        cfg.olr.checkpoints = 3;
        cfg.olr.alpha_grid = vec![1e-3, 1e-2];
        cfg.olr.delta_grid = vec![0.1];
        cfg
    }

    #[test]
    fn produces_expected_rows_per_cell() {
        let cfg = tiny_config();
        let records = run(&cfg).unwrap();
        assert!(records.iter().all(|r| r.metric_name != "error"));
        // 2 dims x 2 seeds x 2 algorithms x (3 checkpoints + 1 regret row).
        assert_eq!(records.len(), 2 * 2 * 2 * 4);
        let regrets: Vec<_> = records
            .iter()
            .filter(|r| r.metric_name == "avg_regret")
            .collect();
        assert_eq!(regrets.len(), 8);
        for r in &regrets {
            assert_eq!(r.checkpoint_env_steps, 300);
        }
    }

    #[test]
    fn rerun_is_identical() {
        let cfg = tiny_config();
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tuned_schedules_come_from_the_grid() {
        let cfg = tiny_config();
        let lines = tune_report(&cfg).unwrap();
        assert_eq!(lines.len(), 4);
        for line in &lines {
            assert!(line.mean_score.is_finite());
            assert!(
                line.chosen.contains("alpha=0.001") || line.chosen.contains("alpha=0.01"),
                "{}",
                line.chosen
            );
            assert!(line.chosen.contains("delta=0.1"));
        }
    }

    #[test]
    fn theory_mode_skips_tuning_and_still_runs() {
        let mut cfg = tiny_config();
        cfg.olr.schedule = ScheduleMode::Theory;
        let records = run(&cfg).unwrap();
        assert!(records.iter().any(|r| r.metric_name == "avg_regret"));
        assert!(records.iter().all(|r| r.hyperparams.contains("schedule=theory")));
        let lines = tune_report(&cfg).unwrap();
        assert!(lines.iter().all(|l| l.mean_score.is_nan()));
    }

    #[test]
    fn checkpoint_rounds_are_unique_and_end_at_horizon() {
        assert_eq!(checkpoint_rounds(100, 4), vec![25, 50, 75, 100]);
        assert_eq!(checkpoint_rounds(3, 5), vec![1, 2, 3]);
        assert_eq!(checkpoint_rounds(1, 3), vec![1]);
    }
}
