//! Experiment harness: presets, hyperparameter tuning, multi-seed
//! orchestration, property validation, and CSV emission.
//!
//! Every run in a preset draws randomness from a generator keyed by
//! `(seed, stream)`. Seeds come from the config; streams are assigned here
//! so that no two cells of an experiment ever share one. Each preset owns a
//! 16-bit tag, and a cell's stream is `tag << 32 | cell_index`; per-run
//! sub-streams (data generation, algorithm noise, evaluation) are derived
//! as children of the cell generator. Re-running a config therefore
//! reproduces every cell bit for bit, regardless of worker count.

pub mod bandit_dvp;
pub mod config;
pub mod horizon;
pub mod noise;
pub mod olr_dim;
pub mod record;
pub mod tune;
pub mod validate;

pub use config::{ExperimentConfig, Preset, ScheduleMode};
pub use record::{csv_bytes, summarize, summary_table, write_csv, RunRecord, SummaryLine};
pub use tune::{tune_grid, TuneOutcome};
pub use validate::{run_properties, Corruption, PropertyResult};

use std::path::Path;

use crate::error::{Error, Result};

/// Environment variable bounding the worker pool.
pub const WORKERS_ENV: &str = "ZOPS_WORKERS";

/// Worker count: `ZOPS_WORKERS` when set to a positive integer, otherwise
/// the machine's available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Bounded pool for cell execution. Results are always collected in cell
/// order, so output never depends on scheduling.
pub fn build_pool() -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Per-preset stream tags; see the module docs for the layout.
pub(crate) mod stream_tags {
    pub const OLR: u64 = 0x01;
    pub const BANDIT: u64 = 0x02;
    pub const HORIZON: u64 = 0x03;
    pub const NOISE: u64 = 0x04;
}

/// Stream identifier for cell `index` of the preset tagged `tag`.
pub(crate) fn cell_stream(tag: u64, index: u64) -> u64 {
    debug_assert!(index < (1 << 32));
    (tag << 32) | index
}

/// Everything a preset run produces: the raw rows, the per-cell summary,
/// and how many cells failed (failed cells leave an `error` row behind and
/// do not abort the rest of the sweep).
#[derive(Debug, Clone)]
pub struct PresetOutput {
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryLine>,
    pub failed_cells: usize,
}

/// Execute a preset end to end (tuning included) and collect its rows.
pub fn run_preset(cfg: &ExperimentConfig) -> Result<PresetOutput> {
    cfg.validate()?;
    let records = match cfg.preset {
        Preset::OlrDimSweep => olr_dim::run(cfg)?,
        Preset::BanditDvsP => bandit_dvp::run(cfg)?,
        Preset::HorizonSweep => horizon::run(cfg)?,
        Preset::LqrNoiseSweep => noise::run(cfg)?,
        Preset::ValidateProperties => validate::records(),
    };
    let failed_cells = records
        .iter()
        .filter(|r| r.metric_name == "error" || (r.metric_name == "passed" && r.metric_value == 0.0))
        .count();
    let summary = summarize(&records);
    Ok(PresetOutput {
        records,
        summary,
        failed_cells,
    })
}

/// Run a preset and write its CSV. Returns the output for summary printing.
pub fn run_preset_to_csv(cfg: &ExperimentConfig, out_path: &Path) -> Result<PresetOutput> {
    let out = run_preset(cfg)?;
    write_csv(out_path, &out.records, cfg.suppress_timestamp)?;
    Ok(out)
}

/// JSON snapshot of the fixed plant a preset trains on, so an exact
/// environment can be pinned and shared. Presets that draw instances per
/// cell have nothing stable to export.
pub fn export_env(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    match cfg.preset {
        Preset::HorizonSweep => horizon::base_spec(&cfg.horizon)?.to_json(),
        Preset::LqrNoiseSweep => noise::base_spec(&cfg.noise)?.to_json(),
        _ => Err(Error::Config(format!(
            "preset {} has no fixed plant to export; its instances are drawn per cell",
            cfg.preset.name()
        ))),
    }
}

/// One line of a tuning report: which algorithm, the winning setting, and
/// its mean tuning score (lower is better).
#[derive(Debug, Clone)]
pub struct TuneReportLine {
    pub algorithm: String,
    pub chosen: String,
    pub mean_score: f64,
}

/// Run only the tuning stage of a preset and report the selections.
pub fn tune_preset(cfg: &ExperimentConfig) -> Result<Vec<TuneReportLine>> {
    cfg.validate()?;
    match cfg.preset {
        Preset::OlrDimSweep => olr_dim::tune_report(cfg),
        Preset::BanditDvsP => bandit_dvp::tune_report(cfg),
        Preset::HorizonSweep => horizon::tune_report(cfg),
        Preset::LqrNoiseSweep => noise::tune_report(cfg),
        Preset::ValidateProperties => Err(Error::Config(
            "the property suite has no hyperparameters to tune".into(),
        )),
    }
}
