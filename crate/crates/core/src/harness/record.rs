//! Experiment output rows and CSV emission.
//!
//! One row per (run, checkpoint, metric). Files are sorted by the full cell
//! key so identical configurations produce byte-identical output, modulo an
//! optional timestamp header line.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats;

/// One output row. `env_params` and `hyperparams` are flattened
/// `key=value;key=value` strings with keys sorted alphabetically.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub preset: String,
    pub algorithm: String,
    pub seed: u64,
    pub env_params: String,
    pub hyperparams: String,
    pub checkpoint_env_steps: u64,
    pub metric_name: String,
    pub metric_value: f64,
}

impl RunRecord {
    /// Sort key: preset, algorithm, seed, cell parameters, checkpoint, metric.
    fn key(&self) -> (&str, &str, u64, u64, &str, &str, &str) {
        (
            &self.preset,
            &self.algorithm,
            self.seed,
            self.checkpoint_env_steps,
            &self.env_params,
            &self.hyperparams,
            &self.metric_name,
        )
    }
}

/// Flatten labeled values into the canonical `key=value;...` cell string.
/// Keys are sorted so the string is independent of argument order.
pub fn kv_string(pairs: &[(&str, String)]) -> String {
    let mut sorted: Vec<&(&str, String)> = pairs.iter().collect();
    sorted.sort_by_key(|(k, _)| *k);
    sorted
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// Render sorted records as RFC-4180 CSV bytes. A `# generated_at_unix=...`
/// comment line precedes the header unless suppressed; everything else is a
/// pure function of the records.
pub fn csv_bytes(records: &[RunRecord], suppress_timestamp: bool) -> Result<Vec<u8>> {
    for rec in records {
        if !rec.metric_value.is_finite() {
            return Err(Error::NonFinite(format!(
                "metric {} for {}/{} seed {}",
                rec.metric_name, rec.preset, rec.algorithm, rec.seed
            )));
        }
    }
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.key());

    let mut out: Vec<u8> = Vec::new();
    if !suppress_timestamp {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        writeln!(out, "# generated_at_unix={now}")?;
    }
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "preset",
        "algorithm",
        "seed",
        "env_params",
        "hyperparams",
        "checkpoint_env_steps",
        "metric_name",
        "metric_value",
    ])?;
    for rec in sorted {
        writer.write_record([
            rec.preset.as_str(),
            rec.algorithm.as_str(),
            &rec.seed.to_string(),
            rec.env_params.as_str(),
            rec.hyperparams.as_str(),
            &rec.checkpoint_env_steps.to_string(),
            rec.metric_name.as_str(),
            &rec.metric_value.to_string(),
        ])?;
    }
    writer.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Write sorted records as RFC-4180 CSV; see [`csv_bytes`].
pub fn write_csv(path: &Path, records: &[RunRecord], suppress_timestamp: bool) -> Result<()> {
    let bytes = csv_bytes(records, suppress_timestamp)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// One line of the per-cell summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryLine {
    pub algorithm: String,
    pub env_params: String,
    pub metric_name: String,
    pub seeds: usize,
    pub mean: f64,
    pub std_error: f64,
}

/// Aggregate the final checkpoint of each (cell, seed, metric) into
/// mean +- standard error across seeds. Error rows are skipped.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryLine> {
    use std::collections::BTreeMap;
    // (algorithm, env, metric) -> seed -> (checkpoint, value); keep the last.
    let mut cells: BTreeMap<(String, String, String), BTreeMap<u64, (u64, f64)>> = BTreeMap::new();
    for rec in records {
        if rec.metric_name == "error" {
            continue;
        }
        let cell = cells
            .entry((
                rec.algorithm.clone(),
                rec.env_params.clone(),
                rec.metric_name.clone(),
            ))
            .or_default();
        let entry = cell.entry(rec.seed).or_insert((0, f64::NAN));
        if rec.checkpoint_env_steps >= entry.0 {
            *entry = (rec.checkpoint_env_steps, rec.metric_value);
        }
    }
    cells
        .into_iter()
        .map(|((algorithm, env_params, metric_name), by_seed)| {
            let values: Vec<f64> = by_seed.values().map(|(_, v)| *v).collect();
            SummaryLine {
                algorithm,
                env_params,
                metric_name,
                seeds: values.len(),
                mean: stats::mean(&values),
                std_error: stats::std_error(&values),
            }
        })
        .collect()
}

/// Render the summary as an aligned text table.
pub fn summary_table(lines: &[SummaryLine]) -> String {
    let mut out = String::from("algorithm | env | metric | seeds | mean +- se\n");
    for l in lines {
        out.push_str(&format!(
            "{} | {} | {} | {} | {:.6} +- {:.6}\n",
            l.algorithm, l.env_params, l.metric_name, l.seeds, l.mean, l.std_error
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn rec(alg: &str, seed: u64, step: u64, metric: &str, value: f64) -> RunRecord {
        RunRecord {
            preset: "demo".into(),
            algorithm: alg.into(),
            seed,
            env_params: "b=4".into(),
            hyperparams: "alpha=0.1".into(),
            checkpoint_env_steps: step,
            metric_name: metric.into(),
            metric_value: value,
        }
    }

    #[test]
    fn kv_string_sorts_keys() {
        let s = kv_string(&[("delta", "0.1".into()), ("alpha", "0.5".into())]);
        assert_eq!(s, "alpha=0.5;delta=0.1");
        assert_eq!(kv_string(&[]), "");
    }

    #[test]
    fn csv_is_sorted_and_reproducible_without_timestamp() {
        let dir = tempdir().unwrap();
        let path_a = dir.path().join("a.csv");
        let path_b = dir.path().join("b.csv");
        // Deliberately unsorted input.
        let records = vec![
            rec("beta", 2, 10, "cost", 1.5),
            rec("alpha", 1, 0, "cost", 3.0),
            rec("alpha", 1, 10, "cost", 2.0),
        ];
        write_csv(&path_a, &records, true).unwrap();
        let shuffled = vec![records[2].clone(), records[0].clone(), records[1].clone()];
        write_csv(&path_b, &shuffled, true).unwrap();
        let a = std::fs::read(&path_a).unwrap();
        let b = std::fs::read(&path_b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "preset,algorithm,seed,env_params,hyperparams,checkpoint_env_steps,metric_name,metric_value"
        );
        assert!(lines[1].starts_with("demo,alpha,1,b=4,alpha=0.1,0,cost,3"));
        assert!(lines[3].starts_with("demo,beta,2"));
    }

    #[test]
    fn timestamp_header_present_unless_suppressed() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(&path, &[rec("a", 1, 0, "m", 0.0)], false).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# generated_at_unix="));
        write_csv(&path, &[rec("a", 1, 0, "m", 0.0)], true).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("preset,"));
    }

    #[test]
    fn non_finite_metric_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let err = write_csv(&path, &[rec("a", 1, 0, "m", f64::NAN)], true);
        assert!(err.is_err());
    }

    #[test]
    fn summary_uses_last_checkpoint_per_seed() {
        let records = vec![
            rec("alpha", 1, 0, "cost", 10.0),
            rec("alpha", 1, 100, "cost", 2.0),
            rec("alpha", 2, 100, "cost", 4.0),
            rec("alpha", 1, 50, "error", 1.0),
        ];
        let lines = summarize(&records);
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].seeds, 2);
        assert_eq!(lines[0].mean, 3.0);
        assert!(lines[0].std_error > 0.0);
        assert!(summary_table(&lines).contains("alpha | b=4 | cost | 2 |"));
    }
}
