//! Parameter sweeps: run one experiment per axis value and tabulate the
//! headline teacher/student/transmission/χ numbers.

use std::path::{Path, PathBuf};

use crate::cache::Cache;
use crate::config::{apply_axis, ExperimentConfig, Protocol};
use crate::runner::{run_with_cache, Aggregate, RunMode};
use crate::CliError;

pub struct SweepOutput {
    pub csv_path: PathBuf,
    pub rows: Vec<SweepRow>,
}

pub struct SweepRow {
    pub value: f64,
    pub aggregate: Aggregate,
}

/// One experiment per value of `axis`, all sharing a checkpoint cache under
/// `out_root`, summarized into `sweep_<axis>.csv` (one row per value).
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: &str,
    values: &[f64],
    out_root: &Path,
    mode: RunMode,
) -> Result<SweepOutput, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let cache = Cache::new(
        std::env::var_os("SUBLIMINAL_CACHE_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| out_root.join("cache")),
    )?;

    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = base.clone();
        apply_axis(&mut cfg, axis, value)?;
        cfg.name = format!("{}__{}={}", base.name, axis, value);
        cfg.output_dir = out_root.join(format!("{}_{}", axis.replace('.', "_"), value));
        let output = run_with_cache(&cfg, mode, &cache)?;
        rows.push(SweepRow {
            value,
            aggregate: output.aggregate,
        });
    }

    let csv_path = out_root.join(format!("sweep_{}.csv", axis.replace('.', "_")));
    write_sweep_csv(&csv_path, base.protocol, axis, &rows)?;
    Ok(SweepOutput { csv_path, rows })
}

/// Headline metric keys for a protocol: teacher metric, student metric.
fn headline_keys(protocol: Protocol) -> (&'static str, &'static str, &'static str) {
    match protocol {
        Protocol::Aux => ("teacher_acc", "student_acc", "chi_aux"),
        Protocol::Task => ("teacher_flip", "student_flip", "chi"),
    }
}

fn write_sweep_csv(
    path: &Path,
    protocol: Protocol,
    axis: &str,
    rows: &[SweepRow],
) -> Result<(), CliError> {
    let csv_err = |e: csv::Error| CliError::Data(e.to_string());
    let (teacher_key, student_key, chi_key) = headline_keys(protocol);
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "axis",
        "value",
        "protocol",
        "model",
        "n_seeds",
        "teacher_metric",
        "teacher_sem",
        "student_metric",
        "student_sem",
        "transmission",
        "transmission_sem",
        "drift",
        "drift_sem",
        "chi",
        "chi_sem",
    ])
    .map_err(csv_err)?;
    for row in rows {
        let agg = &row.aggregate;
        let cell = |key: &str| -> (String, String) {
            match agg.metrics.get(key) {
                Some(m) => (
                    format!("{}", m.mean),
                    m.sem.map(|s| format!("{s}")).unwrap_or_default(),
                ),
                None => (String::new(), String::new()),
            }
        };
        let (teacher, teacher_sem) = cell(teacher_key);
        let (student, student_sem) = cell(student_key);
        let (transmission, transmission_sem) = cell("transmission");
        let (drift, drift_sem) = cell("teacher_drift_norm");
        let (chi, chi_sem) = cell(chi_key);
        w.write_record([
            axis,
            &format!("{}", row.value),
            agg.protocol.label(),
            &agg.model,
            &format!("{}", agg.n_seeds),
            &teacher,
            &teacher_sem,
            &student,
            &student_sem,
            &transmission,
            &transmission_sem,
            &drift,
            &drift_sem,
            &chi,
            &chi_sem,
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(())
}
