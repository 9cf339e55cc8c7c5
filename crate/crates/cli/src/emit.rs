//! Figure-data export: collect experiment aggregates into one tidy CSV.

use std::fs;
use std::path::{Path, PathBuf};

use crate::runner::Aggregate;
use crate::CliError;

/// Tidy long-format export. Each row is one metric of one aggregate:
/// `label,protocol,model,metric,mean,sem,n`. `label` is the experiment
/// name from the aggregate. Inputs are `aggregate.json` files, directories
/// containing one, or directories of such directories (one level).
pub fn emit_figure_data(
    inputs: &[PathBuf],
    out_csv: &Path,
    metric_filter: Option<&str>,
) -> Result<(), CliError> {
    let mut aggregates = Vec::new();
    for input in inputs {
        collect_aggregates(input, &mut aggregates, true)?;
    }
    if aggregates.is_empty() {
        return Err(CliError::Data(format!(
            "no aggregate.json found under {} input path(s)",
            inputs.len()
        )));
    }
    aggregates.sort_by(|a, b| a.name.cmp(&b.name));

    let csv_err = |e: csv::Error| CliError::Data(e.to_string());
    let mut w = csv::Writer::from_path(out_csv).map_err(csv_err)?;
    w.write_record(["label", "protocol", "model", "metric", "mean", "sem", "n"])
        .map_err(csv_err)?;
    let mut rows = 0usize;
    for agg in &aggregates {
        for (metric, m) in &agg.metrics {
            if let Some(filter) = metric_filter {
                if metric != filter {
                    continue;
                }
            }
            w.write_record([
                agg.name.as_str(),
                agg.protocol.label(),
                agg.model.as_str(),
                metric.as_str(),
                &format!("{}", m.mean),
                &m.sem.map(|s| format!("{s}")).unwrap_or_default(),
                &format!("{}", m.n),
            ])
            .map_err(csv_err)?;
            rows += 1;
        }
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))?;
    if rows == 0 {
        return Err(CliError::Data(
            "aggregates matched but no metric rows were produced".into(),
        ));
    }
    Ok(())
}

fn collect_aggregates(
    path: &Path,
    out: &mut Vec<Aggregate>,
    recurse: bool,
) -> Result<(), CliError> {
    if path.is_file() {
        out.push(read_aggregate(path)?);
        return Ok(());
    }
    if !path.is_dir() {
        return Err(CliError::Data(format!(
            "emit input `{}` does not exist",
            path.display()
        )));
    }
    let direct = path.join("aggregate.json");
    if direct.is_file() {
        out.push(read_aggregate(&direct)?);
        return Ok(());
    }
    if recurse {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        entries.sort();
        for entry in entries {
            collect_aggregates(&entry, out, false)?;
        }
    }
    Ok(())
}

fn read_aggregate(path: &Path) -> Result<Aggregate, CliError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Data(format!("bad aggregate `{}`: {e}", path.display())))
}
