//! The statistics-only entry point: run the Friedman/Iman-Davenport omnibus
//! test and Hochberg post hoc comparisons directly on a table of published
//! or previously computed metric values, with no forecasting involved.

use std::collections::BTreeMap;
use std::path::Path;

use forecast_core::stats::{hochberg, ComparisonTable, TwoStepResult};

use crate::csv::{read_metrics_csv, MetricsRows};
use crate::error::CliError;

/// A complete (stations x models) grid of metric values.
#[derive(Debug, Clone)]
pub struct MetricsTable {
    pub stations: Vec<String>,
    pub models: Vec<String>,
    /// Metric name -> per-station rows of per-model values.
    pub values: BTreeMap<String, Vec<Vec<f64>>>,
}

impl MetricsTable {
    /// Assembles the grid from long-form rows, keeping first-appearance
    /// order for both stations and models. Every (station, model) pair must
    /// appear exactly once.
    pub fn from_rows(rows: &MetricsRows) -> Result<MetricsTable, CliError> {
        if rows.rows.is_empty() {
            return Err(CliError::InsufficientData("metrics table is empty".into()));
        }
        let mut stations: Vec<String> = Vec::new();
        let mut models: Vec<String> = Vec::new();
        for row in &rows.rows {
            if !stations.contains(&row.station) {
                stations.push(row.station.clone());
            }
            if !models.contains(&row.model) {
                models.push(row.model.clone());
            }
        }
        let with_arank = rows.rows.iter().all(|r| r.arank.is_some());
        let metric_names: &[&str] = if with_arank {
            &["rmse", "mae", "smape", "arank"]
        } else {
            &["rmse", "mae", "smape"]
        };
        let mut values: BTreeMap<String, Vec<Vec<f64>>> = metric_names
            .iter()
            .map(|m| {
                (
                    m.to_string(),
                    vec![vec![f64::NAN; models.len()]; stations.len()],
                )
            })
            .collect();
        let mut seen = vec![vec![false; models.len()]; stations.len()];
        for row in &rows.rows {
            let si = stations.iter().position(|s| s == &row.station).unwrap();
            let mj = models.iter().position(|m| m == &row.model).unwrap();
            if seen[si][mj] {
                return Err(CliError::Config(format!(
                    "duplicate metrics row for {}/{}",
                    row.station, row.model
                )));
            }
            seen[si][mj] = true;
            values.get_mut("rmse").unwrap()[si][mj] = row.rmse;
            values.get_mut("mae").unwrap()[si][mj] = row.mae;
            values.get_mut("smape").unwrap()[si][mj] = row.smape;
            if with_arank {
                values.get_mut("arank").unwrap()[si][mj] = row.arank.expect("checked");
            }
        }
        if let Some((si, mj)) = seen
            .iter()
            .enumerate()
            .find_map(|(si, row)| row.iter().position(|s| !s).map(|mj| (si, mj)))
        {
            return Err(CliError::Config(format!(
                "missing metrics row for {}/{}",
                stations[si], models[mj]
            )));
        }
        Ok(MetricsTable {
            stations,
            models,
            values,
        })
    }
}

/// Runs the two-step procedure per metric on an in-memory grid.
pub fn stats_only_from_table(
    table: &MetricsTable,
    reference: &str,
    alpha: f64,
) -> Result<BTreeMap<String, TwoStepResult>, CliError> {
    if table.stations.len() < 2 {
        return Err(CliError::InsufficientData(format!(
            "need at least two datasets, found {}",
            table.stations.len()
        )));
    }
    if table.models.len() < 2 {
        return Err(CliError::InsufficientData(format!(
            "need at least two models, found {}",
            table.models.len()
        )));
    }
    let mut out = BTreeMap::new();
    for (metric, values) in &table.values {
        let cmp = ComparisonTable::new(
            table.models.clone(),
            table.stations.clone(),
            values.clone(),
        )?;
        out.insert(metric.clone(), hochberg(&cmp, reference, alpha)?);
    }
    Ok(out)
}

/// Reads a long-form metrics CSV and runs the two-step procedure per metric.
pub fn stats_only(
    path: &Path,
    reference: &str,
    alpha: f64,
) -> Result<BTreeMap<String, TwoStepResult>, CliError> {
    let rows = read_metrics_csv(path)?;
    let table = MetricsTable::from_rows(&rows)?;
    stats_only_from_table(&table, reference, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csv::MetricsRow;

    fn row(station: &str, model: &str, v: f64) -> MetricsRow {
        MetricsRow {
            station: station.into(),
            model: model.into(),
            rmse: v,
            mae: v + 0.5,
            smape: v * 10.0,
            arank: None,
        }
    }

    #[test]
    fn single_dataset_is_insufficient() {
        let rows = MetricsRows {
            rows: vec![row("S1", "A", 1.0), row("S1", "B", 2.0)],
        };
        let table = MetricsTable::from_rows(&rows).unwrap();
        assert!(matches!(
            stats_only_from_table(&table, "A", 0.1),
            Err(CliError::InsufficientData(_))
        ));
    }

    #[test]
    fn incomplete_grid_rejected() {
        let rows = MetricsRows {
            rows: vec![
                row("S1", "A", 1.0),
                row("S1", "B", 2.0),
                row("S2", "A", 1.5),
            ],
        };
        assert!(matches!(
            MetricsTable::from_rows(&rows),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn two_by_two_runs() {
        let rows = MetricsRows {
            rows: vec![
                row("S1", "A", 1.0),
                row("S1", "B", 2.0),
                row("S2", "A", 1.5),
                row("S2", "B", 2.5),
            ],
        };
        let table = MetricsTable::from_rows(&rows).unwrap();
        let out = stats_only_from_table(&table, "A", 0.1).unwrap();
        assert_eq!(out.len(), 3);
        let rmse = &out["rmse"];
        assert!(rmse.friedman.degenerate); // perfect separation on 2 models
        assert_eq!(rmse.comparisons.len(), 1);
        assert!(rmse.comparisons[0].z > 0.0);
    }
}
