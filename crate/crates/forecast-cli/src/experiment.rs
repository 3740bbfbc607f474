//! Study orchestration: runs every configured (station, model) pair on a
//! bounded worker pool, assembles metrics and the two-step comparison, and
//! writes the report artifacts.
//!
//! Reports contain no timing information, so serial and parallel runs of the
//! same configuration produce byte-identical files; wall-clock measurements
//! go to stderr.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use forecast_core::bo::HyperParams;
use forecast_core::pipeline::{run_variant, PipelineConfig, TraceEntry};
use forecast_core::rng::hash_name;
use forecast_core::series::adf::{adf_test, AdfResult};
use forecast_core::series::Series;
use forecast_core::stats::{
    arank, hochberg, mae, rmse, smape_modified, ComparisonTable, MetricSet, TwoStepResult,
    SMAPE_EPSILON,
};
use forecast_core::{baselines, Error as CoreError};

use crate::config::{ExperimentConfig, ModelKind};
use crate::csv::ingest_csv;
use crate::error::CliError;

/// Enough to rerun the study exactly.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Provenance {
    pub version: String,
    pub master_seed: u64,
    /// FNV-1a hash of the canonical serialized configuration.
    pub config_hash: String,
}

/// Per-station facts recorded before any model runs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StationInfo {
    pub name: String,
    pub length: usize,
    pub start: Option<String>,
    /// Stationarity check on the pre-test history.
    pub adf: Option<AdfResult>,
    pub adf_error: Option<String>,
}

/// Outcome of one (station, model) pair.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunRecord {
    pub station: String,
    pub model: String,
    pub ok: bool,
    pub error: Option<String>,
    /// Test-horizon metrics on the original scale.
    pub metrics: Option<MetricSet>,
    pub selected_lag: Option<usize>,
    pub params: Option<HyperParams>,
    pub validation_objective: Option<f64>,
}

/// The omnibus-plus-post-hoc section, or why it was skipped.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TwoStepSection {
    Skipped { reason: String },
    Computed { per_metric: BTreeMap<String, TwoStepResult> },
}

/// The full study report, as serialized to `report.json`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Report {
    pub provenance: Provenance,
    pub stations: Vec<StationInfo>,
    pub runs: Vec<RunRecord>,
    pub two_step: TwoStepSection,
}

/// Wall-clock seconds of one (station, model) job.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTiming {
    pub station: String,
    pub model: String,
    pub secs: f64,
}

/// A report plus the measurements that deliberately stay out of it.
#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub report: Report,
    /// Per-job wall-clock times, in job order. Kept outside [`Report`] so
    /// serial and parallel executions emit byte-identical artifacts.
    pub timings: Vec<RunTiming>,
}

struct JobOutput {
    forecasts: Vec<f64>,
    selected_lag: Option<usize>,
    params: Option<HyperParams>,
    validation_objective: Option<f64>,
    trace: Vec<TraceEntry>,
}

type JobResult = (Result<JobOutput, String>, f64);

fn run_job(
    series: &Series,
    station: &str,
    model: ModelKind,
    cfg: &PipelineConfig,
) -> Result<JobOutput, String> {
    let test_len = cfg.split.test_len;
    match model {
        ModelKind::Lstm(variant) => {
            let result = run_variant(series, station, variant, cfg).map_err(|e| e.to_string())?;
            Ok(JobOutput {
                forecasts: result.forecasts,
                selected_lag: Some(result.params.m),
                params: Some(result.params),
                validation_objective: Some(result.validation_objective),
                trace: result.trace,
            })
        }
        ModelKind::SeasonalNaive | ModelKind::HoltWinters => {
            if series.len() <= cfg.split.holdout_len() {
                return Err(CoreError::SeriesTooShort {
                    have: series.len(),
                    need: cfg.split.holdout_len() + 1,
                }
                .to_string());
            }
            let trainval = series.slice(0, series.len() - test_len);
            let forecasts = match model {
                ModelKind::SeasonalNaive => baselines::seasonal_naive(&trainval, test_len),
                _ => baselines::holt_winters_fit_forecast(&trainval, test_len),
            }
            .map_err(|e| e.to_string())?;
            Ok(JobOutput {
                forecasts,
                selected_lag: None,
                params: None,
                validation_objective: None,
                trace: Vec::new(),
            })
        }
    }
}

type MetricTables = BTreeMap<String, Vec<Vec<f64>>>;

/// Builds the per-metric (stations x models) value tables over models that
/// succeeded everywhere. The ARank table is recomputed over exactly this
/// model subset so its columns are comparable.
fn complete_tables(
    stations: &[(String, Series)],
    models: &[ModelKind],
    outputs: &[Vec<Option<JobOutput>>],
    test_len: usize,
) -> (Vec<String>, MetricTables) {
    let included: Vec<usize> = (0..models.len())
        .filter(|&mj| outputs.iter().all(|per_station| per_station[mj].is_some()))
        .collect();
    if included.len() < 2 {
        return (Vec::new(), BTreeMap::new());
    }
    let names: Vec<String> = included
        .iter()
        .map(|&mj| models[mj].name().to_string())
        .collect();
    let mut tables: MetricTables = BTreeMap::new();
    for key in ["rmse", "mae", "smape", "arank"] {
        tables.insert(key.to_string(), Vec::new());
    }
    for (si, (_, series)) in stations.iter().enumerate() {
        let actual = &series.values()[series.len() - test_len..];
        let forecasts: Vec<&[f64]> = included
            .iter()
            .map(|&mj| outputs[si][mj].as_ref().expect("included").forecasts.as_slice())
            .collect();
        let aranks = arank(actual, &forecasts).expect("complete rows");
        let mut rmse_row = Vec::new();
        let mut mae_row = Vec::new();
        let mut smape_row = Vec::new();
        for f in &forecasts {
            rmse_row.push(rmse(actual, f).expect("aligned"));
            mae_row.push(mae(actual, f).expect("aligned"));
            smape_row.push(smape_modified(actual, f, SMAPE_EPSILON).expect("aligned"));
        }
        tables.get_mut("rmse").unwrap().push(rmse_row);
        tables.get_mut("mae").unwrap().push(mae_row);
        tables.get_mut("smape").unwrap().push(smape_row);
        tables.get_mut("arank").unwrap().push(aranks);
    }
    (names, tables)
}

fn two_step_section(
    stations: &[(String, Series)],
    models: &[ModelKind],
    outputs: &[Vec<Option<JobOutput>>],
    test_len: usize,
    reference: &str,
    alpha: f64,
) -> TwoStepSection {
    if models.len() < 2 {
        return TwoStepSection::Skipped {
            reason: "need at least two models for the two-step comparison".into(),
        };
    }
    if stations.len() < 2 {
        return TwoStepSection::Skipped {
            reason: "need at least two stations for the two-step comparison".into(),
        };
    }
    let (names, tables) = complete_tables(stations, models, outputs, test_len);
    if names.len() < 2 {
        return TwoStepSection::Skipped {
            reason: "fewer than two models succeeded on every station".into(),
        };
    }
    if !names.iter().any(|n| n == reference) {
        return TwoStepSection::Skipped {
            reason: format!("reference model '{reference}' has no complete results"),
        };
    }
    let station_names: Vec<String> = stations.iter().map(|(n, _)| n.clone()).collect();
    let mut per_metric = BTreeMap::new();
    for (metric, values) in tables {
        let table = ComparisonTable::new(names.clone(), station_names.clone(), values)
            .expect("dimensions checked above");
        let result = hochberg(&table, reference, alpha).expect("reference checked above");
        per_metric.insert(metric, result);
    }
    TwoStepSection::Computed { per_metric }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_artifacts(
    out_dir: &Path,
    report: &Report,
    stations: &[(String, Series)],
    models: &[ModelKind],
    outputs: &[Vec<Option<JobOutput>>],
    test_len: usize,
) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let forecasts_dir = out_dir.join("forecasts");
    let trace_dir = out_dir.join("bo_trace");
    fs::create_dir_all(&forecasts_dir).map_err(|e| CliError::io(&forecasts_dir, e))?;
    fs::create_dir_all(&trace_dir).map_err(|e| CliError::io(&trace_dir, e))?;

    let report_path = out_dir.join("report.json");
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    fs::write(&report_path, text).map_err(|e| CliError::io(&report_path, e))?;

    // long-form metric table for the stats entry point
    let mut metrics = String::from("station,model,rmse,mae,smape,arank\n");
    for run in &report.runs {
        if let Some(m) = &run.metrics {
            metrics.push_str(&format!(
                "{},{},{},{},{},{}\n",
                run.station,
                run.model,
                m.rmse,
                m.mae,
                m.smape,
                fmt_opt(m.arank)
            ));
        }
    }
    let metrics_path = out_dir.join("metrics.csv");
    fs::write(&metrics_path, metrics).map_err(|e| CliError::io(&metrics_path, e))?;

    for (si, (station, series)) in stations.iter().enumerate() {
        let actual = &series.values()[series.len() - test_len..];
        for (mj, model) in models.iter().enumerate() {
            let Some(out) = &outputs[si][mj] else {
                continue;
            };
            let mut body = String::from("month,actual,forecast\n");
            for (i, (a, f)) in actual.iter().zip(&out.forecasts).enumerate() {
                let label = series
                    .label_at(series.len() - test_len + i)
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| i.to_string());
                body.push_str(&format!("{label},{a},{f}\n"));
            }
            let path = forecasts_dir.join(format!("{station}_{}.csv", model.name()));
            fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        }

        let mut trace_body = String::from(
            "model,iteration,raw_m,raw_dr,raw_lr,raw_hu1,raw_hu2,raw_b,m,dr,lr,hu1,hu2,b,objective,best_so_far\n",
        );
        let mut any_trace = false;
        for (mj, model) in models.iter().enumerate() {
            let Some(out) = &outputs[si][mj] else {
                continue;
            };
            for entry in &out.trace {
                any_trace = true;
                // five raw coordinates mean the lag was pinned
                let (raw_m, rest) = match entry.raw.len() {
                    6 => (entry.raw[0].to_string(), &entry.raw[1..]),
                    _ => (String::new(), &entry.raw[..]),
                };
                let value = if entry.value.is_finite() {
                    entry.value.to_string()
                } else {
                    "-inf".to_string()
                };
                let best = if entry.best_so_far.is_finite() {
                    entry.best_so_far.to_string()
                } else {
                    "-inf".to_string()
                };
                trace_body.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    model.name(),
                    entry.iteration,
                    raw_m,
                    rest[0],
                    rest[1],
                    rest[2],
                    rest[3],
                    rest[4],
                    entry.params.m,
                    entry.params.dr,
                    entry.params.lr,
                    entry.params.hu1,
                    entry.params.hu2,
                    entry.params.b,
                    value,
                    best,
                ));
            }
        }
        if any_trace {
            let path = trace_dir.join(format!("{station}.csv"));
            fs::write(&path, trace_body).map_err(|e| CliError::io(&path, e))?;
        }
    }
    Ok(())
}

/// Runs the whole configured study and writes `report.json`, `metrics.csv`,
/// `forecasts/<station>_<model>.csv`, and `bo_trace/<station>.csv` under the
/// configured output directory.
///
/// Per-pair failures are isolated into error records; the function itself
/// only fails on configuration, IO, or input-data problems.
pub fn run_experiment(config: &ExperimentConfig) -> Result<StudyOutcome, CliError> {
    let pipeline_cfg = config.pipeline_config()?;
    let models = config.models();
    let test_len = config.split.test_len;

    let mut stations: Vec<(String, Series)> = Vec::new();
    for spec in &config.stations {
        let series = ingest_csv(&spec.csv)?;
        stations.push((spec.name.clone(), series));
    }

    // stationarity check on the pre-test history, as the study logs it
    let mut station_infos = Vec::new();
    for (name, series) in &stations {
        let trainval_len = series.len().saturating_sub(test_len);
        let adf = if trainval_len >= 2 {
            adf_test(&series.slice(0, trainval_len), None)
        } else {
            Err(CoreError::SeriesTooShort {
                have: series.len(),
                need: test_len + 2,
            })
        };
        match &adf {
            Ok(r) => eprintln!(
                "[adf] {name}: statistic {:.3}, p {}{}, {} lags",
                r.statistic,
                r.p_value,
                if r.clamped { " (clamped at table bound)" } else { "" },
                r.lags
            ),
            Err(e) => eprintln!("[adf] {name}: {e}"),
        }
        station_infos.push(StationInfo {
            name: name.clone(),
            length: series.len(),
            start: series.start().map(|s| s.to_string()),
            adf: adf.as_ref().ok().copied(),
            adf_error: adf.err().map(|e| e.to_string()),
        });
    }

    // one job per (station, model), executed by a bounded worker pool
    let jobs: Vec<(usize, usize)> = (0..stations.len())
        .flat_map(|si| (0..models.len()).map(move |mj| (si, mj)))
        .collect();
    let slots: Vec<Mutex<Option<JobResult>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let n_workers = config.effective_workers().min(jobs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..n_workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let (si, mj) = jobs[i];
                let (station, series) = &stations[si];
                let started = Instant::now();
                let result = run_job(series, station, models[mj], &pipeline_cfg);
                let secs = started.elapsed().as_secs_f64();
                match &result {
                    Ok(_) => eprintln!(
                        "[run] {station}/{} finished in {secs:.1}s",
                        models[mj].name()
                    ),
                    Err(e) => eprintln!(
                        "[run] {station}/{} failed after {secs:.1}s: {e}",
                        models[mj].name()
                    ),
                }
                *slots[i].lock().expect("slot lock") = Some((result, secs));
            });
        }
    });

    // gather into a (station x model) grid, in configuration order
    let mut outputs: Vec<Vec<Option<JobOutput>>> = (0..stations.len())
        .map(|_| (0..models.len()).map(|_| None).collect())
        .collect();
    let mut errors: Vec<Vec<Option<String>>> = (0..stations.len())
        .map(|_| (0..models.len()).map(|_| None).collect())
        .collect();
    let mut timings = Vec::with_capacity(jobs.len());
    for (slot, (si, mj)) in slots.into_iter().zip(&jobs) {
        let (result, secs) = slot.into_inner().expect("slot lock").expect("job ran");
        timings.push(RunTiming {
            station: stations[*si].0.clone(),
            model: models[*mj].name().to_string(),
            secs,
        });
        match result {
            Ok(out) => outputs[*si][*mj] = Some(out),
            Err(e) => errors[*si][*mj] = Some(e),
        }
    }

    // per-run metrics; arank over all models that succeeded at each station
    let mut runs = Vec::new();
    for (si, (station, series)) in stations.iter().enumerate() {
        let actual = &series.values()[series.len().saturating_sub(test_len)..];
        let succ: Vec<usize> = (0..models.len())
            .filter(|&mj| outputs[si][mj].is_some())
            .collect();
        let aranks: Option<Vec<f64>> = if succ.len() >= 2 {
            let forecasts: Vec<&[f64]> = succ
                .iter()
                .map(|&mj| outputs[si][mj].as_ref().expect("succ").forecasts.as_slice())
                .collect();
            Some(arank(actual, &forecasts).expect("aligned forecasts"))
        } else {
            None
        };
        for (mj, model) in models.iter().enumerate() {
            let record = match &outputs[si][mj] {
                Some(out) => {
                    let arank_value = aranks.as_ref().and_then(|a| {
                        succ.iter().position(|&x| x == mj).map(|pos| a[pos])
                    });
                    RunRecord {
                        station: station.clone(),
                        model: model.name().to_string(),
                        ok: true,
                        error: None,
                        metrics: Some(MetricSet {
                            rmse: rmse(actual, &out.forecasts)?,
                            mae: mae(actual, &out.forecasts)?,
                            smape: smape_modified(actual, &out.forecasts, SMAPE_EPSILON)?,
                            arank: arank_value,
                        }),
                        selected_lag: out.selected_lag,
                        params: out.params,
                        validation_objective: out.validation_objective,
                    }
                }
                None => RunRecord {
                    station: station.clone(),
                    model: model.name().to_string(),
                    ok: false,
                    error: errors[si][mj].clone(),
                    metrics: None,
                    selected_lag: None,
                    params: None,
                    validation_objective: None,
                },
            };
            runs.push(record);
        }
    }

    let two_step = two_step_section(
        &stations,
        &models,
        &outputs,
        test_len,
        &config.reference,
        config.alpha,
    );

    // hash only the fields that determine results; execution details like
    // the worker count and output directory stay out so reruns compare equal
    let mut canonical = serde_json::to_value(config).expect("config serializes");
    if let serde_json::Value::Object(map) = &mut canonical {
        map.remove("workers");
        map.remove("output_dir");
    }
    let config_text = canonical.to_string();
    let report = Report {
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: config.seed,
            config_hash: format!("{:016x}", hash_name(&config_text)),
        },
        stations: station_infos,
        runs,
        two_step,
    };

    write_artifacts(
        &config.output_dir,
        &report,
        &stations,
        &models,
        &outputs,
        test_len,
    )?;
    Ok(StudyOutcome { report, timings })
}
