//! The end-to-end forecasting workflow: deseasonalize the pre-test history,
//! split and normalize, optimize hyperparameters (including the lag count)
//! against the validation horizon, retrain on train plus validation, forecast
//! the test horizon recursively, then denormalize and reseasonalize.
//!
//! Seed discipline: a master seed fans out through
//! `derive_seed(master, [station_hash, variant_code, role, index])`, so every
//! training run is reproducible in isolation from its coordinates alone.

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::bo::{bo_optimize, BoTrace, HyperParams, SearchSpace};
use crate::gp::KernelKind;
use crate::lstm::{predict_recursive, train, LstmConfig};
use crate::rng::{derive_seed, hash_name, rng_from};
use crate::series::{
    decompose, make_lag_dataset, normalize_slice, split, NormSource, NormStats, Series, SplitSeries,
    SplitSpec,
};
use crate::{Error, Result};

/// Role tags for the seed fan-out.
const BO_TAG: u64 = 0xB0;
const EVAL_TAG: u64 = 0xE7;
const FINAL_TAG: u64 = 0xF1;

/// Which lag-selection strategy a pipeline run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Variant {
    /// Lag optimized jointly with the structural hyperparameters.
    Prop,
    /// Lag pinned to the seasonal length.
    Lsl,
    /// Lag pinned to the forecast horizon.
    Lfh1,
    /// Lag pinned to 1.25 times the seasonal length.
    Lfh1p25,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Prop => "PROP",
            Variant::Lsl => "LSL",
            Variant::Lfh1 => "LFH1",
            Variant::Lfh1p25 => "LFH1p25",
        }
    }

    fn code(&self) -> u64 {
        match self {
            Variant::Prop => 0,
            Variant::Lsl => 1,
            Variant::Lfh1 => 2,
            Variant::Lfh1p25 => 3,
        }
    }
}

/// The lag count a variant pins before training, or `None` when the lag is a
/// free optimization dimension.
pub fn lag_for_variant(variant: Variant, period: usize, horizon: usize) -> Option<usize> {
    match variant {
        Variant::Prop => None,
        Variant::Lsl => Some(period),
        Variant::Lfh1 => Some(horizon),
        Variant::Lfh1p25 => Some((period as f64 * 1.25).round() as usize),
    }
}

/// Settings shared by every variant of a study.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PipelineConfig {
    pub split: SplitSpec,
    pub space: SearchSpace,
    pub n_initial: usize,
    pub n_iterations: usize,
    pub epochs: usize,
    pub patience: usize,
    pub kernel: KernelKind,
    pub deseasonalize: bool,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(split: SplitSpec, seed: u64) -> Self {
        PipelineConfig {
            split,
            space: SearchSpace::canonical(),
            n_initial: 10,
            n_iterations: 40,
            epochs: 150,
            patience: 20,
            kernel: KernelKind::Matern52,
            deseasonalize: true,
            seed,
        }
    }
}

/// One evaluated proposal, with the realized coordinates lifted to full
/// hyperparameters (pinned lags included).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Natural-scale continuous pre-image; five entries when the lag was
    /// pinned, six when it was free.
    pub raw: Vec<f64>,
    pub params: HyperParams,
    pub value: f64,
    pub best_so_far: f64,
}

/// Outcome of one (station, variant) pipeline run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ForecastResult {
    pub station: String,
    pub variant: Variant,
    pub params: HyperParams,
    /// Point forecasts on the original scale, one per test observation.
    pub forecasts: Vec<f64>,
    /// Best validation objective (negative MSE on the normalized scale).
    pub validation_objective: f64,
    pub trace: Vec<TraceEntry>,
    /// Filled in by the caller that times the run; the pipeline itself does
    /// not read clocks.
    pub wall_clock_secs: f64,
}

/// Negative mean squared error, the objective being maximized.
pub fn neg_mse(forecasts: &[f64], targets: &[f64]) -> f64 {
    debug_assert_eq!(forecasts.len(), targets.len());
    let h = forecasts.len() as f64;
    -forecasts
        .iter()
        .zip(targets)
        .map(|(f, t)| (f - t) * (f - t))
        .sum::<f64>()
        / h
}

/// Trains one candidate on the normalized training part and scores it by
/// negative MSE of the recursive validation forecast, both on the normalized
/// scale. Any failure (lag too large, divergent training, non-finite output)
/// scores negative infinity so the optimization loop can continue.
pub fn objective_eval(
    candidate: &HyperParams,
    split: &SplitSeries,
    epochs: usize,
    patience: usize,
    seed: u64,
) -> f64 {
    if candidate.m >= split.train.len() {
        return f64::NEG_INFINITY;
    }
    let z_train = normalize_slice(split.train.values(), &split.norm);
    let z_val = normalize_slice(split.validation.values(), &split.norm);
    let Ok(dataset) = make_lag_dataset(&z_train, candidate.m) else {
        return f64::NEG_INFINITY;
    };
    let config = LstmConfig::from_hyper_params(candidate, epochs, patience, seed);
    let Ok((model, _)) = train(&config, &dataset) else {
        return f64::NEG_INFINITY;
    };
    let Ok(forecasts) = predict_recursive(&model, &z_train, z_val.len()) else {
        return f64::NEG_INFINITY;
    };
    if forecasts.iter().any(|f| !f.is_finite()) {
        return f64::NEG_INFINITY;
    }
    neg_mse(&forecasts, &z_val)
}

/// Index of the lag dimension in a search space, by its conventional name.
fn lag_dim_index(space: &SearchSpace) -> Option<usize> {
    space.dims().iter().position(|d| d.name == "m")
}

/// Removes the lag dimension for fixed-lag variants.
fn structural_subspace(space: &SearchSpace) -> Result<SearchSpace> {
    let idx = lag_dim_index(space).ok_or(Error::PipelineFailed(String::from(
        "search space has no lag dimension to remove",
    )))?;
    let mut dims = space.dims().to_vec();
    dims.remove(idx);
    Ok(SearchSpace::new(dims))
}

fn lift_params(realized: &[f64], pinned_m: Option<usize>) -> HyperParams {
    match pinned_m {
        None => HyperParams::from_full(realized),
        Some(m) => HyperParams::from_structural(realized, m),
    }
}

fn convert_trace(trace: BoTrace, pinned_m: Option<usize>) -> Vec<TraceEntry> {
    trace
        .records
        .into_iter()
        .map(|r| TraceEntry {
            iteration: r.iteration,
            params: lift_params(&r.realized, pinned_m),
            raw: r.raw,
            value: r.value,
            best_so_far: r.best_so_far,
        })
        .collect()
}

/// Runs the full pipeline for one station series and one variant.
///
/// The seasonal component and all normalization statistics are estimated
/// without ever reading the test observations; the test part of the series
/// only serves later metric computation.
pub fn run_variant(
    series: &Series,
    station: &str,
    variant: Variant,
    cfg: &PipelineConfig,
) -> Result<ForecastResult> {
    let t = series.len();
    let holdout = cfg.split.holdout_len();
    if t <= holdout {
        return Err(Error::SeriesTooShort {
            have: t,
            need: holdout + 1,
        });
    }
    let test_len = cfg.split.test_len;
    let trainval_len = t - test_len;
    let trainval_raw = series.slice(0, trainval_len);
    let test_raw = series.slice(trainval_len, test_len);

    // seasonal component from the pre-test history only
    let decomp = if cfg.deseasonalize {
        Some(decompose(&trainval_raw)?)
    } else {
        None
    };
    let trainval_work = decomp
        .as_ref()
        .map(|d| d.deseasonalized.clone())
        .unwrap_or(trainval_raw);

    // train/validation split on the working scale; the raw test part rides
    // along untouched so the three slices still concatenate to the source
    let mut work_values = trainval_work.values().to_vec();
    work_values.extend_from_slice(test_raw.values());
    let work_series = series.with_values(work_values);
    let work_split = split(&work_series, cfg.split)?;

    let pinned_m = lag_for_variant(variant, series.period(), test_len);
    if let Some(m) = pinned_m {
        if m == 0 || m >= work_split.train.len() {
            return Err(Error::LagTooLarge {
                lag: m,
                len: work_split.train.len(),
            });
        }
    }
    let space = match pinned_m {
        None => {
            lag_dim_index(&cfg.space).ok_or(Error::PipelineFailed(String::from(
                "search space has no lag dimension",
            )))?;
            cfg.space.clone()
        }
        Some(_) => structural_subspace(&cfg.space)?,
    };

    let station_tag = hash_name(station);
    let variant_tag = variant.code();
    let mut eval_index: u64 = 0;
    let objective = |realized: &[f64]| {
        let candidate = lift_params(realized, pinned_m);
        let seed = derive_seed(cfg.seed, &[station_tag, variant_tag, EVAL_TAG, eval_index]);
        eval_index += 1;
        objective_eval(&candidate, &work_split, cfg.epochs, cfg.patience, seed)
    };
    let mut bo_rng = rng_from(cfg.seed, &[station_tag, variant_tag, BO_TAG]);
    let (best_realized, bo_trace) = bo_optimize(
        objective,
        &space,
        cfg.n_initial,
        cfg.n_iterations,
        cfg.kernel,
        &mut bo_rng,
    )
    .map_err(|e| match e {
        Error::AllEvaluationsFailed => Error::PipelineFailed(format!(
            "every hyperparameter evaluation failed for {station}/{}",
            variant.name()
        )),
        other => other,
    })?;
    let best_params = lift_params(&best_realized, pinned_m);
    let trace = convert_trace(bo_trace, pinned_m);
    let validation_objective = trace
        .iter()
        .map(|e| e.value)
        .fold(f64::NEG_INFINITY, f64::max);

    // final model: fresh init, trained on train plus validation with its own
    // normalization statistics
    let mut trainval_values = work_split.train.values().to_vec();
    trainval_values.extend_from_slice(work_split.validation.values());
    let stats_trv = NormStats::from_values(&trainval_values, NormSource::TrainPlusValidation)?;
    let z_trv = normalize_slice(&trainval_values, &stats_trv);
    let dataset = make_lag_dataset(&z_trv, best_params.m)?;
    let final_seed = derive_seed(cfg.seed, &[station_tag, variant_tag, FINAL_TAG]);
    let config = LstmConfig::from_hyper_params(&best_params, cfg.epochs, cfg.patience, final_seed);
    let (model, _) = train(&config, &dataset).map_err(|e| {
        Error::PipelineFailed(format!(
            "final training failed for {station}/{}: {e}",
            variant.name()
        ))
    })?;
    let z_forecast = predict_recursive(&model, &z_trv, test_len)?;
    let mut forecasts: Vec<f64> = z_forecast
        .iter()
        .map(|z| z * stats_trv.range() + stats_trv.min)
        .collect();
    if let Some(d) = &decomp {
        let phase = trainval_len % series.period();
        forecasts = crate::series::reseasonalize_slice(&forecasts, &d.seasonal, phase);
    }
    if forecasts.iter().any(|f| !f.is_finite()) {
        return Err(Error::PipelineFailed(format!(
            "non-finite forecast for {station}/{}",
            variant.name()
        )));
    }

    Ok(ForecastResult {
        station: String::from(station),
        variant,
        params: best_params,
        forecasts,
        validation_objective,
        trace,
        wall_clock_secs: 0.0,
    })
}

/// The proposed method: the lag count is a free optimization dimension.
pub fn run_prop(series: &Series, station: &str, cfg: &PipelineConfig) -> Result<ForecastResult> {
    run_variant(series, station, Variant::Prop, cfg)
}

/// A fixed-lag variant: identical to [`run_prop`] except the lag is pinned
/// and only the structural dimensions are optimized.
pub fn run_fixed_lag(
    series: &Series,
    station: &str,
    variant: Variant,
    cfg: &PipelineConfig,
) -> Result<ForecastResult> {
    assert!(
        variant != Variant::Prop,
        "fixed-lag runs need a fixed-lag variant"
    );
    run_variant(series, station, variant, cfg)
}
