//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use forecast_core::bo::{DimKind, DimSpec, SearchSpace};
use forecast_core::pipeline::{PipelineConfig, Variant};
use forecast_core::series::SplitSpec;

use crate::error::CliError;

/// One input series: a station name and the CSV holding it.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct StationSpec {
    pub name: String,
    pub csv: PathBuf,
}

/// A model to run: one of the LSTM lag-selection variants or a classical
/// baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Lstm(Variant),
    SeasonalNaive,
    HoltWinters,
}

impl ModelKind {
    pub fn parse(name: &str) -> Option<ModelKind> {
        match name {
            "PROP" => Some(ModelKind::Lstm(Variant::Prop)),
            "LSL" => Some(ModelKind::Lstm(Variant::Lsl)),
            "LFH1" => Some(ModelKind::Lstm(Variant::Lfh1)),
            "LFH1p25" => Some(ModelKind::Lstm(Variant::Lfh1p25)),
            "seasonal-naive" => Some(ModelKind::SeasonalNaive),
            "holt-winters" => Some(ModelKind::HoltWinters),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Lstm(v) => v.name(),
            ModelKind::SeasonalNaive => "seasonal-naive",
            ModelKind::HoltWinters => "holt-winters",
        }
    }
}

fn default_bo() -> BoBudget {
    BoBudget {
        n_initial: 10,
        n_iterations: 40,
    }
}

fn default_lstm() -> LstmBudget {
    LstmBudget {
        epochs: 150,
        patience: 20,
    }
}

fn default_split() -> SplitSpec {
    SplitSpec::equal(60)
}

fn default_deseasonalize() -> bool {
    true
}

fn default_workers() -> usize {
    1
}

fn default_reference() -> String {
    "PROP".into()
}

fn default_alpha() -> f64 {
    0.10
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct BoBudget {
    pub n_initial: usize,
    pub n_iterations: usize,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct LstmBudget {
    pub epochs: usize,
    pub patience: usize,
}

/// The experiment file: stations, models, budgets, seed, and output paths.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ExperimentConfig {
    pub stations: Vec<StationSpec>,
    /// Model names as accepted by [`ModelKind::parse`].
    pub variants: Vec<String>,
    #[serde(default = "default_split")]
    pub split: SplitSpec,
    #[serde(default = "default_bo")]
    pub bo: BoBudget,
    #[serde(default = "default_lstm")]
    pub lstm: LstmBudget,
    #[serde(default = "default_deseasonalize")]
    pub deseasonalize: bool,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_reference")]
    pub reference: String,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Optional per-dimension `[lower, upper]` overrides of the canonical
    /// search space, keyed by dimension name.
    #[serde(default)]
    pub search_space: std::collections::BTreeMap<String, [f64; 2]>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig, CliError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg = ExperimentConfig::from_json(&text)?;
        for s in &cfg.stations {
            if !s.csv.exists() {
                return Err(CliError::Config(format!(
                    "station '{}': csv path {} does not exist",
                    s.name,
                    s.csv.display()
                )));
            }
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.stations.is_empty() {
            return Err(CliError::Config("no stations configured".into()));
        }
        if self.variants.is_empty() {
            return Err(CliError::Config("no variants configured".into()));
        }
        for v in &self.variants {
            if ModelKind::parse(v).is_none() {
                return Err(CliError::Config(format!("unknown variant '{v}'")));
            }
        }
        let mut names: Vec<&str> = self.stations.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.stations.len() {
            return Err(CliError::Config("duplicate station names".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(CliError::Config("alpha must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn models(&self) -> Vec<ModelKind> {
        self.variants
            .iter()
            .map(|v| ModelKind::parse(v).expect("validated at load"))
            .collect()
    }

    /// The canonical search space with any configured bound overrides.
    pub fn search_space(&self) -> Result<SearchSpace, CliError> {
        let mut dims: Vec<DimSpec> = SearchSpace::canonical().dims().to_vec();
        for (name, [lower, upper]) in &self.search_space {
            let dim = dims
                .iter_mut()
                .find(|d| &d.name == name)
                .ok_or_else(|| CliError::Config(format!("unknown search dimension '{name}'")))?;
            if lower >= upper {
                return Err(CliError::Config(format!(
                    "dimension '{name}': lower bound must be below upper"
                )));
            }
            if dim.kind == DimKind::Integer && (lower.fract() != 0.0 || upper.fract() != 0.0) {
                return Err(CliError::Config(format!(
                    "dimension '{name}': integer bounds must be integral"
                )));
            }
            if dim.kind == DimKind::LogContinuous && *lower <= 0.0 {
                return Err(CliError::Config(format!(
                    "dimension '{name}': log-scaled bounds must be positive"
                )));
            }
            dim.lower = *lower;
            dim.upper = *upper;
        }
        Ok(SearchSpace::new(dims))
    }

    /// The per-run pipeline settings this configuration describes.
    pub fn pipeline_config(&self) -> Result<PipelineConfig, CliError> {
        Ok(PipelineConfig {
            split: self.split,
            space: self.search_space()?,
            n_initial: self.bo.n_initial,
            n_iterations: self.bo.n_iterations,
            epochs: self.lstm.epochs,
            patience: self.lstm.patience,
            kernel: forecast_core::gp::KernelKind::Matern52,
            deseasonalize: self.deseasonalize,
            seed: self.seed,
        })
    }

    /// Worker count after the `FORECAST_WORKERS` override.
    pub fn effective_workers(&self) -> usize {
        std::env::var("FORECAST_WORKERS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .unwrap_or(self.workers)
            .max(1)
    }
}
