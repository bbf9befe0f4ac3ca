//! Run configuration. Every field has a default, unknown keys are rejected, and the
//! fully resolved document is written next to each run's results.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wallinfer::inference::{FitOptions, McmcConfig};
use wallinfer::likelihood::LikelihoodKind;
use wallinfer::model::{InitialConditionKind, NoiseModel, PriorBox, ThetaParams, WallGeometry};
use wallinfer::pipeline::{ModelConfig, PreprocessConfig, SeriesSource};
use wallinfer::robustness::SubsampleConfig;
use wallinfer::synthetic::ScenarioSpec;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Raw campaign CSV.
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            input: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Spatial cells across the wall.
    pub m_cells: usize,
    /// Solver step, s.
    pub dt: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { m_cells: 60, dt: 60.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    /// Parameters to predict at; the MAP is fitted when absent.
    pub theta: Option<ThetaParams>,
    pub n_draws: usize,
    pub seed: u64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            theta: None,
            n_draws: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub likelihood: LikelihoodKind,
    pub ic: InitialConditionKind,
    pub deterministic_boundaries: SeriesSource,
    pub t0_source: SeriesSource,
    pub fit: FitOptions,
    /// Without `proposal_sd` the sampler uses 2.38/√d times the Laplace sds.
    pub mcmc: McmcConfig,
    pub aic_kinds: Vec<InitialConditionKind>,
    /// Histogram bins in marginal summaries.
    pub summary_bins: usize,
    pub predict: PredictConfig,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            likelihood: LikelihoodKind::Marginal,
            ic: InitialConditionKind::PiecewiseLinear,
            deterministic_boundaries: SeriesSource::Averaged,
            t0_source: SeriesSource::Smoothed,
            fit: FitOptions::default(),
            mcmc: McmcConfig::default(),
            aic_kinds: InitialConditionKind::ALL.to_vec(),
            summary_bins: 40,
            predict: PredictConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    /// Window ends (observation counts) for the duration sweep; empty means every
    /// `checkpoint_step` observations from `min_window` to the end.
    pub checkpoints: Vec<usize>,
    pub checkpoint_step: usize,
    pub min_window: usize,
    /// Minimum spacing of cycle-separating minima, minutes.
    pub min_separation_min: f64,
    /// Minimum prominence of cycle-separating minima, °C.
    pub min_prominence: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            checkpoints: Vec::new(),
            checkpoint_step: 24,
            min_window: 100,
            min_separation_min: 720.0,
            min_prominence: 1.0,
        }
    }
}

impl DesignConfig {
    pub fn checkpoints_for(&self, n_obs: usize) -> Vec<usize> {
        if !self.checkpoints.is_empty() {
            return self.checkpoints.clone();
        }
        let step = self.checkpoint_step.max(1);
        let mut c: Vec<usize> = (self.min_window..n_obs).step_by(step).collect();
        c.push(n_obs);
        c.dedup();
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub geometry: WallGeometry,
    pub grid: GridConfig,
    pub priors: PriorBox,
    pub noise: NoiseModel,
    pub preprocessing: PreprocessConfig,
    pub inference: InferenceConfig,
    pub design: DesignConfig,
    pub robustness: SubsampleConfig,
    pub simulation: ScenarioSpec,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::ConfigFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            geometry: self.geometry,
            m_cells: self.grid.m_cells,
            dt: self.grid.dt,
            priors: self.priors,
            noise: self.noise,
            ic: self.inference.ic,
            likelihood: self.inference.likelihood,
            deterministic_boundaries: self.inference.deterministic_boundaries,
            t0_source: self.inference.t0_source,
        }
    }

    pub fn input(&self) -> Result<&Path, CliError> {
        self.paths
            .input
            .as_deref()
            .ok_or_else(|| CliError::Lib(wallinfer::Error::config("no input CSV given (paths.input or --input)")))
    }
}
