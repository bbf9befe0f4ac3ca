//! Raw campaign to inference problem: averaging, smoothing, noise estimation,
//! decimation, and problem assembly. Also flux prediction bands.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::solve_forward_sampled_from;
use crate::inference::quantile_sorted;
use crate::likelihood::{InferenceProblem, LikelihoodKind, ProblemSettings};
use crate::model::{Campaign, InitialConditionKind, NoiseModel, PriorBox, ThetaParams, TimeSeries, WallGeometry};
use crate::preprocess::{average_campaign, characterize, log_grid, select_lag, SeriesNoise, SmootherConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaGridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for LambdaGridSpec {
    fn default() -> Self {
        LambdaGridSpec {
            min: 1e-10,
            max: 1e6,
            points: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Fixed moving-average lag; `None` selects one from `lag_candidates`.
    pub lag: Option<usize>,
    pub lag_candidates: Vec<usize>,
    pub lambda_grid: LambdaGridSpec,
    pub acf_lags: usize,
    pub ljung_box_lags: usize,
    /// Keep every k-th averaged sample for inference.
    pub decimation: usize,
    /// Replace the configured flux noise sds with the smoothing-residual estimates.
    pub estimate_flux_noise: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            lag: None,
            lag_candidates: (2..=12).collect(),
            lambda_grid: LambdaGridSpec::default(),
            acf_lags: 50,
            ljung_box_lags: 20,
            decimation: 1,
            estimate_flux_noise: true,
        }
    }
}

impl PreprocessConfig {
    pub fn smoother(&self) -> Result<SmootherConfig> {
        let g = self.lambda_grid;
        if !(g.min > 0.0 && g.max >= g.min) || g.points == 0 {
            return Err(Error::config("lambda grid needs 0 < min ≤ max and at least one point"));
        }
        let cfg = SmootherConfig {
            lambda_grid: log_grid(g.min, g.max, g.points),
            acf_lags: self.acf_lags,
            ljung_box_lags: self.ljung_box_lags,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Where the initial profile's face temperatures come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesSource {
    #[default]
    Smoothed,
    Averaged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub geometry: WallGeometry,
    pub m_cells: usize,
    /// Solver step, s.
    pub dt: f64,
    pub priors: PriorBox,
    pub noise: NoiseModel,
    pub ic: InitialConditionKind,
    pub likelihood: LikelihoodKind,
    /// Boundary series treated as exact by the deterministic likelihood.
    pub deterministic_boundaries: SeriesSource,
    pub t0_source: SeriesSource,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            geometry: WallGeometry::default(),
            m_cells: 60,
            dt: 60.0,
            priors: PriorBox::default(),
            noise: NoiseModel::default(),
            ic: InitialConditionKind::PiecewiseLinear,
            likelihood: LikelihoodKind::Marginal,
            deterministic_boundaries: SeriesSource::Averaged,
            t0_source: SeriesSource::Smoothed,
        }
    }
}

/// Everything produced between the raw campaign and the likelihood.
#[derive(Debug)]
pub struct Prepared {
    pub lag: usize,
    pub lag_scores: Vec<(usize, f64)>,
    /// Averaged campaign before decimation.
    pub averaged: Campaign,
    /// Smoothed averaged temperatures before decimation.
    pub smoothed_int: TimeSeries,
    pub smoothed_ext: TimeSeries,
    pub noise_report: Vec<SeriesNoise>,
    pub noise: NoiseModel,
    pub problem: InferenceProblem,
}

/// Lag selection (unless fixed), averaging, then [`prepare_averaged`].
pub fn prepare(raw: &Campaign, pre: &PreprocessConfig, model: &ModelConfig) -> Result<Prepared> {
    raw.ensure_valid()?;
    let (lag, scores) = match pre.lag {
        Some(l) => (l, Vec::new()),
        None => {
            let sel = select_lag(raw, &pre.lag_candidates, &pre.smoother()?)?;
            (sel.lag, sel.scores)
        }
    };
    let averaged = average_campaign(raw, lag)?;
    let mut p = prepare_averaged(&averaged, pre, model)?;
    p.lag = lag;
    p.lag_scores = scores;
    Ok(p)
}

/// Smooths an averaged campaign, estimates noise, decimates, and builds the problem.
pub fn prepare_averaged(averaged: &Campaign, pre: &PreprocessConfig, model: &ModelConfig) -> Result<Prepared> {
    averaged.ensure_valid()?;
    let smoother = pre.smoother()?;
    let (report, fits) = characterize(averaged, &smoother)?;
    let mut noise = model.noise;
    if pre.estimate_flux_noise {
        // Report order follows SeriesId::ALL: temp_int, temp_ext, flux_int, flux_ext.
        let sd = |k: usize| report[k].sigma;
        if sd(2) > 0.0 && sd(3) > 0.0 {
            noise.sigma_flux_int = sd(2);
            noise.sigma_flux_ext = sd(3);
        }
    }
    let smoothed_int = fits[0].fitted.clone();
    let smoothed_ext = fits[1].fitted.clone();

    let k = pre.decimation.max(1);
    let dec = averaged.decimate(k);
    let mu_int = smoothed_int.decimate(k);
    let mu_ext = smoothed_ext.decimate(k);
    let dt_obs = dec.dt_sample() * 60.0;
    let steps = dt_obs / model.dt;
    if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) || steps.round() < 1.0 {
        return Err(Error::config(format!(
            "observation spacing {dt_obs} s is not a whole number of {} s solver steps",
            model.dt
        )));
    }
    let settings = ProblemSettings {
        geometry: model.geometry,
        m_cells: model.m_cells,
        stride: steps.round() as usize,
        noise,
        ic: model.ic,
        kind: model.likelihood,
        prior: model.priors,
    };
    let (bi, be) = match (model.likelihood, model.deterministic_boundaries) {
        (LikelihoodKind::Deterministic, SeriesSource::Averaged) => {
            (dec.temp_int.values.clone(), dec.temp_ext.values.clone())
        }
        _ => (mu_int.values.clone(), mu_ext.values.clone()),
    };
    let mut problem = InferenceProblem::new(
        dec.flux_int.values.clone(),
        dec.flux_ext.values.clone(),
        bi,
        be,
        dt_obs,
        &settings,
    )?;
    problem.t0_reference = Some(match model.t0_source {
        SeriesSource::Smoothed => (mu_int.values.clone(), mu_ext.values.clone()),
        SeriesSource::Averaged => (dec.temp_int.values.clone(), dec.temp_ext.values.clone()),
    });
    Ok(Prepared {
        lag: 1,
        lag_scores: Vec::new(),
        averaged: averaged.clone(),
        smoothed_int,
        smoothed_ext,
        noise_report: report,
        noise,
        problem,
    })
}

/// Pointwise flux quantiles over boundary draws from the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBands {
    pub median_int: Vec<f64>,
    pub lower_int: Vec<f64>,
    pub upper_int: Vec<f64>,
    pub median_ext: Vec<f64>,
    pub lower_ext: Vec<f64>,
    pub upper_ext: Vec<f64>,
}

/// Median and 95% band of modelled fluxes at θ when the boundaries are drawn from
/// N(μ, σ_T²I).
pub fn predict_bands(problem: &InferenceProblem, theta: &ThetaParams, n_draws: usize, seed: u64) -> Result<PredictionBands> {
    if n_draws == 0 {
        return Err(Error::config("prediction needs at least one draw"));
    }
    let n = problem.n_obs();
    let t0 = problem.initial_profile(theta)?;
    let st = problem.noise.sigma_temp_prior;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fi = vec![Vec::with_capacity(n_draws); n];
    let mut fe = vec![Vec::with_capacity(n_draws); n];
    let mut bi = vec![0.0; n];
    let mut be = vec![0.0; n];
    for _ in 0..n_draws {
        for i in 0..n {
            bi[i] = problem.boundary_int[i] + st * rng.sample::<f64, _>(StandardNormal);
            be[i] = problem.boundary_ext[i] + st * rng.sample::<f64, _>(StandardNormal);
        }
        let f = solve_forward_sampled_from(theta, &problem.geometry, &problem.grid, &t0, &bi, &be, problem.stride)?;
        for i in 0..n {
            fi[i].push(f.f_int[i]);
            fe[i].push(f.f_ext[i]);
        }
    }
    let q = |cols: &mut Vec<Vec<f64>>, p: f64| -> Vec<f64> {
        cols.iter_mut()
            .map(|c| {
                c.sort_by(|a, b| a.partial_cmp(b).unwrap());
                quantile_sorted(c, p)
            })
            .collect()
    };
    Ok(PredictionBands {
        median_int: q(&mut fi, 0.5),
        lower_int: q(&mut fi, 0.025),
        upper_int: q(&mut fi, 0.975),
        median_ext: q(&mut fe, 0.5),
        lower_ext: q(&mut fe, 0.025),
        upper_ext: q(&mut fe, 0.975),
    })
}
