//! Ground-truth campaigns from known parameters, and brute-force oracles for the
//! marginal likelihood.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{
    assemble_flux_operators, initial_profile, march, propagator_sequences, solve_forward_sampled_from,
    ForwardModel,
};
use crate::likelihood::InferenceProblem;
use crate::linalg::cholesky_logdet;
use crate::model::{Campaign, Grid, InitialConditionKind, Stage, ThetaParams, TimeSeries, WallGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    /// °C.
    pub amplitude: f64,
    /// Minutes.
    pub period_min: f64,
    /// Radians.
    pub phase: f64,
}

/// One external temperature cycle: a cosine trough-to-trough of the given length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleSpec {
    pub length_min: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ExternalProfile {
    /// `mean + Σ aₖ sin(2πt/Pₖ + φₖ)`.
    Sinusoids { mean: f64, components: Vec<Sinusoid> },
    /// Consecutive cycles `mean − aₖ cos(2π(t − startₖ)/lenₖ)`, troughs at cycle
    /// boundaries; the last cycle repeats past the end of the list.
    Cycles { mean: f64, cycles: Vec<CycleSpec> },
}

impl ExternalProfile {
    pub fn eval(&self, t_min: f64) -> f64 {
        match self {
            ExternalProfile::Sinusoids { mean, components } => {
                mean + components
                    .iter()
                    .map(|c| c.amplitude * (2.0 * std::f64::consts::PI * t_min / c.period_min + c.phase).sin())
                    .sum::<f64>()
            }
            ExternalProfile::Cycles { mean, cycles } => {
                let mut start = 0.0;
                let mut chosen = cycles[cycles.len() - 1];
                let mut local = t_min;
                for (k, c) in cycles.iter().enumerate() {
                    if t_min < start + c.length_min || k == cycles.len() - 1 {
                        chosen = *c;
                        local = t_min - start;
                        break;
                    }
                    start += c.length_min;
                }
                let phase = (local / chosen.length_min).rem_euclid(1.0);
                mean - chosen.amplitude * (2.0 * std::f64::consts::PI * phase).cos()
            }
        }
    }
}

/// Room-side temperature: constant plus linear drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InternalProfile {
    pub mean: f64,
    /// °C per day.
    pub drift_per_day: f64,
}

impl InternalProfile {
    pub fn eval(&self, t_min: f64) -> f64 {
        self.mean + self.drift_per_day * t_min / 1440.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub temp_sd: f64,
    pub flux_sd: f64,
    /// Lag-one coefficient of stationary AR(1) noise; `None` for i.i.d.
    pub ar1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub theta_true: ThetaParams,
    pub ic: InitialConditionKind,
    pub geometry: WallGeometry,
    /// Inference grid; the simulation refines it by `refinement` in space and time.
    pub m_cells: usize,
    pub dt: f64,
    pub refinement: usize,
    pub internal: InternalProfile,
    pub external: ExternalProfile,
    pub noise: NoiseSpec,
    pub duration_min: f64,
    pub sample_min: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            theta_true: ThetaParams::new(0.31, 3.2e5, 15.0),
            ic: InitialConditionKind::PiecewiseLinear,
            geometry: WallGeometry::default(),
            m_cells: 60,
            dt: 60.0,
            refinement: 4,
            internal: InternalProfile {
                mean: 20.0,
                drift_per_day: 0.0,
            },
            external: ExternalProfile::Sinusoids {
                mean: 8.0,
                components: vec![Sinusoid {
                    amplitude: 10.0,
                    period_min: 1440.0,
                    phase: 0.0,
                }],
            },
            noise: NoiseSpec {
                temp_sd: 0.1,
                flux_sd: 0.66,
                ar1: None,
            },
            duration_min: 5.0 * 1440.0,
            sample_min: 1.0,
            seed: 1,
        }
    }
}

impl ScenarioSpec {
    pub fn n_samples(&self) -> usize {
        (self.duration_min / self.sample_min).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.theta_true.validate()?;
        self.theta_true.check_kind(self.ic)?;
        if self.refinement == 0 || self.m_cells < 3 || !(self.dt > 0.0) {
            return Err(Error::config("scenario grid needs refinement ≥ 1, M ≥ 3, dt > 0"));
        }
        if !(self.sample_min > 0.0) || self.n_samples() < 2 {
            return Err(Error::config("scenario needs a positive sample spacing and at least two samples"));
        }
        let steps = self.sample_min * 60.0 / self.fine_dt();
        if (steps - steps.round()).abs() > 1e-9 || steps.round() < 1.0 {
            return Err(Error::config(format!(
                "sample spacing {} min is not a whole number of {} s solver steps",
                self.sample_min,
                self.fine_dt()
            )));
        }
        if self.noise.temp_sd < 0.0 || self.noise.flux_sd < 0.0 {
            return Err(Error::config("noise sds must be non-negative"));
        }
        if let Some(phi) = self.noise.ar1 {
            if !(phi.abs() < 1.0) {
                return Err(Error::config("AR(1) coefficient must lie in (−1, 1)"));
            }
        }
        if let ExternalProfile::Cycles { cycles, .. } = &self.external {
            if cycles.is_empty() || cycles.iter().any(|c| !(c.length_min > 0.0)) {
                return Err(Error::config("cycle profile needs positive cycle lengths"));
            }
        }
        Ok(())
    }

    fn fine_dt(&self) -> f64 {
        self.dt / self.refinement as f64
    }
}

fn add_noise(values: &mut [f64], sd: f64, ar1: Option<f64>, rng: &mut ChaCha8Rng) {
    if sd == 0.0 {
        return;
    }
    match ar1 {
        None => {
            for v in values.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += sd * z;
            }
        }
        Some(phi) => {
            let innov = sd * (1.0 - phi * phi).sqrt();
            let mut e: f64 = sd * rng.sample::<f64, _>(StandardNormal);
            for v in values.iter_mut() {
                *v += e;
                e = phi * e + innov * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
}

/// Noisy raw campaign and its noise-free truth, sampled every `sample_min` from t = 0.
pub fn simulate_campaign(spec: &ScenarioSpec) -> Result<(Campaign, Campaign)> {
    spec.validate()?;
    let n = spec.n_samples();
    let stride = (spec.sample_min * 60.0 / spec.fine_dt()).round() as usize;
    let grid = Grid::new(spec.m_cells * spec.refinement, spec.fine_dt(), (n - 1) * stride)?;
    let fine_t = |k: usize| k as f64 * spec.fine_dt() / 60.0;
    let ti: Vec<f64> = (0..=grid.n_steps).map(|k| spec.internal.eval(fine_t(k))).collect();
    let te: Vec<f64> = (0..=grid.n_steps).map(|k| spec.external.eval(fine_t(k))).collect();
    let model = ForwardModel::new(&spec.theta_true, &spec.geometry, &grid)?;
    let t0 = initial_profile(spec.ic, ti[0], te[0], &spec.theta_true, &grid)?;
    let flux = march(&model, &t0, &ti, &te, stride);

    let sampled = |v: &[f64]| (0..n).map(|i| v[i * stride]).collect::<Vec<_>>();
    let ts = |values: Vec<f64>| TimeSeries::new(0.0, spec.sample_min, values);
    let truth = Campaign::new(
        ts(sampled(&ti)),
        ts(sampled(&te)),
        ts(flux.f_int),
        ts(flux.f_ext),
        Stage::Raw,
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut raw = truth.clone();
    add_noise(&mut raw.temp_int.values, spec.noise.temp_sd, spec.noise.ar1, &mut rng);
    add_noise(&mut raw.temp_ext.values, spec.noise.temp_sd, spec.noise.ar1, &mut rng);
    add_noise(&mut raw.flux_int.values, spec.noise.flux_sd, spec.noise.ar1, &mut rng);
    add_noise(&mut raw.flux_ext.values, spec.noise.flux_sd, spec.noise.ar1, &mut rng);
    Ok((raw, truth))
}

/// Log-density of the observed fluxes under the linear-Gaussian pushforward of the
/// boundary prior, by one dense 2n×2n Cholesky. Operators are rebuilt from scratch.
pub fn oracle_marginal_gaussian(problem: &InferenceProblem, theta: &ThetaParams) -> Result<f64> {
    let seq = propagator_sequences(theta, &problem.geometry, &problem.grid, problem.stride)?;
    let ops = assemble_flux_operators(&seq, theta, &problem.geometry, &problem.grid, problem.stride)?;
    let n = problem.n_obs();
    let t0 = problem.initial_profile(theta)?;
    let mean = ops.apply(&t0, &problem.boundary_int, &problem.boundary_ext);

    let stack = |top: DMatrix<f64>, bottom: DMatrix<f64>| {
        let mut m = DMatrix::<f64>::zeros(2 * n, n);
        m.rows_mut(0, n).copy_from(&top);
        m.rows_mut(n, n).copy_from(&bottom);
        m
    };
    let k_int = stack(ops.h_int.to_dense(), ops.g_int.to_dense());
    let k_ext = stack(ops.h_ext.to_dense(), ops.g_ext.to_dense());
    let st2 = problem.noise.sigma_temp_prior.powi(2);
    let mut cov = (&k_int * k_int.transpose() + &k_ext * k_ext.transpose()) * st2;
    for i in 0..n {
        cov[(i, i)] += problem.noise.sigma_flux_int.powi(2);
        cov[(n + i, n + i)] += problem.noise.sigma_flux_ext.powi(2);
    }
    let (chol, logdet) =
        cholesky_logdet(cov).ok_or_else(|| Error::numerical("oracle covariance not positive definite"))?;
    let resid = DVector::from_iterator(
        2 * n,
        (0..n)
            .map(|i| problem.q_int[i] - mean.f_int[i])
            .chain((0..n).map(|i| problem.q_ext[i] - mean.f_ext[i])),
    );
    let solved = chol.solve(&resid);
    Ok(-0.5 * resid.dot(&solved) - 0.5 * logdet - n as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Monte-Carlo estimate of the log marginal: log-mean-exp of the joint log-likelihood
/// over boundary draws from the prior, with a jackknife standard error.
pub fn oracle_marginal_mc(
    problem: &InferenceProblem,
    theta: &ThetaParams,
    n_draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_draws == 0 {
        return Err(Error::config("n_draws must be positive"));
    }
    let n = problem.n_obs();
    let t0 = problem.initial_profile(theta)?;
    let st = problem.noise.sigma_temp_prior;
    let si2 = problem.noise.sigma_flux_int.powi(2);
    let se2 = problem.noise.sigma_flux_ext.powi(2);
    let norm = -(n as f64) * (2.0 * std::f64::consts::PI * problem.noise.sigma_flux_int * problem.noise.sigma_flux_ext).ln();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut logs = Vec::with_capacity(n_draws);
    let mut bi = vec![0.0; n];
    let mut be = vec![0.0; n];
    for _ in 0..n_draws {
        for i in 0..n {
            bi[i] = problem.boundary_int[i] + st * rng.sample::<f64, _>(StandardNormal);
            be[i] = problem.boundary_ext[i] + st * rng.sample::<f64, _>(StandardNormal);
        }
        let f = solve_forward_sampled_from(theta, &problem.geometry, &problem.grid, &t0, &bi, &be, problem.stride)?;
        let mi: f64 = problem.q_int.iter().zip(&f.f_int).map(|(q, v)| (q - v).powi(2)).sum();
        let me: f64 = problem.q_ext.iter().zip(&f.f_ext).map(|(q, v)| (q - v).powi(2)).sum();
        logs.push(norm - 0.5 * mi / si2 - 0.5 * me / se2);
    }
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let k = n_draws as f64;
    let estimate = m + (total / k).ln();
    if n_draws == 1 {
        return Ok((estimate, f64::INFINITY));
    }
    let loo: Vec<f64> = w.iter().map(|wi| m + ((total - wi).max(0.0) / (k - 1.0)).ln()).collect();
    let mean_loo = loo.iter().sum::<f64>() / k;
    let var = (k - 1.0) / k * loo.iter().map(|l| (l - mean_loo).powi(2)).sum::<f64>();
    Ok((estimate, var.sqrt()))
}
