//! Flux likelihoods: deterministic boundaries, and boundaries integrated out against a
//! Gaussian prior centred on smoothed temperature series.
//!
//! The marginal is evaluated about the prior means. With `δ = T − μ` and residuals
//! `r = Q − (flux at T0, μ)`, integrating δ_int then δ_ext gives
//!
//! ```text
//! log L = −½log|P0| − ½log|P1| − ½U + ½σ²·t_int'P0⁻¹t_int + ½σ²·t_ext'P1⁻¹t_ext − n·log(2π σ_int σ_ext)
//! P0 = I + σ²(H_int'H_int/σ_int² + G_int'G_int/σ_ext²)
//! P1 = I + σ²(H_ext'H_ext/σ_int² + G_ext'G_ext/σ_ext²) − σ⁴·W'W,   W = L0⁻¹A,  P0 = L0L0'
//! ```
//!
//! where σ is the boundary prior sd and `A = H_int'H_ext/σ_int² + G_int'G_ext/σ_ext²`.
//! In this form `Λ0 = σ²P0⁻¹`, `Λ1 = σ²P1⁻¹` and σ → 0 degrades gracefully to the
//! plug-in likelihood at the means.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{
    assemble_flux_operators, initial_profile, observation_count, solve_forward_sampled_from,
    FluxOperators, SequenceCache,
};
use crate::linalg::{cholesky_logdet, dot, LowerToeplitzOperator};
use crate::model::{
    Campaign, Grid, InitialConditionKind, NoiseModel, PriorBox, ThetaParams, TimeSeries, WallGeometry,
};

/// Gaussian prior on the boundary temperatures: mean series and a common sd.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPrior {
    pub mu_int: TimeSeries,
    pub mu_ext: TimeSeries,
    pub sigma_temp_prior: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LikelihoodKind {
    Deterministic,
    #[default]
    Marginal,
}

/// Solver steps per observation interval implied by a grid and an observation count.
pub fn observation_stride(grid: &Grid, n_obs: usize, dt_obs_seconds: f64) -> Result<usize> {
    grid.validate()?;
    if n_obs < 2 {
        return Err(Error::data("need at least two observations"));
    }
    if grid.n_steps % (n_obs - 1) != 0 {
        return Err(Error::config(format!(
            "{} solver steps do not divide evenly over {} observation intervals",
            grid.n_steps,
            n_obs - 1
        )));
    }
    let stride = grid.n_steps / (n_obs - 1);
    let implied = grid.dt * stride as f64;
    if (implied - dt_obs_seconds).abs() > 1e-9 * dt_obs_seconds.abs().max(1.0) {
        return Err(Error::config(format!(
            "solver step {} s × {stride} does not match the {dt_obs_seconds} s observation spacing",
            grid.dt
        )));
    }
    Ok(stride)
}

fn check_finite(theta: &ThetaParams, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numerical(format!(
            "non-finite modelled flux at R={}, rhoC={}, tau0={}",
            theta.r_value, theta.rho_c, theta.tau0
        )))
    }
}

fn gaussian_log_norm(n: usize, noise: &NoiseModel) -> f64 {
    -(n as f64) * (2.0 * std::f64::consts::PI * noise.sigma_flux_int * noise.sigma_flux_ext).ln()
}

/// Observed fluxes, boundary series, and everything needed to evaluate a likelihood at
/// any θ. Caches propagator sequences and marginal factorizations keyed on (R, ρC).
#[derive(Debug)]
pub struct InferenceProblem {
    pub q_int: Vec<f64>,
    pub q_ext: Vec<f64>,
    /// Exact boundaries for the deterministic likelihood, prior means for the marginal.
    pub boundary_int: Vec<f64>,
    pub boundary_ext: Vec<f64>,
    pub noise: NoiseModel,
    pub geometry: WallGeometry,
    pub grid: Grid,
    pub stride: usize,
    pub ic: InitialConditionKind,
    pub kind: LikelihoodKind,
    pub prior: PriorBox,
    /// Series whose first values anchor the initial profile's faces; defaults to the
    /// boundary series.
    pub t0_reference: Option<(Vec<f64>, Vec<f64>)>,
    sequences: SequenceCache,
    factors: Mutex<VecDeque<(FactorKey, Arc<MarginalFactors>)>>,
}

/// Settings shared by every problem built from one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSettings {
    pub geometry: WallGeometry,
    pub m_cells: usize,
    /// Solver steps per observation interval.
    pub stride: usize,
    pub noise: NoiseModel,
    pub ic: InitialConditionKind,
    pub kind: LikelihoodKind,
    pub prior: PriorBox,
}

impl Default for ProblemSettings {
    fn default() -> Self {
        ProblemSettings {
            geometry: WallGeometry::default(),
            m_cells: 60,
            stride: 1,
            noise: NoiseModel::default(),
            ic: InitialConditionKind::default(),
            kind: LikelihoodKind::default(),
            prior: PriorBox::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct FactorKey {
    r_bits: u64,
    rho_c_bits: u64,
}

impl InferenceProblem {
    /// `dt_obs_seconds` is the spacing of the observation series.
    pub fn new(
        q_int: Vec<f64>,
        q_ext: Vec<f64>,
        boundary_int: Vec<f64>,
        boundary_ext: Vec<f64>,
        dt_obs_seconds: f64,
        settings: &ProblemSettings,
    ) -> Result<Self> {
        let n = q_int.len();
        if n < 2 {
            return Err(Error::data("need at least two observations"));
        }
        for (name, len) in [
            ("flux_ext", q_ext.len()),
            ("boundary_int", boundary_int.len()),
            ("boundary_ext", boundary_ext.len()),
        ] {
            if len != n {
                return Err(Error::data(format!("{name} has {len} samples, flux_int has {n}")));
            }
        }
        if [&q_int, &q_ext, &boundary_int, &boundary_ext]
            .iter()
            .any(|v| v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::data("non-finite value in inference inputs"));
        }
        if settings.stride == 0 {
            return Err(Error::config("observation stride must be at least 1"));
        }
        settings.noise.validate()?;
        settings.prior.validate()?;
        let grid = Grid::new(
            settings.m_cells,
            dt_obs_seconds / settings.stride as f64,
            (n - 1) * settings.stride,
        )?;
        Ok(InferenceProblem {
            q_int,
            q_ext,
            boundary_int,
            boundary_ext,
            noise: settings.noise,
            geometry: settings.geometry,
            grid,
            stride: settings.stride,
            ic: settings.ic,
            kind: settings.kind,
            prior: settings.prior,
            t0_reference: None,
            sequences: SequenceCache::default(),
            factors: Mutex::new(VecDeque::new()),
        })
    }

    /// Builds a problem from an averaged campaign: fluxes are the observations, and the
    /// boundaries are either the supplied means (e.g. smoothed temperatures) or the
    /// campaign temperatures.
    pub fn from_campaign(
        campaign: &Campaign,
        boundaries: Option<(&[f64], &[f64])>,
        settings: &ProblemSettings,
    ) -> Result<Self> {
        campaign.ensure_valid()?;
        let (bi, be) = match boundaries {
            Some((bi, be)) => (bi.to_vec(), be.to_vec()),
            None => (campaign.temp_int.values.clone(), campaign.temp_ext.values.clone()),
        };
        InferenceProblem::new(
            campaign.flux_int.values.clone(),
            campaign.flux_ext.values.clone(),
            bi,
            be,
            campaign.dt_sample() * 60.0,
            settings,
        )
    }

    pub fn n_obs(&self) -> usize {
        self.q_int.len()
    }

    /// Same data and settings under a different likelihood or initial condition.
    pub fn with_model(&self, kind: LikelihoodKind, ic: InitialConditionKind) -> Self {
        InferenceProblem {
            q_int: self.q_int.clone(),
            q_ext: self.q_ext.clone(),
            boundary_int: self.boundary_int.clone(),
            boundary_ext: self.boundary_ext.clone(),
            noise: self.noise,
            geometry: self.geometry,
            grid: self.grid,
            stride: self.stride,
            ic,
            kind,
            prior: self.prior,
            t0_reference: self.t0_reference.clone(),
            sequences: SequenceCache::default(),
            factors: Mutex::new(VecDeque::new()),
        }
    }

    /// Sub-problem on observations `start..end`; the initial profile is re-anchored at
    /// the window's first samples.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_obs() || end - start < 2 {
            return Err(Error::config(format!(
                "window {start}..{end} is invalid for {} observations",
                self.n_obs()
            )));
        }
        let grid = Grid::new(self.grid.m_cells, self.grid.dt, (end - start - 1) * self.stride)?;
        Ok(InferenceProblem {
            q_int: self.q_int[start..end].to_vec(),
            q_ext: self.q_ext[start..end].to_vec(),
            boundary_int: self.boundary_int[start..end].to_vec(),
            boundary_ext: self.boundary_ext[start..end].to_vec(),
            grid,
            t0_reference: self
                .t0_reference
                .as_ref()
                .map(|(a, b)| (a[start..end].to_vec(), b[start..end].to_vec())),
            ..self.with_model(self.kind, self.ic)
        })
    }

    pub fn initial_profile(&self, theta: &ThetaParams) -> Result<Vec<f64>> {
        let (a, b) = match &self.t0_reference {
            Some((ri, re)) => (ri[0], re[0]),
            None => (self.boundary_int[0], self.boundary_ext[0]),
        };
        initial_profile(self.ic, a, b, theta, &self.grid)
    }

    /// Log-likelihood of the configured kind.
    pub fn log_likelihood(&self, theta: &ThetaParams) -> Result<f64> {
        match self.kind {
            LikelihoodKind::Deterministic => self.log_likelihood_deterministic(theta),
            LikelihoodKind::Marginal => self.log_marginal_likelihood(theta),
        }
    }

    /// Uniform prior on the box for this problem's initial-condition model.
    pub fn log_prior(&self, theta: &ThetaParams) -> f64 {
        log_prior_kind(theta, &self.prior, self.ic)
    }

    /// Log-posterior; −∞ outside the box or where the likelihood fails.
    pub fn log_posterior(&self, theta: &ThetaParams) -> f64 {
        let lp = self.log_prior(theta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        match self.log_likelihood(theta) {
            Ok(v) if v.is_finite() => v + lp,
            _ => f64::NEG_INFINITY,
        }
    }

    /// Log-posterior over the free-parameter vector of this problem's IC model.
    pub fn log_posterior_vec(&self, v: &[f64]) -> f64 {
        self.log_posterior(&self.theta_from_vec(v))
    }

    pub fn theta_from_vec(&self, v: &[f64]) -> ThetaParams {
        self.prior.center(self.ic).with_free(v, self.ic)
    }

    pub fn log_likelihood_deterministic(&self, theta: &ThetaParams) -> Result<f64> {
        let t0 = self.initial_profile(theta)?;
        let flux = solve_forward_sampled_from(
            theta,
            &self.geometry,
            &self.grid,
            &t0,
            &self.boundary_int,
            &self.boundary_ext,
            self.stride,
        )?;
        check_finite(theta, &flux.f_int)?;
        check_finite(theta, &flux.f_ext)?;
        let si2 = self.noise.sigma_flux_int.powi(2);
        let se2 = self.noise.sigma_flux_ext.powi(2);
        let misfit_i: f64 = self.q_int.iter().zip(&flux.f_int).map(|(q, f)| (q - f).powi(2)).sum();
        let misfit_e: f64 = self.q_ext.iter().zip(&flux.f_ext).map(|(q, f)| (q - f).powi(2)).sum();
        Ok(gaussian_log_norm(self.n_obs(), &self.noise) - 0.5 * misfit_i / si2 - 0.5 * misfit_e / se2)
    }

    /// Flux operators at θ (shares the propagator cache).
    pub fn operators(&self, theta: &ThetaParams) -> Result<FluxOperators> {
        let seq = self
            .sequences
            .get_or_build(theta, &self.geometry, &self.grid, self.stride)?;
        assemble_flux_operators(&seq, theta, &self.geometry, &self.grid, self.stride)
    }

    fn factors(&self, theta: &ThetaParams) -> Result<Arc<MarginalFactors>> {
        theta.validate()?;
        let key = FactorKey {
            r_bits: theta.r_value.to_bits(),
            rho_c_bits: theta.rho_c.to_bits(),
        };
        {
            let mut cache = self.factors.lock().expect("factor cache poisoned");
            if let Some(pos) = cache.iter().position(|(k, _)| *k == key) {
                let hit = cache.remove(pos).unwrap();
                let f = Arc::clone(&hit.1);
                cache.push_front(hit);
                return Ok(f);
            }
        }
        let ops = self.operators(theta)?;
        let f = Arc::new(MarginalFactors::new(ops, &self.noise, theta)?);
        let mut cache = self.factors.lock().expect("factor cache poisoned");
        cache.push_front((key, Arc::clone(&f)));
        cache.truncate(4);
        Ok(f)
    }

    /// Residuals of the observed fluxes about the flux at (T0, μ_int, μ_ext).
    fn centred_residuals(&self, theta: &ThetaParams, ops: &FluxOperators) -> Result<(Vec<f64>, Vec<f64>)> {
        let t0 = self.initial_profile(theta)?;
        let mean = ops.apply(&t0, &self.boundary_int, &self.boundary_ext);
        check_finite(theta, &mean.f_int)?;
        check_finite(theta, &mean.f_ext)?;
        let ri = self.q_int.iter().zip(&mean.f_int).map(|(q, f)| q - f).collect();
        let re = self.q_ext.iter().zip(&mean.f_ext).map(|(q, f)| q - f).collect();
        Ok((ri, re))
    }

    pub fn log_marginal_likelihood(&self, theta: &ThetaParams) -> Result<f64> {
        let f = self.factors(theta)?;
        let (ri, re) = self.centred_residuals(theta, &f.ops)?;
        let parts = f.evaluate(&ri, &re);
        let n = self.n_obs();
        Ok(-0.5 * f.log_det_p0 - 0.5 * f.log_det_p1 - 0.5 * parts.u
            + 0.5 * parts.quad_int
            + 0.5 * parts.quad_ext
            + gaussian_log_norm(n, &self.noise))
    }

    /// Dense marginalization intermediates at θ, for inspection. Requires σ_T > 0.
    pub fn marginal_workspace(&self, theta: &ThetaParams) -> Result<MarginalWorkspace> {
        let st2 = self.noise.sigma_temp_prior.powi(2);
        if st2 <= 0.0 {
            return Err(Error::config("marginal workspace needs sigma_temp_prior > 0"));
        }
        let f = self.factors(theta)?;
        let (ri, re) = self.centred_residuals(theta, &f.ops)?;
        let parts = f.evaluate(&ri, &re);
        let n = self.n_obs();
        let ident = DMatrix::<f64>::identity(n, n);
        let lambda0 = f.p0.solve(&ident) * st2;
        let lambda1 = f.p1.solve(&ident) * st2;
        let nst = n as f64 * st2.ln();
        Ok(MarginalWorkspace {
            lambda0,
            lambda1,
            u: parts.u,
            t_int_2: parts.t_int,
            t_ext_1: parts.t_ext,
            log_det_lambda0: nst - f.log_det_p0,
            log_det_lambda1: nst - f.log_det_p1,
        })
    }
}

/// Intermediates of the marginalization, all taken about the prior means.
#[derive(Debug, Clone)]
pub struct MarginalWorkspace {
    pub lambda0: DMatrix<f64>,
    pub lambda1: DMatrix<f64>,
    pub u: f64,
    pub t_int_2: DVector<f64>,
    /// Includes the Λ0 correction from integrating the interior boundary first.
    pub t_ext_1: DVector<f64>,
    pub log_det_lambda0: f64,
    pub log_det_lambda1: f64,
}

impl MarginalWorkspace {
    /// Recomposes the log marginal from the stored pieces.
    pub fn log_marginal(&self, noise: &NoiseModel) -> f64 {
        let n = self.t_int_2.len();
        let st2 = noise.sigma_temp_prior.powi(2);
        let q0 = self.t_int_2.dot(&(&self.lambda0 * &self.t_int_2));
        let q1 = self.t_ext_1.dot(&(&self.lambda1 * &self.t_ext_1));
        0.5 * self.log_det_lambda0 + 0.5 * self.log_det_lambda1 - 0.5 * self.u + 0.5 * q0 + 0.5 * q1
            + gaussian_log_norm(n, noise)
            - n as f64 * st2.ln()
    }
}

/// θ-dependent, data-independent part of the marginal: factorizations of P0 and P1.
#[derive(Debug)]
struct MarginalFactors {
    ops: FluxOperators,
    p0: Cholesky<f64, Dyn>,
    p1: Cholesky<f64, Dyn>,
    /// L0⁻¹A.
    w: DMatrix<f64>,
    log_det_p0: f64,
    log_det_p1: f64,
    inv_si2: f64,
    inv_se2: f64,
    st2: f64,
}

struct MarginalParts {
    u: f64,
    t_int: DVector<f64>,
    t_ext: DVector<f64>,
    quad_int: f64,
    quad_ext: f64,
}

fn not_pd(theta: &ThetaParams) -> Error {
    Error::numerical(format!(
        "marginal covariance not positive definite at R={}, rhoC={}",
        theta.r_value, theta.rho_c
    ))
}

impl MarginalFactors {
    fn new(ops: FluxOperators, noise: &NoiseModel, theta: &ThetaParams) -> Result<Self> {
        let n = ops.n_obs();
        let inv_si2 = noise.sigma_flux_int.powi(-2);
        let inv_se2 = noise.sigma_flux_ext.powi(-2);
        let st2 = noise.sigma_temp_prior.powi(2);

        let gram = |x: (&LowerToeplitzOperator, &LowerToeplitzOperator),
                    y: (&LowerToeplitzOperator, &LowerToeplitzOperator)| {
            let mut out = DMatrix::<f64>::zeros(n, n);
            LowerToeplitzOperator::add_cross_gram(x.0, y.0, inv_si2, &mut out);
            LowerToeplitzOperator::add_cross_gram(x.1, y.1, inv_se2, &mut out);
            out
        };
        let int = (&ops.h_int, &ops.g_int);
        let ext = (&ops.h_ext, &ops.g_ext);

        let mut p0 = gram(int, int) * st2;
        for i in 0..n {
            p0[(i, i)] += 1.0;
        }
        let (p0, log_det_p0) = cholesky_logdet(p0).ok_or_else(|| not_pd(theta))?;

        let mut w = gram(int, ext);
        if !p0.l_dirty().solve_lower_triangular_mut(&mut w) {
            return Err(not_pd(theta));
        }
        let mut p1 = gram(ext, ext) * st2;
        p1.gemm_tr(-st2 * st2, &w, &w, 1.0);
        for i in 0..n {
            p1[(i, i)] += 1.0;
        }
        let (p1, log_det_p1) = cholesky_logdet(p1).ok_or_else(|| not_pd(theta))?;
        Ok(MarginalFactors {
            ops,
            p0,
            p1,
            w,
            log_det_p0,
            log_det_p1,
            inv_si2,
            inv_se2,
            st2,
        })
    }

    fn evaluate(&self, ri: &[f64], re: &[f64]) -> MarginalParts {
        let u = dot(ri, ri) * self.inv_si2 + dot(re, re) * self.inv_se2;
        let combine = |h: &LowerToeplitzOperator, g: &LowerToeplitzOperator| {
            let a = h.apply_transpose(ri);
            let b = g.apply_transpose(re);
            DVector::from_iterator(
                a.len(),
                a.iter().zip(&b).map(|(x, y)| x * self.inv_si2 + y * self.inv_se2),
            )
        };
        let t_int = combine(&self.ops.h_int, &self.ops.g_int);
        let mut z0 = t_int.clone();
        self.p0.l_dirty().solve_lower_triangular_mut(&mut z0);
        let mut t_ext = combine(&self.ops.h_ext, &self.ops.g_ext);
        t_ext.gemv_tr(-self.st2, &self.w, &z0, 1.0);
        let mut z1 = t_ext.clone();
        self.p1.l_dirty().solve_lower_triangular_mut(&mut z1);
        MarginalParts {
            u,
            quad_int: self.st2 * z0.norm_squared(),
            quad_ext: self.st2 * z1.norm_squared(),
            t_int,
            t_ext,
        }
    }
}

fn settings_for(noise: &NoiseModel, geometry: &WallGeometry, grid: &Grid, n_obs: usize, dt_obs: f64, ic: InitialConditionKind, kind: LikelihoodKind) -> Result<ProblemSettings> {
    let stride = observation_stride(grid, n_obs, dt_obs)?;
    Ok(ProblemSettings {
        geometry: *geometry,
        m_cells: grid.m_cells,
        stride,
        noise: *noise,
        ic,
        kind,
        prior: PriorBox::default(),
    })
}

/// Deterministic-boundary log-likelihood of an averaged campaign's fluxes.
#[allow(clippy::too_many_arguments)]
pub fn log_likelihood_deterministic(
    theta: &ThetaParams,
    campaign_avg: &Campaign,
    bc_int: &TimeSeries,
    bc_ext: &TimeSeries,
    noise: &NoiseModel,
    geometry: &WallGeometry,
    grid: &Grid,
    ic: InitialConditionKind,
) -> Result<f64> {
    let dt = campaign_avg.dt_sample() * 60.0;
    let settings = settings_for(noise, geometry, grid, campaign_avg.len(), dt, ic, LikelihoodKind::Deterministic)?;
    let p = InferenceProblem::from_campaign(campaign_avg, Some((&bc_int.values, &bc_ext.values)), &settings)?;
    p.log_likelihood_deterministic(theta)
}

fn marginal_problem(
    campaign_avg: &Campaign,
    bprior: &BoundaryPrior,
    noise: &NoiseModel,
    geometry: &WallGeometry,
    grid: &Grid,
    ic: InitialConditionKind,
) -> Result<InferenceProblem> {
    let mut noise = *noise;
    noise.sigma_temp_prior = bprior.sigma_temp_prior;
    let dt = campaign_avg.dt_sample() * 60.0;
    let settings = settings_for(&noise, geometry, grid, campaign_avg.len(), dt, ic, LikelihoodKind::Marginal)?;
    observation_count(grid, settings.stride)?;
    InferenceProblem::from_campaign(
        campaign_avg,
        Some((&bprior.mu_int.values, &bprior.mu_ext.values)),
        &settings,
    )
}

/// Log marginal likelihood with both boundary series integrated out.
pub fn log_marginal_likelihood(
    theta: &ThetaParams,
    campaign_avg: &Campaign,
    bprior: &BoundaryPrior,
    noise: &NoiseModel,
    geometry: &WallGeometry,
    grid: &Grid,
    ic: InitialConditionKind,
) -> Result<f64> {
    marginal_problem(campaign_avg, bprior, noise, geometry, grid, ic)?.log_marginal_likelihood(theta)
}

pub fn marginal_workspace(
    theta: &ThetaParams,
    campaign_avg: &Campaign,
    bprior: &BoundaryPrior,
    noise: &NoiseModel,
    geometry: &WallGeometry,
    grid: &Grid,
    ic: InitialConditionKind,
) -> Result<MarginalWorkspace> {
    marginal_problem(campaign_avg, bprior, noise, geometry, grid, ic)?.marginal_workspace(theta)
}

/// −log(volume) inside the closed box over (R, ρC, τ0), −∞ outside.
pub fn log_prior(theta: &ThetaParams, prior: &PriorBox) -> f64 {
    log_prior_kind(theta, prior, InitialConditionKind::PiecewiseLinear)
}

/// Uniform prior over the free parameters of an initial-condition model.
pub fn log_prior_kind(theta: &ThetaParams, prior: &PriorBox, kind: InitialConditionKind) -> f64 {
    let b = prior.bounds(kind);
    let v = theta.to_vec(kind);
    if v.iter().all(|x| x.is_finite()) && b.contains(&v) {
        -b.log_volume()
    } else {
        f64::NEG_INFINITY
    }
}

/// Log-likelihood plus log-prior; −∞ outside the box.
pub fn log_posterior(log_likelihood: f64, theta: &ThetaParams, prior: &PriorBox, kind: InitialConditionKind) -> f64 {
    let lp = log_prior_kind(theta, prior, kind);
    if lp == f64::NEG_INFINITY || log_likelihood.is_nan() {
        f64::NEG_INFINITY
    } else {
        log_likelihood + lp
    }
}
