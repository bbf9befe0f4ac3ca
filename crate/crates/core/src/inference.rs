//! Point estimation, Laplace approximation, random-walk Metropolis-Hastings, and AIC.
//!
//! Optimization and finite differences run on coordinates rescaled to the unit box;
//! objectives are −∞ outside it.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::InferenceProblem;
use crate::model::{Bounds, InitialConditionKind, ThetaParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaximizeOptions {
    pub max_iter: usize,
    /// Central-difference step in unit-box coordinates.
    pub grad_step: f64,
    /// Stop when the largest unit-coordinate move falls below this.
    pub x_tol: f64,
    /// Stop when the objective improves by less than this.
    pub f_tol: f64,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        MaximizeOptions {
            max_iter: 200,
            grad_step: 1e-6,
            x_tol: 1e-9,
            f_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartDiagnostic {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub starts: Vec<StartDiagnostic>,
}

struct UnitObjective<'a> {
    f: &'a dyn Fn(&[f64]) -> f64,
    bounds: &'a Bounds,
}

impl UnitObjective<'_> {
    fn eval(&self, u: &[f64]) -> f64 {
        if u.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return f64::NEG_INFINITY;
        }
        let v = (self.f)(&self.bounds.from_unit(u));
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// Central differences, falling back to one-sided where a probe is non-finite.
    fn gradient(&self, u: &[f64], fu: f64, h: f64) -> Vec<f64> {
        let mut g = vec![0.0; u.len()];
        let mut p = u.to_vec();
        for i in 0..u.len() {
            p[i] = u[i] + h;
            let fp = self.eval(&p);
            p[i] = u[i] - h;
            let fm = self.eval(&p);
            p[i] = u[i];
            g[i] = match (fp.is_finite(), fm.is_finite()) {
                (true, true) => (fp - fm) / (2.0 * h),
                (true, false) => (fp - fu) / h,
                (false, true) => (fu - fm) / h,
                (false, false) => 0.0,
            };
        }
        g
    }
}

fn ascend(obj: &UnitObjective, start: &[f64], opts: &MaximizeOptions) -> StartDiagnostic {
    let d = start.len();
    let mut u = DVector::from_column_slice(start);
    let mut fu = obj.eval(u.as_slice());
    let mut diag = StartDiagnostic {
        start: obj.bounds.from_unit(start),
        end: obj.bounds.from_unit(start),
        value: fu,
        iterations: 0,
        message: String::new(),
    };
    if !fu.is_finite() {
        diag.message = "objective not finite at start".into();
        return diag;
    }
    // Inverse Hessian of −f.
    let mut hinv = DMatrix::<f64>::identity(d, d);
    let mut first = true;
    let mut g = DVector::from_vec(obj.gradient(u.as_slice(), fu, opts.grad_step));
    diag.message = "iteration limit reached".into();
    for it in 0..opts.max_iter {
        diag.iterations = it + 1;
        // Ascent direction for f = descent for −f.
        let mut dir = &hinv * &g;
        if dir.dot(&g) <= 0.0 {
            hinv = DMatrix::identity(d, d);
            first = true;
            dir = g.clone();
        }
        if first {
            let norm = dir.amax();
            if norm > 0.1 {
                dir *= 0.1 / norm;
            }
        }
        let slope = dir.dot(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = &u + &dir * step;
            let ft = obj.eval(trial.as_slice());
            if ft.is_finite() && ft >= fu + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((un, fnew)) = accepted else {
            if first {
                diag.message = "converged: no ascent step found".into();
                break;
            }
            hinv = DMatrix::identity(d, d);
            first = true;
            continue;
        };
        let s = &un - &u;
        let gn = DVector::from_vec(obj.gradient(un.as_slice(), fnew, opts.grad_step));
        // Curvature pair for the minimization of −f.
        let y = &g - &gn;
        let sy = s.dot(&y);
        let improvement = fnew - fu;
        u = un;
        fu = fnew;
        g = gn;
        if s.amax() < opts.x_tol || improvement.abs() < opts.f_tol * (1.0 + fu.abs()) {
            diag.message = "converged".into();
            break;
        }
        if sy > 1e-12 * s.norm() * y.norm() {
            if first {
                hinv = DMatrix::identity(d, d) * (sy / y.dot(&y));
                first = false;
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
    }
    diag.end = obj.bounds.from_unit(u.as_slice());
    diag.value = fu;
    diag
}

/// Quasi-Newton (BFGS) ascent from each start; returns the best local optimum.
/// Ties go to the lexicographically smallest point.
pub fn maximize(
    objective: &dyn Fn(&[f64]) -> f64,
    bounds: &Bounds,
    starts: &[Vec<f64>],
    opts: &MaximizeOptions,
) -> Result<OptimResult> {
    if starts.is_empty() {
        return Err(Error::config("maximize needs at least one start"));
    }
    let obj = UnitObjective { f: objective, bounds };
    let mut diags = Vec::with_capacity(starts.len());
    for s in starts {
        if s.len() != bounds.dim() || !bounds.contains(s) {
            diags.push(StartDiagnostic {
                start: s.clone(),
                end: s.clone(),
                value: f64::NEG_INFINITY,
                iterations: 0,
                message: "start outside the prior box".into(),
            });
            continue;
        }
        diags.push(ascend(&obj, &bounds.to_unit(s), opts));
    }
    let best = diags
        .iter()
        .filter(|d| d.value.is_finite())
        .max_by(|a, b| {
            a.value
                .partial_cmp(&b.value)
                .unwrap()
                .then_with(|| b.end.partial_cmp(&a.end).unwrap_or(std::cmp::Ordering::Equal))
        })
        .cloned();
    match best {
        Some(b) => Ok(OptimResult {
            x: b.end,
            value: b.value,
            starts: diags,
        }),
        None => Err(Error::numerical(format!(
            "all {} starts failed: {}",
            diags.len(),
            diags
                .iter()
                .map(|d| format!("{:?}: {}", d.start, d.message))
                .collect::<Vec<_>>()
                .join("; ")
        ))),
    }
}

/// Latin-hypercube design of n points in the box.
pub fn latin_hypercube(bounds: &Bounds, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = bounds.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<usize>> = (0..d)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    (0..n)
        .map(|i| {
            let u: Vec<f64> = cols
                .iter_mut()
                .map(|c| (c[i] as f64 + rng.random::<f64>()) / n as f64)
                .collect();
            bounds.from_unit(&u)
        })
        .collect()
}

/// Symmetric Hessian by central second differences on unit-box coordinates, mapped
/// back to the original coordinates.
pub fn hessian_fd(
    objective: &dyn Fn(&[f64]) -> f64,
    x_hat: &[f64],
    bounds: &Bounds,
    step: f64,
) -> Result<DMatrix<f64>> {
    let d = x_hat.len();
    let u0 = bounds.to_unit(x_hat);
    if u0.iter().any(|u| *u < 2.0 * step || *u > 1.0 - 2.0 * step) {
        return Err(Error::numerical(
            "point too close to the prior-box boundary for a finite-difference Hessian; widen the box or check that the MAP is interior",
        ));
    }
    let f = |u: &[f64]| objective(&bounds.from_unit(u));
    let f0 = f(&u0);
    let mut hu = DMatrix::<f64>::zeros(d, d);
    let mut p = u0.clone();
    for i in 0..d {
        p[i] = u0[i] + step;
        let fp = f(&p);
        p[i] = u0[i] - step;
        let fm = f(&p);
        p[i] = u0[i];
        hu[(i, i)] = (fp - 2.0 * f0 + fm) / (step * step);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                p[i] = u0[i] + si * step;
                p[j] = u0[j] + sj * step;
                let v = f(&p);
                p[i] = u0[i];
                p[j] = u0[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * step * step);
            hu[(i, j)] = v;
            hu[(j, i)] = v;
        }
    }
    if hu.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite objective near the expansion point"));
    }
    let hx = DMatrix::from_fn(d, d, |i, j| hu[(i, j)] / (bounds.width(i) * bounds.width(j)));
    Ok((&hx + hx.transpose()) * 0.5)
}

/// MAP point with the inverse negative Hessian as covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianApprox {
    pub map: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub log_posterior_at_map: f64,
    pub param_names: Vec<String>,
}

impl GaussianApprox {
    pub fn sd(&self) -> Vec<f64> {
        (0..self.map.len()).map(|i| self.covariance[(i, i)].sqrt()).collect()
    }

    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        self.covariance[(i, j)] / (self.covariance[(i, i)] * self.covariance[(j, j)]).sqrt()
    }

    pub fn log_det_covariance(&self) -> f64 {
        self.covariance.clone().cholesky().map_or(f64::NAN, |c| {
            (0..self.map.len()).map(|i| 2.0 * c.l_dirty()[(i, i)].ln()).sum()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaplaceOptions {
    pub maximize: MaximizeOptions,
    /// Second-difference step in unit-box coordinates.
    pub hessian_step: f64,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        LaplaceOptions {
            maximize: MaximizeOptions::default(),
            hessian_step: 1e-4,
        }
    }
}

/// Laplace approximation at an already located maximum.
pub fn laplace_at(
    log_post: &dyn Fn(&[f64]) -> f64,
    map: &[f64],
    value: f64,
    bounds: &Bounds,
    hessian_step: f64,
    param_names: &[&str],
) -> Result<GaussianApprox> {
    let h = hessian_fd(log_post, map, bounds, hessian_step)?;
    let chol = (-&h)
        .cholesky()
        .ok_or_else(|| Error::numerical("MAP is not a proper interior maximum"))?;
    let cov = chol.inverse();
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianApprox {
        map: map.to_vec(),
        covariance: cov,
        log_posterior_at_map: value,
        param_names: param_names.iter().map(|s| s.to_string()).collect(),
    })
}

pub fn laplace(
    log_post: &dyn Fn(&[f64]) -> f64,
    bounds: &Bounds,
    starts: &[Vec<f64>],
    opts: &LaplaceOptions,
    param_names: &[&str],
) -> Result<GaussianApprox> {
    let opt = maximize(log_post, bounds, starts, &opts.maximize)?;
    laplace_at(log_post, &opt.x, opt.value, bounds, opts.hessian_step, param_names)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Per-parameter proposal sds; `None` uses 2% of the box widths.
    pub proposal_sd: Option<Vec<f64>>,
    pub seed: u64,
    /// Pilot iterations retuning the proposal towards 20–40% acceptance; 0 disables.
    pub adapt_iterations: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_iter: 101_000,
            burn_in: 1_000,
            thin: 20,
            proposal_sd: None,
            seed: 0,
            adapt_iterations: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcChain {
    /// Kept samples after burn-in and thinning.
    pub samples: Vec<Vec<f64>>,
    pub log_post: Vec<f64>,
    /// 1-based iteration number of each kept sample.
    pub iterations: Vec<usize>,
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub proposal_sd: Vec<f64>,
}

/// Random-walk Metropolis-Hastings with independent Gaussian proposals.
pub fn rw_metropolis(
    log_post: &dyn Fn(&[f64]) -> f64,
    theta0: &[f64],
    bounds: &Bounds,
    cfg: &McmcConfig,
) -> Result<McmcChain> {
    if cfg.thin == 0 || cfg.n_iter <= cfg.burn_in {
        return Err(Error::config("MCMC needs thin ≥ 1 and more iterations than burn-in"));
    }
    let d = theta0.len();
    let mut delta = match &cfg.proposal_sd {
        Some(v) if v.len() == d && v.iter().all(|x| *x > 0.0 && x.is_finite()) => v.clone(),
        Some(_) => return Err(Error::config("proposal sds must be positive, one per parameter")),
        None => (0..d).map(|i| 0.02 * bounds.width(i)).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cur = theta0.to_vec();
    let mut a = log_post(&cur);
    if !a.is_finite() {
        return Err(Error::numerical("log-posterior is not finite at the chain start"));
    }
    let propose = |cur: &[f64], delta: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        cur.iter()
            .zip(delta)
            .map(|(c, s)| c + s * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };

    // Pilot tuning, frozen before the recorded chain.
    let mut done = 0;
    while done < cfg.adapt_iterations {
        let batch = 100.min(cfg.adapt_iterations - done);
        let mut acc = 0;
        for _ in 0..batch {
            let p = propose(&cur, &delta, &mut rng);
            let b = log_post(&p);
            if rng.random::<f64>().ln() < b - a {
                cur = p;
                a = b;
                acc += 1;
            }
        }
        done += batch;
        let rate = acc as f64 / batch as f64;
        let factor = if rate < 0.2 {
            0.7
        } else if rate > 0.4 {
            1.4
        } else {
            1.0
        };
        delta.iter_mut().for_each(|s| *s *= factor);
    }

    let kept_cap = (cfg.n_iter - cfg.burn_in) / cfg.thin;
    let mut samples = Vec::with_capacity(kept_cap);
    let mut lps = Vec::with_capacity(kept_cap);
    let mut iters = Vec::with_capacity(kept_cap);
    let mut accepted = 0usize;
    for i in 1..=cfg.n_iter {
        let p = propose(&cur, &delta, &mut rng);
        let b = log_post(&p);
        if rng.random::<f64>().ln() < b - a {
            cur = p;
            a = b;
            accepted += 1;
        }
        if i == cfg.n_iter.min(1000) && accepted == 0 {
            return Err(Error::numerical(format!(
                "no proposal accepted in the first {i} iterations; reduce the proposal sds"
            )));
        }
        if i > cfg.burn_in && (i - cfg.burn_in) % cfg.thin == 0 {
            samples.push(cur.clone());
            lps.push(a);
            iters.push(i);
        }
    }
    Ok(McmcChain {
        samples,
        log_post: lps,
        iterations: iters,
        accepted,
        acceptance_rate: accepted as f64 / cfg.n_iter as f64,
        proposal_sd: delta,
    })
}

/// Akaike information criterion.
pub fn aic(max_log_lik: f64, n_params: usize) -> f64 {
    2.0 * n_params as f64 - 2.0 * max_log_lik
}

/// Type-7 quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub median: f64,
    pub q975: f64,
    /// Bin edges (len = bins + 1) and densities per bin.
    pub bin_edges: Vec<f64>,
    pub density: Vec<f64>,
}

const Z975: f64 = 1.959_963_984_540_054;

/// Per-parameter summaries of MCMC samples.
pub fn summarize_chain(samples: &[Vec<f64>], names: &[&str], bins: usize) -> Result<Vec<MarginalSummary>> {
    if samples.is_empty() {
        return Err(Error::data("cannot summarize an empty chain"));
    }
    let n = samples.len() as f64;
    let bins = bins.max(1);
    Ok((0..samples[0].len())
        .map(|j| {
            let mut col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mean = col.iter().sum::<f64>() / n;
            let sd = if col.len() > 1 {
                (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let (lo, hi) = (col[0], col[col.len() - 1]);
            let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
            let edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
            let mut counts = vec![0usize; bins];
            for v in &col {
                let k = (((v - lo) / width) as usize).min(bins - 1);
                counts[k] += 1;
            }
            MarginalSummary {
                name: names.get(j).unwrap_or(&"").to_string(),
                mean,
                sd,
                q025: quantile_sorted(&col, 0.025),
                median: quantile_sorted(&col, 0.5),
                q975: quantile_sorted(&col, 0.975),
                bin_edges: edges,
                density: counts.iter().map(|c| *c as f64 / (n * width)).collect(),
            }
        })
        .collect())
}

/// Analytic per-parameter summaries of a Gaussian approximation, histogram over ±4 sd.
pub fn summarize_gaussian(g: &GaussianApprox, bins: usize) -> Vec<MarginalSummary> {
    let bins = bins.max(1);
    g.map
        .iter()
        .zip(g.sd())
        .enumerate()
        .map(|(j, (&m, sd))| {
            let lo = m - 4.0 * sd;
            let width = 8.0 * sd / bins as f64;
            let edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
            let density = edges
                .windows(2)
                .map(|w| {
                    let x = 0.5 * (w[0] + w[1]);
                    (-0.5 * ((x - m) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
                })
                .collect();
            MarginalSummary {
                name: g.param_names.get(j).cloned().unwrap_or_default(),
                mean: m,
                sd,
                q025: m - Z975 * sd,
                median: m,
                q975: m + Z975 * sd,
                bin_edges: edges,
                density,
            }
        })
        .collect()
}

/// Start points and optimizer settings for fitting an [`InferenceProblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Latin-hypercube starts in the prior box.
    pub n_starts: usize,
    pub seed: u64,
    /// Extra starting points in parameter units.
    pub extra_starts: Vec<Vec<f64>>,
    pub laplace: LaplaceOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            n_starts: 8,
            seed: 0,
            extra_starts: Vec::new(),
            laplace: LaplaceOptions::default(),
        }
    }
}

impl FitOptions {
    pub fn starts(&self, bounds: &Bounds) -> Vec<Vec<f64>> {
        let mut s: Vec<Vec<f64>> = self
            .extra_starts
            .iter()
            .filter(|x| x.len() == bounds.dim() && bounds.contains(x))
            .cloned()
            .collect();
        s.extend(latin_hypercube(bounds, self.n_starts, self.seed));
        s
    }
}

/// Posterior maximum for a problem; returns the MAP as parameters and its log-posterior.
pub fn fit_map(problem: &InferenceProblem, opts: &FitOptions) -> Result<(ThetaParams, OptimResult)> {
    let bounds = problem.prior.bounds(problem.ic);
    let f = |v: &[f64]| problem.log_posterior_vec(v);
    let res = maximize(&f, &bounds, &opts.starts(&bounds), &opts.laplace.maximize)?;
    Ok((problem.theta_from_vec(&res.x), res))
}

/// MAP plus Laplace covariance for a problem.
pub fn fit_laplace(problem: &InferenceProblem, opts: &FitOptions) -> Result<GaussianApprox> {
    let bounds = problem.prior.bounds(problem.ic);
    let f = |v: &[f64]| problem.log_posterior_vec(v);
    let res = maximize(&f, &bounds, &opts.starts(&bounds), &opts.laplace.maximize)?;
    laplace_at(&f, &res.x, res.value, &bounds, opts.laplace.hessian_step, problem.ic.param_names())
}

/// Maximized log-likelihood and AIC of one initial-condition model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicEntry {
    pub ic: InitialConditionKind,
    pub n_params: usize,
    pub map: Vec<f64>,
    pub max_log_lik: f64,
    pub aic: f64,
}

/// Fits every initial-condition model and scores it by AIC. Under uniform priors the
/// MAP is the box-constrained MLE, so the maximized log-likelihood is the log-posterior
/// maximum plus the log box volume.
pub fn aic_compare(problem: &InferenceProblem, kinds: &[InitialConditionKind], opts: &FitOptions) -> Result<Vec<AicEntry>> {
    let mut out = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let p = problem.with_model(problem.kind, kind);
        let (theta, res) = fit_map(&p, opts)?;
        let ll = p.log_likelihood(&theta)?;
        out.push(AicEntry {
            ic: kind,
            n_params: kind.n_params(),
            map: res.x,
            max_log_lik: ll,
            aic: aic(ll, kind.n_params()),
        });
    }
    Ok(out)
}
