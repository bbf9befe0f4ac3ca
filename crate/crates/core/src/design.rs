//! Information gain of a campaign window under the Laplace approximation, duration
//! sweeps, and partitioning of the record into external-temperature cycles.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::inference::{fit_laplace, FitOptions, GaussianApprox};
use crate::likelihood::InferenceProblem;
use crate::model::{Bounds, TimeSeries};

/// Half-open observation window `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSetup {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl DesignSetup {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Result<Self> {
        if start >= end {
            return Err(Error::config(format!("empty window {start}..{end}")));
        }
        Ok(DesignSetup {
            start,
            end,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Closed-form gain with its parts: `d_kl = log_volume - gaussian_entropy - truncation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationGain {
    pub d_kl: f64,
    pub log_volume: f64,
    pub gaussian_entropy: f64,
    /// Entropy change from restricting each marginal to the box; zero for interior
    /// posteriors, negative otherwise.
    pub truncation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainResult {
    pub setup: DesignSetup,
    pub d_kl: f64,
    pub truncation: f64,
    pub laplace: GaussianApprox,
}

/// A window whose inference failed; the sweep carries on without it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowFailure {
    pub setup: DesignSetup,
    pub message: String,
}

/// `Φ(b) - Φ(a)` computed from the nearer tail to keep precision far from the mean.
fn normal_mass(a: f64, b: f64) -> f64 {
    let s = std::f64::consts::SQRT_2;
    if a >= 0.0 {
        0.5 * (erfc(a / s) - erfc(b / s))
    } else if b <= 0.0 {
        0.5 * (erfc(-b / s) - erfc(-a / s))
    } else {
        1.0 - 0.5 * erfc(-a / s) - 0.5 * erfc(b / s)
    }
}

fn normal_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }
}

/// KL divergence from the uniform prior on `bounds` to the Laplace posterior restricted
/// to the box, treating the truncation one coordinate at a time.
pub fn information_gain_detail(laplace: &GaussianApprox, bounds: &Bounds) -> Result<InformationGain> {
    let d = laplace.map.len();
    if bounds.dim() != d || laplace.covariance.nrows() != d {
        return Err(Error::config("posterior and prior box dimensions differ"));
    }
    let log_det = laplace.log_det_covariance();
    if !log_det.is_finite() {
        return Err(Error::numerical("posterior covariance is not positive definite"));
    }
    let two_pi_e = 2.0 * std::f64::consts::PI * std::f64::consts::E;
    let gaussian_entropy = 0.5 * (d as f64 * two_pi_e.ln() + log_det);
    let mut truncation = 0.0;
    for (i, sd) in laplace.sd().into_iter().enumerate() {
        let a = (bounds.lower[i] - laplace.map[i]) / sd;
        let b = (bounds.upper[i] - laplace.map[i]) / sd;
        let z = normal_mass(a, b);
        if z <= 0.0 {
            return Err(Error::numerical(format!(
                "posterior for parameter {i} has no mass inside the prior box"
            )));
        }
        truncation += z.ln() + (a * normal_pdf(a) - b * normal_pdf(b)) / (2.0 * z);
    }
    let log_volume = bounds.log_volume();
    Ok(InformationGain {
        d_kl: (log_volume - gaussian_entropy - truncation).max(0.0),
        log_volume,
        gaussian_entropy,
        truncation,
    })
}

pub fn information_gain(laplace: &GaussianApprox, bounds: &Bounds) -> Result<f64> {
    Ok(information_gain_detail(laplace, bounds)?.d_kl)
}

/// Mean of `log q - log p` over draws from `q`, with its standard error.
pub fn kl_monte_carlo(
    samples: &[Vec<f64>],
    log_q: &dyn Fn(&[f64]) -> f64,
    log_p: &dyn Fn(&[f64]) -> f64,
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::config("no samples for the divergence estimate"));
    }
    let terms: Vec<f64> = samples.iter().map(|x| log_q(x) - log_p(x)).collect();
    let n = terms.len() as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Sampling estimate of the same divergence: draws from the Laplace Gaussian restricted
/// to the box by rejection, with the box mass estimated from the acceptance rate.
/// Returns the estimate and its standard error.
pub fn information_gain_mc(laplace: &GaussianApprox, bounds: &Bounds, n_draws: usize, seed: u64) -> Result<(f64, f64)> {
    let d = laplace.map.len();
    let chol = laplace
        .covariance
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("posterior covariance is not positive definite"))?;
    let l: DMatrix<f64> = chol.l();
    let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + laplace.log_det_covariance());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut logs = Vec::with_capacity(n_draws);
    let mut total = 0usize;
    while logs.len() < n_draws {
        total += 1;
        if total > 1000 * n_draws.max(1) {
            return Err(Error::numerical("posterior mass inside the prior box is too small to sample"));
        }
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x: Vec<f64> = (&l * &z).iter().zip(&laplace.map).map(|(dx, m)| m + dx).collect();
        if bounds.contains(&x) {
            logs.push(log_norm - 0.5 * z.norm_squared());
        }
    }
    let log_mass = (n_draws as f64 / total as f64).ln();
    let draws: Vec<Vec<f64>> = logs.iter().map(|&v| vec![v]).collect();
    let (mean, se) = kl_monte_carlo(&draws, &|v| v[0] - log_mass, &|_| -bounds.log_volume())?;
    Ok((mean, se))
}

/// MAP, Laplace, and gain on one window of `problem`.
pub fn window_gain(problem: &InferenceProblem, setup: &DesignSetup, opts: &FitOptions) -> Result<GainResult> {
    let sub = problem.window(setup.start, setup.end)?;
    let laplace = fit_laplace(&sub, opts)?;
    let g = information_gain_detail(&laplace, &sub.prior.bounds(sub.ic))?;
    Ok(GainResult {
        setup: setup.clone(),
        d_kl: g.d_kl,
        truncation: g.truncation,
        laplace,
    })
}

/// Gain on the nested windows `[0, checkpoint)`. Checkpoints must be increasing and at
/// least `min_window` long; failures are reported per checkpoint.
pub fn gain_vs_duration(
    problem: &InferenceProblem,
    checkpoints: &[usize],
    min_window: usize,
    opts: &FitOptions,
) -> Result<Vec<std::result::Result<GainResult, WindowFailure>>> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("checkpoints must be strictly increasing"));
    }
    if let Some(&c) = checkpoints.iter().find(|&&c| c < min_window.max(2) || c > problem.n_obs()) {
        return Err(Error::config(format!(
            "checkpoint {c} is outside [{}, {}]",
            min_window.max(2),
            problem.n_obs()
        )));
    }
    Ok(checkpoints
        .iter()
        .map(|&c| {
            let setup = DesignSetup {
                start: 0,
                end: c,
                label: format!("0-{c}"),
            };
            window_gain(problem, &setup, opts).map_err(|e| WindowFailure {
                setup,
                message: e.to_string(),
            })
        })
        .collect())
}

/// Interior local minima as `(index, prominence)`; flat bottoms report their midpoint.
fn local_minima(v: &[f64]) -> Vec<(usize, f64)> {
    let n = v.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if v[i] < v[i - 1] {
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            if j + 1 < n && v[j + 1] > v[j] {
                let mid = (i + j) / 2;
                out.push((mid, prominence(v, i, j)));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Rise needed from the minimum on `[lo, hi]` before reaching lower ground (or the
/// series end) on the weaker side.
fn prominence(v: &[f64], lo: usize, hi: usize) -> f64 {
    let m = v[lo];
    let mut left = m;
    for k in (0..lo).rev() {
        if v[k] < m {
            break;
        }
        left = left.max(v[k]);
    }
    let mut right = m;
    for &x in &v[hi + 1..] {
        if x < m {
            break;
        }
        right = right.max(x);
    }
    left.min(right) - m
}

/// Splits the series into windows between successive qualifying minima. Minima must
/// rise at least `min_prominence` to either side and lie `min_separation_min` minutes
/// apart; deeper minima win conflicts. Edge windows shorter than 0.9 of the median
/// cycle are labelled partial.
pub fn detect_cycles(temp_ext: &TimeSeries, min_separation_min: f64, min_prominence: f64) -> Result<Vec<DesignSetup>> {
    let n = temp_ext.len();
    if n < 2 {
        return Err(Error::data("series too short for cycle detection"));
    }
    if !(min_separation_min >= 0.0) || !(min_prominence >= 0.0) {
        return Err(Error::config("cycle separation and prominence must be nonnegative"));
    }
    let v = &temp_ext.values;
    let sep = (min_separation_min / temp_ext.dt_sample).ceil() as usize;
    let mut cands: Vec<(usize, f64)> = local_minima(v).into_iter().filter(|&(_, p)| p >= min_prominence).collect();
    cands.sort_by(|a, b| v[a.0].total_cmp(&v[b.0]).then(a.0.cmp(&b.0)));
    let mut kept: Vec<usize> = Vec::new();
    for (i, _) in cands {
        if kept.iter().all(|&k| k.abs_diff(i) >= sep) {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    if kept.is_empty() {
        return Ok(vec![DesignSetup::new(0, n, "whole")?]);
    }
    let mut cuts = vec![0];
    cuts.extend(kept.iter().copied());
    cuts.push(n);
    let inner: Vec<usize> = kept.windows(2).map(|w| w[1] - w[0]).collect();
    let typical = if inner.is_empty() {
        0.0
    } else {
        let mut s = inner.clone();
        s.sort_unstable();
        let m = s.len();
        if m % 2 == 1 {
            s[m / 2] as f64
        } else {
            0.5 * (s[m / 2 - 1] + s[m / 2]) as f64
        }
    };
    let last = cuts.len() - 2;
    let mut out = Vec::with_capacity(cuts.len() - 1);
    let mut cycle_no = 0;
    for (w, pair) in cuts.windows(2).enumerate() {
        let len = (pair[1] - pair[0]) as f64;
        let edge = w == 0 || w == last;
        let label = if edge && len < 0.9 * typical || edge && inner.is_empty() {
            if w == 0 {
                "leading-partial".to_string()
            } else {
                "trailing-partial".to_string()
            }
        } else {
            cycle_no += 1;
            format!("cycle-{cycle_no}")
        };
        out.push(DesignSetup::new(pair[0], pair[1], label)?);
    }
    Ok(out)
}

/// Gains of the given windows, sorted by decreasing gain with shorter windows first on
/// ties.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRanking {
    pub ranked: Vec<GainResult>,
    pub failures: Vec<WindowFailure>,
}

pub fn rank_cycles(problem: &InferenceProblem, cycles: &[DesignSetup], opts: &FitOptions) -> CycleRanking {
    let mut ranked = Vec::new();
    let mut failures = Vec::new();
    for c in cycles {
        match window_gain(problem, c, opts) {
            Ok(g) => ranked.push(g),
            Err(e) => failures.push(WindowFailure {
                setup: c.clone(),
                message: e.to_string(),
            }),
        }
    }
    ranked.sort_by(|a, b| b.d_kl.total_cmp(&a.d_kl).then(a.setup.len().cmp(&b.setup.len())));
    CycleRanking { ranked, failures }
}
