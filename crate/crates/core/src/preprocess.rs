//! Noise reduction and characterization: block moving averages, cubic smoothing
//! splines tuned to whiten their residuals, and portmanteau whiteness tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::SymPentadiagonal;
use crate::model::{Campaign, SeriesId, Stage, TimeSeries};

/// Non-overlapping block means, timestamped at block centres; a trailing partial block
/// is dropped.
pub fn moving_average(s: &TimeSeries, lag: usize) -> Result<TimeSeries> {
    if lag == 0 {
        return Err(Error::config("moving-average lag must be at least 1"));
    }
    if lag > s.len() {
        return Err(Error::data(format!(
            "moving-average lag {lag} exceeds series length {}",
            s.len()
        )));
    }
    let values = s
        .values
        .chunks_exact(lag)
        .map(|c| c.iter().sum::<f64>() / lag as f64)
        .collect();
    Ok(TimeSeries::new(
        s.t0 + 0.5 * (lag as f64 - 1.0) * s.dt_sample,
        lag as f64 * s.dt_sample,
        values,
    ))
}

/// Averages all four series of a campaign.
pub fn average_campaign(raw: &Campaign, lag: usize) -> Result<Campaign> {
    let mut out = raw.clone();
    for id in SeriesId::ALL {
        *out.series_mut(id) = moving_average(raw.series(id), lag)?;
    }
    out.stage = Stage::Averaged;
    Ok(out)
}

/// Sample autocorrelations at lags 1..=max_lag of the demeaned sequence.
pub fn acf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n <= max_lag {
        return Err(Error::data(format!("acf needs more than {max_lag} samples, got {n}")));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let denom: f64 = d.iter().map(|v| v * v).sum();
    if !(denom > 0.0) {
        return Err(Error::data("acf of a zero-variance sequence"));
    }
    Ok((1..=max_lag)
        .map(|k| d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / denom)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitenessReport {
    pub acf: Vec<f64>,
    pub q_statistic: f64,
    pub p_value: f64,
    pub lags_tested: usize,
}

/// Ljung-Box portmanteau test with h degrees of freedom.
pub fn ljung_box(residuals: &[f64], h: usize) -> Result<WhitenessReport> {
    if h == 0 {
        return Err(Error::config("Ljung-Box needs at least one lag"));
    }
    let rho = acf(residuals, h)?;
    ljung_box_from_acf(&rho, residuals.len())
}

/// Ljung-Box statistic from precomputed autocorrelations of an n-sample series.
pub fn ljung_box_from_acf(rho: &[f64], n: usize) -> Result<WhitenessReport> {
    let h = rho.len();
    if h == 0 || n <= h {
        return Err(Error::config(format!("Ljung-Box needs 0 < h < n, got h={h}, n={n}")));
    }
    let nf = n as f64;
    let q = nf
        * (nf + 2.0)
        * rho
            .iter()
            .enumerate()
            .map(|(i, r)| r * r / (nf - (i + 1) as f64))
            .sum::<f64>();
    let chi = ChiSquared::new(h as f64).map_err(|e| Error::numerical(e.to_string()))?;
    Ok(WhitenessReport {
        acf: rho.to_vec(),
        q_statistic: q,
        p_value: chi.sf(q).clamp(0.0, 1.0),
        lags_tested: h,
    })
}

/// Zero-mean noise scale `sqrt(Σr²/n)`.
pub fn estimate_noise_sd(residuals: &[f64]) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingFit {
    pub lambda_smooth: f64,
    pub fitted: TimeSeries,
    pub residuals: TimeSeries,
    /// `(1/N)·Σ(y − g)² + λ·∫g''²`.
    pub objective: f64,
}

/// Natural cubic smoothing spline with knots at every sample, time in minutes.
///
/// Solves `(R + αQ'Q)γ = Q'y` with `α = N·λ`, then `g = y − αQγ`; γ holds the second
/// derivatives at interior knots.
pub fn smoothing_spline(s: &TimeSeries, lambda_smooth: f64) -> Result<SmoothingFit> {
    if !(lambda_smooth >= 0.0) || !lambda_smooth.is_finite() {
        return Err(Error::config(format!(
            "smoothing parameter must be non-negative, got {lambda_smooth}"
        )));
    }
    let n = s.len();
    if n < 4 {
        return Err(Error::data(format!("smoothing spline needs at least 4 samples, got {n}")));
    }
    if !(s.dt_sample > 0.0) {
        return Err(Error::data("smoothing spline needs increasing timestamps"));
    }
    let y = &s.values;
    let h = s.dt_sample;
    let alpha = n as f64 * lambda_smooth;
    let m = n - 2;

    // Uniform knots: Q has columns (1/h, −2/h, 1/h); R is tridiagonal (2h/3, h/6).
    let qc = [1.0 / h, -2.0 / h, 1.0 / h];
    let mut sys = SymPentadiagonal::zeros(m);
    for i in 0..m {
        sys.d0[i] = 2.0 * h / 3.0 + alpha * (qc[0] * qc[0] + qc[1] * qc[1] + qc[2] * qc[2]);
        if i + 1 < m {
            sys.d1[i] = h / 6.0 + alpha * (qc[1] * qc[0] + qc[2] * qc[1]);
        }
        if i + 2 < m {
            sys.d2[i] = alpha * qc[2] * qc[0];
        }
    }
    let qty: Vec<f64> = (0..m)
        .map(|i| qc[0] * y[i] + qc[1] * y[i + 1] + qc[2] * y[i + 2])
        .collect();
    let gamma = sys.solve(&qty)?;

    let mut fitted = y.clone();
    for (i, g) in gamma.iter().enumerate() {
        for (k, q) in qc.iter().enumerate() {
            fitted[i + k] -= alpha * q * g;
        }
    }
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    // ∫g''² = γ'Rγ.
    let mut rough = 0.0;
    for i in 0..m {
        rough += gamma[i] * gamma[i] * 2.0 * h / 3.0;
        if i + 1 < m {
            rough += 2.0 * gamma[i] * gamma[i + 1] * h / 6.0;
        }
    }
    let objective = residuals.iter().map(|r| r * r).sum::<f64>() / n as f64 + lambda_smooth * rough;
    Ok(SmoothingFit {
        lambda_smooth,
        fitted: TimeSeries::new(s.t0, s.dt_sample, fitted),
        residuals: TimeSeries::new(s.t0, s.dt_sample, residuals),
        objective,
    })
}

/// Residual whiteness score `Σ_{k=1..h} ρ̂_k²`; exactly constant residuals (the fit
/// reproduces the data up to an offset) score zero.
pub fn residual_score(residuals: &[f64], h: usize) -> Result<f64> {
    if residuals.windows(2).all(|w| w[0] == w[1]) {
        return Ok(0.0);
    }
    let h = h.min(residuals.len().saturating_sub(1)).max(1);
    Ok(acf(residuals, h)?.iter().map(|r| r * r).sum())
}

/// Log-spaced grid of `n` points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Picks the smoothing parameter whose residuals have the smallest summed squared
/// autocorrelation over h lags; ties go to the larger parameter.
pub fn select_smoothing(s: &TimeSeries, lambda_grid: &[f64], h: usize) -> Result<(f64, SmoothingFit)> {
    if lambda_grid.is_empty() {
        return Err(Error::config("smoothing-parameter grid is empty"));
    }
    let mut best: Option<(f64, SmoothingFit)> = None;
    for &lam in lambda_grid {
        let fit = smoothing_spline(s, lam)?;
        let score = residual_score(&fit.residuals.values, h)?;
        let better = match &best {
            None => true,
            Some((bs, bf)) => score < *bs || (score == *bs && lam > bf.lambda_smooth),
        };
        if better {
            best = Some((score, fit));
        }
    }
    let (_, fit) = best.unwrap();
    Ok((fit.lambda_smooth, fit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    pub lambda_grid: Vec<f64>,
    /// ACF horizon for the selection objectives.
    pub acf_lags: usize,
    /// Lags tested by Ljung-Box.
    pub ljung_box_lags: usize,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig {
            lambda_grid: log_grid(1e-10, 1e6, 60),
            acf_lags: 50,
            ljung_box_lags: 20,
        }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::config("lambda grid must be non-empty and non-negative"));
        }
        if self.acf_lags == 0 || self.ljung_box_lags == 0 {
            return Err(Error::config("ACF and Ljung-Box horizons must be positive"));
        }
        Ok(())
    }
}

/// Per-candidate lag scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSelection {
    pub lag: usize,
    pub scores: Vec<(usize, f64)>,
}

/// Lag whose averaged-and-smoothed campaign leaves the whitest residuals over all four
/// series; ties go to the smaller lag.
pub fn select_lag(raw: &Campaign, candidates: &[usize], cfg: &SmootherConfig) -> Result<LagSelection> {
    if candidates.is_empty() {
        return Err(Error::config("lag candidate set is empty"));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut scores = Vec::with_capacity(sorted.len());
    let mut best: Option<(usize, f64)> = None;
    for &lag in &sorted {
        let avg = average_campaign(raw, lag)?;
        let mut total = 0.0;
        for id in SeriesId::ALL {
            let s = avg.series(id);
            let (_, fit) = select_smoothing(s, &cfg.lambda_grid, cfg.acf_lags)?;
            total += residual_score(&fit.residuals.values, cfg.acf_lags)?;
        }
        scores.push((lag, total));
        if best.is_none_or(|(_, b)| total < b) {
            best = Some((lag, total));
        }
    }
    Ok(LagSelection {
        lag: best.unwrap().0,
        scores,
    })
}

/// Smoothing and noise summary for one averaged series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesNoise {
    pub series: SeriesId,
    pub lambda_smooth: f64,
    pub sigma: f64,
    pub ljung_box: WhitenessReport,
}

/// Smooths every series of an averaged campaign and reports the residual noise.
pub fn characterize(avg: &Campaign, cfg: &SmootherConfig) -> Result<(Vec<SeriesNoise>, Vec<SmoothingFit>)> {
    let mut report = Vec::with_capacity(4);
    let mut fits = Vec::with_capacity(4);
    for id in SeriesId::ALL {
        let s = avg.series(id);
        let (lam, fit) = select_smoothing(s, &cfg.lambda_grid, cfg.acf_lags)?;
        let h = cfg.ljung_box_lags.min(s.len().saturating_sub(2)).max(1);
        let lb = ljung_box(&fit.residuals.values, h)
            .or_else(|_| ljung_box_from_acf(&vec![0.0; h], s.len()))?;
        report.push(SeriesNoise {
            series: id,
            lambda_smooth: lam,
            sigma: estimate_noise_sd(&fit.residuals.values),
            ljung_box: lb,
        });
        fits.push(fit);
    }
    Ok((report, fits))
}
