//! Subsampling study: re-average random subsets of each raw block, rerun the pipeline,
//! and summarize the spread of the resulting (R, ρC) estimates.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{fit_map, quantile_sorted, FitOptions};
use crate::likelihood::LikelihoodKind;
use crate::model::{Campaign, SeriesId, Stage, TimeSeries};
use crate::pipeline::{prepare_averaged, ModelConfig, PreprocessConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsampleConfig {
    /// Raw samples per block.
    pub ell: usize,
    /// Samples drawn from each block without replacement.
    pub b: usize,
    pub n_repeats: usize,
    pub seed: u64,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        SubsampleConfig {
            ell: 5,
            b: 4,
            n_repeats: 100,
            seed: 0,
        }
    }
}

impl SubsampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ell == 0 || self.b == 0 || self.b > self.ell {
            return Err(Error::config(format!(
                "need 1 ≤ b ≤ ell, got b = {} and ell = {}",
                self.b, self.ell
            )));
        }
        if self.n_repeats == 0 {
            return Err(Error::config("n_repeats must be at least 1"));
        }
        Ok(())
    }
}

/// Averages `b` random samples from each block of `ell`, using the same indices for all
/// four series. Also returns the absolute indices drawn per block, in increasing order.
pub fn subsample_traced<R: Rng + ?Sized>(
    raw: &Campaign,
    ell: usize,
    b: usize,
    rng: &mut R,
) -> Result<(Campaign, Vec<Vec<usize>>)> {
    if ell == 0 || b == 0 || b > ell {
        return Err(Error::config(format!("need 1 ≤ b ≤ ell, got b = {b} and ell = {ell}")));
    }
    let n_blocks = raw.len() / ell;
    if n_blocks == 0 {
        return Err(Error::data(format!("series of length {} is shorter than one block of {ell}", raw.len())));
    }
    let picks: Vec<Vec<usize>> = (0..n_blocks)
        .map(|k| {
            let mut idx = sample(rng, ell, b).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| k * ell + i).collect()
        })
        .collect();
    let mut out = raw.clone();
    for id in SeriesId::ALL {
        let s = raw.series(id);
        let values = picks
            .iter()
            .map(|idx| idx.iter().map(|&i| s.values[i]).sum::<f64>() / b as f64)
            .collect();
        *out.series_mut(id) = TimeSeries::new(
            s.t0 + 0.5 * (ell as f64 - 1.0) * s.dt_sample,
            ell as f64 * s.dt_sample,
            values,
        );
    }
    out.stage = Stage::Averaged;
    Ok((out, picks))
}

pub fn subsample_once<R: Rng + ?Sized>(raw: &Campaign, cfg: &SubsampleConfig, rng: &mut R) -> Result<Campaign> {
    cfg.validate()?;
    Ok(subsample_traced(raw, cfg.ell, cfg.b, rng)?.0)
}

/// Five-number summary of one parameter over the successful repeats (type-7 quantiles).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Spread {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::data("no values to summarize"));
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Ok(Spread {
            min: s[0],
            q25: quantile_sorted(&s, 0.25),
            median: quantile_sorted(&s, 0.5),
            q75: quantile_sorted(&s, 0.75),
            max: s[s.len() - 1],
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }

    pub fn covers(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatEstimate {
    pub repeat: usize,
    pub r_value: f64,
    pub rho_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatFailure {
    pub repeat: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilitySummary {
    pub config: SubsampleConfig,
    pub r_value: Spread,
    pub rho_c: Spread,
    pub estimates: Vec<RepeatEstimate>,
    pub failures: Vec<RepeatFailure>,
}

/// Fraction of failed repeats above which the study is abandoned.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

/// Runs the whole pipeline on `n_repeats` subsampled campaigns under the marginal
/// likelihood. Repeat `k` draws from stream `k` of the master seed, so results do not
/// depend on evaluation order.
pub fn run_study(
    raw: &Campaign,
    cfg: &SubsampleConfig,
    pre: &PreprocessConfig,
    model: &ModelConfig,
    fit: &FitOptions,
) -> Result<VariabilitySummary> {
    cfg.validate()?;
    raw.ensure_valid()?;
    let model = ModelConfig {
        likelihood: LikelihoodKind::Marginal,
        ..model.clone()
    };
    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for k in 0..cfg.n_repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(k as u64);
        let outcome = subsample_once(raw, cfg, &mut rng)
            .and_then(|avg| prepare_averaged(&avg, pre, &model))
            .and_then(|p| fit_map(&p.problem, fit));
        match outcome {
            Ok((theta, _)) => estimates.push(RepeatEstimate {
                repeat: k,
                r_value: theta.r_value,
                rho_c: theta.rho_c,
            }),
            Err(e) => failures.push(RepeatFailure {
                repeat: k,
                message: e.to_string(),
            }),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * cfg.n_repeats as f64 || estimates.is_empty() {
        let first = failures.first().map(|f| f.message.as_str()).unwrap_or("");
        return Err(Error::numerical(format!(
            "{} of {} subsampling repeats failed; first failure: {first}",
            failures.len(),
            cfg.n_repeats
        )));
    }
    let r: Vec<f64> = estimates.iter().map(|e| e.r_value).collect();
    let c: Vec<f64> = estimates.iter().map(|e| e.rho_c).collect();
    Ok(VariabilitySummary {
        config: *cfg,
        r_value: Spread::from_values(&r)?,
        rho_c: Spread::from_values(&c)?,
        estimates,
        failures,
    })
}
