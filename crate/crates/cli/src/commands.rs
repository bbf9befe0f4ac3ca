use std::path::{Path, PathBuf};

use serde::Serialize;
use wallinfer::design::{detect_cycles, gain_vs_duration, rank_cycles, GainResult, WindowFailure};
use wallinfer::inference::{
    aic_compare, fit_laplace, fit_map, rw_metropolis, summarize_chain, summarize_gaussian, AicEntry, McmcConfig,
    StartDiagnostic,
};
use wallinfer::io::{
    read_campaign_csv, write_bands_csv, write_campaign_csv, write_chain_csv, write_gain_csv, write_study_csv,
    write_text, LaplaceExport,
};
use wallinfer::model::{NoiseModel, Stage, ThetaParams};
use wallinfer::pipeline::{predict_bands, prepare, PreprocessConfig, Prepared};
use wallinfer::preprocess::SeriesNoise;
use wallinfer::robustness::run_study;
use wallinfer::synthetic::simulate_campaign;

use crate::config::RunConfig;
use crate::error::CliError;

/// Destination directory for one run's artifacts.
pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Output {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Output { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output {
            path: p.display().to_string(),
            message: e.to_string(),
        })?;
        write_text(&p, &text)?;
        Ok(p)
    }
}

fn prepared(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let raw = read_campaign_csv(cfg.input()?, Stage::Raw)?;
    Ok(prepare(&raw, &cfg.preprocessing, &cfg.model())?)
}

/// Start time and spacing, in minutes, of the observations the problem was built from.
fn observation_time_base(p: &Prepared, pre: &PreprocessConfig) -> (f64, f64) {
    (p.averaged.t0(), p.averaged.dt_sample() * pre.decimation.max(1) as f64)
}

#[derive(Serialize)]
struct PrepSummary<'a> {
    lag: usize,
    lag_scores: &'a [(usize, f64)],
    n_obs: usize,
    solver_steps_per_observation: usize,
    noise_used: NoiseModel,
    series: &'a [SeriesNoise],
}

fn prep_summary<'a>(p: &'a Prepared) -> PrepSummary<'a> {
    PrepSummary {
        lag: p.lag,
        lag_scores: &p.lag_scores,
        n_obs: p.problem.n_obs(),
        solver_steps_per_observation: p.problem.stride,
        noise_used: p.noise,
        series: &p.noise_report,
    }
}

pub fn simulate(cfg: &RunConfig, out: &Output) -> Result<PathBuf, CliError> {
    let (raw, truth) = simulate_campaign(&cfg.simulation)?;
    write_campaign_csv(&out.path("raw.csv"), &raw)?;
    write_campaign_csv(&out.path("truth.csv"), &truth)?;
    out.json("scenario.json", &cfg.simulation)?;
    #[derive(Serialize)]
    struct R<'a> {
        n_samples: usize,
        theta_true: &'a ThetaParams,
        raw: String,
        truth: String,
    }
    out.json(
        "simulate.json",
        &R {
            n_samples: raw.len(),
            theta_true: &cfg.simulation.theta_true,
            raw: out.path("raw.csv").display().to_string(),
            truth: out.path("truth.csv").display().to_string(),
        },
    )
}

pub fn preprocess(cfg: &RunConfig, out: &Output) -> Result<PathBuf, CliError> {
    let p = prepared(cfg)?;
    write_campaign_csv(&out.path("averaged.csv"), &p.averaged)?;
    let mut smoothed = p.averaged.clone();
    smoothed.temp_int = p.smoothed_int.clone();
    smoothed.temp_ext = p.smoothed_ext.clone();
    write_campaign_csv(&out.path("smoothed.csv"), &smoothed)?;
    out.json("preprocess.json", &prep_summary(&p))
}

#[derive(Serialize)]
struct FitReport<'a> {
    likelihood: wallinfer::likelihood::LikelihoodKind,
    theta: ThetaParams,
    log_posterior: f64,
    log_likelihood: f64,
    preprocessing: PrepSummary<'a>,
    starts: &'a [StartDiagnostic],
}

pub fn fit(cfg: &RunConfig, out: &Output) -> Result<PathBuf, CliError> {
    let p = prepared(cfg)?;
    let (theta, res) = fit_map(&p.problem, &cfg.inference.fit)?;
    let report = FitReport {
        likelihood: p.problem.kind,
        theta,
        log_posterior: res.value,
        log_likelihood: p.problem.log_likelihood(&theta)?,
        preprocessing: prep_summary(&p),
        starts: &res.starts,
    };
    out.json("fit.json", &report)
}

pub fn laplace(cfg: &RunConfig, out: &Output) -> Result<PathBuf, CliError> {
    let p = prepared(cfg)?;
    let g = fit_laplace(&p.problem, &cfg.inference.fit)?;
    out.json("laplace_marginals.json", &summarize_gaussian(&g, cfg.inference.summary_bins))?;
    out.json("laplace.json", &LaplaceExport::from(&g))
}

pub fn mcmc(cfg: &RunConfig, out: &Output) -> Result<PathBuf, CliError> {
    let p = prepared(cfg)?;
    let g = fit_laplace(&p.problem, &cfg.inference.fit)?;
    let d = g.map.len();
    let mut mc: McmcConfig = cfg.inference.mcmc.clone();
    if mc.proposal_sd.is_none() {
        let scale = 2.38 / (d as f64).sqrt();
        mc.proposal_sd = Some(g.sd().iter().map(|s| scale * s).collect());
    }
    let bounds = p.problem.prior.bounds(p.problem.ic);
    let f = |v: &[f64]| p.problem.log_posterior_vec(v);
    let chain = rw_metropolis(&f, &g.map, &bounds, &mc)?;
    let names = p.problem.ic.param_names();
    write_chain_csv(&out.path("chain.csv"), &chain, names)?;
    #[derive(Serialize)]
    struct R {
        iterations: usize,
        kept: usize,
        accepted: usize,
        acceptance_rate: f64,
        proposal_sd: Vec<f64>,
        laplace: LaplaceExport,
        marginals: Vec<wallinfer::inference::MarginalSummary>,
    }
    out.json(
        "mcmc.json",
        &R {
            iterations: mc.n_iter,
            kept: chain.samples.len(),
            accepted: chain.accepted,
            acceptance_rate: chain.acceptance_rate,
            proposal_sd: chain.proposal_sd.clone(),
            laplace: LaplaceExport::from(&g),
            marginals: summarize_chain(&chain.samples, names, cfg.inference.summary_bins)?,
        },
    )
}

pub fn aic(cfg: &RunConfig, out: &Output) -> Result<PathBuf, CliError> {
    let p = prepared(cfg)?;
    let entries: Vec<AicEntry> = aic_compare(&p.problem, &cfg.inference.aic_kinds, &cfg.inference.fit)?;
    let mut csv = String::from("ic,n_params,max_log_lik,aic\n");
    for e in &entries {
        csv.push_str(&format!("{},{},{},{}\n", e.ic.name(), e.n_params, e.max_log_lik, e.aic));
    }
    write_text(&out.path("aic.csv"), &csv)?;
    let best = entries
        .iter()
        .min_by(|a, b| a.aic.total_cmp(&b.aic))
        .map(|e| e.ic.name());
    #[derive(Serialize)]
    struct R<'a> {
        best: Option<&'a str>,
        entries: &'a [AicEntry],
    }
    out.json("aic.json", &R { best, entries: &entries })
}

#[derive(Serialize)]
struct GainRow {
    label: String,
    start: usize,
    end: usize,
    window_start_min: f64,
    window_end_min: f64,
    d_kl_nats: f64,
    truncation: f64,
    map: Vec<f64>,
    sd: Vec<f64>,
}

fn gain_row(g: &GainResult, (t0, dt): (f64, f64)) -> GainRow {
    GainRow {
        label: g.setup.label.clone(),
        start: g.setup.start,
        end: g.setup.end,
        window_start_min: t0 + g.setup.start as f64 * dt,
        window_end_min: t0 + (g.setup.end - 1) as f64 * dt,
        d_kl_nats: g.d_kl,
        truncation: g.truncation,
        map: g.laplace.map.clone(),
        sd: g.laplace.sd(),
    }
}

#[derive(Serialize)]
struct GainReport {
    results: Vec<GainRow>,
    failures: Vec<WindowFailure>,
}

pub fn infogain(cfg: &RunConfig, out: &Output) -> Result<PathBuf, CliError> {
    let p = prepared(cfg)?;
    let tb = observation_time_base(&p, &cfg.preprocessing);
    let checkpoints = cfg.design.checkpoints_for(p.problem.n_obs());
    let sweep = gain_vs_duration(&p.problem, &checkpoints, cfg.design.min_window, &cfg.inference.fit)?;
    let (ok, failures): (Vec<_>, Vec<_>) = sweep.into_iter().partition(|r| r.is_ok());
    let ok: Vec<GainResult> = ok.into_iter().filter_map(|r| r.ok()).collect();
    let failures: Vec<WindowFailure> = failures.into_iter().filter_map(|r| r.err()).collect();
    write_gain_csv(&out.path("infogain.csv"), &ok, tb)?;
    out.json(
        "infogain.json",
        &GainReport {
            results: ok.iter().map(|g| gain_row(g, tb)).collect(),
            failures,
        },
    )
}

pub fn cycles(cfg: &RunConfig, out: &Output) -> Result<PathBuf, CliError> {
    let p = prepared(cfg)?;
    let tb = observation_time_base(&p, &cfg.preprocessing);
    let ext = p.smoothed_ext.decimate(cfg.preprocessing.decimation.max(1));
    let windows = detect_cycles(&ext, cfg.design.min_separation_min, cfg.design.min_prominence)?;
    let ranking = rank_cycles(&p.problem, &windows, &cfg.inference.fit);
    write_gain_csv(&out.path("cycles.csv"), &ranking.ranked, tb)?;
    out.json(
        "cycles.json",
        &GainReport {
            results: ranking.ranked.iter().map(|g| gain_row(g, tb)).collect(),
            failures: ranking.failures,
        },
    )
}

pub fn robustness(cfg: &RunConfig, out: &Output) -> Result<PathBuf, CliError> {
    let raw = read_campaign_csv(cfg.input()?, Stage::Raw)?;
    let model = cfg.model();
    let summary = run_study(&raw, &cfg.robustness, &cfg.preprocessing, &model, &cfg.inference.fit)?;
    write_study_csv(&out.path("robustness.csv"), &summary)?;
    // Reference estimate from the full data averaged at the same block length.
    let pre = PreprocessConfig {
        lag: Some(cfg.robustness.ell),
        ..cfg.preprocessing.clone()
    };
    let model = wallinfer::pipeline::ModelConfig {
        likelihood: wallinfer::likelihood::LikelihoodKind::Marginal,
        ..model
    };
    let full = fit_map(&prepare(&raw, &pre, &model)?.problem, &cfg.inference.fit)?.0;
    #[derive(Serialize)]
    struct R<'a> {
        full_data_map: ThetaParams,
        full_data_map_in_range: bool,
        summary: &'a wallinfer::robustness::VariabilitySummary,
    }
    out.json(
        "robustness.json",
        &R {
            full_data_map: full,
            full_data_map_in_range: summary.r_value.covers(full.r_value) && summary.rho_c.covers(full.rho_c),
            summary: &summary,
        },
    )
}

pub fn predict(cfg: &RunConfig, out: &Output) -> Result<PathBuf, CliError> {
    let p = prepared(cfg)?;
    let theta = match cfg.inference.predict.theta {
        Some(t) => t,
        None => fit_map(&p.problem, &cfg.inference.fit)?.0,
    };
    let pc = &cfg.inference.predict;
    let bands = predict_bands(&p.problem, &theta, pc.n_draws, pc.seed)?;
    let (t0, dt) = observation_time_base(&p, &cfg.preprocessing);
    let times: Vec<f64> = (0..p.problem.n_obs()).map(|i| t0 + i as f64 * dt).collect();
    write_bands_csv(&out.path("predict.csv"), &bands, &times)?;
    let coverage = |obs: &[f64], lo: &[f64], hi: &[f64]| {
        obs.iter().zip(lo).zip(hi).filter(|((o, l), h)| *l <= *o && *o <= *h).count() as f64 / obs.len() as f64
    };
    #[derive(Serialize)]
    struct R {
        theta: ThetaParams,
        n_draws: usize,
        observed_in_band_int: f64,
        observed_in_band_ext: f64,
    }
    out.json(
        "predict.json",
        &R {
            theta,
            n_draws: pc.n_draws,
            observed_in_band_int: coverage(&p.problem.q_int, &bands.lower_int, &bands.upper_int),
            observed_in_band_ext: coverage(&p.problem.q_ext, &bands.lower_ext, &bands.upper_ext),
        },
    )
}
