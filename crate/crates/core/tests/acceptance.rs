//! End-to-end acceptance checks. Each test prints one PASS/FAIL line on stderr, outside
//! the harness capture, then asserts.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wallinfer::design::{gain_vs_duration, information_gain, information_gain_mc, window_gain, DesignSetup};
use wallinfer::forward::{
    assemble_flux_operators, initial_profile, propagator_sequences, solve_forward, solve_forward_sampled_from,
};
use wallinfer::inference::{aic_compare, fit_laplace, fit_map, rw_metropolis, FitOptions, McmcConfig};
use wallinfer::likelihood::{InferenceProblem, LikelihoodKind, ProblemSettings};
use wallinfer::model::{Campaign, Grid, InitialConditionKind, NoiseModel, Stage, ThetaParams, TimeSeries, WallGeometry};
use wallinfer::pipeline::{prepare, ModelConfig, PreprocessConfig};
use wallinfer::preprocess::{ljung_box, log_grid, moving_average, select_lag, SmootherConfig};
use wallinfer::robustness::{run_study, SubsampleConfig};
use wallinfer::synthetic::{
    oracle_marginal_gaussian, oracle_marginal_mc, simulate_campaign, CycleSpec, ExternalProfile, NoiseSpec,
    ScenarioSpec,
};

const R_TRUE: f64 = 0.31;
const RC_TRUE: f64 = 3.2e5;

fn report(id: u32, name: &str, pass: bool, details: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr();
    let _ = writeln!(err, "criterion {id:2} ({name}): {verdict} | {details}");
    let _ = err.flush();
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn random_theta(rng: &mut ChaCha8Rng) -> ThetaParams {
    ThetaParams::new(
        rng.random_range(0.17..0.36),
        rng.random_range(2.34e5..4.31e5),
        rng.random_range(5.0..25.0),
    )
}

/// Smooth random boundary: mean plus two random sinusoids plus small jitter.
fn random_boundary(rng: &mut ChaCha8Rng, n: usize, mean: f64) -> Vec<f64> {
    let (a1, p1, f1) = (rng.random_range(1.0..8.0), rng.random_range(0.0..6.3), rng.random_range(0.01..0.2));
    let (a2, p2, f2) = (rng.random_range(0.1..2.0), rng.random_range(0.0..6.3), rng.random_range(0.2..1.0));
    (0..n)
        .map(|i| {
            let t = i as f64;
            mean + a1 * (f1 * t + p1).sin() + a2 * (f2 * t + p2).sin() + rng.random_range(-0.2..0.2)
        })
        .collect()
}

#[test]
fn c01_operator_and_stepping_paths_agree() {
    let start = Instant::now();
    let geom = WallGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let theta = random_theta(&mut rng);
        let m = rng.random_range(3..=40);
        let n_obs = rng.random_range(2..=200);
        let stride = rng.random_range(1..=3);
        let dt = [30.0, 60.0, 120.0][rng.random_range(0..3)];
        let grid = Grid::new(m, dt, (n_obs - 1) * stride).unwrap();
        let ti = random_boundary(&mut rng, n_obs, 20.0);
        let te = random_boundary(&mut rng, n_obs, 5.0);
        let kind = InitialConditionKind::ALL[rng.random_range(0..InitialConditionKind::ALL.len())];
        let theta = match kind {
            InitialConditionKind::Cubic => {
                let tau1 = rng.random_range(theta.tau0 - 3.0..theta.tau0 + 3.0);
                theta.with_tau1(tau1)
            }
            _ => theta,
        };
        let t0 = initial_profile(kind, ti[0], te[0], &theta, &grid).unwrap();
        let stepped = solve_forward_sampled_from(&theta, &geom, &grid, &t0, &ti, &te, stride).unwrap();
        let seq = propagator_sequences(&theta, &geom, &grid, stride).unwrap();
        let ops = assemble_flux_operators(&seq, &theta, &geom, &grid, stride).unwrap();
        let via_ops = ops.apply(&t0, &ti, &te);
        let scale = stepped.f_int.iter().chain(&stepped.f_ext).fold(1.0f64, |a, v| a.max(v.abs()));
        for i in 0..n_obs {
            worst = worst.max((stepped.f_int[i] - via_ops.f_int[i]).abs() / scale);
            worst = worst.max((stepped.f_ext[i] - via_ops.f_ext[i]).abs() / scale);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-9 && secs < 60.0;
    report(1, "operator vs stepping", pass, &format!("100 instances, max relative gap {worst:.2e}, {secs:.1} s"));
    assert!(pass);
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize, m_cells: usize, stride: usize, sigma_t: f64) -> InferenceProblem {
    let qi: Vec<f64> = (0..n).map(|_| rng.random_range(10.0..40.0)).collect();
    let qe: Vec<f64> = (0..n).map(|_| rng.random_range(-40.0..-10.0)).collect();
    let bi: Vec<f64> = (0..n).map(|_| rng.random_range(18.0..24.0)).collect();
    let be: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..15.0)).collect();
    let settings = ProblemSettings {
        m_cells,
        stride,
        noise: NoiseModel {
            sigma_flux_int: rng.random_range(0.3..1.5),
            sigma_flux_ext: rng.random_range(0.3..1.5),
            sigma_temp_prior: sigma_t,
        },
        kind: LikelihoodKind::Marginal,
        ..ProblemSettings::default()
    };
    InferenceProblem::new(qi, qe, bi, be, 300.0 * stride as f64, &settings).unwrap()
}

/// Replaces the fluxes by model output plus bounded noise so the Monte-Carlo integrand
/// is not dominated by rare draws.
fn near_model(mut p: InferenceProblem, theta: &ThetaParams, rng: &mut ChaCha8Rng) -> InferenceProblem {
    let t0 = p.initial_profile(theta).unwrap();
    let f = solve_forward_sampled_from(theta, &p.geometry, &p.grid, &t0, &p.boundary_int, &p.boundary_ext, p.stride)
        .unwrap();
    p.q_int = f.f_int.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
    p.q_ext = f.f_ext.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
    p
}

#[test]
fn c02_marginal_matches_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_rel = 0.0f64;
    for case in 0..40 {
        let n = rng.random_range(2..=50);
        let stride = rng.random_range(1..=3);
        let sigma_t = [0.0, 0.01, 0.1, 0.5][case % 4];
        let m = rng.random_range(3..=24);
        let p = random_problem(&mut rng, n, m, stride, sigma_t);
        let theta = random_theta(&mut rng);
        let fast = p.log_marginal_likelihood(&theta).unwrap();
        let oracle = oracle_marginal_gaussian(&p, &theta).unwrap();
        worst_rel = worst_rel.max((fast - oracle).abs() / oracle.abs());
    }
    let mut worst_z = 0.0f64;
    for case in 0..5 {
        let n = rng.random_range(2..=5);
        let p = random_problem(&mut rng, n, 6, 1, 0.02);
        let theta = random_theta(&mut rng);
        let p = near_model(p, &theta, &mut rng);
        let exact = p.log_marginal_likelihood(&theta).unwrap();
        let (est, se) = oracle_marginal_mc(&p, &theta, 200_000, 500 + case).unwrap();
        worst_z = worst_z.max((est - exact).abs() / se);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_rel <= 1e-8 && worst_z < 3.0 && secs < 120.0;
    report(
        2,
        "marginal likelihood oracles",
        pass,
        &format!("dense max rel {worst_rel:.2e} (40 cases), MC max |z| {worst_z:.2} (5 cases), {secs:.1} s"),
    );
    assert!(pass);
}

/// Flux histories on a smooth problem: linear start, boundaries leaving it with zero slope.
fn smooth_run(m: usize, dt: f64, horizon_s: f64) -> (Vec<f64>, Vec<f64>) {
    let theta = ThetaParams::new(R_TRUE, RC_TRUE, 0.0);
    let geom = WallGeometry::default();
    let n_steps = (horizon_s / dt).round() as usize;
    let grid = Grid::new(m, dt, n_steps).unwrap();
    let omega = 2.0 * std::f64::consts::PI / 86_400.0;
    let ti: Vec<f64> = (0..=n_steps).map(|k| 20.0 + 3.0 * (1.0 - (omega * k as f64 * dt).cos())).collect();
    let te: Vec<f64> = (0..=n_steps).map(|k| 5.0 - 8.0 * (1.0 - (omega * k as f64 * dt).cos())).collect();
    let f = solve_forward(&theta, &geom, &grid, &ti, &te, InitialConditionKind::Linear).unwrap();
    (f.f_int, f.f_ext)
}

/// Fluxes at multiples of `every_s`.
fn at_times(run: &(Vec<f64>, Vec<f64>), dt: f64, every_s: f64) -> Vec<f64> {
    let k = (every_s / dt).round() as usize;
    run.0.iter().step_by(k).chain(run.1.iter().step_by(k)).copied().collect()
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn c03_discretization_orders() {
    let start = Instant::now();
    let horizon = 12.0 * 3600.0;
    let every = 3600.0;
    // Space: fixed step, halving cells.
    let dt = 30.0;
    let s: Vec<Vec<f64>> = [8, 16, 32].iter().map(|&m| at_times(&smooth_run(m, dt, horizon), dt, every)).collect();
    let space_order = (max_gap(&s[0], &s[1]) / max_gap(&s[1], &s[2])).log2();
    // Time: fixed cells, halving the step.
    let t: Vec<Vec<f64>> = [120.0, 60.0, 30.0]
        .iter()
        .map(|&dt| at_times(&smooth_run(40, dt, horizon), dt, every))
        .collect();
    let time_order = (max_gap(&t[0], &t[1]) / max_gap(&t[1], &t[2])).log2();
    let secs = start.elapsed().as_secs_f64();
    let pass = (space_order - 2.0).abs() <= 0.3 && (time_order - 1.0).abs() <= 0.2 && secs < 120.0;
    report(
        3,
        "discretization orders",
        pass,
        &format!("space {space_order:.3} (M 8/16/32), time {time_order:.3} (dt 120/60/30 s), {secs:.1} s"),
    );
    assert!(pass);
}

#[test]
fn c04_steady_state_flux() {
    let theta = ThetaParams::new(R_TRUE, RC_TRUE, 16.0);
    let geom = WallGeometry::default();
    let grid = Grid::new(40, 60.0, 20_000).unwrap();
    let n = grid.n_steps + 1;
    let (ti, te) = (23.0, -2.0);
    let f = solve_forward(&theta, &geom, &grid, &vec![ti; n], &vec![te; n], InitialConditionKind::PiecewiseLinear)
        .unwrap();
    let want = (ti - te) / R_TRUE;
    let rel_int = (f.f_int[n - 1] - want).abs() / want;
    let rel_ext = (f.f_ext[n - 1] + want).abs() / want;
    let pass = rel_int < 1e-6 && rel_ext < 1e-6;
    report(
        4,
        "steady-state flux",
        pass,
        &format!("interior rel {rel_int:.1e}, exterior rel {rel_ext:.1e} (exterior sign outward)"),
    );
    assert!(pass);
}

#[test]
fn c05_parameter_recovery() {
    let start = Instant::now();
    let pre = PreprocessConfig {
        lag: Some(5),
        decimation: 5,
        ..PreprocessConfig::default()
    };
    let model = ModelConfig::default();
    let mut r_err = Vec::new();
    let mut rc_err = Vec::new();
    let mut n_obs = 0;
    for seed in 0..20 {
        let spec = ScenarioSpec {
            seed: 1000 + seed,
            ..ScenarioSpec::default()
        };
        let (raw, _) = simulate_campaign(&spec).unwrap();
        let prepared = prepare(&raw, &pre, &model).unwrap();
        n_obs = prepared.problem.n_obs();
        let opts = FitOptions {
            n_starts: 3,
            seed,
            ..FitOptions::default()
        };
        let (theta, _) = fit_map(&prepared.problem, &opts).unwrap();
        r_err.push((theta.r_value - R_TRUE).abs() / R_TRUE);
        rc_err.push((theta.rho_c - RC_TRUE).abs() / RC_TRUE);
    }
    let (mr, mrc) = (median(&r_err), median(&rc_err));
    let secs = start.elapsed().as_secs_f64();
    let pass = mr <= 0.02 && mrc <= 0.05 && secs < 600.0;
    report(
        5,
        "parameter recovery",
        pass,
        &format!(
            "median |err| R {:.3}%, rhoC {:.3}% over 20 seeds, N = {n_obs}, {secs:.0} s",
            100.0 * mr,
            100.0 * mrc
        ),
    );
    assert!(pass);
}

#[test]
fn c06_marginal_reduces_bias() {
    let start = Instant::now();
    let m = 30;
    let pre = PreprocessConfig {
        lag: Some(5),
        decimation: 5,
        ..PreprocessConfig::default()
    };
    let mut wins = 0;
    let n_seeds = 50;
    for seed in 0..n_seeds {
        let spec = ScenarioSpec {
            seed: 2000 + seed,
            m_cells: m,
            duration_min: 2.0 * 1440.0,
            noise: NoiseSpec {
                temp_sd: 0.1,
                flux_sd: 0.66,
                ar1: None,
            },
            ..ScenarioSpec::default()
        };
        let (raw, _) = simulate_campaign(&spec).unwrap();
        let mut errs = [0.0; 2];
        for (e, kind) in errs.iter_mut().zip([LikelihoodKind::Deterministic, LikelihoodKind::Marginal]) {
            let model = ModelConfig {
                m_cells: m,
                likelihood: kind,
                ..ModelConfig::default()
            };
            let p = prepare(&raw, &pre, &model).unwrap();
            let opts = FitOptions {
                n_starts: 2,
                seed,
                ..FitOptions::default()
            };
            *e = (fit_map(&p.problem, &opts).unwrap().0.r_value - R_TRUE).abs();
        }
        if errs[1] < errs[0] {
            wins += 1;
        }
    }
    let frac = wins as f64 / n_seeds as f64;
    let pass = frac >= 0.8;
    report(
        6,
        "marginal vs deterministic bias",
        pass,
        &format!("marginal closer in {wins}/{n_seeds} seeds, {:.0} s", start.elapsed().as_secs_f64()),
    );
    assert!(pass);
}

/// Effective sample size by batch means.
fn batch_ess(x: &[f64], n_batches: usize) -> (f64, f64) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let size = n / n_batches;
    let batch_var = (0..n_batches)
        .map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .map(|m| (m - mean).powi(2))
        .sum::<f64>()
        / (n_batches - 1) as f64;
    (var.sqrt(), var / batch_var * n_batches as f64)
}

#[test]
fn c07_laplace_matches_mcmc() {
    let start = Instant::now();
    let (raw, _) = simulate_campaign(&ScenarioSpec::default()).unwrap();
    let pre = PreprocessConfig {
        lag: Some(5),
        decimation: 10,
        ..PreprocessConfig::default()
    };
    let p = prepare(&raw, &pre, &ModelConfig::default()).unwrap().problem;
    let g = fit_laplace(&p, &FitOptions { n_starts: 3, ..FitOptions::default() }).unwrap();
    let bounds = p.prior.bounds(p.ic);
    let f = |v: &[f64]| p.log_posterior_vec(v);
    let scale = 2.38 / (g.map.len() as f64).sqrt();
    let cfg = McmcConfig {
        n_iter: 21_000,
        burn_in: 1_000,
        thin: 1,
        proposal_sd: Some(g.sd().iter().map(|s| s * scale).collect()),
        seed: 5,
        adapt_iterations: 0,
    };
    let chain = rw_metropolis(&f, &g.map, &bounds, &cfg).unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    for (j, name) in p.ic.param_names().iter().enumerate() {
        let x: Vec<f64> = chain.samples.iter().map(|s| s[j]).collect();
        let (sd, ess) = batch_ess(&x, 50);
        let ratio = sd / g.sd()[j];
        pass &= (ratio - 1.0).abs() <= 0.05;
        details.push(format!("{name} sd ratio {ratio:.3} (ESS {ess:.0})"));
    }
    report(
        7,
        "Laplace vs MCMC sds",
        pass,
        &format!(
            "N = {}, {}, acceptance {:.2}, {:.0} s",
            p.n_obs(),
            details.join(", "),
            chain.acceptance_rate,
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

fn gain_problem(external: ExternalProfile, duration_min: f64, seed: u64, m: usize) -> InferenceProblem {
    let spec = ScenarioSpec {
        m_cells: m,
        external,
        duration_min,
        seed,
        ..ScenarioSpec::default()
    };
    let (raw, _) = simulate_campaign(&spec).unwrap();
    let pre = PreprocessConfig {
        lag: Some(5),
        decimation: 5,
        ..PreprocessConfig::default()
    };
    let model = ModelConfig {
        m_cells: m,
        ..ModelConfig::default()
    };
    prepare(&raw, &pre, &model).unwrap().problem
}

/// Concatenates two problems so that each becomes one window of the result.
fn stack_two(a: &InferenceProblem, b: &InferenceProblem) -> (InferenceProblem, DesignSetup, DesignSetup) {
    let cat = |x: &[f64], y: &[f64]| x.iter().chain(y).copied().collect::<Vec<f64>>();
    let settings = ProblemSettings {
        geometry: a.geometry,
        m_cells: a.grid.m_cells,
        stride: a.stride,
        noise: a.noise,
        ic: a.ic,
        kind: a.kind,
        prior: a.prior,
    };
    let mut p = InferenceProblem::new(
        cat(&a.q_int, &b.q_int),
        cat(&a.q_ext, &b.q_ext),
        cat(&a.boundary_int, &b.boundary_int),
        cat(&a.boundary_ext, &b.boundary_ext),
        a.grid.dt * a.stride as f64,
        &settings,
    )
    .unwrap();
    let (ra, rb) = (a.t0_reference.as_ref().unwrap(), b.t0_reference.as_ref().unwrap());
    p.t0_reference = Some((cat(&ra.0, &rb.0), cat(&ra.1, &rb.1)));
    let na = a.n_obs();
    let wa = DesignSetup::new(0, na, "baseline").unwrap();
    let wb = DesignSetup::new(na, na + b.n_obs(), "doubled").unwrap();
    (p, wa, wb)
}

#[test]
fn c08_information_gain_behaviour() {
    let start = Instant::now();
    let m = 30;
    let opts = FitOptions {
        n_starts: 4,
        seed: 3,
        ..FitOptions::default()
    };
    // Nested windows over a five-day record.
    let full = gain_problem(ScenarioSpec::default().external, 5.0 * 1440.0, 21, m);
    let n = full.n_obs();
    let checkpoints = vec![100, 150, 200, 250, n];
    let sweep = gain_vs_duration(&full, &checkpoints, 100, &opts).unwrap();
    let gains: Vec<f64> = sweep.iter().map(|r| r.as_ref().unwrap().d_kl).collect();
    let worst_drop = gains.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
    let monotone = worst_drop <= 0.1;

    // One baseline day against the same day at twice the amplitude.
    let day = |amplitude: f64| ExternalProfile::Cycles {
        mean: 8.0,
        cycles: vec![CycleSpec {
            length_min: 1440.0,
            amplitude,
        }],
    };
    let base = gain_problem(day(10.0), 1440.0, 31, m);
    let doubled = gain_problem(day(20.0), 1440.0, 31, m);
    let (stacked, wa, wb) = stack_two(&base, &doubled);
    let ga = window_gain(&stacked, &wa, &opts).unwrap().d_kl;
    let gb = window_gain(&stacked, &wb, &opts).unwrap().d_kl;
    let larger = gb > ga;

    // Closed form against Monte Carlo at the full-record posterior.
    let laplace = fit_laplace(&full, &opts).unwrap();
    let bounds = full.prior.bounds(full.ic);
    let closed = information_gain(&laplace, &bounds).unwrap();
    let (mc, se) = information_gain_mc(&laplace, &bounds, 1_000_000, 9).unwrap();
    let rel = (mc - closed).abs() / closed;
    let agree = rel <= 0.01;

    let pass = monotone && larger && agree;
    let g: Vec<String> = gains.iter().map(|v| format!("{v:.2}")).collect();
    report(
        8,
        "information gain",
        pass,
        &format!(
            "windows {checkpoints:?} -> [{}] nats (worst drop {worst_drop:.3}); baseline {ga:.2} < doubled {gb:.2}; \
             closed {closed:.4} vs MC {mc:.4} ± {se:.4} (rel {rel:.1e}); {:.0} s",
            g.join(", "),
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn c09_aic_prefers_generating_profile() {
    let start = Instant::now();
    // Coarser grids blur the profile's kink enough for the cubic to absorb the error.
    let m = 40;
    let pre = PreprocessConfig {
        lag: Some(5),
        decimation: 2,
        ..PreprocessConfig::default()
    };
    let model = ModelConfig {
        m_cells: m,
        ..ModelConfig::default()
    };
    let n_seeds = 50;
    let mut wins = 0;
    let mut n_obs = 0;
    for seed in 0..n_seeds {
        let spec = ScenarioSpec {
            seed: 3000 + seed,
            m_cells: m,
            duration_min: 12.0 * 60.0,
            theta_true: ThetaParams::new(R_TRUE, RC_TRUE, 15.0),
            ..ScenarioSpec::default()
        };
        let (raw, _) = simulate_campaign(&spec).unwrap();
        let p = prepare(&raw, &pre, &model).unwrap().problem;
        n_obs = p.n_obs();
        let opts = FitOptions {
            n_starts: 2,
            seed,
            ..FitOptions::default()
        };
        let entries = aic_compare(&p, &InitialConditionKind::ALL, &opts).unwrap();
        let best = entries.iter().min_by(|a, b| a.aic.total_cmp(&b.aic)).unwrap().ic;
        if best == InitialConditionKind::PiecewiseLinear {
            wins += 1;
        }
    }
    let pass = wins as f64 >= 0.9 * n_seeds as f64;
    report(
        9,
        "AIC initial-profile selection",
        pass,
        &format!(
            "piecewise-linear wins {wins}/{n_seeds} (12 h campaigns, N = {n_obs}), {:.0} s",
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[test]
fn c10_preprocessing_statistics() {
    // Size: white noise should rarely be flagged.
    let n = 1000;
    let h = 20;
    let mut kept = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        if ljung_box(&normals(&mut rng, n), h).unwrap().p_value > 0.05 {
            kept += 1;
        }
    }
    // Power: AR(1) with coefficient 0.5.
    let mut rng = ChaCha8Rng::seed_from_u64(4999);
    let e = normals(&mut rng, n);
    let mut ar = vec![0.0; n];
    for i in 1..n {
        ar[i] = 0.5 * ar[i - 1] + e[i];
    }
    let p_ar = ljung_box(&ar, h).unwrap().p_value;

    // Lag selection: a zero-sum five-sample artifact vanishes under lag-5 averaging.
    let pattern = [1.0, 0.5, -0.3, -0.9, -0.3];
    let len = 3000;
    let series = |k: usize, rng: &mut ChaCha8Rng| {
        let values = (0..len)
            .map(|i| {
                let t = i as f64;
                let z: f64 = rng.sample(StandardNormal);
                10.0 * (k as f64 + 1.0) * (t / 900.0).sin() + 2.0 * pattern[i % 5] + 0.1 * z
            })
            .collect();
        TimeSeries::new(0.0, 1.0, values)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4040);
    let raw = Campaign::new(
        series(0, &mut rng),
        series(1, &mut rng),
        series(2, &mut rng),
        series(3, &mut rng),
        Stage::Raw,
    )
    .unwrap();
    let cfg = SmootherConfig {
        lambda_grid: log_grid(1e-4, 1e6, 21),
        ..SmootherConfig::default()
    };
    let lag = select_lag(&raw, &(2..=12).collect::<Vec<_>>(), &cfg).unwrap().lag;

    // Averaged lengths.
    let mut lengths_ok = true;
    for (n_raw, ell) in [(6900, 5), (6900, 7), (1001, 4), (12, 12), (13, 5)] {
        let s = TimeSeries::new(0.0, 1.0, vec![1.0; n_raw]);
        lengths_ok &= moving_average(&s, ell).unwrap().len() == n_raw / ell;
    }
    let avg_6900 = moving_average(&TimeSeries::new(0.0, 1.0, vec![0.0; 6900]), 5).unwrap().len();

    let pass = kept >= 90 && p_ar < 1e-6 && lag == 5 && lengths_ok && avg_6900 == 1380;
    report(
        10,
        "preprocessing statistics",
        pass,
        &format!(
            "white noise kept {kept}/100, AR(1) p = {p_ar:.1e}, selected lag {lag}, 6900 -> {avg_6900} at lag 5"
        ),
    );
    assert!(pass);
}

#[test]
fn c11_subsampling_spread() {
    let start = Instant::now();
    let m = 30;
    let spec = ScenarioSpec {
        seed: 3,
        m_cells: m,
        duration_min: 2.0 * 1440.0,
        ..ScenarioSpec::default()
    };
    let (raw, _) = simulate_campaign(&spec).unwrap();
    let model = ModelConfig {
        m_cells: m,
        ..ModelConfig::default()
    };
    let fit = FitOptions {
        n_starts: 2,
        seed: 1,
        ..FitOptions::default()
    };
    let mut covered = 0;
    let mut iqr = Vec::new();
    let configs = [(5, 4, 5), (5, 3, 5), (10, 8, 3), (10, 7, 3), (10, 6, 3)];
    for (ell, b, decimation) in configs {
        let pre = PreprocessConfig {
            lag: Some(ell),
            decimation,
            ..PreprocessConfig::default()
        };
        let full = fit_map(&prepare(&raw, &pre, &model).unwrap().problem, &fit).unwrap().0;
        let cfg = SubsampleConfig {
            ell,
            b,
            n_repeats: 25,
            seed: 7,
        };
        let study = run_study(&raw, &cfg, &pre, &model, &fit).unwrap();
        if study.r_value.covers(full.r_value) && study.rho_c.covers(full.rho_c) {
            covered += 1;
        }
        iqr.push((study.r_value.iqr(), study.rho_c.iqr()));
    }
    let ordered = iqr[1].0 > iqr[0].0 && iqr[1].1 > iqr[0].1;
    let coverage = covered as f64 / configs.len() as f64;
    let pass = ordered && coverage >= 0.95;
    report(
        11,
        "subsampling robustness",
        pass,
        &format!(
            "IQR R b=3 {:.2e} > b=4 {:.2e}, rhoC {:.0} > {:.0}; full-data MAP covered in {covered}/{}; {:.0} s",
            iqr[1].0,
            iqr[0].0,
            iqr[1].1,
            iqr[0].1,
            configs.len(),
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}
