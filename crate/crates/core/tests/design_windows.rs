use wallinfer::design::{detect_cycles, gain_vs_duration, rank_cycles, window_gain, DesignSetup};
use wallinfer::inference::FitOptions;
use wallinfer::likelihood::{InferenceProblem, ProblemSettings};
use wallinfer::pipeline::{prepare, ModelConfig, PreprocessConfig};
use wallinfer::synthetic::{simulate_campaign, CycleSpec, ExternalProfile, ScenarioSpec};

const M: usize = 30;

fn scenario(external: ExternalProfile, duration_min: f64, seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        m_cells: M,
        external,
        duration_min,
        seed,
        ..ScenarioSpec::default()
    }
}

fn configs() -> (PreprocessConfig, ModelConfig) {
    let pre = PreprocessConfig {
        lag: Some(5),
        decimation: 5,
        ..PreprocessConfig::default()
    };
    let model = ModelConfig {
        m_cells: M,
        ..ModelConfig::default()
    };
    (pre, model)
}

fn problem_for(spec: &ScenarioSpec) -> InferenceProblem {
    let (raw, _) = simulate_campaign(spec).unwrap();
    let (pre, model) = configs();
    prepare(&raw, &pre, &model).unwrap().problem
}

fn one_cycle(amplitude: f64, seed: u64) -> InferenceProblem {
    let ext = ExternalProfile::Cycles {
        mean: 8.0,
        cycles: vec![CycleSpec {
            length_min: 1440.0,
            amplitude,
        }],
    };
    problem_for(&scenario(ext, 1440.0, seed))
}

/// Stacks problems end to end so that each becomes one window of the result.
fn stack(parts: &[&InferenceProblem]) -> (InferenceProblem, Vec<DesignSetup>) {
    let cat = |f: &dyn Fn(&InferenceProblem) -> &Vec<f64>| parts.iter().flat_map(|p| f(p).iter().copied()).collect::<Vec<f64>>();
    let first = parts[0];
    let settings = ProblemSettings {
        geometry: first.geometry,
        m_cells: first.grid.m_cells,
        stride: first.stride,
        noise: first.noise,
        ic: first.ic,
        kind: first.kind,
        prior: first.prior,
    };
    let dt_obs = first.grid.dt * first.stride as f64;
    let mut p = InferenceProblem::new(
        cat(&|p| &p.q_int),
        cat(&|p| &p.q_ext),
        cat(&|p| &p.boundary_int),
        cat(&|p| &p.boundary_ext),
        dt_obs,
        &settings,
    )
    .unwrap();
    p.t0_reference = Some((
        cat(&|p| &p.t0_reference.as_ref().unwrap().0),
        cat(&|p| &p.t0_reference.as_ref().unwrap().1),
    ));
    let mut setups = Vec::new();
    let mut at = 0;
    for (k, q) in parts.iter().enumerate() {
        setups.push(DesignSetup::new(at, at + q.n_obs(), format!("part-{k}")).unwrap());
        at += q.n_obs();
    }
    (p, setups)
}

fn fit_opts() -> FitOptions {
    FitOptions {
        n_starts: 4,
        seed: 11,
        ..FitOptions::default()
    }
}

#[test]
fn larger_swing_duplicate_and_flat_cycles_rank_as_expected() {
    let base = one_cycle(5.0, 21);
    let doubled = one_cycle(10.0, 21);
    let flat = one_cycle(0.0, 21);
    let (p, setups) = stack(&[&base, &doubled, &base, &flat]);
    let ranking = rank_cycles(&p, &setups, &fit_opts());
    assert!(ranking.failures.is_empty(), "{:?}", ranking.failures);
    let gain = |label: &str| ranking.ranked.iter().find(|g| g.setup.label == label).unwrap().d_kl;
    for g in &ranking.ranked {
        println!("{} d_kl={:.3} trunc={:.3}", g.setup.label, g.d_kl, g.truncation);
    }
    assert!(gain("part-1") > gain("part-0"));
    assert!((gain("part-0") - gain("part-2")).abs() < 0.05);
    assert_eq!(ranking.ranked.last().unwrap().setup.label, "part-3");
    assert!(ranking.ranked.windows(2).all(|w| w[0].d_kl >= w[1].d_kl));
}

#[test]
fn cycle_windows_follow_generated_lengths() {
    let lengths = [1470.0, 1470.0, 1460.0, 1370.0];
    let ext = ExternalProfile::Cycles {
        mean: 8.0,
        cycles: lengths
            .iter()
            .zip([9.0, 6.0, 10.0, 7.0])
            .map(|(&length_min, amplitude)| CycleSpec { length_min, amplitude })
            .collect(),
    };
    let spec = scenario(ext, lengths.iter().sum(), 5);
    let (raw, _) = simulate_campaign(&spec).unwrap();
    let (pre, model) = configs();
    let prepared = prepare(&raw, &pre, &model).unwrap();
    let windows = detect_cycles(&prepared.smoothed_ext, 720.0, 2.0).unwrap();
    let dt = prepared.smoothed_ext.dt_sample;
    let cycles: Vec<_> = windows.iter().filter(|w| w.label.starts_with("cycle")).collect();
    assert_eq!(cycles.len(), lengths.len(), "{windows:?}");
    for (w, len) in cycles.iter().zip(lengths) {
        let got = w.len() as f64 * dt;
        assert!((got - len).abs() <= 0.1 * len, "{w:?}: {got} vs {len}");
    }
}

#[test]
fn single_checkpoint_equals_direct_window_gain() {
    let p = one_cycle(10.0, 4);
    let n = p.n_obs();
    let sweep = gain_vs_duration(&p, &[n], 40, &fit_opts()).unwrap();
    let direct = window_gain(&p, &DesignSetup::new(0, n, "all").unwrap(), &fit_opts()).unwrap();
    let s = sweep[0].as_ref().unwrap();
    assert!((s.d_kl - direct.d_kl).abs() < 1e-12);
}

#[test]
fn sweep_rejects_short_or_unordered_checkpoints() {
    let p = one_cycle(10.0, 4);
    assert!(gain_vs_duration(&p, &[30, 50], 40, &fit_opts()).is_err());
    assert!(gain_vs_duration(&p, &[50, 45], 40, &fit_opts()).is_err());
}
