use proptest::prelude::*;
use wallinfer::forward::{
    assemble_flux_operators, initial_profile, interpolate_boundary, propagator_sequences,
    solve_forward, solve_forward_sampled_from,
};
use wallinfer::model::{Grid, InitialConditionKind, ThetaParams, WallGeometry};

fn boundary(n: usize, phase: f64) -> Vec<f64> {
    (0..n)
        .map(|i| 18.0 + 4.0 * ((i as f64) * 0.07 + phase).sin() + 0.3 * ((i as f64) * 0.61).cos())
        .collect()
}

fn check_paths(theta: ThetaParams, m: usize, dt: f64, n_obs: usize, stride: usize) -> f64 {
    let geom = WallGeometry::default();
    let grid = Grid::new(m, dt, (n_obs - 1) * stride).unwrap();
    let ti = boundary(n_obs, 0.0);
    let te = boundary(n_obs, 1.3).iter().map(|v| v - 8.0).collect::<Vec<_>>();
    let t0 = initial_profile(InitialConditionKind::PiecewiseLinear, ti[0], te[0], &theta, &grid).unwrap();
    let stepped = solve_forward_sampled_from(&theta, &geom, &grid, &t0, &ti, &te, stride).unwrap();
    let seq = propagator_sequences(&theta, &geom, &grid, stride).unwrap();
    let ops = assemble_flux_operators(&seq, &theta, &geom, &grid, stride).unwrap();
    let via_ops = ops.apply(&t0, &ti, &te);
    let scale = stepped.f_int.iter().chain(&stepped.f_ext).fold(1.0f64, |a, v| a.max(v.abs()));
    let mut worst = 0.0f64;
    for i in 0..n_obs {
        worst = worst.max((stepped.f_int[i] - via_ops.f_int[i]).abs());
        worst = worst.max((stepped.f_ext[i] - via_ops.f_ext[i]).abs());
    }
    worst / scale
}

#[test]
fn operators_match_time_stepping_unit_stride() {
    let err = check_paths(ThetaParams::new(0.31, 3.2e5, 16.0), 60, 60.0, 200, 1);
    assert!(err < 1e-10, "relative mismatch {err}");
}

#[test]
fn operators_match_time_stepping_with_stride() {
    for stride in [2, 3, 5] {
        let err = check_paths(ThetaParams::new(0.25, 2.6e5, 14.0), 30, 60.0, 80, stride);
        assert!(err < 1e-10, "stride {stride}: relative mismatch {err}");
    }
}

#[test]
fn strided_sampling_equals_fine_run_on_interpolated_boundaries() {
    let theta = ThetaParams::new(0.3, 3e5, 17.0);
    let geom = WallGeometry::default();
    let stride = 4;
    let grid = Grid::new(20, 75.0, 40 * stride).unwrap();
    let ti = boundary(41, 0.2);
    let te = boundary(41, 2.0);
    let t0 = initial_profile(InitialConditionKind::PiecewiseLinear, ti[0], te[0], &theta, &grid).unwrap();
    let coarse = solve_forward_sampled_from(&theta, &geom, &grid, &t0, &ti, &te, stride).unwrap();
    let fine = solve_forward(
        &theta,
        &geom,
        &grid,
        &interpolate_boundary(&ti, stride),
        &interpolate_boundary(&te, stride),
        InitialConditionKind::PiecewiseLinear,
    )
    .unwrap();
    for i in 0..41 {
        assert!((coarse.f_int[i] - fine.f_int[i * stride]).abs() < 1e-12);
        assert!((coarse.f_ext[i] - fine.f_ext[i * stride]).abs() < 1e-12);
    }
}

#[test]
fn steady_state_fluxes_equal_conductance_times_difference() {
    let theta = ThetaParams::new(0.31, 3.2e5, 16.0);
    let geom = WallGeometry::default();
    let grid = Grid::new(60, 60.0, 20_000).unwrap();
    let n = grid.n_steps + 1;
    let flux = solve_forward(
        &theta,
        &geom,
        &grid,
        &vec![26.0; n],
        &vec![16.0; n],
        InitialConditionKind::Linear,
    )
    .unwrap();
    let want = 10.0 / 0.31;
    let last = n - 1;
    assert!((flux.f_int[last] - want).abs() < 1e-6 * want);
    // Outward-facing sign on the exterior face.
    assert!((flux.f_ext[last] + want).abs() < 1e-6 * want);
}

#[test]
fn mirror_symmetry_swaps_fluxes() {
    let theta = ThetaParams::new(0.28, 3.5e5, 15.0);
    let geom = WallGeometry::default();
    let grid = Grid::new(24, 120.0, 300).unwrap();
    let ti = boundary(301, 0.0);
    let te = boundary(301, 0.9);
    let ic = InitialConditionKind::Linear;
    let a = solve_forward(&theta, &geom, &grid, &ti, &te, ic).unwrap();
    let b = solve_forward(&theta, &geom, &grid, &te, &ti, ic).unwrap();
    for i in 0..=300 {
        assert!((a.f_int[i] - b.f_ext[i]).abs() < 1e-9);
        assert!((a.f_ext[i] - b.f_int[i]).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_is_affine_in_boundaries(
        r in 0.17f64..0.36,
        rc in 2.34e5f64..4.31e5,
        shift in -5.0f64..5.0,
        scale in 0.2f64..3.0,
    ) {
        // Linear in (T0, T_int, T_ext) jointly: scaling all inputs scales all fluxes,
        // and a uniform shift leaves them unchanged.
        let theta = ThetaParams::new(r, rc, 0.0);
        let geom = WallGeometry::default();
        let grid = Grid::new(12, 300.0, 60).unwrap();
        let ti = boundary(61, 0.4);
        let te = boundary(61, 1.7);
        let t0: Vec<f64> = (1..12).map(|m| 20.0 - m as f64 * 0.3).collect();
        let base = solve_forward_sampled_from(&theta, &geom, &grid, &t0, &ti, &te, 1).unwrap();
        let tr = |v: &[f64]| v.iter().map(|x| scale * x + shift).collect::<Vec<_>>();
        let moved = solve_forward_sampled_from(&theta, &geom, &grid, &tr(&t0), &tr(&ti), &tr(&te), 1).unwrap();
        for i in 0..61 {
            prop_assert!((moved.f_int[i] - scale * base.f_int[i]).abs() < 1e-8 * (1.0 + base.f_int[i].abs()));
            prop_assert!((moved.f_ext[i] - scale * base.f_ext[i]).abs() < 1e-8 * (1.0 + base.f_ext[i].abs()));
        }
    }

    #[test]
    fn state_stays_within_boundary_envelope(
        r in 0.17f64..0.36,
        rc in 2.34e5f64..4.31e5,
        ti in 0.0f64..30.0,
        te in -10.0f64..30.0,
    ) {
        // Maximum principle for the implicit scheme.
        let theta = ThetaParams::new(r, rc, 0.5 * (ti + te));
        let geom = WallGeometry::default();
        let grid = Grid::new(16, 600.0, 1).unwrap();
        let t0 = initial_profile(InitialConditionKind::PiecewiseLinear, ti, te, &theta, &grid).unwrap();
        let next = wallinfer::forward::step(&t0, ti, te, &theta, &geom, &grid).unwrap();
        let lo = ti.min(te) - 1e-9;
        let hi = ti.max(te) + 1e-9;
        prop_assert!(next.iter().all(|v| *v >= lo && *v <= hi));
    }
}
