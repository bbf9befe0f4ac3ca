//! Backward-Euler solver for the 1D heat equation with Dirichlet faces, second-order
//! one-sided flux extraction, and the equivalent linear flux operators.
//!
//! Two evaluation paths produce the same fluxes:
//!
//! * time stepping ([`solve_forward`], [`solve_forward_sampled`]), O(N·M) per run;
//! * dense/structured operators ([`assemble_flux_operators`]) expressing the fluxes as
//!   `F_int = H·T0 + H_int·T_int + H_ext·T_ext` and `F_ext = G·T0 + G_int·T_int + G_ext·T_ext`.
//!
//! Observations may be sparser than solver steps: with an observation stride `s`, the
//! boundary temperatures are given at every `s`-th step and linearly interpolated in
//! between, and fluxes are point-sampled at those same steps. With `s = 1` the operators
//! are exactly the square lower-triangular matrices built from `c'Bⁿa`, `c'Bⁿb`, `d'Bⁿa`
//! and `d'Bⁿb`.
//!
//! Flux signs follow the one-sided stencils `k/(2Δx)·(3T_face − 4T_adj + T_next)` on both
//! faces, so each flux is positive when heat enters the wall through that face.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{ImplicitDiffusionFactor, LowerToeplitzOperator};
use crate::model::{Grid, InitialConditionKind, ThetaParams, WallGeometry};

/// Second-difference matrix A and the selection/stencil vectors a, b, c, d.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpatialOperator {
    pub m_cells: usize,
}

impl SpatialOperator {
    pub fn new(m_cells: usize) -> Self {
        SpatialOperator { m_cells }
    }

    pub fn n_interior(&self) -> usize {
        self.m_cells - 1
    }

    /// Dense A, (M−1)×(M−1): −2 on the diagonal, 1 on both off-diagonals.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.n_interior();
        DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => -2.0,
            1 => 1.0,
            _ => 0.0,
        })
    }

    pub fn a(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n_interior()];
        v[0] = 1.0;
        v
    }

    pub fn b(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n_interior()];
        *v.last_mut().unwrap() = 1.0;
        v
    }

    /// Stencil reading `−4T₁ + T₂`.
    pub fn c(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n_interior()];
        v[0] = -4.0;
        v[1] = 1.0;
        v
    }

    /// Stencil reading `T_{M−2} − 4T_{M−1}`.
    pub fn d(&self) -> Vec<f64> {
        let n = self.n_interior();
        let mut v = vec![0.0; n];
        v[n - 1] = -4.0;
        v[n - 2] = 1.0;
        v
    }
}

/// Initial interior temperatures T0(x_m), m = 1..M−1.
pub fn initial_profile(
    kind: InitialConditionKind,
    t_int0: f64,
    t_ext0: f64,
    theta: &ThetaParams,
    grid: &Grid,
) -> Result<Vec<f64>> {
    grid.validate()?;
    theta.check_kind(kind)?;
    let m = grid.m_cells;
    let tau0 = theta.tau0;
    let profile = |xi: f64| -> f64 {
        match kind {
            InitialConditionKind::Linear => t_int0 + (t_ext0 - t_int0) * xi,
            InitialConditionKind::PiecewiseLinear => {
                if xi <= 0.5 {
                    t_int0 + 2.0 * (tau0 - t_int0) * xi
                } else {
                    tau0 + 2.0 * (t_ext0 - tau0) * (xi - 0.5)
                }
            }
            InitialConditionKind::Quadratic => lagrange(&[0.0, 0.5, 1.0], &[t_int0, tau0, t_ext0], xi),
            InitialConditionKind::Cubic => {
                let tau1 = theta.tau1.unwrap_or(tau0);
                lagrange(&[0.0, 0.25, 0.5, 1.0], &[t_int0, tau1, tau0, t_ext0], xi)
            }
        }
    };
    Ok((1..m).map(|i| profile(i as f64 / m as f64)).collect())
}

fn lagrange(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for (i, (&xi, &yi)) in nodes.iter().zip(values).enumerate() {
        let mut w = 1.0;
        for (j, &xj) in nodes.iter().enumerate() {
            if i != j {
                w *= (x - xj) / (xi - xj);
            }
        }
        acc += w * yi;
    }
    acc
}

/// Per-θ solver state: the factored implicit operator and the flux scaling k/(2Δx).
#[derive(Debug, Clone)]
pub struct ForwardModel {
    factor: ImplicitDiffusionFactor,
    /// ηλ.
    r: f64,
    /// k/(2Δx).
    flux_scale: f64,
    n_interior: usize,
}

impl ForwardModel {
    pub fn new(theta: &ThetaParams, geometry: &WallGeometry, grid: &Grid) -> Result<Self> {
        theta.validate()?;
        grid.validate()?;
        let r = geometry.diffusivity(theta) * grid.lambda(geometry);
        let n = grid.n_interior();
        Ok(ForwardModel {
            factor: ImplicitDiffusionFactor::new(n, r)?,
            r,
            flux_scale: geometry.conductivity(theta) / (2.0 * grid.dx(geometry)),
            n_interior: n,
        })
    }

    /// ηλ = η·Δt/Δx².
    pub fn eta_lambda(&self) -> f64 {
        self.r
    }

    pub fn flux_scale(&self) -> f64 {
        self.flux_scale
    }

    /// Advances the interior state by one implicit step with the given face temperatures
    /// at the new time level.
    pub fn step_in_place(&self, state: &mut [f64], t_int_next: f64, t_ext_next: f64) {
        let n = self.n_interior;
        state[0] += self.r * t_int_next;
        state[n - 1] += self.r * t_ext_next;
        self.factor.solve_in_place(state);
    }

    /// (F_int, F_ext) for an interior state and its face temperatures.
    pub fn fluxes(&self, state: &[f64], t_int: f64, t_ext: f64) -> (f64, f64) {
        let n = self.n_interior;
        let f_int = self.flux_scale * (3.0 * t_int - 4.0 * state[0] + state[1]);
        let f_ext = self.flux_scale * (3.0 * t_ext - 4.0 * state[n - 1] + state[n - 2]);
        (f_int, f_ext)
    }
}

/// Solves `(I − ηλA)·T_{n+1} = T_n + ηλ(t_int_next·a + t_ext_next·b)`.
pub fn step(
    state: &[f64],
    t_int_next: f64,
    t_ext_next: f64,
    theta: &ThetaParams,
    geometry: &WallGeometry,
    grid: &Grid,
) -> Result<Vec<f64>> {
    if state.len() != grid.n_interior() {
        return Err(Error::config(format!(
            "state has {} entries, grid needs {}",
            state.len(),
            grid.n_interior()
        )));
    }
    let model = ForwardModel::new(theta, geometry, grid)?;
    let mut next = state.to_vec();
    model.step_in_place(&mut next, t_int_next, t_ext_next);
    Ok(next)
}

/// Modelled heat fluxes on both faces, W/m².
#[derive(Debug, Clone, PartialEq)]
pub struct FluxSeries {
    pub f_int: Vec<f64>,
    pub f_ext: Vec<f64>,
}

/// Marches from `t0_profile` through the fine boundary series and records the fluxes at
/// every `stride`-th step (including step 0).
pub fn march(
    model: &ForwardModel,
    t0_profile: &[f64],
    t_int: &[f64],
    t_ext: &[f64],
    stride: usize,
) -> FluxSeries {
    let n_fine = t_int.len();
    let mut state = t0_profile.to_vec();
    let cap = (n_fine - 1) / stride + 1;
    let mut f_int = Vec::with_capacity(cap);
    let mut f_ext = Vec::with_capacity(cap);
    let (a, b) = model.fluxes(&state, t_int[0], t_ext[0]);
    f_int.push(a);
    f_ext.push(b);
    for n in 1..n_fine {
        model.step_in_place(&mut state, t_int[n], t_ext[n]);
        if n % stride == 0 {
            let (a, b) = model.fluxes(&state, t_int[n], t_ext[n]);
            f_int.push(a);
            f_ext.push(b);
        }
    }
    FluxSeries { f_int, f_ext }
}

/// Time-stepping solution with boundary temperatures given at every solver step
/// (`n_steps + 1` values each); returns fluxes at every step.
pub fn solve_forward(
    theta: &ThetaParams,
    geometry: &WallGeometry,
    grid: &Grid,
    t_int: &[f64],
    t_ext: &[f64],
    ic: InitialConditionKind,
) -> Result<FluxSeries> {
    check_len("t_int", t_int.len(), grid.n_steps + 1)?;
    check_len("t_ext", t_ext.len(), grid.n_steps + 1)?;
    let model = ForwardModel::new(theta, geometry, grid)?;
    let t0 = initial_profile(ic, t_int[0], t_ext[0], theta, grid)?;
    Ok(march(&model, &t0, t_int, t_ext, 1))
}

/// Time-stepping solution with boundary temperatures given at observation times only
/// (every `stride` solver steps, linearly interpolated in between). Returns fluxes at the
/// observation times.
pub fn solve_forward_sampled(
    theta: &ThetaParams,
    geometry: &WallGeometry,
    grid: &Grid,
    t_int_obs: &[f64],
    t_ext_obs: &[f64],
    ic: InitialConditionKind,
    stride: usize,
) -> Result<FluxSeries> {
    let t0 = initial_profile(ic, t_int_obs[0], t_ext_obs[0], theta, grid)?;
    solve_forward_sampled_from(theta, geometry, grid, &t0, t_int_obs, t_ext_obs, stride)
}

/// As [`solve_forward_sampled`] with an explicit initial interior profile.
pub fn solve_forward_sampled_from(
    theta: &ThetaParams,
    geometry: &WallGeometry,
    grid: &Grid,
    t0_profile: &[f64],
    t_int_obs: &[f64],
    t_ext_obs: &[f64],
    stride: usize,
) -> Result<FluxSeries> {
    let n_obs = observation_count(grid, stride)?;
    check_len("t_int", t_int_obs.len(), n_obs)?;
    check_len("t_ext", t_ext_obs.len(), n_obs)?;
    check_len("initial profile", t0_profile.len(), grid.n_interior())?;
    let model = ForwardModel::new(theta, geometry, grid)?;
    let fine_int = interpolate_boundary(t_int_obs, stride);
    let fine_ext = interpolate_boundary(t_ext_obs, stride);
    Ok(march(&model, t0_profile, &fine_int, &fine_ext, stride))
}

/// Number of observation times `n_steps/stride + 1`; the stride must divide `n_steps`.
pub fn observation_count(grid: &Grid, stride: usize) -> Result<usize> {
    if stride == 0 || grid.n_steps % stride != 0 {
        return Err(Error::config(format!(
            "observation stride {stride} must divide the {} solver steps",
            grid.n_steps
        )));
    }
    Ok(grid.n_steps / stride + 1)
}

/// Piecewise-linear interpolation of a series known every `stride` steps.
pub fn interpolate_boundary(coarse: &[f64], stride: usize) -> Vec<f64> {
    if stride == 1 || coarse.len() < 2 {
        return coarse.to_vec();
    }
    let mut out = Vec::with_capacity((coarse.len() - 1) * stride + 1);
    for w in coarse.windows(2) {
        for q in 0..stride {
            let t = q as f64 / stride as f64;
            out.push(w[0] * (1.0 - t) + w[1] * t);
        }
    }
    out.push(*coarse.last().unwrap());
    out
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::data(format!("{what} has {got} samples, expected {want}")));
    }
    Ok(())
}

/// Scalar propagator kernels and stencil rows.
///
/// `alpha[n] = c'Bⁿa`, `beta[n] = c'Bⁿb`, `gamma[n] = d'Bⁿa`, `delta[n] = d'Bⁿb` for
/// n = 0..=`n_max`; `rows_c[k] = c'B^{k·row_stride}` and likewise `rows_d`.
#[derive(Debug, Clone)]
pub struct PropagatorSequences {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    pub rows_c: Vec<Vec<f64>>,
    pub rows_d: Vec<Vec<f64>>,
    pub row_stride: usize,
    /// ηλ the sequences were built for.
    pub eta_lambda: f64,
}

/// Builds the kernels by repeated tridiagonal solves, `c'Bⁿ⁺¹ = (B·(c'Bⁿ)')'` (B is
/// symmetric), reusing one factorization. Sequences extend `row_stride` steps past the
/// grid so that interpolated boundary kernels are complete.
pub fn propagator_sequences(
    theta: &ThetaParams,
    geometry: &WallGeometry,
    grid: &Grid,
    row_stride: usize,
) -> Result<PropagatorSequences> {
    observation_count(grid, row_stride)?;
    let model = ForwardModel::new(theta, geometry, grid)?;
    Ok(sequences_for(&model.factor, grid, row_stride))
}

fn sequences_for(factor: &ImplicitDiffusionFactor, grid: &Grid, row_stride: usize) -> PropagatorSequences {
    let op = SpatialOperator::new(grid.m_cells);
    let n = op.n_interior();
    let n_max = grid.n_steps + row_stride;
    let mut alpha = Vec::with_capacity(n_max + 1);
    let mut beta = Vec::with_capacity(n_max + 1);
    let mut gamma = Vec::with_capacity(n_max + 1);
    let mut delta = Vec::with_capacity(n_max + 1);
    let mut rows_c = Vec::with_capacity(grid.n_steps / row_stride + 1);
    let mut rows_d = Vec::with_capacity(grid.n_steps / row_stride + 1);
    let mut rc = op.c();
    let mut rd = op.d();
    for step in 0..=n_max {
        if step > 0 {
            factor.solve_in_place(&mut rc);
            factor.solve_in_place(&mut rd);
        }
        alpha.push(rc[0]);
        beta.push(rc[n - 1]);
        gamma.push(rd[0]);
        delta.push(rd[n - 1]);
        if step <= grid.n_steps && step % row_stride == 0 {
            rows_c.push(rc.clone());
            rows_d.push(rd.clone());
        }
    }
    PropagatorSequences {
        alpha,
        beta,
        gamma,
        delta,
        rows_c,
        rows_d,
        row_stride,
        eta_lambda: factor.r(),
    }
}

/// The six operators mapping initial and boundary temperatures to the observed fluxes.
#[derive(Debug, Clone)]
pub struct FluxOperators {
    /// n_obs × (M−1).
    pub h: DMatrix<f64>,
    pub h_int: LowerToeplitzOperator,
    pub h_ext: LowerToeplitzOperator,
    /// n_obs × (M−1).
    pub g: DMatrix<f64>,
    pub g_int: LowerToeplitzOperator,
    pub g_ext: LowerToeplitzOperator,
    pub stride: usize,
}

impl FluxOperators {
    pub fn n_obs(&self) -> usize {
        self.h.nrows()
    }

    /// Evaluates both flux series through the operators.
    pub fn apply(&self, t0_profile: &[f64], t_int: &[f64], t_ext: &[f64]) -> FluxSeries {
        let t0 = nalgebra::DVector::from_column_slice(t0_profile);
        let ht0 = &self.h * &t0;
        let gt0 = &self.g * &t0;
        let hi = self.h_int.apply(t_int);
        let he = self.h_ext.apply(t_ext);
        let gi = self.g_int.apply(t_int);
        let ge = self.g_ext.apply(t_ext);
        let n = self.n_obs();
        FluxSeries {
            f_int: (0..n).map(|i| ht0[i] + hi[i] + he[i]).collect(),
            f_ext: (0..n).map(|i| gt0[i] + gi[i] + ge[i]).collect(),
        }
    }
}

/// Assembles the flux operators at the observation times `0, s, 2s, …` (s = `stride`).
///
/// On the fine grid the coefficient of `T_face,k` in a flux at step n is
/// `k/(2Δx)·[3·δ_{nk}·[same face] + ηλ·κ(n−k+1)]` for 1 ≤ k ≤ n, with κ the matching
/// propagator sequence; boundary values at intermediate steps are hat-function
/// combinations of the observed ones, which keeps every column past the first a
/// shifted copy of one kernel.
pub fn assemble_flux_operators(
    seq: &PropagatorSequences,
    theta: &ThetaParams,
    geometry: &WallGeometry,
    grid: &Grid,
    stride: usize,
) -> Result<FluxOperators> {
    let n_obs = observation_count(grid, stride)?;
    if seq.row_stride != stride || seq.alpha.len() < grid.n_steps + stride + 1 {
        return Err(Error::config(
            "propagator sequences were built for a different grid or stride",
        ));
    }
    let r = seq.eta_lambda;
    let scale = geometry.conductivity(theta) / (2.0 * grid.dx(geometry));

    let self_kernel = |kappa: &[f64]| {
        let kappa = kappa.to_vec();
        move |m: usize| if m == 0 { 3.0 + r * kappa[1] } else { r * kappa[m + 1] }
    };
    let cross_kernel = |kappa: &[f64]| {
        let kappa = kappa.to_vec();
        move |m: usize| r * kappa[m + 1]
    };

    let h_int = coarsen(self_kernel(&seq.alpha), 3.0, n_obs, stride).scaled(scale);
    let h_ext = coarsen(cross_kernel(&seq.beta), 0.0, n_obs, stride).scaled(scale);
    let g_int = coarsen(cross_kernel(&seq.gamma), 0.0, n_obs, stride).scaled(scale);
    let g_ext = coarsen(self_kernel(&seq.delta), 3.0, n_obs, stride).scaled(scale);

    let n = grid.n_interior();
    let h = DMatrix::from_fn(n_obs, n, |i, j| scale * seq.rows_c[i][j]);
    let g = DMatrix::from_fn(n_obs, n, |i, j| scale * seq.rows_d[i][j]);
    Ok(FluxOperators {
        h,
        h_int,
        h_ext,
        g,
        g_int,
        g_ext,
        stride,
    })
}

/// Collapses a fine-grid lower-triangular Toeplitz kernel `f` (first column `f0·e₀`)
/// onto observation times spaced `s` steps apart with hat-function interpolation.
fn coarsen(f: impl Fn(usize) -> f64, f0: f64, n_obs: usize, s: usize) -> LowerToeplitzOperator {
    let sf = s as f64;
    let fk = |m: isize| if m < 0 { 0.0 } else { f(m as usize) };
    let kernel = (0..n_obs)
        .map(|d| {
            let base = (d * s) as isize;
            (-(s as isize) + 1..s as isize)
                .map(|q| (1.0 - q.unsigned_abs() as f64 / sf) * fk(base - q))
                .sum()
        })
        .collect();
    let first_col = (0..n_obs)
        .map(|i| {
            let base = (i * s) as isize;
            let head = if i == 0 { f0 } else { 0.0 };
            head + (1..s)
                .map(|k| (1.0 - k as f64 / sf) * fk(base - k as isize))
                .sum::<f64>()
        })
        .collect();
    LowerToeplitzOperator { first_col, kernel }
}

/// Key identifying a propagator build: ηλ, grid shape and row stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct SequenceKey {
    r_bits: u64,
    m_cells: usize,
    n_steps: usize,
    row_stride: usize,
}

/// Small shared LRU cache of propagator sequences. The sequences depend on θ only
/// through ηλ, so repeated evaluations at the same (R, ρC) (τ0 derivatives, revisits)
/// skip the O(N·M) build.
#[derive(Debug)]
pub struct SequenceCache {
    capacity: usize,
    entries: Mutex<VecDeque<(SequenceKey, Arc<PropagatorSequences>)>>,
}

impl Default for SequenceCache {
    fn default() -> Self {
        SequenceCache::new(8)
    }
}

impl SequenceCache {
    pub fn new(capacity: usize) -> Self {
        SequenceCache {
            capacity: capacity.max(1),
            entries: Mutex::new(VecDeque::new()),
        }
    }

    pub fn get_or_build(
        &self,
        theta: &ThetaParams,
        geometry: &WallGeometry,
        grid: &Grid,
        row_stride: usize,
    ) -> Result<Arc<PropagatorSequences>> {
        observation_count(grid, row_stride)?;
        let model = ForwardModel::new(theta, geometry, grid)?;
        let key = SequenceKey {
            r_bits: model.r.to_bits(),
            m_cells: grid.m_cells,
            n_steps: grid.n_steps,
            row_stride,
        };
        {
            let mut entries = self.entries.lock().expect("sequence cache poisoned");
            if let Some(pos) = entries.iter().position(|(k, _)| *k == key) {
                let hit = entries.remove(pos).unwrap();
                let seq = Arc::clone(&hit.1);
                entries.push_front(hit);
                return Ok(seq);
            }
        }
        let seq = Arc::new(sequences_for(&model.factor, grid, row_stride));
        let mut entries = self.entries.lock().expect("sequence cache poisoned");
        entries.push_front((key, Arc::clone(&seq)));
        entries.truncate(self.capacity);
        Ok(seq)
    }
}
