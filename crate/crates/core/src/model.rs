//! Domain types shared by every stage of the pipeline.
//!
//! Units: R in m²K/W, ρC in J/m²K, temperatures in °C, heat fluxes in W/m².
//! Time series are indexed in minutes; the solver works in seconds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape assumed for the initial temperature profile inside the wall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialConditionKind {
    /// Straight line between the two surface temperatures.
    Linear,
    /// Two straight segments meeting at (L/2, τ0).
    #[default]
    PiecewiseLinear,
    /// Parabola through both surfaces and (L/2, τ0).
    Quadratic,
    /// Cubic through both surfaces, (L/4, τ1) and (L/2, τ0).
    Cubic,
}

impl InitialConditionKind {
    pub const ALL: [InitialConditionKind; 4] = [
        InitialConditionKind::Linear,
        InitialConditionKind::PiecewiseLinear,
        InitialConditionKind::Quadratic,
        InitialConditionKind::Cubic,
    ];

    /// Number of free parameters the kind carries (R and ρC always, then τ0, τ1).
    pub fn n_params(self) -> usize {
        match self {
            InitialConditionKind::Linear => 2,
            InitialConditionKind::PiecewiseLinear | InitialConditionKind::Quadratic => 3,
            InitialConditionKind::Cubic => 4,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        const NAMES: [&str; 4] = ["R", "rhoC", "tau0", "tau1"];
        &NAMES[..self.n_params()]
    }

    pub fn name(self) -> &'static str {
        match self {
            InitialConditionKind::Linear => "linear",
            InitialConditionKind::PiecewiseLinear => "piecewise_linear",
            InitialConditionKind::Quadratic => "quadratic",
            InitialConditionKind::Cubic => "cubic",
        }
    }
}

/// Thermal parameters of the wall plus the initial mid-wall temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaParams {
    /// Thermal resistance R, m²K/W.
    pub r_value: f64,
    /// Areal heat capacity ρC, J/m²K.
    pub rho_c: f64,
    /// Initial temperature at mid-wall, °C.
    pub tau0: f64,
    /// Initial temperature at quarter-wall (cubic profile only), °C.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau1: Option<f64>,
}

impl ThetaParams {
    pub fn new(r_value: f64, rho_c: f64, tau0: f64) -> Self {
        ThetaParams {
            r_value,
            rho_c,
            tau0,
            tau1: None,
        }
    }

    pub fn with_tau1(mut self, tau1: f64) -> Self {
        self.tau1 = Some(tau1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_value > 0.0 && self.r_value.is_finite()) {
            return Err(Error::config(format!("R must be positive, got {}", self.r_value)));
        }
        if !(self.rho_c > 0.0 && self.rho_c.is_finite()) {
            return Err(Error::config(format!("rhoC must be positive, got {}", self.rho_c)));
        }
        if !self.tau0.is_finite() || self.tau1.is_some_and(|t| !t.is_finite()) {
            return Err(Error::config("initial temperatures must be finite"));
        }
        Ok(())
    }

    /// Checks that τ1 is present exactly when the profile is cubic.
    pub fn check_kind(&self, kind: InitialConditionKind) -> Result<()> {
        match (kind, self.tau1) {
            (InitialConditionKind::Cubic, None) => {
                Err(Error::config("cubic initial condition requires tau1"))
            }
            (InitialConditionKind::Cubic, Some(_)) | (_, None) => Ok(()),
            (k, Some(_)) => Err(Error::config(format!(
                "tau1 is only meaningful for the cubic initial condition, got kind {}",
                k.name()
            ))),
        }
    }

    /// Free-parameter vector for `kind`, in the order of [`InitialConditionKind::param_names`].
    pub fn to_vec(&self, kind: InitialConditionKind) -> Vec<f64> {
        let mut v = vec![self.r_value, self.rho_c];
        if kind.n_params() >= 3 {
            v.push(self.tau0);
        }
        if kind == InitialConditionKind::Cubic {
            v.push(self.tau1.unwrap_or(self.tau0));
        }
        v
    }

    /// Replaces the free parameters of `self` with `v`; fields not free under `kind` keep
    /// their template values (τ0 for the linear profile).
    pub fn with_free(&self, v: &[f64], kind: InitialConditionKind) -> ThetaParams {
        debug_assert_eq!(v.len(), kind.n_params());
        let mut out = ThetaParams::new(v[0], v[1], self.tau0);
        if kind.n_params() >= 3 {
            out.tau0 = v[2];
        }
        if kind == InitialConditionKind::Cubic {
            out.tau1 = Some(v[3]);
        }
        out
    }
}

/// Wall thickness and the material quantities derived from θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WallGeometry {
    /// Thickness L, m.
    pub thickness: f64,
}

impl Default for WallGeometry {
    fn default() -> Self {
        // 215 mm brick partition.
        WallGeometry { thickness: 0.215 }
    }
}

impl WallGeometry {
    pub fn new(thickness: f64) -> Result<Self> {
        if !(thickness > 0.0 && thickness.is_finite()) {
            return Err(Error::config(format!("wall thickness must be positive, got {thickness}")));
        }
        Ok(WallGeometry { thickness })
    }

    /// k = L/R, W/mK.
    pub fn conductivity(&self, theta: &ThetaParams) -> f64 {
        self.thickness / theta.r_value
    }

    /// ρc_p = ρC/L, J/m³K.
    pub fn volumetric_heat_capacity(&self, theta: &ThetaParams) -> f64 {
        theta.rho_c / self.thickness
    }

    /// η = k/(ρc_p) = L²/(R·ρC), m²/s.
    pub fn diffusivity(&self, theta: &ThetaParams) -> f64 {
        self.conductivity(theta) / self.volumetric_heat_capacity(theta)
    }
}

/// Uniform space-time discretization of the wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Number of spatial intervals M.
    pub m_cells: usize,
    /// Time step Δt in seconds.
    pub dt: f64,
    /// Number of time intervals N.
    pub n_steps: usize,
}

impl Grid {
    pub fn new(m_cells: usize, dt: f64, n_steps: usize) -> Result<Self> {
        let g = Grid {
            m_cells,
            dt,
            n_steps,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        // The one-sided flux stencils read two interior nodes on each side.
        if self.m_cells < 3 {
            return Err(Error::config(format!(
                "grid needs at least 3 spatial intervals, got {}",
                self.m_cells
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(format!("time step must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    /// Number of interior nodes, M − 1.
    pub fn n_interior(&self) -> usize {
        self.m_cells - 1
    }

    pub fn dx(&self, geometry: &WallGeometry) -> f64 {
        geometry.thickness / self.m_cells as f64
    }

    /// λ = Δt/Δx², s/m².
    pub fn lambda(&self, geometry: &WallGeometry) -> f64 {
        let dx = self.dx(geometry);
        self.dt / (dx * dx)
    }
}

/// Uniformly sampled series; timestamps are `t0 + i·dt_sample` minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub t0: f64,
    pub dt_sample: f64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t0: f64, dt_sample: f64, values: Vec<f64>) -> Self {
        TimeSeries {
            t0,
            dt_sample,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt_sample
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Sub-series `[start, end)` with the time base shifted accordingly.
    pub fn slice(&self, start: usize, end: usize) -> TimeSeries {
        TimeSeries::new(self.time(start), self.dt_sample, self.values[start..end].to_vec())
    }

    /// Keeps every `factor`-th sample starting at index 0.
    pub fn decimate(&self, factor: usize) -> TimeSeries {
        let factor = factor.max(1);
        TimeSeries::new(
            self.t0,
            self.dt_sample * factor as f64,
            self.values.iter().step_by(factor).copied().collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    #[default]
    Raw,
    Averaged,
}

/// Four aligned boundary series measured on both faces of the wall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub temp_int: TimeSeries,
    pub temp_ext: TimeSeries,
    pub flux_int: TimeSeries,
    pub flux_ext: TimeSeries,
    pub stage: Stage,
}

/// Identifies one of the four campaign series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesId {
    TempInt,
    TempExt,
    FluxInt,
    FluxExt,
}

impl SeriesId {
    pub const ALL: [SeriesId; 4] = [
        SeriesId::TempInt,
        SeriesId::TempExt,
        SeriesId::FluxInt,
        SeriesId::FluxExt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SeriesId::TempInt => "temp_int",
            SeriesId::TempExt => "temp_ext",
            SeriesId::FluxInt => "flux_int",
            SeriesId::FluxExt => "flux_ext",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Empty,
    LengthMismatch,
    TimeBaseMismatch,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub series: SeriesId,
    pub index: Option<usize>,
    pub kind: ViolationKind,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let what = match self.kind {
            ViolationKind::Empty => "empty series",
            ViolationKind::LengthMismatch => "length mismatch",
            ViolationKind::TimeBaseMismatch => "time base mismatch",
            ViolationKind::NonFinite => "non-finite value",
        };
        match self.index {
            Some(i) => write!(f, "{what} at ({}, {i})", self.series.name()),
            None => write!(f, "{what} in {}", self.series.name()),
        }
    }
}

impl Campaign {
    pub fn new(
        temp_int: TimeSeries,
        temp_ext: TimeSeries,
        flux_int: TimeSeries,
        flux_ext: TimeSeries,
        stage: Stage,
    ) -> Result<Self> {
        let c = Campaign {
            temp_int,
            temp_ext,
            flux_int,
            flux_ext,
            stage,
        };
        c.ensure_valid()?;
        Ok(c)
    }

    pub fn series(&self, id: SeriesId) -> &TimeSeries {
        match id {
            SeriesId::TempInt => &self.temp_int,
            SeriesId::TempExt => &self.temp_ext,
            SeriesId::FluxInt => &self.flux_int,
            SeriesId::FluxExt => &self.flux_ext,
        }
    }

    pub fn series_mut(&mut self, id: SeriesId) -> &mut TimeSeries {
        match id {
            SeriesId::TempInt => &mut self.temp_int,
            SeriesId::TempExt => &mut self.temp_ext,
            SeriesId::FluxInt => &mut self.flux_int,
            SeriesId::FluxExt => &mut self.flux_ext,
        }
    }

    pub fn len(&self) -> usize {
        self.temp_int.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temp_int.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.temp_int.t0
    }

    pub fn dt_sample(&self) -> f64 {
        self.temp_int.dt_sample
    }

    /// Applies `f` to each series, keeping the stage.
    pub fn map_series(&self, mut f: impl FnMut(&TimeSeries) -> TimeSeries) -> Campaign {
        Campaign {
            temp_int: f(&self.temp_int),
            temp_ext: f(&self.temp_ext),
            flux_int: f(&self.flux_int),
            flux_ext: f(&self.flux_ext),
            stage: self.stage,
        }
    }

    pub fn slice(&self, start: usize, end: usize) -> Campaign {
        self.map_series(|s| s.slice(start, end))
    }

    pub fn decimate(&self, factor: usize) -> Campaign {
        self.map_series(|s| s.decimate(factor))
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = validate_campaign(self);
        if v.is_empty() {
            Ok(())
        } else {
            let msgs: Vec<String> = v.iter().take(10).map(|x| x.to_string()).collect();
            Err(Error::data(format!(
                "campaign has {} violation(s): {}",
                v.len(),
                msgs.join("; ")
            )))
        }
    }
}

/// Lists every violated campaign invariant; empty when the campaign is well formed.
///
/// Lengths and time bases are compared against `temp_int`.
pub fn validate_campaign(c: &Campaign) -> Vec<Violation> {
    let mut out = Vec::new();
    let reference = &c.temp_int;
    for id in SeriesId::ALL {
        let s = c.series(id);
        if s.is_empty() {
            out.push(Violation {
                series: id,
                index: None,
                kind: ViolationKind::Empty,
            });
        }
        if id != SeriesId::TempInt {
            if s.len() != reference.len() {
                out.push(Violation {
                    series: id,
                    index: None,
                    kind: ViolationKind::LengthMismatch,
                });
            }
            if s.t0 != reference.t0 || s.dt_sample != reference.dt_sample {
                out.push(Violation {
                    series: id,
                    index: None,
                    kind: ViolationKind::TimeBaseMismatch,
                });
            }
        } else if !(s.dt_sample > 0.0 && s.dt_sample.is_finite()) || !s.t0.is_finite() {
            out.push(Violation {
                series: id,
                index: None,
                kind: ViolationKind::TimeBaseMismatch,
            });
        }
        for (i, v) in s.values.iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation {
                    series: id,
                    index: Some(i),
                    kind: ViolationKind::NonFinite,
                });
            }
        }
    }
    out
}

/// Closed interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Interval { lower, upper }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Independent uniform priors on the components of θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorBox {
    pub r: Interval,
    pub rho_c: Interval,
    pub tau0: Interval,
    /// Interval for τ1; falls back to the τ0 interval when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau1: Option<Interval>,
}

impl Default for PriorBox {
    fn default() -> Self {
        PriorBox {
            r: Interval::new(0.17, 0.36),
            rho_c: Interval::new(234_000.0, 431_000.0),
            tau0: Interval::new(5.0, 25.0),
            tau1: None,
        }
    }
}

/// Box bounds of the free-parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::config("bounds must be non-empty and of equal length"));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l < u) || !l.is_finite() || !u.is_finite() {
                return Err(Error::config(format!(
                    "bound {i} must satisfy lower < upper, got [{l}, {u}]"
                )));
            }
        }
        Ok(Bounds { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn log_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i).ln()).sum()
    }

    /// Maps x to the unit cube.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| (v - self.lower[i]) / self.width(i))
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, v)| self.lower[i] + v * self.width(i))
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.from_unit(&vec![0.5; self.dim()])
    }
}

impl PriorBox {
    pub fn validate(&self) -> Result<()> {
        for (name, iv) in [("R", self.r), ("rhoC", self.rho_c), ("tau0", self.tau0)]
            .into_iter()
            .chain(self.tau1.map(|t| ("tau1", t)))
        {
            if !(iv.lower < iv.upper) || !iv.lower.is_finite() || !iv.upper.is_finite() {
                return Err(Error::config(format!(
                    "prior interval for {name} must satisfy lower < upper, got [{}, {}]",
                    iv.lower, iv.upper
                )));
            }
        }
        if self.r.lower <= 0.0 || self.rho_c.lower <= 0.0 {
            return Err(Error::config("R and rhoC prior intervals must be positive"));
        }
        Ok(())
    }

    pub fn tau1_interval(&self) -> Interval {
        self.tau1.unwrap_or(self.tau0)
    }

    pub fn bounds(&self, kind: InitialConditionKind) -> Bounds {
        let mut ivs = vec![self.r, self.rho_c];
        if kind.n_params() >= 3 {
            ivs.push(self.tau0);
        }
        if kind == InitialConditionKind::Cubic {
            ivs.push(self.tau1_interval());
        }
        Bounds {
            lower: ivs.iter().map(|i| i.lower).collect(),
            upper: ivs.iter().map(|i| i.upper).collect(),
        }
    }

    pub fn contains(&self, theta: &ThetaParams, kind: InitialConditionKind) -> bool {
        self.bounds(kind).contains(&theta.to_vec(kind))
    }

    pub fn center(&self, kind: InitialConditionKind) -> ThetaParams {
        let mut t = ThetaParams::new(self.r.center(), self.rho_c.center(), self.tau0.center());
        if kind == InitialConditionKind::Cubic {
            t.tau1 = Some(self.tau1_interval().center());
        }
        t
    }
}

/// Scalar noise levels: Σ_int = σ_int²I, Σ_ext = σ_ext²I, C_int,p = C_ext,p = σ_T²I.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub sigma_flux_int: f64,
    pub sigma_flux_ext: f64,
    pub sigma_temp_prior: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            sigma_flux_int: 0.66,
            sigma_flux_ext: 0.66,
            sigma_temp_prior: 0.01,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [
            ("sigma_flux_int", self.sigma_flux_int),
            ("sigma_flux_ext", self.sigma_flux_ext),
        ] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {s}")));
            }
        }
        // Zero is a delta prior: boundaries become exact at their means.
        let st = self.sigma_temp_prior;
        if !(st >= 0.0 && st.is_finite()) {
            return Err(Error::config(format!("sigma_temp_prior must be non-negative, got {st}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(n: usize) -> TimeSeries {
        TimeSeries::new(0.0, 1.0, (0..n).map(|i| i as f64).collect())
    }

    fn campaign(n: usize) -> Campaign {
        Campaign {
            temp_int: series(n),
            temp_ext: series(n),
            flux_int: series(n),
            flux_ext: series(n),
            stage: Stage::Raw,
        }
    }

    #[test]
    fn well_formed_campaign_has_no_violations() {
        assert!(validate_campaign(&campaign(20)).is_empty());
    }

    #[test]
    fn short_series_is_one_length_violation() {
        let mut c = campaign(20);
        c.flux_int.values.pop();
        let v = validate_campaign(&c);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].series, SeriesId::FluxInt);
        assert_eq!(v[0].kind, ViolationKind::LengthMismatch);
    }

    #[test]
    fn nan_is_reported_with_position() {
        let mut c = campaign(20);
        c.temp_ext.values[7] = f64::NAN;
        let v = validate_campaign(&c);
        assert_eq!(
            v,
            vec![Violation {
                series: SeriesId::TempExt,
                index: Some(7),
                kind: ViolationKind::NonFinite
            }]
        );
        assert_eq!(v[0].to_string(), "non-finite value at (temp_ext, 7)");
    }

    #[test]
    fn diffusivity_is_unit_coherent() {
        let g = WallGeometry::default();
        let t = ThetaParams::new(0.31, 3.2e5, 16.0);
        let eta = g.diffusivity(&t);
        let lhs = eta * t.r_value * t.rho_c;
        let rel = (lhs - g.thickness * g.thickness).abs() / (g.thickness * g.thickness);
        assert!(rel < 1e-12);
    }

    #[test]
    fn tau1_requires_cubic() {
        let t = ThetaParams::new(0.3, 3e5, 15.0).with_tau1(14.0);
        assert!(t.check_kind(InitialConditionKind::Cubic).is_ok());
        assert!(t.check_kind(InitialConditionKind::PiecewiseLinear).is_err());
        assert!(ThetaParams::new(0.3, 3e5, 15.0)
            .check_kind(InitialConditionKind::Cubic)
            .is_err());
    }

    #[test]
    fn free_vector_round_trip() {
        let t = ThetaParams::new(0.3, 3e5, 15.0).with_tau1(14.0);
        for kind in InitialConditionKind::ALL {
            let template = if kind == InitialConditionKind::Cubic {
                t
            } else {
                ThetaParams { tau1: None, ..t }
            };
            let v = template.to_vec(kind);
            assert_eq!(v.len(), kind.n_params());
            assert_eq!(template.with_free(&v, kind), template);
        }
    }

    #[test]
    fn default_box_volume() {
        let b = PriorBox::default().bounds(InitialConditionKind::PiecewiseLinear);
        assert!((b.log_volume() - 748_600f64.ln()).abs() < 1e-12);
    }
}
