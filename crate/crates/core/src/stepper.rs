//! Explicit Euler integration of the 2D scheme and of the size-only model.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::analysis::{moments, MomentVector};
use crate::coagulation::{apply_coag_1d, apply_coag_2d_into, CoagWorkspace, Summation};
use crate::error::{Error, Result};
use crate::grid::{Field1D, Field2D, Grid1D, Grid2D, MembraneState, Quadrature};
use crate::rates::{Kernel, RateSet};

/// What to do when a density cell drops below `-neg_tol`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativityPolicy {
    #[default]
    Warn,
    Abort,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub quadrature: Quadrature,
    #[serde(default)]
    pub negativity: NegativityPolicy,
    #[serde(default)]
    pub neg_tol: f64,
    #[serde(default = "yes")]
    pub membrane_enabled: bool,
    #[serde(default)]
    pub summation: Summation,
    /// Record a diagnostics row every this many steps (the last step is always recorded).
    #[serde(default = "one")]
    pub diagnostics_every: usize,
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

impl SimConfig {
    pub fn new(dt: f64, t_final: f64) -> Self {
        Self {
            dt,
            t_final,
            snapshot_times: Vec::new(),
            quadrature: Quadrature::default(),
            negativity: NegativityPolicy::default(),
            neg_tol: 0.0,
            membrane_enabled: true,
            summation: Summation::default(),
            diagnostics_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config("run.dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::config(
                "run.t_final",
                format!("must be nonnegative, got {}", self.t_final),
            ));
        }
        for (k, &s) in self.snapshot_times.iter().enumerate() {
            if !(0.0..=self.t_final).contains(&s) {
                return Err(Error::config(
                    format!("run.snapshot_times[{k}]"),
                    format!("{s} is outside [0, {}]", self.t_final),
                ));
            }
        }
        if !(self.neg_tol.is_finite() && self.neg_tol >= 0.0) {
            return Err(Error::config("run.neg_tol", "must be nonnegative"));
        }
        if self.diagnostics_every == 0 {
            return Err(Error::config("run.diagnostics_every", "must be at least 1"));
        }
        self.quadrature
            .validate()
            .map_err(|e| Error::config("run.quadrature", e.to_string()))
    }

    /// `floor(T / dt)`, tolerant of `T` being a rounded multiple of `dt`.
    pub fn steps(&self) -> usize {
        let q = self.t_final / self.dt;
        (q + 1e-9 * q.max(1.0)).floor() as usize
    }

    /// Step index nearest to time `t`, clamped to the run.
    pub fn step_at(&self, t: f64) -> usize {
        ((t / self.dt).round() as usize).min(self.steps())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub n: usize,
    pub t: f64,
    pub f: Field2D,
    pub m: MembraneState,
}

impl SimState {
    pub fn initial(f: Field2D, m0: f64) -> Result<Self> {
        Ok(Self {
            n: 0,
            t: 0.0,
            f,
            m: MembraneState::new(m0)?,
        })
    }
}

/// `u f_plus` for `u >= 0`, else `u f_minus`.
#[inline]
pub fn upwind_flux(u: f64, f_plus: f64, f_minus: f64) -> f64 {
    if u >= 0.0 {
        u * f_plus
    } else {
        u * f_minus
    }
}

/// Content-axis edge velocities `W[i][e]`, `e = 0..=Ia`, averaged over the two size edges.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeVelocities {
    na: usize,
    values: Vec<f64>,
}

impl EdgeVelocities {
    pub fn new(rates: &RateSet, grid: &Grid2D) -> Self {
        let (nr, na) = (grid.nr(), grid.na());
        let mut values = Vec::with_capacity(nr * (na + 1));
        for i in 0..nr {
            let (lo, hi) = (grid.size.edge(i), grid.size.edge(i + 1));
            for e in 0..=na {
                let a = grid.content.edge(e);
                values.push(0.5 * (rates.velocity(hi, a) + rates.velocity(lo, a)));
            }
        }
        Self { na, values }
    }

    #[inline]
    pub fn at(&self, i: usize, e: usize) -> f64 {
        self.values[i * (self.na + 1) + e]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Upwind transport increment along the content axis with zero ghost cells.
pub fn transport_increment(f: &Field2D, w: &EdgeVelocities) -> Field2D {
    let mut out = Field2D::zeros(*f.grid());
    add_transport(f, w, 1.0, out.values_mut());
    out
}

fn add_transport(f: &Field2D, w: &EdgeVelocities, scale: f64, out: &mut [f64]) {
    let grid = f.grid();
    let (nr, na) = (grid.nr(), grid.na());
    let inv_da = 1.0 / grid.da();
    for i in 0..nr {
        let row = f.row(i);
        let mut left_flux = upwind_flux(w.at(i, 0), 0.0, row[0]);
        for j in 0..na {
            let right = if j + 1 < na { row[j + 1] } else { 0.0 };
            let right_flux = upwind_flux(w.at(i, j + 1), row[j], right);
            out[i * na + j] += -scale * inv_da * (right_flux - left_flux);
            left_flux = right_flux;
        }
    }
}

/// Separate operator contributions to `df/dt` and `dM/dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Increments {
    pub coag: Field2D,
    pub transport: Field2D,
    /// `(M int alpha - f int lambda - f int gamma) / (dr da)`.
    pub reaction: Field2D,
    pub membrane: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub n: usize,
    pub t: f64,
    #[serde(rename = "H0")]
    pub h0: f64,
    #[serde(rename = "H1r")]
    pub h1r: f64,
    #[serde(rename = "H1a")]
    pub h1a: f64,
    #[serde(rename = "M")]
    pub m: f64,
}

impl DiagnosticsRow {
    fn new(state: &SimState) -> Self {
        let MomentVector { h0, h1r, h1a } = moments(&state.f);
        Self {
            n: state.n,
            t: state.t,
            h0,
            h1r,
            h1a,
            m: state.m.m,
        }
    }
}

/// Stability indicators computed before a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CflReport {
    /// `dt max|W| / da`.
    pub advective: f64,
    /// `dt kappa_inf H0`.
    pub coagulation: f64,
}

impl CflReport {
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.advective > 1.0 {
            out.push(format!("advective CFL number {:.3e} exceeds 1", self.advective));
        }
        if self.coagulation > 0.5 {
            out.push(format!(
                "coagulation stiffness dt*kappa_inf*H0 = {:.3e} exceeds 0.5",
                self.coagulation
            ));
        }
        out
    }
}

/// The 2D scheme with cell integrals precomputed.
pub struct Scheme2D {
    grid: Grid2D,
    rates: RateSet,
    kernel: Kernel,
    cfg: SimConfig,
    velocities: EdgeVelocities,
    /// Cell means of `alpha` at `M = 1`.
    alpha_mean: Vec<f64>,
    /// Cell means of `lambda + gamma`.
    sink_mean: Vec<f64>,
    /// Cell integrals of `a lambda`.
    lambda_a: Vec<f64>,
    /// `sum int a alpha` at `M = 1`.
    alpha_a_total: f64,
    coag_only: bool,
    ws: CoagWorkspace,
    coag_buf: Vec<f64>,
}

impl Scheme2D {
    pub fn new(grid: Grid2D, rates: &RateSet, kernel: Kernel, cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        rates.validate()?;
        if kernel.len() != grid.nr() {
            return Err(Error::InvalidArgument(format!(
                "kernel table has {} size cells, grid has {}",
                kernel.len(),
                grid.nr()
            )));
        }
        let rates = rates.bound_to(&grid.size);
        let (dr, da) = (grid.dr(), grid.da());
        let rr = cfg.quadrature.axis_rule(dr);
        let ra = cfg.quadrature.content_rule(da);
        let n = grid.len();
        let mut alpha_mean = vec![0.0; n];
        let mut sink_mean = vec![0.0; n];
        let mut lambda_a = vec![0.0; n];
        let mut alpha_a_total = 0.0;
        for i in 0..grid.nr() {
            for j in 0..grid.na() {
                let (mut al, mut sk, mut la, mut aa) = (0.0, 0.0, 0.0, 0.0);
                for (r, wr) in rr.nodes(grid.size.left(i), dr) {
                    for (a, wa) in ra.nodes(grid.content.left(j), da) {
                        let w = wr * wa;
                        let alpha = rates.alpha(r, a, 1.0);
                        let lambda = rates.lambda(r, a);
                        let gamma = rates.gamma(r, a);
                        for (v, what) in [(alpha, "alpha"), (lambda, "lambda"), (gamma, "gamma")] {
                            if !v.is_finite() {
                                return Err(Error::Evaluation {
                                    i: i + 1,
                                    j: j + 1,
                                    what: format!("{what} = {v} at (r, a) = ({r}, {a})"),
                                });
                            }
                        }
                        al += w * alpha;
                        sk += w * (lambda + gamma);
                        la += w * a * lambda;
                        aa += w * a * alpha;
                    }
                }
                let k = grid.index(i, j);
                alpha_mean[k] = al / (dr * da);
                sink_mean[k] = sk / (dr * da);
                lambda_a[k] = la;
                alpha_a_total += aa;
            }
        }
        let velocities = EdgeVelocities::new(&rates, &grid);
        let coag_only = rates.alpha.is_zero()
            && rates.gamma.is_zero()
            && rates.lambda.is_zero()
            && velocities.is_zero()
            && matches!(rates.membrane_flux, crate::rates::MembraneFlux::Zero);
        let ws = CoagWorkspace::with_summation(&grid, cfg.summation);
        Ok(Self {
            grid,
            rates,
            kernel,
            cfg,
            velocities,
            alpha_mean,
            sink_mean,
            lambda_a,
            alpha_a_total,
            coag_only,
            ws,
            coag_buf: vec![0.0; n],
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Rates with grid defaults filled in.
    pub fn rates(&self) -> &RateSet {
        &self.rates
    }

    pub fn velocities(&self) -> &EdgeVelocities {
        &self.velocities
    }

    /// Cell means of `alpha` at `M = 1`, row-major.
    pub fn alpha_means(&self) -> &[f64] {
        &self.alpha_mean
    }

    pub fn cfl(&self, f0: &Field2D) -> CflReport {
        CflReport {
            advective: self.cfg.dt * self.velocities.max_abs() / self.grid.da(),
            coagulation: self.cfg.dt * self.kernel.kappa_inf() * moments(f0).h0,
        }
    }

    /// Each operator's contribution evaluated at `state`.
    pub fn increments(&mut self, state: &SimState) -> Result<Increments> {
        let mut coag = Field2D::zeros(self.grid);
        apply_coag_2d_into(&state.f, &self.kernel, &mut self.ws, coag.values_mut())?;
        let transport = transport_increment(&state.f, &self.velocities);
        let mut reaction = Field2D::zeros(self.grid);
        let m = state.m.m;
        for (k, r) in reaction.values_mut().iter_mut().enumerate() {
            *r = m * self.alpha_mean[k] - state.f.values()[k] * self.sink_mean[k];
        }
        Ok(Increments {
            coag,
            transport,
            reaction,
            membrane: self.membrane_rate(state),
        })
    }

    fn membrane_rate(&self, state: &SimState) -> f64 {
        if !self.cfg.membrane_enabled {
            return 0.0;
        }
        let m = state.m.m;
        let recycled: f64 = state.f.values().iter().zip(&self.lambda_a).map(|(f, l)| f * l).sum();
        self.rates.membrane_flux(m) - m * self.alpha_a_total + recycled
    }

    /// One explicit Euler step. Negative cells are handled per the configured policy;
    /// the returned warning (if any) describes the worst offender.
    pub fn step(&mut self, state: &SimState) -> Result<(SimState, Option<String>)> {
        let dt = self.cfg.dt;
        apply_coag_2d_into(&state.f, &self.kernel, &mut self.ws, &mut self.coag_buf)?;
        let f = state.f.values();
        let mut next: Vec<f64> = if self.coag_only {
            f.iter().zip(&self.coag_buf).map(|(v, q)| v + dt * q).collect()
        } else {
            let m = state.m.m;
            let mut rhs = self.coag_buf.clone();
            for (k, r) in rhs.iter_mut().enumerate() {
                *r += m * self.alpha_mean[k] - f[k] * self.sink_mean[k];
            }
            if !self.velocities.is_zero() {
                add_transport(&state.f, &self.velocities, 1.0, &mut rhs);
            }
            f.iter().zip(&rhs).map(|(v, r)| v + dt * r).collect()
        };
        let n = state.n + 1;
        let m_next = state.m.m + dt * self.membrane_rate(state);

        let field = Field2D::from_values(self.grid, std::mem::take(&mut next))?;
        if let Some((i, j, value)) = field.first_non_finite() {
            return Err(Error::NonFinite { i, j, value });
        }
        if !m_next.is_finite() {
            return Err(Error::NonFiniteMembrane { step: n });
        }
        let mut warning = None;
        if let Some((i, j, value)) = field.worst_negative(self.cfg.neg_tol) {
            let err = Error::NegativeDensity { i, j, value, step: n };
            match self.cfg.negativity {
                NegativityPolicy::Abort => return Err(err),
                NegativityPolicy::Warn => warning = Some(err.to_string()),
            }
        }
        if m_next < -self.cfg.neg_tol {
            let err = Error::NegativeMembrane { value: m_next, step: n };
            match self.cfg.negativity {
                NegativityPolicy::Abort => return Err(err),
                NegativityPolicy::Warn => warning = Some(err.to_string()),
            }
        }
        Ok((
            SimState {
                n,
                t: n as f64 * dt,
                f: field,
                m: MembraneState { m: m_next },
            },
            warning,
        ))
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub n: usize,
    pub t: f64,
    pub f: Field2D,
    pub m: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub cfl: CflReport,
    pub warnings: Vec<String>,
    pub final_state: SimState,
}

/// Steps `floor(T / dt)` times from `initial`, recording snapshots at the
/// steps nearest the requested times (plus the initial and final states).
/// `observer` sees every state including the initial one.
pub fn run(scheme: &mut Scheme2D, initial: SimState, mut observer: impl FnMut(&SimState)) -> Result<RunOutput> {
    let cfg = scheme.config().clone();
    let steps = cfg.steps();
    let mut snap_steps: Vec<usize> = cfg.snapshot_times.iter().map(|&t| cfg.step_at(t)).collect();
    snap_steps.push(0);
    snap_steps.push(steps);
    snap_steps.sort_unstable();
    snap_steps.dedup();

    let cfl = scheme.cfl(&initial.f);
    let mut warnings = cfl.warnings();
    for w in &warnings {
        warn!("{w}");
    }

    let mut snapshots = Vec::with_capacity(snap_steps.len());
    let mut diagnostics = Vec::new();
    let mut negative_steps = 0usize;
    let mut state = initial;
    let mut next_snap = 0;
    loop {
        observer(&state);
        if next_snap < snap_steps.len() && snap_steps[next_snap] == state.n {
            snapshots.push(Snapshot {
                n: state.n,
                t: state.t,
                f: state.f.clone(),
                m: state.m.m,
            });
            next_snap += 1;
        }
        if state.n.is_multiple_of(cfg.diagnostics_every) || state.n == steps {
            diagnostics.push(DiagnosticsRow::new(&state));
        }
        if state.n == steps {
            break;
        }
        let (next, warning) = scheme.step(&state)?;
        if let Some(w) = warning {
            if negative_steps == 0 {
                warn!("{w}");
                warnings.push(w);
            }
            negative_steps += 1;
        }
        state = next;
    }
    if negative_steps > 1 {
        warnings.push(format!("negative densities occurred in {negative_steps} steps"));
    }
    Ok(RunOutput {
        snapshots,
        diagnostics,
        cfl,
        warnings,
        final_state: state,
    })
}

/// The size-only model `df/dt = Q(f) + M alpha - (lambda + gamma) f` with `M` held fixed.
pub struct Scheme1D {
    grid: Grid1D,
    kernel: Kernel,
    dt: f64,
    m: f64,
    alpha_mean: Vec<f64>,
    sink_mean: Vec<f64>,
}

impl Scheme1D {
    pub fn new(grid: Grid1D, rates: &RateSet, kernel: Kernel, dt: f64, m: f64, quad: Quadrature) -> Result<Self> {
        rates.validate()?;
        quad.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config("run.dt", format!("must be positive, got {dt}")));
        }
        MembraneState::new(m)?;
        if kernel.len() != grid.cells() {
            return Err(Error::InvalidArgument(format!(
                "kernel table has {} size cells, grid has {}",
                kernel.len(),
                grid.cells()
            )));
        }
        let rule = quad.axis_rule(grid.step());
        let mut alpha_mean = Vec::with_capacity(grid.cells());
        let mut sink_mean = Vec::with_capacity(grid.cells());
        for i in 0..grid.cells() {
            let (mut al, mut sk) = (0.0, 0.0);
            for (r, w) in rule.nodes(grid.left(i), grid.step()) {
                al += w * rates.alpha.value_1d(r);
                sk += w * (rates.gamma.value(r) + rates.lambda.value(r));
            }
            alpha_mean.push(al / grid.step());
            sink_mean.push(sk / grid.step());
        }
        Ok(Self {
            grid,
            kernel,
            dt,
            m,
            alpha_mean,
            sink_mean,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Cell means of the source `M alpha`.
    pub fn source_means(&self) -> Vec<f64> {
        self.alpha_mean.iter().map(|a| self.m * a).collect()
    }

    /// Cell means of `gamma + lambda`.
    pub fn sink_means(&self) -> &[f64] {
        &self.sink_mean
    }

    /// `df/dt` at `f`.
    pub fn rhs(&self, f: &Field1D) -> Result<Field1D> {
        let mut q = apply_coag_1d(f, &self.kernel)?;
        for (k, v) in q.values_mut().iter_mut().enumerate() {
            *v += self.m * self.alpha_mean[k] - f.values()[k] * self.sink_mean[k];
        }
        Ok(q)
    }

    pub fn step(&self, f: &Field1D) -> Result<Field1D> {
        let mut next = self.rhs(f)?;
        for (v, old) in next.values_mut().iter_mut().zip(f.values()) {
            *v = old + self.dt * *v;
        }
        next.check_finite()?;
        Ok(next)
    }

    /// Advances `steps` steps, calling `observer(n, t, f)` on every state
    /// including the initial one.
    pub fn run(&self, f0: Field1D, steps: usize, mut observer: impl FnMut(usize, f64, &Field1D)) -> Result<Field1D> {
        let mut f = f0;
        observer(0, 0.0, &f);
        for n in 1..=steps {
            f = self.step(&f)?;
            observer(n, n as f64 * self.dt, &f);
        }
        Ok(f)
    }
}
