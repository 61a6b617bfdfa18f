//! Scenario registry, config-file ingestion and observables.
//!
//! A [`Scenario`] is plain data and maps one-to-one onto the TOML config
//! format. Built-in scenarios are constructed in code and round-trip through
//! that format unchanged.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{norms, ConvergenceSpec, StationaryConfig};
use crate::error::{Error, Result};
use crate::grid::{cell_average, cell_average_1d, make_grid2d, Field1D, Field2D, Grid1D, Grid2D, Quadrature};
use crate::rates::{
    build_kernel_table, DensityProfile, GaussianComponent, GaussianDensity, Kernel, KernelForm, MembraneFlux,
    PowerProfile, RateBounds, RateSet, SinkProfile, VelocityProfile,
};
use crate::stepper::{run, RunOutput, Scheme1D, Scheme2D, SimConfig, SimState};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[default]
    #[serde(rename = "2d")]
    TwoD,
    /// Size only, with `M` held at `m0`.
    #[serde(rename = "1d")]
    OneD,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub r_max: f64,
    pub nr: usize,
    #[serde(default = "unit")]
    pub a_max: f64,
    #[serde(default = "one_cell")]
    pub na: usize,
}

fn unit() -> f64 {
    1.0
}

fn one_cell() -> usize {
    1
}

impl GridSpec {
    pub fn square(extent: f64, cells: usize) -> Self {
        Self {
            r_max: extent,
            nr: cells,
            a_max: extent,
            na: cells,
        }
    }

    pub fn grid2d(&self) -> Result<Grid2D> {
        make_grid2d(self.r_max, self.a_max, self.nr, self.na).map_err(|e| Error::config("grid", e.to_string()))
    }

    pub fn grid1d(&self) -> Result<Grid1D> {
        Grid1D::new(self.r_max, self.nr).map_err(|e| Error::config("grid", e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    #[default]
    None,
    Trafficking,
    Signaling,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Run,
    MomentsVsOde,
    Convergence,
    Stationary,
    ConditionCheck,
    DecayRate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub model: ModelKind,
    pub grid: GridSpec,
    pub kernel: KernelForm,
    #[serde(default)]
    pub rates: RateSet,
    #[serde(default)]
    pub initial: DensityProfile,
    /// Initial membrane quantity (held fixed in the size-only model).
    #[serde(default)]
    pub m0: f64,
    pub run: SimConfig,
    #[serde(default)]
    pub observables: ObservableKind,
    #[serde(default)]
    pub tasks: Vec<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary: Option<StationaryConfig>,
}

pub const BUILTIN_IDS: [&str; 14] = [
    "fig1-pure-coag",
    "fig1-affine-coag",
    "fig5-pure-coag",
    "fig6-general",
    "fig8-stable",
    "fig8-violated",
    "trafficking-LHR-H1",
    "trafficking-B2AR-H1",
    "trafficking-LHR-H2",
    "trafficking-B2AR-H2",
    "signaling-LAPTH-H1",
    "signaling-PTH7D-H1",
    "signaling-LAPTH-H2",
    "signaling-PTH7D-H2",
];

fn gaussian(mu: f64, sigma: f64) -> GaussianDensity {
    GaussianDensity { mu, sigma }
}

fn component(size: GaussianDensity, content: Option<GaussianDensity>) -> GaussianComponent {
    GaussianComponent {
        weight: 1.0,
        size,
        content,
    }
}

/// `0.5 [N_r(1.5, 0.15) N_a(0.5, 0.3) + N_r(0.5, 0.3) N_a(1.5, 0.15)]`.
fn two_bump_initial() -> DensityProfile {
    DensityProfile::GaussianMixture {
        scale: 0.5,
        components: vec![
            component(gaussian(1.5, 0.15), Some(gaussian(0.5, 0.3))),
            component(gaussian(0.5, 0.3), Some(gaussian(1.5, 0.15))),
        ],
    }
}

fn base(id: &str, description: &str, grid: GridSpec, kernel: KernelForm, run: SimConfig) -> Scenario {
    Scenario {
        id: id.into(),
        description: description.into(),
        model: ModelKind::TwoD,
        grid,
        kernel,
        rates: RateSet::default(),
        initial: DensityProfile::Zero,
        m0: 0.0,
        run,
        observables: ObservableKind::None,
        tasks: vec![Task::Run],
        convergence: None,
        stationary: None,
    }
}

fn fig1(id: &str, kernel: KernelForm) -> Scenario {
    let mut run = SimConfig::new(1e-4, 0.5);
    run.snapshot_times = vec![0.25];
    let mut s = base(
        id,
        "pure coagulation of a two-bump population",
        GridSpec::square(10.0, 40),
        kernel,
        run,
    );
    s.initial = two_bump_initial();
    s.tasks = vec![Task::Run, Task::MomentsVsOde];
    s
}

/// Quadrature that resolves Gaussians narrower than the coarsest cell.
fn fine_quadrature(max_width: f64, content_max_width: Option<f64>) -> Quadrature {
    Quadrature::Composite {
        order: 4,
        max_width,
        content_max_width,
    }
}

fn convergence_base(id: &str, description: &str) -> Scenario {
    let mut run = SimConfig::new(5e-4, 5e-4);
    run.quadrature = fine_quadrature(0.05, None);
    let mut s = base(
        id,
        description,
        GridSpec::square(3.0, 6),
        KernelForm::Constant { k0: 0.5 },
        run,
    );
    s.initial = two_bump_initial();
    s.tasks = vec![Task::Convergence];
    s.convergence = Some(ConvergenceSpec::default());
    s
}

fn fig5() -> Scenario {
    convergence_base("fig5-pure-coag", "one pure-coagulation step for grid refinement")
}

fn fig6() -> Scenario {
    let mut s = convergence_base("fig6-general", "one full-model step for grid refinement");
    s.run.quadrature = fine_quadrature(0.0025, None);
    s.rates = RateSet {
        alpha: DensityProfile::GaussianMixture {
            scale: 0.1,
            components: vec![
                component(gaussian(0.6, 0.01), Some(gaussian(0.3, 0.05))),
                component(gaussian(0.3, 0.05), Some(gaussian(0.6, 0.01))),
            ],
        },
        gamma: SinkProfile::Wall {
            base: 1e-5,
            coeff: 20.0,
            threshold: 5.0,
            width: 1.0,
        },
        lambda: SinkProfile::Power {
            scale: 1e-2,
            power: PowerProfile { xbar: 10.0, eps: 0.0 },
            cutoff: None,
        },
        velocity: VelocityProfile::Zero,
        membrane_flux: MembraneFlux::Zero,
    };
    s.m0 = 20.0;
    s
}

fn fig8(id: &str, gamma: f64, description: &str) -> Scenario {
    let mut run = SimConfig::new(0.05, 50.0);
    run.snapshot_times = vec![10.0];
    let mut s = base(
        id,
        description,
        GridSpec {
            r_max: 5.0,
            nr: 301,
            a_max: 1.0,
            na: 1,
        },
        KernelForm::Constant { k0: 1.0 },
        run,
    );
    s.model = ModelKind::OneD;
    s.rates = RateSet {
        alpha: DensityProfile::GaussianMixture {
            scale: 1.0,
            components: vec![component(gaussian(0.6, 0.1), None)],
        },
        gamma: SinkProfile::Constant { value: gamma },
        ..Default::default()
    };
    s.initial = DensityProfile::GaussianMixture {
        scale: 0.5,
        components: vec![component(gaussian(0.2, 0.15), None)],
    };
    s.m0 = 1.0;
    s.tasks = vec![Task::Run, Task::ConditionCheck, Task::Stationary, Task::DecayRate];
    s.stationary = Some(StationaryConfig::default());
    s
}

fn trafficking(receptor: &str, hypothesis: &str, kappa: f64, alpha_bar: f64) -> Scenario {
    let id = format!("trafficking-{receptor}-{hypothesis}");
    let mut run = SimConfig::new(0.1, 300.0);
    run.snapshot_times = vec![100.0, 200.0];
    run.diagnostics_every = 10;
    let description = format!("{receptor} endosomal trafficking, parameter set {hypothesis}");
    let mut s = base(
        &id,
        &description,
        GridSpec::square(2000.0, 30),
        KernelForm::Constant { k0: kappa },
        run,
    );
    s.rates = RateSet {
        alpha: DensityProfile::SizeCoupledGaussian {
            scale: alpha_bar,
            size: gaussian(200.0, 10.0),
            content_sd: 0.5,
        },
        gamma: SinkProfile::Wall {
            base: 1e-5,
            coeff: 20.0,
            threshold: 1950.0,
            width: 50.0,
        },
        lambda: SinkProfile::Power {
            scale: 1e-2,
            power: PowerProfile { xbar: 2000.0, eps: 0.0 },
            cutoff: None,
        },
        velocity: VelocityProfile::Zero,
        membrane_flux: MembraneFlux::Zero,
    };
    s.m0 = 7.2e-4;
    s.observables = ObservableKind::Trafficking;
    s
}

/// `(v_small, v_large, p, v_m, m_bar)`.
fn signaling(ligand: &str, hypothesis: &str, table: (f64, f64, f64, f64, f64)) -> Scenario {
    let (v_small, v_large, p, v_m, m_bar) = table;
    let id = format!("signaling-{ligand}-{hypothesis}");
    let mut run = SimConfig::new(3e-2, 20.0);
    run.snapshot_times = vec![5.0, 10.0, 15.0];
    run.quadrature = fine_quadrature(2.5, Some(0.025));
    let grid = GridSpec {
        r_max: 2000.0,
        nr: 30,
        a_max: 30.0,
        na: 30,
    };
    let description = format!("{ligand} cAMP production, parameter set {hypothesis}");
    let mut s = base(&id, &description, grid, KernelForm::Constant { k0: 0.2 }, run);
    let power = PowerProfile {
        xbar: 2000.0,
        eps: 100.0,
    };
    s.rates = RateSet {
        alpha: DensityProfile::GaussianMixture {
            scale: 1.0,
            components: vec![component(gaussian(200.0, 10.0), Some(gaussian(0.0, 0.1)))],
        },
        gamma: SinkProfile::PowerWall {
            scale: 1.0,
            power,
            coeff: 200.0,
            threshold: 1950.0,
            width: 50.0,
        },
        lambda: SinkProfile::Power {
            scale: 1e-2,
            power,
            cutoff: None,
        },
        velocity: VelocityProfile::Saturating {
            v_small,
            v_large,
            p,
            r_bar: 1000.0,
            eps: None,
        },
        membrane_flux: MembraneFlux::Saturating { v_m, m_bar },
    };
    s.observables = ObservableKind::Signaling;
    s
}

pub fn builtin(name: &str) -> Option<Scenario> {
    let s = match name {
        "fig1-pure-coag" => fig1(name, KernelForm::Constant { k0: 0.5 }),
        "fig1-affine-coag" => fig1(name, KernelForm::Affine { k0: 0.5, k1: 0.1 }),
        "fig5-pure-coag" => fig5(),
        "fig6-general" => fig6(),
        "fig8-stable" => fig8(name, 3.1f64.sqrt(), "size-only model, long-time condition satisfied"),
        "fig8-violated" => fig8(name, 0.7, "size-only model, long-time condition violated"),
        "trafficking-LHR-H1" => trafficking("LHR", "H1", 0.5, 8e-5),
        "trafficking-B2AR-H1" => trafficking("B2AR", "H1", 0.5, 3e-4),
        "trafficking-LHR-H2" => trafficking("LHR", "H2", 5e-3, 8e-5),
        "trafficking-B2AR-H2" => trafficking("B2AR", "H2", 0.5, 3e-4),
        "signaling-LAPTH-H1" => signaling("LAPTH", "H1", (0.05, 0.02, 1.0 / 20.0, 3.5, 10.0)),
        "signaling-PTH7D-H1" => signaling("PTH7D", "H1", (5.0, 2.0, 1.0 / 20.0, 0.035, 10.0)),
        "signaling-LAPTH-H2" => signaling("LAPTH", "H2", (0.5, 0.2, 1.0 / 200.0, 3.5, 10.0)),
        "signaling-PTH7D-H2" => signaling("PTH7D", "H2", (5.0, 2.0, 1.0 / 20.0, 0.35, 1.0)),
        _ => return None,
    };
    Some(s)
}

fn unknown(name: &str) -> Error {
    Error::UnknownScenario {
        name: name.into(),
        valid: BUILTIN_IDS.join(", "),
    }
}

/// Rates and kernel of a built-in scenario.
pub fn scenario_rates(name: &str) -> Result<(RateSet, KernelForm)> {
    let s = builtin(name).ok_or_else(|| unknown(name))?;
    Ok((s.rates, s.kernel))
}

/// A built-in id or the path of a TOML config file.
pub fn load_scenario(source: &str) -> Result<Scenario> {
    if let Some(s) = builtin(source) {
        return Ok(s);
    }
    let path = Path::new(source);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        return Scenario::from_toml_str(&text);
    }
    Err(unknown(source))
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(
                if path == "." { String::new() } else { path },
                e.into_inner().message().to_string(),
            )
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config("", e.to_string()))
    }

    fn from_value(value: toml::Value) -> Result<Self> {
        let s: Scenario = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        s.validate()?;
        Ok(s)
    }

    /// Applies `key=value` overrides on the config's dotted paths. Values are
    /// TOML literals (`1e-3`, `"text"`, `{ profile = "zero" }`); anything that
    /// does not parse is taken as a string. Keys under `run` may omit the prefix.
    pub fn with_overrides<S: AsRef<str>>(&self, sets: &[S]) -> Result<Self> {
        if sets.is_empty() {
            return Ok(self.clone());
        }
        let mut value = toml::Value::try_from(self).map_err(|e| Error::config("", e.to_string()))?;
        for set in sets {
            let set = set.as_ref();
            let (key, raw) = set
                .split_once('=')
                .ok_or_else(|| Error::config(set, "override must look like key=value"))?;
            let key = key.trim();
            let parsed = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
            let mut path: Vec<&str> = key.split('.').collect();
            let top = value.as_table().expect("scenario serializes to a table");
            if path.len() == 1 && !top.contains_key(path[0]) && !is_scenario_field(path[0]) {
                path.insert(0, "run");
            }
            set_path(&mut value, &path, parsed).map_err(|m| Error::config(key, m))?;
        }
        Self::from_value(value)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::config("id", "must not be empty"));
        }
        match self.model {
            ModelKind::TwoD => self.grid.grid2d().map(|_| ())?,
            ModelKind::OneD => self.grid.grid1d().map(|_| ())?,
        }
        self.run.validate()?;
        self.rates.validate()?;
        self.initial
            .validate()
            .map_err(|e| Error::config("initial", e.to_string()))?;
        if !(self.m0.is_finite() && self.m0 >= 0.0) {
            return Err(Error::config("m0", format!("must be nonnegative, got {}", self.m0)));
        }
        if let Some(c) = &self.convergence {
            c.validate()?;
            if self.model != ModelKind::TwoD {
                return Err(Error::config("convergence", "refinement studies need the 2d model"));
            }
        }
        if let Some(st) = &self.stationary {
            if !(st.tol.is_finite() && st.tol > 0.0) {
                return Err(Error::config("stationary.tol", "must be positive"));
            }
        }
        if let Some((k0, k1)) = self.kernel.affine_coefficients() {
            if !(k0.is_finite() && k1.is_finite()) {
                return Err(Error::config("kernel", "coefficients must be finite"));
            }
        }
        Ok(())
    }

    pub fn kernel_for(&self, size: &Grid1D) -> Result<Kernel> {
        build_kernel_table(self.kernel.clone(), size)
    }

    /// Cell averages of the initial density on the scenario grid.
    pub fn initial_field(&self) -> Result<Field2D> {
        self.initial_field_on(&self.grid.grid2d()?)
    }

    pub fn initial_field_on(&self, grid: &Grid2D) -> Result<Field2D> {
        let init = &self.initial;
        cell_average(|r, a| init.value(r, a), grid, self.run.quadrature)
    }

    pub fn initial_field_1d(&self) -> Result<Field1D> {
        let init = &self.initial;
        cell_average_1d(|r| init.value_1d(r), &self.grid.grid1d()?, self.run.quadrature)
    }

    pub fn scheme2d(&self) -> Result<Scheme2D> {
        self.scheme2d_on(self.grid.grid2d()?)
    }

    pub fn scheme2d_on(&self, grid: Grid2D) -> Result<Scheme2D> {
        let kernel = self.kernel_for(&grid.size)?;
        Scheme2D::new(grid, &self.rates, kernel, self.run.clone())
    }

    pub fn scheme1d(&self) -> Result<Scheme1D> {
        let grid = self.grid.grid1d()?;
        let kernel = self.kernel_for(&grid)?;
        Scheme1D::new(grid, &self.rates, kernel, self.run.dt, self.m0, self.run.quadrature)
    }

    /// Bounds for the long-time condition, with `|alpha|_1` taken at `m0`.
    pub fn rate_bounds(&self) -> Result<RateBounds> {
        let mut b = match self.model {
            ModelKind::TwoD => self.rates.bounds(&self.grid.grid2d()?, self.run.quadrature),
            ModelKind::OneD => self.rates.bounds_1d(&self.grid.grid1d()?, self.run.quadrature),
        };
        b.alpha_l1 *= self.m0;
        Ok(b)
    }

    /// Rates with grid defaults such as the velocity cutoff filled in.
    pub fn effective_rates(&self) -> RateSet {
        match self.grid.grid1d() {
            Ok(g) => self.rates.bound_to(&g),
            Err(_) => self.rates.clone(),
        }
    }

    /// One full-model step on a square `cells x cells` refinement of the grid.
    pub fn one_step_on(&self, cells: usize) -> Result<Field2D> {
        let grid = make_grid2d(self.grid.r_max, self.grid.a_max, cells, cells)?;
        let mut scheme = self.scheme2d_on(grid)?;
        let state = SimState::initial(self.initial_field_on(&grid)?, self.m0)?;
        let (next, _) = scheme.step(&state)?;
        Ok(next.f)
    }
}

fn is_scenario_field(key: &str) -> bool {
    matches!(
        key,
        "id" | "description"
            | "model"
            | "grid"
            | "kernel"
            | "rates"
            | "initial"
            | "m0"
            | "run"
            | "observables"
            | "tasks"
            | "convergence"
            | "stationary"
    )
}

fn set_path(value: &mut toml::Value, path: &[&str], new: toml::Value) -> std::result::Result<(), String> {
    let (last, parents) = path.split_last().ok_or("empty key")?;
    let mut cur = value;
    for p in parents {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| format!("`{p}` is not inside a table"))?;
        cur = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = cur
        .as_table_mut()
        .ok_or_else(|| format!("cannot set `{last}` on a non-table value"))?;
    table.insert(last.to_string(), new);
    Ok(())
}

/// A named-column time series with possibly missing entries.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ObservableSeries {
    pub columns: Vec<String>,
    pub rows: Vec<(f64, Vec<Option<f64>>)>,
}

impl ObservableSeries {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|(_, v)| v[k]).collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|(t, _)| *t).collect()
    }

    pub fn last(&self, name: &str) -> Option<f64> {
        self.column(name)?.last().copied().flatten()
    }

    /// `t,<columns>`; missing values are left empty.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,{}", self.columns.join(","))?;
        for (t, vals) in &self.rows {
            let cells: Vec<String> = vals
                .iter()
                .map(|v| v.map(crate::grid::fmt_f64).unwrap_or_default())
                .collect();
            writeln!(w, "{},{}", crate::grid::fmt_f64(*t), cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraffickingObservables {
    pub mean_size: Option<f64>,
    pub size_std: Option<f64>,
    pub internalization_ratio: f64,
}

pub fn trafficking_observables(f: &Field2D, m0: f64) -> TraffickingObservables {
    let n = norms(f);
    let (mean_size, size_std) = if n.n0 > 0.0 {
        let mean = n.n1r / n.n0;
        let var = (n.n2r / n.n0 - mean * mean).max(0.0);
        (Some(mean), Some(var.sqrt()))
    } else {
        (None, None)
    };
    TraffickingObservables {
        mean_size,
        size_std,
        internalization_ratio: if m0 > 0.0 { n.n1a / m0 } else { 0.0 },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SignalingObservables {
    pub camp_internal: f64,
    pub camp_membrane: f64,
    pub camp_total: f64,
}

pub fn signaling_observables(f: &Field2D, m: f64) -> SignalingObservables {
    let internal = norms(f).n1a;
    SignalingObservables {
        camp_internal: internal,
        camp_membrane: m,
        camp_total: internal + m,
    }
}

fn observable_columns(kind: ObservableKind) -> Vec<String> {
    let names: &[&str] = match kind {
        ObservableKind::None => &[],
        ObservableKind::Trafficking => &["mean_size", "size_std", "internalization_ratio"],
        ObservableKind::Signaling => &["camp_internal", "camp_membrane", "camp_total"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

fn observable_row(kind: ObservableKind, state: &SimState, m0: f64) -> Vec<Option<f64>> {
    match kind {
        ObservableKind::None => Vec::new(),
        ObservableKind::Trafficking => {
            let o = trafficking_observables(&state.f, m0);
            vec![o.mean_size, o.size_std, Some(o.internalization_ratio)]
        }
        ObservableKind::Signaling => {
            let o = signaling_observables(&state.f, state.m.m);
            vec![Some(o.camp_internal), Some(o.camp_membrane), Some(o.camp_total)]
        }
    }
}

/// Output of a size-only run.
#[derive(Clone, Debug)]
pub struct OneDRun {
    /// `(n, t, f)` at the snapshot steps, always including the first and last.
    pub snapshots: Vec<(usize, f64, Field1D)>,
    /// `(n, t, |f|_0)` at the diagnostics cadence.
    pub norm0: Vec<(usize, f64, f64)>,
    pub final_field: Field1D,
}

#[derive(Clone, Debug)]
pub enum Trajectory {
    TwoD {
        output: Box<RunOutput>,
        observables: ObservableSeries,
    },
    OneD(OneDRun),
}

/// Runs the scenario's time integration.
pub fn simulate(s: &Scenario) -> Result<Trajectory> {
    match s.model {
        ModelKind::TwoD => {
            let mut scheme = s.scheme2d()?;
            let state = SimState::initial(s.initial_field()?, s.m0)?;
            let steps = s.run.steps();
            let every = s.run.diagnostics_every;
            let mut observables = ObservableSeries {
                columns: observable_columns(s.observables),
                rows: Vec::new(),
            };
            let kind = s.observables;
            let output = run(&mut scheme, state, |st| {
                if kind != ObservableKind::None && (st.n % every == 0 || st.n == steps) {
                    observables.rows.push((st.t, observable_row(kind, st, s.m0)));
                }
            })?;
            Ok(Trajectory::TwoD {
                output: Box::new(output),
                observables,
            })
        }
        ModelKind::OneD => {
            let scheme = s.scheme1d()?;
            let f0 = s.initial_field_1d()?;
            let steps = s.run.steps();
            let every = s.run.diagnostics_every;
            let mut snap_steps: Vec<usize> = s.run.snapshot_times.iter().map(|&t| s.run.step_at(t)).collect();
            snap_steps.extend([0, steps]);
            snap_steps.sort_unstable();
            snap_steps.dedup();
            let mut snapshots = Vec::new();
            let mut norm0 = Vec::new();
            let final_field = scheme.run(f0, steps, |n, t, f| {
                if snap_steps.binary_search(&n).is_ok() {
                    snapshots.push((n, t, f.clone()));
                }
                if n % every == 0 || n == steps {
                    norm0.push((n, t, f.norm0()));
                }
            })?;
            Ok(Trajectory::OneD(OneDRun {
                snapshots,
                norm0,
                final_field,
            }))
        }
    }
}
