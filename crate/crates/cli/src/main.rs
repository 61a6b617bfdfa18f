//! `endopop` command-line driver.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use endopop::analysis::{
    check_theorem_condition, convergence_study, decay_rate_probe, moment_ode_oracle, moments, stationary_fixed_point,
    StationaryConfig,
};
use endopop::grid::fmt_f64;
use endopop::rates::RateBounds;
use endopop::scenarios::{builtin, load_scenario, simulate, ModelKind, Scenario, Trajectory, BUILTIN_IDS};
use endopop::stepper::CflReport;
use endopop::{Error, Result};

#[derive(Parser)]
#[command(
    name = "endopop",
    version,
    about = "Size and content structured compartment population simulator"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Target {
    /// Built-in scenario id or path to a TOML config.
    scenario: String,
    /// Output directory (default: <output root>/<scenario id>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config value, e.g. `--set run.dt=1e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Root for default output directories.
    #[arg(long, env = "ENDOPOP_OUTPUT_ROOT", default_value = "results")]
    output_root: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Time-integrate a scenario and write diagnostics, snapshots and observables.
    Run(Target),
    /// Run one analysis task on a scenario.
    Analyze {
        task: AnalysisTask,
        #[command(flatten)]
        target: Target,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Print a scenario as a TOML config (a template for new ones).
    Schema {
        #[arg(default_value = "fig6-general")]
        scenario: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalysisTask {
    MomentsVsOde,
    Convergence,
    Stationary,
    ConditionCheck,
    DecayRate,
}

impl AnalysisTask {
    fn name(self) -> &'static str {
        match self {
            AnalysisTask::MomentsVsOde => "moments-vs-ode",
            AnalysisTask::Convergence => "convergence",
            AnalysisTask::Stationary => "stationary",
            AnalysisTask::ConditionCheck => "condition-check",
            AnalysisTask::DecayRate => "decay-rate",
        }
    }
}

#[derive(Serialize)]
struct RunManifest {
    scenario: String,
    command: String,
    parameters: Value,
    output_dir: PathBuf,
    files: Vec<String>,
    timings: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    cfl: Option<CflReport>,
    warnings: Vec<String>,
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        body(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        self.write(name, |w| writeln!(w, "{text}"))
    }
}

/// `0.25` -> `0.25`, `1.0000000000000002` -> `1`.
fn time_label(t: f64) -> String {
    let s = format!("{t:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".into()
    } else {
        s.into()
    }
}

fn resolve(target: &Target) -> Result<(Scenario, PathBuf)> {
    let s = load_scenario(&target.scenario)?.with_overrides(&target.sets)?;
    let dir = target.out.clone().unwrap_or_else(|| target.output_root.join(&s.id));
    Ok((s, dir))
}

fn parameters(s: &Scenario) -> Value {
    let mut echo = s.clone();
    echo.rates = s.effective_rates();
    json!({
        "scenario": echo,
        "steps": s.run.steps(),
    })
}

fn finish(
    s: &Scenario,
    command: &str,
    mut out: Output,
    start: Instant,
    cfl: Option<CflReport>,
    warnings: Vec<String>,
) -> Result<()> {
    let manifest = RunManifest {
        scenario: s.id.clone(),
        command: command.to_string(),
        parameters: parameters(s),
        output_dir: out.dir.clone(),
        files: out.files.clone(),
        timings: json!({ "wall_seconds": start.elapsed().as_secs_f64() }),
        cfl,
        warnings,
    };
    out.write_json("manifest.json", &manifest)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", out.dir.display());
    Ok(())
}

fn cmd_run(target: &Target) -> Result<()> {
    let start = Instant::now();
    let (s, dir) = resolve(target)?;
    let mut out = Output::new(dir)?;
    match simulate(&s)? {
        Trajectory::TwoD { output, observables } => {
            out.write("diagnostics.csv", |w| {
                writeln!(w, "n,t,H0,H1r,H1a,M")?;
                for r in &output.diagnostics {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        r.n,
                        fmt_f64(r.t),
                        fmt_f64(r.h0),
                        fmt_f64(r.h1r),
                        fmt_f64(r.h1a),
                        fmt_f64(r.m)
                    )?;
                }
                Ok(())
            })?;
            for snap in &output.snapshots {
                out.write(&format!("snapshot_t{}.csv", time_label(snap.t)), |w| {
                    snap.f.write_csv(w)
                })?;
            }
            if !observables.columns.is_empty() {
                out.write("observables.csv", |w| observables.write_csv(w))?;
            }
            finish(&s, "run", out, start, Some(output.cfl), output.warnings.clone())
        }
        Trajectory::OneD(run) => {
            out.write("diagnostics.csv", |w| {
                writeln!(w, "n,t,norm0")?;
                for (n, t, v) in &run.norm0 {
                    writeln!(w, "{n},{},{}", fmt_f64(*t), fmt_f64(*v))?;
                }
                Ok(())
            })?;
            for (_, t, f) in &run.snapshots {
                out.write(&format!("snapshot_t{}.csv", time_label(*t)), |w| f.write_csv(w))?;
            }
            finish(&s, "run", out, start, None, Vec::new())
        }
    }
}

fn incompatible(task: AnalysisTask, s: &Scenario, why: &str) -> Error {
    Error::config(
        "",
        format!("task {} cannot run on scenario {}: {why}", task.name(), s.id),
    )
}

fn condition_json(bounds: &RateBounds, kappa_inf: f64) -> Value {
    let c = check_theorem_condition(bounds, kappa_inf);
    json!({
        "holds": c.holds,
        "lhs": c.lhs,
        "rhs": c.rhs,
        "predicted_rate": c.predicted_rate,
        "predicted_rate_alt": c.predicted_rate_alt,
        "kappa_inf": kappa_inf,
        "gamma0": bounds.gamma0,
        "gamma_inf": bounds.gamma_inf,
        "alpha_l1": bounds.alpha_l1,
    })
}

fn kappa_inf(s: &Scenario) -> Result<f64> {
    Ok(s.kernel_for(&s.grid.grid1d()?)?.kappa_inf())
}

fn cmd_analyze(task: AnalysisTask, target: &Target) -> Result<()> {
    let start = Instant::now();
    let (s, dir) = resolve(target)?;
    let is_2d = s.model == ModelKind::TwoD;
    let needs = |model: ModelKind, what: &str| {
        if s.model == model {
            Ok(())
        } else {
            Err(incompatible(task, &s, what))
        }
    };
    match task {
        AnalysisTask::MomentsVsOde => {
            needs(ModelKind::TwoD, "needs the 2d model")?;
            if !s.rates.is_zero() {
                return Err(incompatible(
                    task,
                    &s,
                    "the closed moment equations hold for pure coagulation only",
                ));
            }
            let (k0, k1) = s
                .kernel
                .affine_coefficients()
                .ok_or_else(|| incompatible(task, &s, "needs a constant or affine kernel"))?;
            let Trajectory::TwoD { output, .. } = simulate(&s)? else {
                unreachable!("2d scenario")
            };
            let times: Vec<f64> = output.diagnostics.iter().map(|r| r.t).collect();
            let oracle = moment_ode_oracle(k0, k1, moments(&output.snapshots[0].f), &times)?;
            let mut out = Output::new(dir)?;
            out.write("moments_vs_ode.csv", |w| {
                writeln!(
                    w,
                    "t,H0_scheme,H0_oracle,H0_rel_err,H1r_scheme,H1r_oracle,H1a_scheme,H1a_oracle"
                )?;
                for (r, o) in output.diagnostics.iter().zip(&oracle) {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{}",
                        fmt_f64(r.t),
                        fmt_f64(r.h0),
                        fmt_f64(o.h0),
                        fmt_f64((r.h0 - o.h0).abs() / o.h0),
                        fmt_f64(r.h1r),
                        fmt_f64(o.h1r),
                        fmt_f64(r.h1a),
                        fmt_f64(o.h1a)
                    )?;
                }
                Ok(())
            })?;
            finish(&s, task.name(), out, start, Some(output.cfl), output.warnings.clone())
        }
        AnalysisTask::Convergence => {
            needs(ModelKind::TwoD, "refinement studies need the 2d model")?;
            if s.grid.r_max != s.grid.a_max {
                return Err(incompatible(
                    task,
                    &s,
                    "refinement uses square grids, so r_max must equal a_max",
                ));
            }
            let spec = s.convergence.clone().unwrap_or_default();
            let report = convergence_study(&s.id, s.grid.r_max, &spec, |cells| s.one_step_on(cells))?;
            let mut out = Output::new(dir)?;
            out.write_json("convergence.json", &report)?;
            finish(&s, task.name(), out, start, None, Vec::new())
        }
        AnalysisTask::ConditionCheck => {
            let bounds = s.rate_bounds()?;
            let report = condition_json(&bounds, kappa_inf(&s)?);
            let mut out = Output::new(dir)?;
            out.write_json("condition.json", &report)?;
            let warnings = if is_2d {
                vec!["membrane level taken at m0 for the 2d model".to_string()]
            } else {
                Vec::new()
            };
            finish(&s, task.name(), out, start, None, warnings)
        }
        AnalysisTask::Stationary => {
            needs(ModelKind::OneD, "the stationary solver works on the size-only model")?;
            let scheme = s.scheme1d()?;
            let bounds = s.rate_bounds()?;
            let res = stationary_fixed_point(&scheme, &bounds, &s.stationary.unwrap_or_default())?;
            let mut out = Output::new(dir)?;
            out.write("stationary.csv", |w| res.f_inf.write_csv(w))?;
            out.write_json(
                "stationary.json",
                &json!({
                    "iterations": res.iterations,
                    "residual": res.residual,
                    "k": res.k,
                    "norm0": res.f_inf.norm0(),
                    "norm0_bound": bounds.alpha_l1 / bounds.gamma0,
                    "max_contraction": res.max_contraction,
                    "max_norm0": res.max_norm0,
                    "min_value": res.min_value,
                    "condition": condition_json(&bounds, scheme.kernel().kappa_inf()),
                }),
            )?;
            finish(&s, task.name(), out, start, None, Vec::new())
        }
        AnalysisTask::DecayRate => {
            needs(ModelKind::OneD, "the decay probe works on the size-only model")?;
            let scheme = s.scheme1d()?;
            let bounds = s.rate_bounds()?;
            // the probe needs f_inf well below the distances it fits
            let mut cfg = s.stationary.unwrap_or_default();
            cfg.tol = cfg.tol.min(1e-15);
            let f_inf = stationary_fixed_point(&scheme, &bounds, &StationaryConfig { ..cfg })?.f_inf;
            let mut rows = Vec::new();
            scheme.run(s.initial_field_1d()?, s.run.steps(), |_, t, f| {
                rows.push((t, f.difference(&f_inf).map(|d| d.norm0()).unwrap_or(f64::NAN)));
            })?;
            let (times, dist): (Vec<f64>, Vec<f64>) = rows.iter().copied().unzip();
            let fit = decay_rate_probe(&times, &dist, f_inf.norm0())?;
            let cond = check_theorem_condition(&bounds, scheme.kernel().kappa_inf());
            let mut out = Output::new(dir)?;
            out.write("decay.csv", |w| {
                writeln!(w, "t,distance")?;
                for (t, d) in &rows {
                    writeln!(w, "{},{}", fmt_f64(*t), fmt_f64(*d))?;
                }
                Ok(())
            })?;
            out.write_json(
                "decay.json",
                &json!({
                    "rate": fit.rate,
                    "intercept": fit.intercept,
                    "samples_used": fit.samples_used,
                    "predicted_rate": cond.predicted_rate,
                    "predicted_rate_alt": cond.predicted_rate_alt,
                    "weaker_predicted_rate": cond.weaker_rate(),
                    "holds": cond.holds,
                }),
            )?;
            finish(&s, task.name(), out, start, None, Vec::new())
        }
    }
}

fn cmd_list() {
    for id in BUILTIN_IDS {
        let s = builtin(id).expect("listed id resolves");
        println!("{id:<22} {}", s.description);
    }
}

fn cmd_schema(name: &str) -> Result<()> {
    let s = load_scenario(name)?;
    println!("# profile = zero | gaussian_mixture | size_coupled_gaussian   (alpha, initial)");
    println!("# profile = zero | constant | power | wall | power_wall         (gamma, lambda)");
    println!("# profile = zero | constant | saturating                        (velocity, membrane_flux)");
    println!("# kernel form = constant | affine; quadrature rule = midpoint | gauss2 | composite");
    print!("{}", s.to_toml_string()?);
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Run(t) => cmd_run(t),
        Command::Analyze { task, target } => cmd_analyze(*task, target),
        Command::ListScenarios => {
            cmd_list();
            Ok(())
        }
        Command::Schema { scenario } => cmd_schema(scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
