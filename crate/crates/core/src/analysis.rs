//! Moments, weighted norms, the moment ODE for affine kernels, the long-time
//! condition, the stationary solver, decay-rate fitting and grid-refinement
//! studies.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field1D, Field2D, Grid2D};
use crate::rates::RateBounds;
use crate::stepper::Scheme1D;

/// Discrete moments with left-edge weights: `sum phi(r_{i-1/2}, a_{j-1/2}) f_ij dr da`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    #[serde(rename = "H0")]
    pub h0: f64,
    #[serde(rename = "H1r")]
    pub h1r: f64,
    #[serde(rename = "H1a")]
    pub h1a: f64,
}

pub fn moments(f: &Field2D) -> MomentVector {
    let grid = f.grid();
    let na = grid.na();
    let (mut h0, mut h1r, mut h1a) = (0.0, 0.0, 0.0);
    for i in 0..grid.nr() {
        let r = grid.size.left(i);
        let row = &f.values()[i * na..(i + 1) * na];
        let (mut s0, mut sa) = (0.0, 0.0);
        for (j, v) in row.iter().enumerate() {
            s0 += v;
            sa += grid.content.left(j) * v;
        }
        h0 += s0;
        h1r += r * s0;
        h1a += sa;
    }
    let area = grid.cell_area();
    MomentVector {
        h0: h0 * area,
        h1r: h1r * area,
        h1a: h1a * area,
    }
}

/// The six weighted norms `sum w(r_i, a_j) |g_ij| dr da` with center weights
/// `1, r, a, r^2, a^2, r a`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub n0: f64,
    pub n1r: f64,
    pub n1a: f64,
    pub n2r: f64,
    pub n2a: f64,
    pub n2ra: f64,
}

impl NormReport {
    pub const NAMES: [&'static str; 6] = ["n0", "n1r", "n1a", "n2r", "n2a", "n2ra"];

    pub fn to_array(&self) -> [f64; 6] {
        [self.n0, self.n1r, self.n1a, self.n2r, self.n2a, self.n2ra]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            n0: v[0],
            n1r: v[1],
            n1a: v[2],
            n2r: v[3],
            n2a: v[4],
            n2ra: v[5],
        }
    }
}

pub fn norms(g: &Field2D) -> NormReport {
    let grid = g.grid();
    let na = grid.na();
    let mut acc = [0.0; 6];
    for i in 0..grid.nr() {
        let r = grid.size.center(i);
        for j in 0..na {
            let a = grid.content.center(j);
            let v = g.values()[i * na + j].abs();
            acc[0] += v;
            acc[1] += r * v;
            acc[2] += a * v;
            acc[3] += r * r * v;
            acc[4] += a * a * v;
            acc[5] += r * a * v;
        }
    }
    let area = grid.cell_area();
    NormReport::from_array(acc.map(|s| s * area))
}

/// `H0(t) = H0(0) / (1 + K0 H0(0) t / 2)`, the constant-kernel solution.
pub fn constant_kernel_h0(k0: f64, h0: f64, t: f64) -> f64 {
    h0 / (1.0 + 0.5 * k0 * h0 * t)
}

/// Integrates `dH0/dt = -K0 H0^2 / 2 - K1 H0 H1r` (first moments constant) with
/// classical RK4 on substeps no longer than `1e-3`, returning the moments at
/// every entry of `times` (nondecreasing, starting at or after 0).
pub fn moment_ode_oracle(k0: f64, k1: f64, init: MomentVector, times: &[f64]) -> Result<Vec<MomentVector>> {
    if !(k0 >= 0.0 && k1 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "moment ODE needs K0, K1 >= 0, got ({k0}, {k1})"
        )));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidArgument(
            "oracle times must be nonnegative and sorted".into(),
        ));
    }
    let rhs = |h: f64| -0.5 * k0 * h * h - k1 * h * init.h1r;
    let mut h = init.h0;
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let n = (span / 1e-3).ceil().max(1.0) as usize;
            let dt = span / n as f64;
            for _ in 0..n {
                let a = rhs(h);
                let b = rhs(h + 0.5 * dt * a);
                let c = rhs(h + 0.5 * dt * b);
                let d = rhs(h + dt * c);
                h += dt / 6.0 * (a + 2.0 * b + 2.0 * c + d);
            }
            t = target;
        }
        if h < 0.0 || !h.is_finite() {
            return Err(Error::NegativeMoment { value: h, t });
        }
        out.push(MomentVector { h0: h, ..init });
    }
    Ok(out)
}

/// Outcome of checking `3 kappa_inf |alpha|_1 <= gamma0^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// `(gamma0^2 - 3 kappa_inf |alpha|_1) / gamma0`, when positive.
    pub predicted_rate: Option<f64>,
    /// `gamma0^2 - 3 kappa_inf |alpha|_1`, when positive.
    pub predicted_rate_alt: Option<f64>,
}

impl ConditionReport {
    /// The smaller of the two rate readings.
    pub fn weaker_rate(&self) -> Option<f64> {
        match (self.predicted_rate, self.predicted_rate_alt) {
            (Some(a), Some(b)) => Some(a.min(b)),
            _ => None,
        }
    }
}

/// `alpha_l1` in `bounds` is taken at the membrane level actually used.
pub fn check_theorem_condition(bounds: &RateBounds, kappa_inf: f64) -> ConditionReport {
    let lhs = 3.0 * kappa_inf * bounds.alpha_l1;
    let rhs = bounds.gamma0 * bounds.gamma0;
    let gap = rhs - lhs;
    let positive = gap > 0.0 && bounds.gamma0 > 0.0;
    ConditionReport {
        holds: lhs <= rhs,
        lhs,
        rhs,
        predicted_rate: positive.then(|| gap / bounds.gamma0),
        predicted_rate_alt: positive.then_some(gap),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryConfig {
    /// Damping constant; `None` picks the smallest admissible value.
    #[serde(default)]
    pub k: Option<f64>,
    /// Stop once the successive difference in `|.|_0` falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self {
            k: None,
            tol: 1e-12,
            max_iter: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryResult {
    pub f_inf: Field1D,
    pub iterations: usize,
    /// `|alpha - gamma f + Q(f)|_0` at the returned profile.
    pub residual: f64,
    pub k: f64,
    /// Largest ratio of successive differences after the first iteration.
    pub max_contraction: f64,
    /// Largest `|f|_0` over all iterates.
    pub max_norm0: f64,
    /// Smallest cell value over all iterates.
    pub min_value: f64,
}

/// Iterates `f <- f + (alpha - gamma f + Q(f)) / K` from `f = 0`.
pub fn stationary_fixed_point(
    scheme: &Scheme1D,
    bounds: &RateBounds,
    cfg: &StationaryConfig,
) -> Result<StationaryResult> {
    if bounds.gamma0 <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "stationary solver needs gamma0 > 0, got {}",
            bounds.gamma0
        )));
    }
    let kappa_inf = scheme.kernel().kappa_inf();
    let k_min = bounds.gamma_inf + kappa_inf * bounds.alpha_l1 / bounds.gamma0;
    let k = cfg.k.unwrap_or(k_min);
    if !(k.is_finite() && k >= k_min) {
        return Err(Error::config(
            "stationary.k",
            format!("K = {k} is below the admissible minimum {k_min}"),
        ));
    }
    let report = check_theorem_condition(bounds, kappa_inf);
    if !report.holds {
        warn!(
            "long-time condition fails ({:.4e} > {:.4e}); attempting the fixed point anyway",
            report.lhs, report.rhs
        );
    }

    let mut f = Field1D::zeros(*scheme.grid());
    let mut prev_diff = f64::NAN;
    let mut max_contraction: f64 = 0.0;
    let mut max_norm0: f64 = 0.0;
    let mut min_value: f64 = 0.0;
    for it in 1..=cfg.max_iter {
        let rhs = scheme.rhs(&f)?;
        let mut diff = 0.0;
        for (v, d) in f.values_mut().iter_mut().zip(rhs.values()) {
            let step = d / k;
            *v += step;
            diff += step.abs();
        }
        diff *= scheme.grid().step();
        max_norm0 = max_norm0.max(f.norm0());
        min_value = f.values().iter().copied().fold(min_value, f64::min);
        if it > 1 && prev_diff > 0.0 {
            max_contraction = max_contraction.max(diff / prev_diff);
        }
        if !diff.is_finite() {
            return Err(Error::NonFinite {
                i: 0,
                j: 0,
                value: diff,
            });
        }
        if diff < cfg.tol {
            let residual = scheme.rhs(&f)?.norm0();
            return Ok(StationaryResult {
                f_inf: f,
                iterations: it,
                residual,
                k,
                max_contraction,
                max_norm0,
                min_value,
            });
        }
        prev_diff = diff;
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iter,
        last_step: prev_diff,
        contraction: max_contraction,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Negated least-squares slope of `ln d` against `t`.
    pub rate: f64,
    pub intercept: f64,
    pub samples_used: usize,
}

/// Fits an exponential rate to distances `d(t)` from a stationary profile,
/// using the final two-thirds of the samples that lie above the rounding floor
/// `100 eps |f_inf|_0`.
pub fn decay_rate_probe(times: &[f64], distances: &[f64], f_inf_norm0: f64) -> Result<DecayFit> {
    if times.len() != distances.len() {
        return Err(Error::InvalidArgument(format!(
            "{} times but {} distances",
            times.len(),
            distances.len()
        )));
    }
    let floor = 100.0 * f64::EPSILON * f_inf_norm0.abs();
    let kept: Vec<(f64, f64)> = times
        .iter()
        .zip(distances)
        .filter(|(_, &d)| d > floor && d.is_finite())
        .map(|(&t, &d)| (t, d.ln()))
        .collect();
    let start = kept.len() / 3;
    let tail = &kept[start..];
    if tail.len() < 2 {
        return Err(Error::InsufficientSignal(format!(
            "{} samples above the floor {floor:.3e}",
            kept.len()
        )));
    }
    let (slope, intercept) = least_squares(tail);
    Ok(DecayFit {
        rate: -slope,
        intercept,
        samples_used: tail.len(),
    })
}

/// Slope and intercept of the least-squares line through `(x, y)` points.
fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Cell counts per axis for the compared levels and the reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub cells: Vec<usize>,
    pub reference_cells: usize,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            cells: vec![6, 12, 24, 48, 96, 192],
            reference_cells: 384,
        }
    }
}

impl ConvergenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cells.len() < 2 {
            return Err(Error::config("convergence.cells", "need at least two levels"));
        }
        for (k, &c) in self.cells.iter().enumerate() {
            let dyadic = c > 0
                && c < self.reference_cells
                && self.reference_cells.is_multiple_of(c)
                && (self.reference_cells / c).is_power_of_two();
            if !dyadic {
                return Err(Error::config(
                    format!("convergence.cells[{k}]"),
                    format!(
                        "{c} cells is not a dyadic coarsening of the {}-cell reference",
                        self.reference_cells
                    ),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLevel {
    pub cells: usize,
    pub h: f64,
    pub norms: NormReport,
}

/// Per-norm log2 slopes; `None` where some error is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub n0: Option<f64>,
    pub n1r: Option<f64>,
    pub n1a: Option<f64>,
    pub n2r: Option<f64>,
    pub n2a: Option<f64>,
    pub n2ra: Option<f64>,
}

impl SlopeReport {
    pub fn to_array(&self) -> [Option<f64>; 6] {
        [self.n0, self.n1r, self.n1a, self.n2r, self.n2a, self.n2ra]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub scenario: String,
    pub reference_cells: usize,
    pub levels: Vec<ConvergenceLevel>,
    pub slopes: SlopeReport,
}

/// Averages a fine field over blocks of `factor x factor` cells.
pub fn aggregate(fine: &Field2D, coarse: &Grid2D) -> Result<Field2D> {
    let fg = fine.grid();
    if !fg.nr().is_multiple_of(coarse.nr()) || !fg.na().is_multiple_of(coarse.na()) {
        return Err(Error::InvalidArgument(format!(
            "{}x{} cells do not nest in {}x{}",
            coarse.nr(),
            coarse.na(),
            fg.nr(),
            fg.na()
        )));
    }
    let (fr, fa) = (fg.nr() / coarse.nr(), fg.na() / coarse.na());
    let scale = 1.0 / (fr * fa) as f64;
    Ok(Field2D::from_fn(*coarse, |i, j| {
        let mut s = 0.0;
        for p in 0..fr {
            let row = fine.row(i * fr + p);
            s += row[j * fa..(j + 1) * fa].iter().sum::<f64>();
        }
        s * scale
    }))
}

/// Runs `solve` on every level and on the reference (in parallel), compares each
/// level with the aggregated reference and fits `log2(error)` against `log2(h)`.
pub fn convergence_study<F>(scenario: &str, extent: f64, spec: &ConvergenceSpec, solve: F) -> Result<ConvergenceReport>
where
    F: Fn(usize) -> Result<Field2D> + Sync,
{
    spec.validate()?;
    let mut all = spec.cells.clone();
    all.push(spec.reference_cells);
    let solutions: Vec<Field2D> = all.par_iter().map(|&c| solve(c)).collect::<Result<_>>()?;
    let (reference, coarse) = solutions.split_last().expect("at least one level");
    let mut levels = Vec::with_capacity(coarse.len());
    for (sol, &cells) in coarse.iter().zip(&spec.cells) {
        let agg = aggregate(reference, sol.grid())?;
        let diff = sol.difference(&agg)?;
        levels.push(ConvergenceLevel {
            cells,
            h: extent / cells as f64,
            norms: norms(&diff),
        });
    }
    let slopes = fit_slopes(&levels);
    Ok(ConvergenceReport {
        scenario: scenario.to_string(),
        reference_cells: spec.reference_cells,
        levels,
        slopes,
    })
}

fn fit_slopes(levels: &[ConvergenceLevel]) -> SlopeReport {
    let slope = |k: usize| {
        let pts: Option<Vec<(f64, f64)>> = levels
            .iter()
            .map(|l| {
                let e = l.norms.to_array()[k];
                (e > 0.0 && e.is_finite()).then(|| (l.h.log2(), e.log2()))
            })
            .collect();
        pts.map(|p| least_squares(&p).0)
    };
    SlopeReport {
        n0: slope(0),
        n1r: slope(1),
        n1a: slope(2),
        n2r: slope(3),
        n2a: slope(4),
        n2ra: slope(5),
    }
}
