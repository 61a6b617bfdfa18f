//! Discrete coagulation operators under the conservative truncation.
//!
//! With 0-based storage the 2D operator reads
//!
//! ```text
//! Q[i][j] = dr da ( 1/2 sum_{k<=i} sum_{m<=j} kap[k][i-k] f[k][m] f[i-k][j-m]
//!                   - f[i][j] sum_{k<=Ir-1-i} sum_{m<=Ia-1-j} kap[i][k] f[k][m] )
//! ```
//!
//! Pairs whose merged compartment would leave the box are excluded from
//! both gain and loss, so the left-edge first moments are conserved exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field1D, Field2D, Grid2D};
use crate::rates::Kernel;

/// Accumulation mode for the gain and loss sums.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Summation {
    #[default]
    Plain,
    /// Neumaier-compensated sums, same order as `Plain`.
    Compensated,
}

/// Scratch space for [`apply_coag_2d`]. Holds no state between calls.
#[derive(Clone, Debug)]
pub struct CoagWorkspace {
    nr: usize,
    na: usize,
    summation: Summation,
    /// `prefix[k * na + n] = sum_{m <= n} f[k][m]`.
    prefix: Vec<f64>,
    /// One past the last nonzero content index of each row.
    extent: Vec<usize>,
}

impl CoagWorkspace {
    pub fn new(grid: &Grid2D) -> Self {
        Self::with_summation(grid, Summation::Plain)
    }

    pub fn with_summation(grid: &Grid2D, summation: Summation) -> Self {
        Self {
            nr: grid.nr(),
            na: grid.na(),
            summation,
            prefix: vec![0.0; grid.len()],
            extent: vec![0; grid.nr()],
        }
    }

    pub fn summation(&self) -> Summation {
        self.summation
    }

    fn fits(&self, grid: &Grid2D) -> bool {
        self.nr == grid.nr() && self.na == grid.na()
    }
}

#[derive(Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

/// Coagulation increment `Q` of a 2D field.
pub fn apply_coag_2d(f: &Field2D, kernel: &Kernel, ws: &mut CoagWorkspace) -> Result<Field2D> {
    let mut out = vec![0.0; f.grid().len()];
    apply_coag_2d_into(f, kernel, ws, &mut out)?;
    Field2D::from_values(*f.grid(), out)
}

/// Writes the coagulation increment of `f` into `out`, overwriting it.
pub fn apply_coag_2d_into(f: &Field2D, kernel: &Kernel, ws: &mut CoagWorkspace, out: &mut [f64]) -> Result<()> {
    let grid = *f.grid();
    check_shapes(&grid, kernel, out.len())?;
    if !ws.fits(&grid) {
        *ws = CoagWorkspace::with_summation(&grid, ws.summation);
    }
    f.check_finite()?;

    let (nr, na) = (grid.nr(), grid.na());
    let vals = f.values();
    for k in 0..nr {
        let row = &vals[k * na..(k + 1) * na];
        let pre = &mut ws.prefix[k * na..(k + 1) * na];
        let mut acc = 0.0;
        for (p, v) in pre.iter_mut().zip(row) {
            acc += v;
            *p = acc;
        }
        ws.extent[k] = row.iter().rposition(|&v| v != 0.0).map_or(0, |m| m + 1);
    }

    let area = grid.cell_area();
    let prefix = &ws.prefix;
    let extent = &ws.extent;
    let compensated = ws.summation == Summation::Compensated;
    out.par_chunks_mut(na).enumerate().for_each(|(i, out_row)| {
        if compensated {
            coag_row::<true>(i, vals, prefix, extent, kernel, nr, na, area, out_row);
        } else {
            coag_row::<false>(i, vals, prefix, extent, kernel, nr, na, area, out_row);
        }
    });
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn coag_row<const KAHAN: bool>(
    i: usize,
    vals: &[f64],
    prefix: &[f64],
    extent: &[usize],
    kernel: &Kernel,
    nr: usize,
    na: usize,
    area: f64,
    out_row: &mut [f64],
) {
    let mut gain = vec![Neumaier::default(); na];

    // Unordered pairs (k, i - k) with k <= i - k; the diagonal carries the 1/2.
    for k in 0..=i / 2 {
        let kp = i - k;
        let (ek, ekp) = (extent[k], extent[kp]);
        if ek == 0 || ekp == 0 {
            continue;
        }
        let w = kernel.at(k, kp) * if k == kp { 0.5 } else { 1.0 };
        if w == 0.0 {
            continue;
        }
        let fk = &vals[k * na..k * na + ek];
        let fkp = &vals[kp * na..kp * na + ekp];
        let top = (ek + ekp - 1).min(na);
        for (j, g) in gain.iter_mut().enumerate().take(top) {
            let lo = j.saturating_sub(ekp - 1);
            let hi = j.min(ek - 1);
            let mut s = 0.0;
            for m in lo..=hi {
                s += fk[m] * fkp[j - m];
            }
            if KAHAN {
                g.add(w * s);
            } else {
                g.sum += w * s;
            }
        }
    }

    let krow = kernel.row(i);
    let frow = &vals[i * na..(i + 1) * na];
    for j in 0..na {
        let loss = if frow[j] == 0.0 {
            0.0
        } else {
            let n = na - 1 - j;
            let mut acc = Neumaier::default();
            for (k, &kap) in krow.iter().enumerate().take(nr - i) {
                let p = prefix[k * na + n];
                if KAHAN {
                    acc.add(kap * p);
                } else {
                    acc.sum += kap * p;
                }
            }
            frow[j] * acc.value()
        };
        out_row[j] = area * (gain[j].value() - loss);
    }
}

/// Coagulation increment of the size-only density `f` (number form).
///
/// Equal to the 2D operator on a single content cell divided by `da`.
pub fn apply_coag_1d(f: &Field1D, kernel: &Kernel) -> Result<Field1D> {
    let n = f.len();
    if kernel.len() != n {
        return Err(kernel_mismatch(kernel.len(), n));
    }
    f.check_finite()?;
    let fv = f.values();
    let dr = f.grid().step();
    let out: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut gain = 0.0;
            for k in 0..=i / 2 {
                let kp = i - k;
                let w = if k == kp { 0.5 } else { 1.0 };
                gain += w * kernel.at(k, kp) * fv[k] * fv[kp];
            }
            let loss = if fv[i] == 0.0 {
                0.0
            } else {
                let krow = kernel.row(i);
                fv[i] * (0..n - i).map(|k| krow[k] * fv[k]).sum::<f64>()
            };
            dr * (gain - loss)
        })
        .collect();
    Field1D::from_values(*f.grid(), out)
}

/// Mass fluxes `J[e]` across the size edges, `e = 0..=I`.
///
/// Mass is measured at left edges, `g_i = r_{i-1/2} f_i`. `J[e]` is the rate
/// at which mass carried by compartments below edge `e` is moved above it by
/// merges that stay inside the box. `J[0] = J[I] = 0`.
pub fn edge_fluxes_1d(f: &Field1D, kernel: &Kernel) -> Result<Vec<f64>> {
    let n = f.len();
    if kernel.len() != n {
        return Err(kernel_mismatch(kernel.len(), n));
    }
    f.check_finite()?;
    let fv = f.values();
    let dr = f.grid().step();
    let mut j = vec![0.0; n + 1];
    for (e, je) in j.iter_mut().enumerate().take(n).skip(1) {
        let mut acc = 0.0;
        for k in 1..e {
            if fv[k] == 0.0 {
                continue;
            }
            let krow = kernel.row(k);
            let mut inner = 0.0;
            for kp in (e - k)..n - k {
                inner += krow[kp] * fv[kp];
            }
            acc += k as f64 * dr * fv[k] * inner;
        }
        *je = dr * dr * acc;
    }
    Ok(j)
}

/// Increment of `g_i = r_{i-1/2} f_i` from the flux form: `-(J[i+1] - J[i]) / dr`.
///
/// `sum_i g_i dr` is unchanged by construction.
pub fn apply_coag_1d_flux(f: &Field1D, kernel: &Kernel) -> Result<Field1D> {
    let j = edge_fluxes_1d(f, kernel)?;
    let dr = f.grid().step();
    let out = j.windows(2).map(|w| -(w[1] - w[0]) / dr).collect();
    Field1D::from_values(*f.grid(), out)
}

fn check_shapes(grid: &Grid2D, kernel: &Kernel, out_len: usize) -> Result<()> {
    if kernel.len() != grid.nr() {
        return Err(kernel_mismatch(kernel.len(), grid.nr()));
    }
    if out_len != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "output buffer has {out_len} cells, grid has {}",
            grid.len()
        )));
    }
    Ok(())
}

fn kernel_mismatch(table: usize, cells: usize) -> Error {
    Error::InvalidArgument(format!("kernel table has {table} size cells but the field has {cells}"))
}
