//! Regular meshes, quadrature rules and cell-averaged fields.
//!
//! Storage is 0-based. Everything that leaves the process (CSV rows, error
//! messages) reports 1-based `(i, j)` cell indices so that cell `(1, 1)` is
//! `[0, dr] x [0, da]`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform partition of `[0, extent]` into `cells` intervals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    extent: f64,
    cells: usize,
    step: f64,
}

impl Grid1D {
    pub fn new(extent: f64, cells: usize) -> Result<Self> {
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid extent must be positive and finite, got {extent}"
            )));
        }
        if cells == 0 {
            return Err(Error::InvalidArgument("grid needs at least one cell".into()));
        }
        Ok(Self {
            extent,
            cells,
            step: extent / cells as f64,
        })
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Position of edge `e`, `e = 0..=cells`. Edge `e` is the left edge of cell `e`.
    pub fn edge(&self, e: usize) -> f64 {
        e as f64 * self.step
    }

    /// Left edge of cell `i`.
    pub fn left(&self, i: usize) -> f64 {
        self.edge(i)
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.step
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.cells).map(|e| self.edge(e)).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.center(i)).collect()
    }
}

/// Tensor mesh of the size axis `[0, R]` and the content axis `[0, A]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid2D {
    pub size: Grid1D,
    pub content: Grid1D,
}

impl Grid2D {
    pub fn new(size: Grid1D, content: Grid1D) -> Self {
        Self { size, content }
    }

    pub fn nr(&self) -> usize {
        self.size.cells()
    }

    pub fn na(&self) -> usize {
        self.content.cells()
    }

    pub fn dr(&self) -> f64 {
        self.size.step()
    }

    pub fn da(&self) -> f64 {
        self.content.step()
    }

    pub fn cell_area(&self) -> f64 {
        self.dr() * self.da()
    }

    pub fn len(&self) -> usize {
        self.nr() * self.na()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.na() + j
    }
}

/// Builds the regular mesh over `[0, R] x [0, A]`.
pub fn make_grid2d(size_max: f64, content_max: f64, size_cells: usize, content_cells: usize) -> Result<Grid2D> {
    Ok(Grid2D::new(
        Grid1D::new(size_max, size_cells)?,
        Grid1D::new(content_max, content_cells)?,
    ))
}

/// Cell-average quadrature rule.
///
/// `Composite` splits each cell axis into the fewest equal panels no wider than
/// `max_width` and applies an `order`-point Gauss-Legendre rule on each panel.
/// It is meant for source profiles whose Gaussian widths are far below the
/// cell width, where midpoint sampling misses most of the mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Quadrature {
    #[default]
    Midpoint,
    Gauss2,
    Composite {
        order: usize,
        max_width: f64,
        /// Panel width on the content axis, if different from `max_width`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        content_max_width: Option<f64>,
    },
}

impl Quadrature {
    pub fn validate(&self) -> Result<()> {
        if let Quadrature::Composite {
            order,
            max_width,
            content_max_width,
        } = *self
        {
            if order == 0 || order > 64 {
                return Err(Error::InvalidArgument(format!(
                    "composite quadrature order must be in 1..=64, got {order}"
                )));
            }
            for w in [Some(max_width), content_max_width].into_iter().flatten() {
                if !(w.is_finite() && w > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "composite quadrature panel width must be positive, got {w}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Nodes and weights for an interval of the given width, as fractions of
    /// that width. Weights sum to one.
    pub fn axis_rule(&self, width: f64) -> AxisRule {
        match *self {
            Quadrature::Midpoint => AxisRule {
                offsets: vec![0.5],
                weights: vec![1.0],
            },
            Quadrature::Gauss2 => {
                let d = 0.5 / 3f64.sqrt();
                AxisRule {
                    offsets: vec![0.5 - d, 0.5 + d],
                    weights: vec![0.5, 0.5],
                }
            }
            Quadrature::Composite { order, max_width, .. } => {
                let panels = ((width / max_width).ceil() as usize).max(1);
                let (x, w) = gauss_legendre(order);
                let mut offsets = Vec::with_capacity(panels * order);
                let mut weights = Vec::with_capacity(panels * order);
                let pw = 1.0 / panels as f64;
                for p in 0..panels {
                    let lo = p as f64 * pw;
                    for (xk, wk) in x.iter().zip(&w) {
                        offsets.push(lo + 0.5 * pw * (xk + 1.0));
                        weights.push(0.5 * pw * wk);
                    }
                }
                AxisRule { offsets, weights }
            }
        }
    }

    /// Like [`Quadrature::axis_rule`], for the content axis.
    pub fn content_rule(&self, width: f64) -> AxisRule {
        match *self {
            Quadrature::Composite {
                order,
                content_max_width: Some(w),
                ..
            } => Quadrature::Composite {
                order,
                max_width: w,
                content_max_width: None,
            }
            .axis_rule(width),
            _ => self.axis_rule(width),
        }
    }
}

/// Quadrature nodes on the unit interval; see [`Quadrature::axis_rule`].
#[derive(Clone, Debug, PartialEq)]
pub struct AxisRule {
    pub offsets: Vec<f64>,
    pub weights: Vec<f64>,
}

impl AxisRule {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Absolute nodes and weights on `[lo, lo + width]`.
    pub fn nodes(&self, lo: f64, width: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.offsets
            .iter()
            .zip(&self.weights)
            .map(move |(o, w)| (lo + o * width, w * width))
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Cell averages on a [`Grid2D`], row-major in `i` then `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field2D {
    grid: Grid2D,
    values: Vec<f64>,
}

impl Field2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values but the grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Fills every cell from its 0-based indices.
    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.nr() {
            for j in 0..grid.na() {
                values.push(f(i, j));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.index(i, j);
        self.values[k] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let na = self.grid.na();
        &self.values[i * na..(i + 1) * na]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// `self - other`, for fields on the same grid.
    pub fn difference(&self, other: &Field2D) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::InvalidArgument("fields live on different grids".into()));
        }
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    /// First non-finite cell, 1-based.
    pub fn first_non_finite(&self) -> Option<(usize, usize, f64)> {
        let na = self.grid.na();
        self.values
            .iter()
            .position(|v| !v.is_finite())
            .map(|k| (k / na + 1, k % na + 1, self.values[k]))
    }

    /// Most negative cell below `-tol`, 1-based.
    pub fn worst_negative(&self, tol: f64) -> Option<(usize, usize, f64)> {
        let na = self.grid.na();
        let mut worst: Option<(usize, f64)> = None;
        for (k, &v) in self.values.iter().enumerate() {
            if v < -tol && worst.is_none_or(|(_, w)| v < w) {
                worst = Some((k, v));
            }
        }
        worst.map(|(k, v)| (k / na + 1, k % na + 1, v))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite() {
            Some((i, j, value)) => Err(Error::NonFinite { i, j, value }),
            None => Ok(()),
        }
    }

    /// Writes the `i,j,r_center,a_center,f` snapshot format.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,j,r_center,a_center,f")?;
        for i in 0..self.grid.nr() {
            let r = self.grid.size.center(i);
            for j in 0..self.grid.na() {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    i + 1,
                    j + 1,
                    fmt_f64(r),
                    fmt_f64(self.grid.content.center(j)),
                    fmt_f64(self.get(i, j))
                )?;
            }
        }
        Ok(())
    }
}

/// Cell averages on a [`Grid1D`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field1D {
    grid: Grid1D,
    values: Vec<f64>,
}

impl Field1D {
    pub fn zeros(grid: Grid1D) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.cells()],
        }
    }

    pub fn from_values(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values but the grid has {} cells",
                values.len(),
                grid.cells()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn difference(&self, other: &Field1D) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::InvalidArgument("fields live on different grids".into()));
        }
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    /// `sum |f_i| dr`.
    pub fn norm0(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.step()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::NonFinite {
                i: k + 1,
                j: 1,
                value: self.values[k],
            }),
            None => Ok(()),
        }
    }

    /// Writes the `i,r_center,f` snapshot format.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,r_center,f")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{},{}", i + 1, fmt_f64(self.grid.center(i)), fmt_f64(*v))?;
        }
        Ok(())
    }
}

/// Plasma-membrane molecular quantity `M`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MembraneState {
    pub m: f64,
}

impl MembraneState {
    pub fn new(m: f64) -> Result<Self> {
        if !(m.is_finite() && m >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "membrane quantity must be finite and nonnegative, got {m}"
            )));
        }
        Ok(Self { m })
    }
}

/// 17 significant digits, enough for a lossless round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Mean of `g` over every cell under `quad`.
pub fn cell_average<G>(g: G, grid: &Grid2D, quad: Quadrature) -> Result<Field2D>
where
    G: Fn(f64, f64) -> f64,
{
    quad.validate()?;
    let (dr, da) = (grid.dr(), grid.da());
    let rr = quad.axis_rule(dr);
    let ra = quad.content_rule(da);
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.nr() {
        let r0 = grid.size.left(i);
        for j in 0..grid.na() {
            let a0 = grid.content.left(j);
            let mut acc = 0.0;
            for (r, wr) in rr.offsets.iter().zip(&rr.weights) {
                let r = r0 + r * dr;
                for (a, wa) in ra.offsets.iter().zip(&ra.weights) {
                    let a = a0 + a * da;
                    let v = g(r, a);
                    if !v.is_finite() {
                        return Err(Error::Evaluation {
                            i: i + 1,
                            j: j + 1,
                            what: format!("value {v} at (r, a) = ({r}, {a})"),
                        });
                    }
                    acc += wr * wa * v;
                }
            }
            values.push(acc);
        }
    }
    Ok(Field2D { grid: *grid, values })
}

/// Mean of `g` over every cell of a 1D mesh.
pub fn cell_average_1d<G>(g: G, grid: &Grid1D, quad: Quadrature) -> Result<Field1D>
where
    G: Fn(f64) -> f64,
{
    quad.validate()?;
    let rule = quad.axis_rule(grid.step());
    let mut values = Vec::with_capacity(grid.cells());
    for i in 0..grid.cells() {
        let mut acc = 0.0;
        for (r, w) in rule.nodes(grid.left(i), grid.step()) {
            let v = g(r);
            if !v.is_finite() {
                return Err(Error::Evaluation {
                    i: i + 1,
                    j: 1,
                    what: format!("value {v} at r = {r}"),
                });
            }
            acc += w * v;
        }
        values.push(acc / grid.step());
    }
    Ok(Field1D { grid: *grid, values })
}
