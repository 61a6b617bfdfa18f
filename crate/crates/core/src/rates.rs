//! Rate profiles for endocytosis, removal, content reactions and membrane
//! reactions, plus the size-only coagulation kernel.
//!
//! Every profile is a named variant with parameters so scenarios can be
//! described in a config file. Profiles are pure and immutable.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid1D, Grid2D, Quadrature};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Normal density with location `mu` and scale `sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianDensity {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianDensity {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let g = Self { mu, sigma };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gaussian needs finite mu and sigma > 0, got mu = {}, sigma = {}",
                self.mu, self.sigma
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        INV_SQRT_2PI / self.sigma * (-0.5 * z * z).exp()
    }
}

pub fn eval_gaussian(p: &GaussianDensity, x: f64) -> Result<f64> {
    p.validate()?;
    Ok(p.value(x))
}

/// `((X + eps - x) / (X + eps))^(1/3) * (x / X)^(2/3)` on `[0, X + eps]`, zero elsewhere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub xbar: f64,
    pub eps: f64,
}

impl PowerProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.xbar.is_finite() && self.xbar > 0.0) || !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "power profile needs xbar > 0 and eps >= 0, got xbar = {}, eps = {}",
                self.xbar, self.eps
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let top = self.xbar + self.eps;
        if !(0.0..=top).contains(&x) {
            return 0.0;
        }
        let s = (x / self.xbar).cbrt();
        ((top - x) / top).cbrt() * s * s
    }
}

pub fn eval_power_profile(p: &PowerProfile, x: f64) -> f64 {
    p.value(x)
}

/// One term `weight * N_r(size) * N_a(content)`; without a content factor the
/// term is constant in `a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    #[serde(default = "one")]
    pub weight: f64,
    pub size: GaussianDensity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<GaussianDensity>,
}

fn one() -> f64 {
    1.0
}

/// Density profiles used for the endocytosis shape and for initial data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityProfile {
    #[default]
    Zero,
    /// `scale * sum_c weight_c * N_r(size_c) * N_a(content_c)`.
    GaussianMixture {
        scale: f64,
        components: Vec<GaussianComponent>,
    },
    /// `scale * N_r(size) * N_a(mean = r, content_sd)`: content proportional to size.
    SizeCoupledGaussian {
        scale: f64,
        size: GaussianDensity,
        content_sd: f64,
    },
}

impl DensityProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            DensityProfile::Zero => Ok(()),
            DensityProfile::GaussianMixture { scale, components } => {
                finite("scale", *scale)?;
                for c in components {
                    finite("weight", c.weight)?;
                    c.size.validate()?;
                    if let Some(ct) = &c.content {
                        ct.validate()?;
                    }
                }
                Ok(())
            }
            DensityProfile::SizeCoupledGaussian {
                scale,
                size,
                content_sd,
            } => {
                finite("scale", *scale)?;
                size.validate()?;
                GaussianDensity::new(0.0, *content_sd).map(|_| ())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            DensityProfile::Zero => true,
            DensityProfile::GaussianMixture { scale, components } => *scale == 0.0 || components.is_empty(),
            DensityProfile::SizeCoupledGaussian { scale, .. } => *scale == 0.0,
        }
    }

    #[inline]
    pub fn value(&self, r: f64, a: f64) -> f64 {
        match self {
            DensityProfile::Zero => 0.0,
            DensityProfile::GaussianMixture { scale, components } => {
                let mut s = 0.0;
                for c in components {
                    let mut t = c.weight * c.size.value(r);
                    if let Some(ct) = &c.content {
                        t *= ct.value(a);
                    }
                    s += t;
                }
                scale * s
            }
            DensityProfile::SizeCoupledGaussian {
                scale,
                size,
                content_sd,
            } => {
                let content = GaussianDensity {
                    mu: r,
                    sigma: *content_sd,
                };
                scale * size.value(r) * content.value(a)
            }
        }
    }

    /// Size-only evaluation for the 1D model: content factors are integrated
    /// out over the whole real line.
    #[inline]
    pub fn value_1d(&self, r: f64) -> f64 {
        match self {
            DensityProfile::Zero => 0.0,
            DensityProfile::GaussianMixture { scale, components } => {
                scale * components.iter().map(|c| c.weight * c.size.value(r)).sum::<f64>()
            }
            DensityProfile::SizeCoupledGaussian { scale, size, .. } => scale * size.value(r),
        }
    }
}

/// Removal rates (degradation `gamma`, recycling `lambda`). All depend on size only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum SinkProfile {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `scale * P_r(xbar, eps)`, optionally restricted to `r <= cutoff`.
    Power {
        scale: f64,
        power: PowerProfile,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<f64>,
    },
    /// `base + coeff * ((r - threshold) / width)^4 * 1{r > threshold}`.
    Wall {
        base: f64,
        coeff: f64,
        threshold: f64,
        width: f64,
    },
    /// `scale * P_r(xbar, eps) * 1{r <= threshold} + coeff * ((r - threshold) / width)^4 * 1{r > threshold}`.
    PowerWall {
        scale: f64,
        power: PowerProfile,
        coeff: f64,
        threshold: f64,
        width: f64,
    },
}

impl SinkProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            SinkProfile::Zero => Ok(()),
            SinkProfile::Constant { value } => nonneg("value", *value),
            SinkProfile::Power { scale, power, cutoff } => {
                nonneg("scale", *scale)?;
                if let Some(c) = cutoff {
                    finite("cutoff", *c)?;
                }
                power.validate()
            }
            SinkProfile::Wall {
                base,
                coeff,
                threshold,
                width,
            } => {
                nonneg("base", *base)?;
                nonneg("coeff", *coeff)?;
                finite("threshold", *threshold)?;
                positive("width", *width)
            }
            SinkProfile::PowerWall {
                scale,
                power,
                coeff,
                threshold,
                width,
            } => {
                nonneg("scale", *scale)?;
                nonneg("coeff", *coeff)?;
                finite("threshold", *threshold)?;
                positive("width", *width)?;
                power.validate()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            SinkProfile::Zero => true,
            SinkProfile::Constant { value } => *value == 0.0,
            SinkProfile::Power { scale, .. } => *scale == 0.0,
            SinkProfile::Wall { base, coeff, .. } => *base == 0.0 && *coeff == 0.0,
            SinkProfile::PowerWall { scale, coeff, .. } => *scale == 0.0 && *coeff == 0.0,
        }
    }

    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        match self {
            SinkProfile::Zero => 0.0,
            SinkProfile::Constant { value } => *value,
            SinkProfile::Power { scale, power, cutoff } => match cutoff {
                Some(c) if r > *c => 0.0,
                _ => scale * power.value(r),
            },
            SinkProfile::Wall {
                base,
                coeff,
                threshold,
                width,
            } => base + wall(r, *coeff, *threshold, *width),
            SinkProfile::PowerWall {
                scale,
                power,
                coeff,
                threshold,
                width,
            } => {
                if r > *threshold {
                    wall(r, *coeff, *threshold, *width)
                } else {
                    scale * power.value(r)
                }
            }
        }
    }
}

#[inline]
fn wall(r: f64, coeff: f64, threshold: f64, width: f64) -> f64 {
    if r > threshold {
        let z = (r - threshold) / width;
        coeff * z * z * z * z
    } else {
        0.0
    }
}

/// Content reaction speed `V(r, a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityProfile {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `(v_small 1{eps <= r <= r_bar} + v_large 1{r > r_bar}) * (1 - a / (p r))`.
    ///
    /// `eps` defaults to half a size step once bound to a grid.
    Saturating {
        v_small: f64,
        v_large: f64,
        p: f64,
        r_bar: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps: Option<f64>,
    },
}

impl VelocityProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            VelocityProfile::Zero => Ok(()),
            VelocityProfile::Constant { value } => finite("value", *value),
            VelocityProfile::Saturating {
                v_small,
                v_large,
                p,
                r_bar,
                eps,
            } => {
                finite("v_small", *v_small)?;
                finite("v_large", *v_large)?;
                positive("p", *p)?;
                finite("r_bar", *r_bar)?;
                if let Some(e) = eps {
                    positive("eps", *e)?;
                }
                Ok(())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            VelocityProfile::Zero => true,
            VelocityProfile::Constant { value } => *value == 0.0,
            VelocityProfile::Saturating { v_small, v_large, .. } => *v_small == 0.0 && *v_large == 0.0,
        }
    }

    #[inline]
    pub fn value(&self, r: f64, a: f64) -> f64 {
        match self {
            VelocityProfile::Zero => 0.0,
            VelocityProfile::Constant { value } => *value,
            VelocityProfile::Saturating {
                v_small,
                v_large,
                p,
                r_bar,
                eps,
            } => {
                let eps = eps.unwrap_or(0.0);
                let rate = if r > *r_bar {
                    *v_large
                } else if r >= eps && r > 0.0 {
                    *v_small
                } else {
                    return 0.0;
                };
                rate * (1.0 - a / (p * r))
            }
        }
    }

    /// Fills a missing `eps` with half the size step.
    pub fn bind_to_grid(&mut self, size: &Grid1D) {
        if let VelocityProfile::Saturating { eps, .. } = self {
            if eps.is_none() {
                *eps = Some(0.5 * size.step());
            }
        }
    }
}

/// Plasma-membrane reaction flux `J_M(M)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum MembraneFlux {
    #[default]
    Zero,
    /// `v_m * (m_bar - M) / m_bar`.
    Saturating { v_m: f64, m_bar: f64 },
}

impl MembraneFlux {
    pub fn validate(&self) -> Result<()> {
        match self {
            MembraneFlux::Zero => Ok(()),
            MembraneFlux::Saturating { v_m, m_bar } => {
                finite("v_m", *v_m)?;
                positive("m_bar", *m_bar)
            }
        }
    }

    #[inline]
    pub fn value(&self, m: f64) -> f64 {
        match self {
            MembraneFlux::Zero => 0.0,
            MembraneFlux::Saturating { v_m, m_bar } => v_m * (m_bar - m) / m_bar,
        }
    }
}

/// The model's rate functions. The endocytosis source is `M * alpha(r, a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RateSet {
    #[serde(default)]
    pub alpha: DensityProfile,
    #[serde(default)]
    pub gamma: SinkProfile,
    #[serde(default)]
    pub lambda: SinkProfile,
    #[serde(default)]
    pub velocity: VelocityProfile,
    #[serde(default)]
    pub membrane_flux: MembraneFlux,
}

/// Bounds used by the long-time condition, computed on the truncated grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    /// Smallest sampled `gamma`.
    pub gamma0: f64,
    /// Largest sampled `gamma`.
    pub gamma_inf: f64,
    /// `int alpha` over the truncated domain at `M = 1`, by the scheme's quadrature.
    pub alpha_l1: f64,
}

impl RateSet {
    /// True when only coagulation acts.
    pub fn is_zero(&self) -> bool {
        self.alpha.is_zero()
            && self.gamma.is_zero()
            && self.lambda.is_zero()
            && self.velocity.is_zero()
            && matches!(self.membrane_flux, MembraneFlux::Zero)
    }

    pub fn validate(&self) -> Result<()> {
        self.alpha
            .validate()
            .map_err(|e| Error::config("rates.alpha", e.to_string()))?;
        self.gamma
            .validate()
            .map_err(|e| Error::config("rates.gamma", e.to_string()))?;
        self.lambda
            .validate()
            .map_err(|e| Error::config("rates.lambda", e.to_string()))?;
        self.velocity
            .validate()
            .map_err(|e| Error::config("rates.velocity", e.to_string()))?;
        self.membrane_flux
            .validate()
            .map_err(|e| Error::config("rates.membrane_flux", e.to_string()))
    }

    #[inline]
    pub fn alpha(&self, r: f64, a: f64, m: f64) -> f64 {
        m * self.alpha.value(r, a)
    }

    #[inline]
    pub fn gamma(&self, r: f64, _a: f64) -> f64 {
        self.gamma.value(r)
    }

    #[inline]
    pub fn lambda(&self, r: f64, _a: f64) -> f64 {
        self.lambda.value(r)
    }

    #[inline]
    pub fn velocity(&self, r: f64, a: f64) -> f64 {
        self.velocity.value(r, a)
    }

    #[inline]
    pub fn membrane_flux(&self, m: f64) -> f64 {
        self.membrane_flux.value(m)
    }

    /// Rates with grid-dependent defaults filled in.
    pub fn bound_to(&self, size: &Grid1D) -> RateSet {
        let mut out = self.clone();
        out.velocity.bind_to_grid(size);
        out
    }

    /// Bounds on the 2D truncated domain.
    pub fn bounds(&self, grid: &Grid2D, quad: Quadrature) -> RateBounds {
        let (gamma0, gamma_inf) = self.gamma_range(&grid.size, quad);
        let rr = quad.axis_rule(grid.dr());
        let ra = quad.content_rule(grid.da());
        let mut alpha_l1 = 0.0;
        for i in 0..grid.nr() {
            for j in 0..grid.na() {
                for (r, wr) in rr.nodes(grid.size.left(i), grid.dr()) {
                    for (a, wa) in ra.nodes(grid.content.left(j), grid.da()) {
                        alpha_l1 += wr * wa * self.alpha.value(r, a);
                    }
                }
            }
        }
        RateBounds {
            gamma0,
            gamma_inf,
            alpha_l1,
        }
    }

    /// Bounds for the size-only model.
    pub fn bounds_1d(&self, grid: &Grid1D, quad: Quadrature) -> RateBounds {
        let (gamma0, gamma_inf) = self.gamma_range(grid, quad);
        let rule = quad.axis_rule(grid.step());
        let mut alpha_l1 = 0.0;
        for i in 0..grid.cells() {
            for (r, w) in rule.nodes(grid.left(i), grid.step()) {
                alpha_l1 += w * self.alpha.value_1d(r);
            }
        }
        RateBounds {
            gamma0,
            gamma_inf,
            alpha_l1,
        }
    }

    /// Min and max of `gamma` over edges, centers and quadrature nodes.
    fn gamma_range(&self, size: &Grid1D, quad: Quadrature) -> (f64, f64) {
        let rule = quad.axis_rule(size.step());
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut visit = |r: f64| {
            let g = self.gamma.value(r);
            lo = lo.min(g);
            hi = hi.max(g);
        };
        for e in 0..=size.cells() {
            visit(size.edge(e));
        }
        for i in 0..size.cells() {
            visit(size.center(i));
            for (r, _) in rule.nodes(size.left(i), size.step()) {
                visit(r);
            }
        }
        (lo, hi)
    }
}

/// User-supplied symmetric kernel.
#[derive(Clone)]
pub struct CustomKernel(pub Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomKernel(..)")
    }
}

impl PartialEq for CustomKernel {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

/// Coagulation kernel `kappa(r, r')`, depending on sizes only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelForm {
    Constant {
        k0: f64,
    },
    /// `k0 + k1 (r + r')`.
    Affine {
        k0: f64,
        k1: f64,
    },
    #[serde(skip)]
    Custom(CustomKernel),
}

impl KernelForm {
    pub fn custom(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        KernelForm::Custom(CustomKernel(Arc::new(f)))
    }

    #[inline]
    pub fn value(&self, r: f64, rp: f64) -> f64 {
        match self {
            KernelForm::Constant { k0 } => *k0,
            KernelForm::Affine { k0, k1 } => k0 + k1 * (r + rp),
            KernelForm::Custom(c) => (c.0)(r, rp),
        }
    }

    /// `(k0, k1)` when the kernel is affine (constants have `k1 = 0`).
    pub fn affine_coefficients(&self) -> Option<(f64, f64)> {
        match self {
            KernelForm::Constant { k0 } => Some((*k0, 0.0)),
            KernelForm::Affine { k0, k1 } => Some((*k0, *k1)),
            KernelForm::Custom(_) => None,
        }
    }
}

/// Kernel with its cell-center table `kappa_{k,k'} = kappa(r_k, r_k')`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    form: KernelForm,
    n: usize,
    table: Vec<f64>,
    kappa_inf: f64,
}

impl Kernel {
    pub fn form(&self) -> &KernelForm {
        &self.form
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `sup kappa` over `[0, R]^2`.
    pub fn kappa_inf(&self) -> f64 {
        self.kappa_inf
    }

    #[inline]
    pub fn at(&self, k: usize, kp: usize) -> f64 {
        self.table[k * self.n + kp]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.table[k * self.n..(k + 1) * self.n]
    }

    pub fn is_identically_zero(&self) -> bool {
        self.table.iter().all(|&v| v == 0.0)
    }
}

/// Tabulates `form` at the size-axis cell centers.
pub fn build_kernel_table(form: KernelForm, size: &Grid1D) -> Result<Kernel> {
    let n = size.cells();
    let extent = size.extent();
    let mut table = Vec::with_capacity(n * n);
    for k in 0..n {
        for kp in 0..n {
            let v = form.value(size.center(k), size.center(kp));
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidKernel(format!(
                    "kernel value {v} at cells ({}, {})",
                    k + 1,
                    kp + 1
                )));
            }
            table.push(v);
        }
    }
    let kappa_inf = match form {
        KernelForm::Constant { k0 } => k0,
        KernelForm::Affine { k0, k1 } => {
            let lo = k0.min(k0 + 2.0 * extent * k1);
            if lo < 0.0 {
                return Err(Error::InvalidKernel(format!(
                    "affine kernel is negative on [0, {extent}]^2 (minimum {lo})"
                )));
            }
            k0.max(k0 + 2.0 * extent * k1)
        }
        KernelForm::Custom(_) => table.iter().copied().fold(0.0, f64::max),
    };
    Ok(Kernel {
        form,
        n,
        table,
        kappa_inf,
    })
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("`{name}` must be finite, got {v}")))
    }
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("`{name}` must be nonnegative, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("`{name}` must be positive, got {v}")))
    }
}
