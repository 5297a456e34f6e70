//! Concentration test functions and their scaling estimates.
//!
//! Builds the radial profiles used by the linking geometries — Talenti
//! bubbles, their smooth truncations, Moser log-peaks, and annular cutoffs of
//! low eigenfunctions — and verifies their integral scalings by adaptive
//! radial quadrature and log-log regression. The strict-level suprema checks
//! sit at the end and reuse the energy functional from the linking module.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{FucikError, Result};
use crate::operator::{GridFunction, Mesh};
use crate::quadrature;

/// Surface area of the unit sphere in R^N.
pub fn sphere_area(dim: usize) -> Result<f64> {
    Ok(match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        4 => 2.0 * PI * PI,
        5 => 8.0 * PI * PI / 3.0,
        6 => PI * PI * PI,
        _ => {
            return Err(FucikError::InvalidParameters(format!(
                "unsupported dimension {dim}"
            )))
        }
    })
}

/// Smooth step used to truncate bubbles: 1 for s <= 1/4, 0 for s >= 1/2.
pub fn xi(s: f64) -> f64 {
    if s <= 0.25 {
        1.0
    } else if s >= 0.5 {
        0.0
    } else {
        let x = (s - 0.25) / 0.25;
        1.0 - x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
    }
}

/// Derivative of `xi`.
pub fn xi_deriv(s: f64) -> f64 {
    if s <= 0.25 || s >= 0.5 {
        0.0
    } else {
        let x = (s - 0.25) / 0.25;
        -30.0 * x * x * (1.0 - x) * (1.0 - x) / 0.25
    }
}

/// Ramp width of the annular step `eta`. The plateau slope is
/// 1/(1/4 - RAMP) and must stay at or below 5, so the ramps take 0.04 each
/// out of the [3/4, 1] transition band.
const ETA_RAMP: f64 = 0.04;

fn eta_plateau_slope() -> f64 {
    1.0 / (0.25 - ETA_RAMP)
}

/// Smooth step for annular cutoffs: 0 for s <= 3/4, 1 for s >= 1, with
/// |eta'| <= 5. A plain quintic step over a band of width 1/4 would peak at
/// slope 7.5, so the derivative is instead a smoothed trapezoid: quintic
/// ramps of width `ETA_RAMP` up to a plateau whose height is fixed by the
/// unit-integral constraint.
pub fn eta(s: f64) -> f64 {
    let h = eta_plateau_slope();
    // Integral of the quintic smoothstep 6x^5 - 15x^4 + 10x^3 from 0 to x.
    let ramp_int = |x: f64| x * x * x * x * (x * x - 3.0 * x + 2.5);
    if s <= 0.75 {
        0.0
    } else if s < 0.75 + ETA_RAMP {
        h * ETA_RAMP * ramp_int((s - 0.75) / ETA_RAMP)
    } else if s < 1.0 - ETA_RAMP {
        h * (0.5 * ETA_RAMP + (s - 0.75 - ETA_RAMP))
    } else if s < 1.0 {
        1.0 - h * ETA_RAMP * ramp_int((1.0 - s) / ETA_RAMP)
    } else {
        1.0
    }
}

/// Derivative of `eta`; its maximum is the plateau slope 1/(1/4 - ramp) < 5.
pub fn eta_deriv(s: f64) -> f64 {
    let h = eta_plateau_slope();
    let smoothstep = |x: f64| x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
    if s <= 0.75 || s >= 1.0 {
        0.0
    } else if s < 0.75 + ETA_RAMP {
        h * smoothstep((s - 0.75) / ETA_RAMP)
    } else if s < 1.0 - ETA_RAMP {
        h
    } else {
        h * smoothstep((1.0 - s) / ETA_RAMP)
    }
}

/// Parameters of the (possibly truncated) Talenti bubble
/// u_eps(x) = c_N (eps/(eps^2 + |x|^2))^{(N-2)/2}.
#[derive(Debug, Clone)]
pub struct BubbleParams {
    pub dim: usize,
    pub eps: f64,
    /// Truncation scale; the truncated bubble vanishes for r >= 1/(2 mu).
    pub mu: f64,
    pub x0: Vec<f64>,
    /// Coupling exponent when mu = eps^{-gamma}; validated against the
    /// window (1/N, 1 - 2/(N-2)), which is empty below dimension 5.
    pub gamma: Option<f64>,
    /// Young-inequality exponent, diagnostic only.
    pub beta: Option<f64>,
}

impl BubbleParams {
    pub fn new(dim: usize, eps: f64, mu: f64, x0: Vec<f64>) -> Result<Self> {
        if dim < 3 {
            return Err(FucikError::InvalidParameters(format!(
                "bubble requires dimension >= 3, got {dim}"
            )));
        }
        if !(eps > 0.0) || !eps.is_finite() || !(mu > 0.0) || !mu.is_finite() {
            return Err(FucikError::InvalidParameters(format!(
                "bubble scales must be positive and finite, got eps = {eps}, mu = {mu}"
            )));
        }
        if x0.len() != dim {
            return Err(FucikError::InvalidParameters(format!(
                "center has {} coordinates in dimension {dim}",
                x0.len()
            )));
        }
        Ok(Self {
            dim,
            eps,
            mu,
            x0,
            gamma: None,
            beta: None,
        })
    }

    /// Couples mu = eps^{-gamma}. The admissible window (1/N, 1 - 2/(N-2))
    /// is empty for N = 4, so the coupling is only available from N = 5 up.
    pub fn coupled(dim: usize, eps: f64, gamma: f64, x0: Vec<f64>) -> Result<Self> {
        let n = dim as f64;
        let lo = 1.0 / n;
        let hi = 1.0 - 2.0 / (n - 2.0);
        if !(lo < hi) {
            return Err(FucikError::InvalidParameters(format!(
                "coupling window (1/N, 1 - 2/(N-2)) is empty in dimension {dim}"
            )));
        }
        if !(gamma > lo && gamma < hi) {
            return Err(FucikError::InvalidParameters(format!(
                "gamma = {gamma} outside ({lo}, {hi}) in dimension {dim}"
            )));
        }
        let mut p = Self::new(dim, eps, eps.powf(-gamma), x0)?;
        p.gamma = Some(gamma);
        Ok(p)
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        let n = self.dim as f64;
        let (lo, hi) = ((n + 2.0) / n, (n - 2.0) / 2.0);
        if !(beta > lo && beta < hi) {
            return Err(FucikError::InvalidParameters(format!(
                "beta = {beta} outside ({lo}, {hi}) in dimension {}",
                self.dim
            )));
        }
        self.beta = Some(beta);
        Ok(self)
    }

    /// c_N = [N(N-2)]^{(N-2)/4}, the constant making the bubble extremal.
    pub fn talenti_constant(&self) -> f64 {
        let n = self.dim as f64;
        (n * (n - 2.0)).powf((n - 2.0) / 4.0)
    }
}

/// Parameters of the Moser log-peak with unit Dirichlet norm (2D).
#[derive(Debug, Clone)]
pub struct MoserParams {
    pub j: f64,
    pub d: f64,
    pub x0: Vec<f64>,
}

impl MoserParams {
    pub fn new(j: f64, d: f64, x0: Vec<f64>) -> Result<Self> {
        if !(j >= 2.0) || !j.is_finite() {
            return Err(FucikError::InvalidParameters(format!(
                "Moser index j = {j} must be at least 2"
            )));
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(FucikError::InvalidParameters(format!(
                "Moser radius d = {d} must be positive"
            )));
        }
        if x0.len() != 2 {
            return Err(FucikError::InvalidParameters(
                "Moser peaks are two-dimensional".into(),
            ));
        }
        Ok(Self { j, d, x0 })
    }

    /// The coupling d = (log j)^{-1/4} used by the strict-level lemma.
    pub fn coupled(j: f64, x0: Vec<f64>) -> Result<Self> {
        let d = j.ln().powf(-0.25);
        Self::new(j, d, x0)
    }
}

/// Parameters of the annular cutoff v -> eta(mu |x - x0|) v(x).
#[derive(Debug, Clone)]
pub struct CutoffParams {
    pub mu: f64,
    pub x0: Vec<f64>,
}

impl CutoffParams {
    pub fn new(mu: f64, x0: Vec<f64>) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(FucikError::InvalidParameters(format!(
                "cutoff scale mu = {mu} must be positive"
            )));
        }
        Ok(Self { mu, x0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Bubble,
    TruncatedBubble,
    Moser,
}

/// A radial profile with exact value and derivative evaluators, used both
/// for quadrature and for sampling onto a mesh.
pub struct RadialProfile {
    pub kind: ProfileKind,
    pub dim: usize,
    pub x0: Vec<f64>,
    /// Radius beyond which the profile vanishes identically (infinite for
    /// the plain bubble).
    pub support: f64,
    /// Finest radial scale, used to seed the quadrature panel split.
    pub inner_scale: f64,
    value: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    deriv: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl RadialProfile {
    pub fn value(&self, r: f64) -> f64 {
        (self.value)(r)
    }

    pub fn deriv(&self, r: f64) -> f64 {
        (self.deriv)(r)
    }

    /// Samples the profile on the mesh interior, centered at x0. The support
    /// must fit inside the domain so the sample vanishes on the boundary.
    pub fn sample(&self, mesh: &Arc<Mesh>) -> Result<GridFunction> {
        if mesh.dim() != self.dim {
            return Err(FucikError::MeshMismatch);
        }
        let dist = boundary_distance(mesh, &self.x0)?;
        if self.support >= dist {
            return Err(FucikError::InvalidParameters(format!(
                "profile support radius {:.3e} reaches the boundary (distance {:.3e})",
                self.support, dist
            )));
        }
        Ok(GridFunction::sample(mesh, |x| {
            let r = x
                .iter()
                .zip(&self.x0)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            self.value(r)
        }))
    }
}

fn boundary_distance(mesh: &Arc<Mesh>, x0: &[f64]) -> Result<f64> {
    let lengths = mesh.domain().lengths();
    if x0.len() != lengths.len() {
        return Err(FucikError::MeshMismatch);
    }
    let mut dist = f64::INFINITY;
    for (&c, &l) in x0.iter().zip(lengths) {
        if !(c > 0.0 && c < l) {
            return Err(FucikError::InvalidParameters(format!(
                "center coordinate {c} outside (0, {l})"
            )));
        }
        dist = dist.min(c).min(l - c);
    }
    Ok(dist)
}

/// The plain Talenti bubble; infinite support, quadrature use only.
pub fn bubble_profile(p: &BubbleParams) -> Result<RadialProfile> {
    let (eps, cn) = (p.eps, p.talenti_constant());
    let pw = (p.dim as f64 - 2.0) / 2.0;
    let nm2 = p.dim as f64 - 2.0;
    Ok(RadialProfile {
        kind: ProfileKind::Bubble,
        dim: p.dim,
        x0: p.x0.clone(),
        support: f64::INFINITY,
        inner_scale: eps,
        value: Box::new(move |r| cn * (eps / (eps * eps + r * r)).powf(pw)),
        deriv: Box::new(move |r| {
            let u = cn * (eps / (eps * eps + r * r)).powf(pw);
            -nm2 * r / (eps * eps + r * r) * u
        }),
    })
}

/// The smoothly truncated bubble xi(mu r) u_eps(r); vanishes for
/// r >= 1/(2 mu).
pub fn truncated_bubble_profile(p: &BubbleParams) -> Result<RadialProfile> {
    let (eps, mu, cn) = (p.eps, p.mu, p.talenti_constant());
    let pw = (p.dim as f64 - 2.0) / 2.0;
    let nm2 = p.dim as f64 - 2.0;
    let bubble = move |r: f64| cn * (eps / (eps * eps + r * r)).powf(pw);
    Ok(RadialProfile {
        kind: ProfileKind::TruncatedBubble,
        dim: p.dim,
        x0: p.x0.clone(),
        support: 0.5 / mu,
        inner_scale: eps.min(0.25 / mu),
        value: Box::new(move |r| xi(mu * r) * bubble(r)),
        deriv: Box::new(move |r| {
            let u = bubble(r);
            mu * xi_deriv(mu * r) * u + xi(mu * r) * (-nm2 * r / (eps * eps + r * r)) * u
        }),
    })
}

/// The Moser log-peak with unit Dirichlet norm; vanishes for r >= d.
pub fn moser_profile(p: &MoserParams) -> Result<RadialProfile> {
    let (j, d) = (p.j, p.d);
    let logj = j.ln();
    let norm = 1.0 / (2.0 * PI).sqrt();
    Ok(RadialProfile {
        kind: ProfileKind::Moser,
        dim: 2,
        x0: p.x0.clone(),
        support: d,
        inner_scale: d / j,
        value: Box::new(move |r| {
            if r <= d / j {
                norm * logj.sqrt()
            } else if r < d {
                norm * (d / r).ln() / logj.sqrt()
            } else {
                0.0
            }
        }),
        deriv: Box::new(move |r| {
            if r > d / j && r < d {
                -norm / (logj.sqrt() * r)
            } else {
                0.0
            }
        }),
    })
}

/// Applies the annular cutoff eta(mu |x - x0|) to a mesh function. The
/// result agrees with the base outside B_{1/mu}(x0) and vanishes inside
/// B_{3/(4 mu)}(x0).
pub fn annular_cutoff(base: &GridFunction, p: &CutoffParams) -> Result<GridFunction> {
    let mesh = base.mesh();
    boundary_distance(mesh, &p.x0)?;
    let mut out = base.clone();
    for (i, v) in out.values_mut().iter_mut().enumerate() {
        let x = mesh.node(i);
        let r = x
            .iter()
            .zip(&p.x0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        *v *= eta(p.mu * r);
    }
    Ok(out)
}

/// Integral kinds supported by the radial quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegralKind {
    /// int |grad u|^2
    GradSquared,
    /// int |grad u|
    GradAbs,
    /// int u^p (profiles are nonnegative)
    Power(f64),
}

/// Adaptive radial quadrature of one integral of the profile over R^N with
/// the surface-measure factor; relative error <= 1e-8.
pub fn radial_integral(profile: &RadialProfile, kind: IntegralKind) -> Result<f64> {
    let area = sphere_area(profile.dim)?;
    let nm1 = profile.dim as f64 - 1.0;
    // The plain bubble has algebraically decaying tails; truncate far out
    // relative to the concentration scale. All integrands we request decay
    // at least like r^{-(N+1)} there for N >= 3.
    let hi = if profile.support.is_finite() {
        profile.support
    } else {
        profile.inner_scale * 1e9
    };
    let lo = 0.0;
    let inner = profile.inner_scale * 1e-3;
    let f = |r: f64| -> f64 {
        let g = match kind {
            IntegralKind::GradSquared => {
                let d = profile.deriv(r);
                d * d
            }
            IntegralKind::GradAbs => profile.deriv(r).abs(),
            IntegralKind::Power(p) => profile.value(r).powf(p),
        };
        g * r.powf(nm1)
    };
    let (v, err) = quadrature::integrate_log_split(f, lo, hi, inner, 1e-9)?;
    if err > 1e-8 * v.abs().max(1e-300) && err > 1e-14 {
        return Err(FucikError::QuadratureFailure(format!(
            "radial integral error {err:.3e} exceeds tolerance (value {v:.3e})"
        )));
    }
    Ok(area * v)
}

/// The continuum Sobolev constant S_N, evaluated from the exact bubble's
/// Rayleigh quotient by radial quadrature (the quotient is independent
/// of eps).
pub fn sobolev_constant_radial(dim: usize) -> Result<f64> {
    let p = BubbleParams::new(dim, 1.0, 1.0, vec![0.5; dim])?;
    let prof = bubble_profile(&p)?;
    let grad = radial_integral(&prof, IntegralKind::GradSquared)?;
    let two_star = 2.0 * dim as f64 / (dim as f64 - 2.0);
    let mass = radial_integral(&prof, IntegralKind::Power(two_star))?;
    Ok(grad / mass.powf(2.0 / two_star))
}

/// A fitted power law value = constant * abscissa^exponent in log-log
/// coordinates, compared against a target exponent.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingFit {
    pub quantity: String,
    pub abscissae: Vec<f64>,
    pub values: Vec<f64>,
    pub exponent: f64,
    pub constant: f64,
    pub target: f64,
    /// Root-mean-square log residual of the fit.
    pub residual: f64,
    pub pass: bool,
}

/// Least-squares power-law fit; requires at least 5 abscissae spanning 1.5
/// decades and positive values. `tol` is the allowed |exponent - target|.
pub fn fit_scaling(
    quantity: &str,
    series: &[(f64, f64)],
    target: f64,
    tol: f64,
) -> Result<ScalingFit> {
    let decades = if series.is_empty() {
        0.0
    } else {
        let lo = series.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = series.iter().map(|p| p.0).fold(0.0f64, f64::max);
        (hi / lo).log10()
    };
    if series.len() < 5 || !(decades >= 1.5) {
        return Err(FucikError::InsufficientDecadeSpan {
            points: series.len(),
            decades,
        });
    }
    if series.iter().any(|&(x, y)| !(x > 0.0) || !(y > 0.0)) {
        return Err(FucikError::InvalidParameters(
            "power-law fit needs positive abscissae and values".into(),
        ));
    }
    let n = series.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in series {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - exponent * sx) / n;
    let residual = (series
        .iter()
        .map(|&(x, y)| {
            let e = y.ln() - (intercept + exponent * x.ln());
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(ScalingFit {
        quantity: quantity.to_string(),
        abscissae: series.iter().map(|p| p.0).collect(),
        values: series.iter().map(|p| p.1).collect(),
        exponent,
        constant: intercept.exp(),
        target,
        residual,
        pass: (exponent - target).abs() <= tol,
    })
}

/// CSV rows for a set of fits: `quantity,abscissa,value,fit_exponent,target,pass`.
pub fn fits_to_csv(fits: &[ScalingFit]) -> String {
    let mut out = String::from("quantity,abscissa,value,fit_exponent,target,pass\n");
    for f in fits {
        for (&x, &y) in f.abscissae.iter().zip(&f.values) {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.6},{:.6},{}\n",
                f.quantity, x, y, f.exponent, f.target, f.pass
            ));
        }
    }
    out
}

mod sup_energy;
pub use sup_energy::{
    sup_energy_check, StrictLevelLemma, SupEnergyOptions, SupEnergyReport,
};

#[cfg(test)]
mod tests;
