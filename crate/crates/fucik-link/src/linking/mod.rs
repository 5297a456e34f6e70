//! Linking geometries and the minimax critical point search.
//!
//! The energy E(u) = I(u,a,b)/2 - F(u) couples the jumping quadratic part
//! with a critical-growth potential: the critical power |u|^{2*}/2* in
//! dimension N >= 3, or the planar exponential (e^{u^2} - 1 - u^2)/2. The
//! search certifies a candidate by its criticality residual and by its level
//! sitting inside (0, c*), which is what the compactness threshold argument
//! actually uses; the inf over deformation classes itself is not computable.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::concentration::{
    annular_cutoff, moser_profile, sobolev_constant_radial, truncated_bubble_profile,
    BubbleParams, CutoffParams, MoserParams,
};
use crate::error::{FucikError, Result};
use crate::fucik::{n_level, m_level, tau_map, theta_map, FucikPoint, LevelOptions, ReduceOptions};
use crate::operator::{DiscreteOperator, GridFunction, SplitPart, Spectrum};

/// Overflow guard for the exponential potential: e^{u^2} overflows f64 just
/// past |u| = 26.6, so candidate values above this are rejected outright.
pub const EXP_GUARD: f64 = 26.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearityKind {
    CriticalPower,
    Exponential,
}

/// The critical-growth potential F and its derivative f.
#[derive(Debug, Clone)]
pub struct Nonlinearity {
    pub kind: NonlinearityKind,
    pub dim: usize,
}

impl Nonlinearity {
    pub fn critical_power(dim: usize) -> Result<Self> {
        if dim < 3 {
            return Err(FucikError::IncompatibleNonlinearity {
                dim,
                reason: "critical power |u|^{2N/(N-2)} needs N >= 3".into(),
            });
        }
        Ok(Self {
            kind: NonlinearityKind::CriticalPower,
            dim,
        })
    }

    pub fn exponential(dim: usize) -> Result<Self> {
        if dim != 2 {
            return Err(FucikError::IncompatibleNonlinearity {
                dim,
                reason: "the exponential potential is two-dimensional".into(),
            });
        }
        Ok(Self {
            kind: NonlinearityKind::Exponential,
            dim,
        })
    }

    /// 2* = 2N/(N-2) for the critical power; none for the exponential.
    pub fn two_star(&self) -> Option<f64> {
        match self.kind {
            NonlinearityKind::CriticalPower => {
                let n = self.dim as f64;
                Some(2.0 * n / (n - 2.0))
            }
            NonlinearityKind::Exponential => None,
        }
    }

    /// Potential density: F(u) = integral of this over the domain.
    pub(crate) fn density(&self, u: f64) -> Result<f64> {
        match self.kind {
            NonlinearityKind::CriticalPower => {
                let p = self.two_star().unwrap();
                Ok(u.abs().powf(p) / p)
            }
            NonlinearityKind::Exponential => {
                if u.abs() > EXP_GUARD {
                    return Err(FucikError::ExponentialOverflow { value: u, node: 0 });
                }
                let u2 = u * u;
                Ok(0.5 * (u2.exp() - 1.0 - u2))
            }
        }
    }

    /// f = F', the nonlinear term of the Euler-Lagrange equation.
    fn slope(&self, u: f64) -> Result<f64> {
        match self.kind {
            NonlinearityKind::CriticalPower => {
                let p = self.two_star().unwrap();
                Ok(u.abs().powf(p - 2.0) * u)
            }
            NonlinearityKind::Exponential => {
                if u.abs() > EXP_GUARD {
                    return Err(FucikError::ExponentialOverflow { value: u, node: 0 });
                }
                Ok(u * ((u * u).exp() - 1.0))
            }
        }
    }

    /// f', used by the Newton polish.
    fn slope_deriv(&self, u: f64) -> f64 {
        match self.kind {
            NonlinearityKind::CriticalPower => {
                let p = self.two_star().unwrap();
                (p - 1.0) * u.abs().powf(p - 2.0)
            }
            NonlinearityKind::Exponential => {
                let u2 = (u * u).min(EXP_GUARD * EXP_GUARD);
                u2.exp() * (1.0 + 2.0 * u * u) - 1.0
            }
        }
    }
}

/// The jumping quadratic term int [a (u^-)^2 + b (u^+)^2] and the potential
/// F(u), from raw nodal values. Fails on exponential overflow.
pub(crate) fn split_and_potential(
    vals: &[f64],
    a: f64,
    b: f64,
    nl: &Nonlinearity,
    vol: f64,
) -> Result<(f64, f64)> {
    let mut quad = 0.0;
    let mut pot = 0.0;
    for (i, &u) in vals.iter().enumerate() {
        let c = if u < 0.0 { a } else { b };
        quad += c * u * u;
        pot += nl.density(u).map_err(|e| match e {
            FucikError::ExponentialOverflow { value, .. } => {
                FucikError::ExponentialOverflow { value, node: i }
            }
            other => other,
        })?;
    }
    Ok((quad * vol, pot * vol))
}

/// Full energy E(u) = I(u,a,b)/2 - F(u) and the L2 representation of its
/// gradient, r = Au - b u^+ + a u^- - f(u).
pub fn energy(
    op: &Arc<DiscreteOperator>,
    u: &GridFunction,
    a: f64,
    b: f64,
    nl: &Nonlinearity,
) -> Result<(f64, GridFunction)> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(FucikError::InvalidParameters(format!(
            "(a,b) = ({a}, {b}) must be positive"
        )));
    }
    if nl.dim != op.mesh().dim() {
        return Err(FucikError::IncompatibleNonlinearity {
            dim: op.mesh().dim(),
            reason: format!("nonlinearity was built for dimension {}", nl.dim),
        });
    }
    let vol = op.mesh().cell_volume();
    let au = op.apply(u);
    let dnorm2 = au.l2_inner(u);
    let (quad, pot) = split_and_potential(u.values(), a, b, nl, vol)?;
    let value = 0.5 * (dnorm2 - quad) - pot;
    let mut grad = au;
    for (g, &ui) in grad.values_mut().iter_mut().zip(u.values()) {
        let c = if ui < 0.0 { a } else { b };
        *g -= c * ui + nl.slope(ui)?;
    }
    Ok((value, grad))
}

/// D-dual norm of an L2-represented functional: ||A^{-1} r||_D.
pub fn gradient_d_norm(op: &DiscreteOperator, r: &GridFunction) -> f64 {
    let z = op.solve(r);
    z.l2_inner(r).max(0.0).sqrt()
}

/// The compactness threshold c* with both the value used for classification
/// and the continuum reference.
#[derive(Debug, Clone, Serialize)]
pub struct CStarReport {
    pub value: f64,
    pub continuum: f64,
    /// Sobolev constant estimated on the mesh (critical power only).
    pub mesh_sobolev: Option<f64>,
    /// Continuum Sobolev constant from the bubble's exact quotient.
    pub continuum_sobolev: Option<f64>,
}

/// c* = 2 pi for the exponential; (1/N) S_N^{N/2} for the critical power,
/// with S_N estimated by minimizing the Rayleigh quotient on the mesh from a
/// sampled bubble when an operator is supplied. The mesh estimate is the
/// classification threshold since candidate energies carry the same
/// discretization bias.
pub fn c_star(nl: &Nonlinearity, op: Option<&Arc<DiscreteOperator>>) -> Result<CStarReport> {
    match nl.kind {
        NonlinearityKind::Exponential => Ok(CStarReport {
            value: 2.0 * std::f64::consts::PI,
            continuum: 2.0 * std::f64::consts::PI,
            mesh_sobolev: None,
            continuum_sobolev: None,
        }),
        NonlinearityKind::CriticalPower => {
            let n = nl.dim as f64;
            let s_cont = sobolev_constant_radial(nl.dim)?;
            let continuum = s_cont.powf(n / 2.0) / n;
            let mesh_sobolev = match op {
                Some(op) => Some(mesh_sobolev_estimate(op, nl)?),
                None => None,
            };
            let value = match mesh_sobolev {
                Some(s) => s.powf(n / 2.0) / n,
                None => continuum,
            };
            Ok(CStarReport {
                value,
                continuum,
                mesh_sobolev,
                continuum_sobolev: Some(s_cont),
            })
        }
    }
}

/// Rayleigh-quotient minimization ||u||_D^2 / |u|_{2*}^2 by nonlinear
/// inverse iteration u <- A^{-1}(|u|^{2*-2} u) from a sampled truncated
/// bubble.
fn mesh_sobolev_estimate(op: &Arc<DiscreteOperator>, nl: &Nonlinearity) -> Result<f64> {
    let mesh = op.mesh();
    let lengths = mesh.domain().lengths();
    let x0: Vec<f64> = lengths.iter().map(|&l| 0.5 * l).collect();
    let dist = lengths.iter().fold(f64::INFINITY, |m, &l| m.min(0.5 * l));
    let mu = 1.0 / dist;
    let eps = 0.1 * dist;
    let params = BubbleParams::new(nl.dim, eps, mu, x0)?;
    let mut u = truncated_bubble_profile(&params)?.sample(mesh)?;
    let p = nl.two_star().unwrap();
    let vol = mesh.cell_volume();
    let mut quotient = f64::INFINITY;
    for _ in 0..40 {
        let mass: f64 = u.values().iter().map(|&v| v.abs().powf(p)).sum::<f64>() * vol;
        let scale = mass.powf(1.0 / p);
        if !(scale > 0.0) {
            break;
        }
        u.scale(1.0 / scale);
        let au = op.apply(&u);
        let q = au.l2_inner(&u);
        if q >= quotient * (1.0 - 1e-10) {
            quotient = quotient.min(q);
            break;
        }
        quotient = q;
        let rhs =
            GridFunction::from_values(mesh, u.values().iter().map(|&v| v.abs().powf(p - 2.0) * v).collect())?;
        u = op.solve(&rhs);
    }
    Ok(quotient)
}

/// Which linking construction a geometry realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    /// b < nu_{l-1}(a): Q = N_{l-1} + spike ray, A = graph sphere of theta.
    BelowCurve,
    /// b >= mu_l(a): Q = B + spike ray with B the graph of tau over N_l.
    AboveCurve,
    /// Dimension 4: Q = T(N_{l-1}) + spike ray with T the annular cutoff.
    PerturbedT,
}

/// Spike choices for the geometry's ray direction.
#[derive(Debug, Clone)]
pub enum SpikeSpec {
    /// Moser log-peak with the coupling d = (log j)^{-1/4} (2D).
    Moser { j: f64 },
    /// Smoothly truncated bubble (N >= 3).
    Bubble { eps: f64, mu: f64 },
    /// A caller-supplied spike; degeneracy is an error instead of a retry.
    Given(GridFunction),
}

#[derive(Debug, Clone)]
pub struct GeometryOptions {
    /// Spike center; defaults to the domain center. Shifted automatically
    /// when the spike degenerates against the linking subspace.
    pub x0: Option<Vec<f64>>,
    pub level: LevelOptions,
    pub reduce: ReduceOptions,
    /// Relative D-norm below which a spike counts as degenerate.
    pub degeneracy_tol: f64,
    pub retries: usize,
    /// Admissible bound on the ||I - T|| estimate for perturbed geometries.
    pub t_defect_threshold: f64,
    /// Sample count for the rho selection over the graph sphere A.
    pub rho_samples: usize,
    pub seed: u64,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        Self {
            x0: None,
            level: LevelOptions {
                multistarts: 4,
                ..LevelOptions::default()
            },
            reduce: ReduceOptions::default(),
            degeneracy_tol: 1e-8,
            retries: 3,
            t_defect_threshold: 0.5,
            rho_samples: 16,
            seed: 0,
        }
    }
}

/// A verified linking geometry: the Q-patch data for the minimax search.
pub struct LinkingGeometry {
    pub kind: GeometryKind,
    pub a: f64,
    pub b: f64,
    pub level: usize,
    /// Curve-side slack of the below-curve construction; 0 for above-curve.
    pub delta: f64,
    /// Radius of the graph sphere A with inf_A E > 0.
    pub rho: f64,
    /// Cutoff scale of the perturbed map T, when applicable.
    pub mu: Option<f64>,
    pub spike: GridFunction,
    /// Linear part of the Q-patch: eigenfunctions (below/above) or their
    /// cutoff images (perturbed).
    pub basis: Vec<GridFunction>,
    /// Estimated operator defect ||I - T|| for perturbed geometries.
    pub i_minus_t: Option<f64>,
    /// Smallest sampled energy on A, recorded for the strict inequality.
    pub inf_a_energy: f64,
}

impl LinkingGeometry {
    /// The Q-patch point with the given linear coefficients and spike
    /// amplitude. Above-curve patches ride the graph of tau.
    pub fn q_point(&self, spec: &Spectrum, coeffs: &[f64], s: f64) -> Result<GridFunction> {
        let mut v = GridFunction::zeros(self.spike.mesh());
        for (j, &c) in coeffs.iter().enumerate() {
            v.axpy(c, &self.basis[j]);
        }
        if self.kind == GeometryKind::AboveCurve && coeffs.iter().any(|&c| c != 0.0) {
            let point = FucikPoint::new(self.a, self.b, self.level)?;
            let tau = tau_map(spec, &v, &point, &ReduceOptions::default())?;
            v = tau.input.add(&tau.output);
        }
        v.axpy(s, &self.spike);
        Ok(v)
    }
}

fn default_center(op: &DiscreteOperator) -> Vec<f64> {
    op.mesh().domain().lengths().iter().map(|&l| 0.5 * l).collect()
}

fn build_spike(
    op: &Arc<DiscreteOperator>,
    spike: &SpikeSpec,
    x0: &[f64],
) -> Result<GridFunction> {
    match spike {
        SpikeSpec::Moser { j } => {
            let params = MoserParams::coupled(*j, x0.to_vec())?;
            moser_profile(&params)?.sample(op.mesh())
        }
        SpikeSpec::Bubble { eps, mu } => {
            let params = BubbleParams::new(op.mesh().dim(), *eps, *mu, x0.to_vec())?;
            truncated_bubble_profile(&params)?.sample(op.mesh())
        }
        SpikeSpec::Given(u) => {
            if *u.mesh().as_ref() != *op.mesh().as_ref() {
                return Err(FucikError::MeshMismatch);
            }
            Ok(u.clone())
        }
    }
}

/// Random D-normalized direction in the M-part at the given split level.
fn random_m_direction(
    spec: &Spectrum,
    split: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GridFunction> {
    let op = spec.operator();
    let n = op.mesh().total();
    let vals: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    let u = GridFunction::from_values(op.mesh(), vals)?;
    let mut w = spec.project(split, &u, SplitPart::MPart)?;
    let nrm = op.d_norm(&w);
    if nrm < 1e-12 {
        return Err(FucikError::GeometryPrecondition(
            "degenerate random direction".into(),
        ));
    }
    w.scale(1.0 / nrm);
    Ok(w)
}

/// Largest rho in a 20-point dyadic grid with min over the sampled unit
/// graph sphere of E(rho u) > 0.
fn select_rho(
    op: &Arc<DiscreteOperator>,
    unit_points: &[GridFunction],
    a: f64,
    b: f64,
    nl: &Nonlinearity,
) -> Result<f64> {
    for k in 0..20 {
        let rho = 0.5f64.powi(k);
        let mut ok = true;
        for u in unit_points {
            let v = u.scaled(rho);
            match energy(op, &v, a, b, nl) {
                Ok((e, _)) if e > 0.0 => {}
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(rho);
        }
    }
    Err(FucikError::GeometryPrecondition(
        "no sphere radius with positive sampled energy on A".into(),
    ))
}

/// Constructs and verifies a linking geometry for the given curve side.
pub fn build_geometry(
    spec: &Spectrum,
    kind: GeometryKind,
    point: &FucikPoint,
    spike: &SpikeSpec,
    nl: &Nonlinearity,
    opts: &GeometryOptions,
) -> Result<LinkingGeometry> {
    let (lo, hi) = point.validate(spec)?;
    let op = spec.operator();
    if nl.dim != op.mesh().dim() {
        return Err(FucikError::IncompatibleNonlinearity {
            dim: op.mesh().dim(),
            reason: format!("nonlinearity was built for dimension {}", nl.dim),
        });
    }
    if kind == GeometryKind::PerturbedT && op.mesh().dim() != 4 {
        return Err(FucikError::GeometryPrecondition(
            "perturbed-map geometries are four-dimensional".into(),
        ));
    }
    let (a, b, l) = (point.a, point.b, point.level);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    // Curve-side preconditions through the level function signs:
    // n_{l-1} > 0 iff b < nu_{l-1}(a); m_l <= 0 iff b >= mu_l(a).
    let lopts = opts.level.clone();
    match kind {
        GeometryKind::BelowCurve | GeometryKind::PerturbedT => {
            let n = n_level(spec, point, &lopts)?;
            if n.value <= 0.0 {
                return Err(FucikError::GeometryPrecondition(format!(
                    "n_{}({a:.4}, {b:.4}) = {:.3e} <= 0; the point is not below the minimal curve",
                    l - 1,
                    n.value
                )));
            }
        }
        GeometryKind::AboveCurve => {
            let m = m_level(spec, point, &lopts)?;
            if m.value > 1e-8 {
                return Err(FucikError::GeometryPrecondition(format!(
                    "m_{l}({a:.4}, {b:.4}) = {:.3e} > 0; the point is not above the maximal curve",
                    m.value
                )));
            }
        }
    }

    // Delta slack: largest of 20 grid values keeping the rescaled point on
    // the closed good side (below-curve and perturbed constructions only).
    let delta = match kind {
        GeometryKind::AboveCurve => 0.0,
        _ => {
            let delta_max = 1.0 - a.max(b) / hi;
            let mut chosen = None;
            for k in (1..=20).rev() {
                let d = delta_max * k as f64 / 21.0;
                let (sa, sb) = (a / (1.0 - d), b / (1.0 - d));
                if sa.max(sb) >= hi || sa.min(sb) <= lo {
                    continue;
                }
                let scaled = FucikPoint::new(sa, sb, l)?;
                if let Ok(v) = n_level(spec, &scaled, &lopts) {
                    if v.value >= 0.0 {
                        chosen = Some(d);
                        break;
                    }
                }
            }
            chosen.ok_or_else(|| {
                FucikError::GeometryPrecondition(
                    "no delta slack keeps the rescaled point below the curve".into(),
                )
            })?
        }
    };

    // Spike with degeneracy retries on the center.
    let base_x0 = opts.x0.clone().unwrap_or_else(|| default_center(op));
    let lengths = op.mesh().domain().lengths().to_vec();
    let mut chosen: Option<(GridFunction, Vec<f64>)> = None;
    let mut last_err = String::new();
    for attempt in 0..=opts.retries {
        let shift = 0.07 * attempt as f64;
        let x0: Vec<f64> = base_x0
            .iter()
            .zip(&lengths)
            .map(|(&c, &len)| c + shift * len)
            .collect();
        let e = match build_spike(op, spike, &x0) {
            Ok(e) => e,
            Err(err) => {
                last_err = err.to_string();
                if matches!(spike, SpikeSpec::Given(_)) {
                    return Err(err);
                }
                continue;
            }
        };
        let e_norm = op.d_norm(&e);
        let degenerate = match kind {
            GeometryKind::BelowCurve => {
                let m_part = spec.project(l - 1, &e, SplitPart::MPart)?;
                op.d_norm(&m_part) < opts.degeneracy_tol * e_norm
            }
            GeometryKind::AboveCurve => {
                let mut bad = false;
                for sign in [1.0, -1.0] {
                    let es = e.scaled(sign);
                    let v = spec.project(l, &es, SplitPart::NPart)?;
                    let graph = if op.d_norm(&v) > 1e-12 * e_norm {
                        let tau = tau_map(spec, &v, point, &opts.reduce)?;
                        tau.input.add(&tau.output)
                    } else {
                        GridFunction::zeros(e.mesh())
                    };
                    if op.d_norm(&es.sub(&graph)) < opts.degeneracy_tol * e_norm {
                        bad = true;
                    }
                }
                bad
            }
            GeometryKind::PerturbedT => false,
        };
        if degenerate {
            last_err = "spike lies in the linking subspace".into();
            if matches!(spike, SpikeSpec::Given(_)) {
                return Err(FucikError::SpikeDegenerate(last_err));
            }
            continue;
        }
        chosen = Some((e, x0));
        break;
    }
    let (spike_fn, x0) = chosen.ok_or(FucikError::SpikeDegenerate(last_err))?;

    // Linear part of the Q-patch and the perturbed-map defect.
    let (basis, mu, i_minus_t) = match kind {
        GeometryKind::BelowCurve => {
            let basis: Vec<GridFunction> = (1..l).map(|j| spec.phi(j).clone()).collect();
            (basis, None, None)
        }
        GeometryKind::AboveCurve => {
            let basis: Vec<GridFunction> = (1..=l).map(|j| spec.phi(j).clone()).collect();
            (basis, None, None)
        }
        GeometryKind::PerturbedT => {
            let mu = match spike {
                SpikeSpec::Bubble { mu, .. } => *mu,
                _ => {
                    return Err(FucikError::GeometryPrecondition(
                        "perturbed geometries need a truncated-bubble spike".into(),
                    ))
                }
            };
            let cutoff = CutoffParams::new(mu, x0.clone())?;
            let mut images = Vec::with_capacity(l - 1);
            let mut defect = 0.0f64;
            // Defect over the basis and random unit combinations of it.
            let mut probes: Vec<GridFunction> = (1..l).map(|j| spec.phi(j).clone()).collect();
            for _ in 0..16 {
                let mut v = GridFunction::zeros(op.mesh());
                for j in 1..l {
                    v.axpy(rng.gen::<f64>() - 0.5, spec.phi(j));
                }
                let nrm = op.d_norm(&v);
                if nrm > 1e-12 {
                    v.scale(1.0 / nrm);
                    probes.push(v);
                }
            }
            for v in &probes {
                let nrm = op.d_norm(v);
                let scaled = v.scaled(1.0 / nrm);
                let img = annular_cutoff(&scaled, &cutoff)?;
                defect = defect.max(op.d_norm(&img.sub(&scaled)));
            }
            for j in 1..l {
                images.push(annular_cutoff(spec.phi(j), &cutoff)?);
            }
            if defect > opts.t_defect_threshold {
                return Err(FucikError::GeometryPrecondition(format!(
                    "||I - T|| estimate {defect:.3e} exceeds threshold {:.3e}; raise mu",
                    opts.t_defect_threshold
                )));
            }
            (images, Some(mu), Some(defect))
        }
    };

    // Rho: sample the graph sphere A at unit radius, then find the largest
    // dyadic radius with positive minimum energy.
    let scaled_point = if delta > 0.0 {
        FucikPoint::new(a / (1.0 - delta), b / (1.0 - delta), l)?
    } else {
        point.clone()
    };
    let mut unit_points = Vec::with_capacity(opts.rho_samples);
    let split = match kind {
        GeometryKind::AboveCurve => l,
        _ => l - 1,
    };
    for _ in 0..opts.rho_samples {
        let w = random_m_direction(spec, split, &mut rng)?;
        let u = match kind {
            GeometryKind::AboveCurve => w,
            _ => {
                let th = theta_map(spec, &w, &scaled_point, &opts.reduce)?;
                th.input.add(&th.output)
            }
        };
        unit_points.push(u);
    }
    let rho = select_rho(op, &unit_points, a, b, nl)?;
    let mut inf_a = f64::INFINITY;
    for u in &unit_points {
        let (e, _) = energy(op, &u.scaled(rho), a, b, nl)?;
        inf_a = inf_a.min(e);
    }

    Ok(LinkingGeometry {
        kind,
        a,
        b,
        level: l,
        delta,
        rho,
        mu,
        spike: spike_fn,
        basis,
        i_minus_t,
        inf_a_energy: inf_a,
    })
}

/// Mountain-pass geometry for a = b below lambda_1: the degenerate level-1
/// case of the below-curve construction, with an empty linear part.
pub fn mountain_pass_geometry(
    spec: &Spectrum,
    a: f64,
    b: f64,
    spike: &SpikeSpec,
    nl: &Nonlinearity,
    opts: &GeometryOptions,
) -> Result<LinkingGeometry> {
    let op = spec.operator();
    let lam1 = spec.lambda(1);
    if !(a > 0.0 && b > 0.0 && a.max(b) < lam1) {
        return Err(FucikError::GeometryPrecondition(format!(
            "mountain pass needs 0 < a, b < lambda_1 = {lam1:.6}, got ({a}, {b})"
        )));
    }
    let x0 = opts.x0.clone().unwrap_or_else(|| default_center(op));
    let spike_fn = build_spike(op, spike, &x0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut unit_points = Vec::with_capacity(opts.rho_samples);
    let n = op.mesh().total();
    for _ in 0..opts.rho_samples {
        let vals: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut u = GridFunction::from_values(op.mesh(), vals)?;
        let nrm = op.d_norm(&u);
        u.scale(1.0 / nrm);
        unit_points.push(u);
    }
    let rho = select_rho(op, &unit_points, a, b, nl)?;
    let mut inf_a = f64::INFINITY;
    for u in &unit_points {
        let (e, _) = energy(op, &u.scaled(rho), a, b, nl)?;
        inf_a = inf_a.min(e);
    }
    Ok(LinkingGeometry {
        kind: GeometryKind::BelowCurve,
        a,
        b,
        level: 1,
        delta: 0.5 * (1.0 - a.max(b) / lam1),
        rho,
        mu: None,
        spike: spike_fn,
        basis: Vec::new(),
        i_minus_t: None,
        inf_a_energy: inf_a,
    })
}

mod minimax;
pub use minimax::{
    minimax_search, verify_critical, Classification, CriticalReport, MinimaxOptions,
};
