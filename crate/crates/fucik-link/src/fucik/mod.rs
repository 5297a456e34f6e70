//! The jumping functional I(u,a,b), its reduction maps theta and tau, the
//! level functions n_{l-1} and m_l, and bisection tracing of the minimal and
//! maximal spectral curves nu_{l-1}, mu_l inside Q_l.

pub mod oracle1d;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FucikError, Result};
use crate::krylov;
use crate::operator::{GridFunction, Spectrum};

/// A parameter point (a,b) at level l, constrained to the open square
/// Q_l = (lambda_{l-1}, lambda_{l+1})^2 of the active spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FucikPoint {
    pub a: f64,
    pub b: f64,
    pub level: usize,
}

impl FucikPoint {
    pub fn new(a: f64, b: f64, level: usize) -> Result<Self> {
        if !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(FucikError::InvalidParameters(format!(
                "(a,b) = ({a}, {b}) must be positive and finite"
            )));
        }
        if level < 2 {
            return Err(FucikError::InvalidParameters(format!(
                "level {level} must be at least 2"
            )));
        }
        Ok(Self { a, b, level })
    }

    /// Checks the Q_l window against a spectrum and returns its bounds
    /// (lambda_{l-1}, lambda_{l+1}). Both eigenspace splittings used by the
    /// reduction maps must avoid multiplicity clusters.
    pub fn validate(&self, spec: &Spectrum) -> Result<(f64, f64)> {
        spec.check_split_level(self.level - 1)?;
        spec.check_split_level(self.level)?;
        let lo = spec.lambda(self.level - 1);
        let hi = spec.lambda(self.level + 1);
        if !(self.a > lo && self.a < hi && self.b > lo && self.b < hi) {
            return Err(FucikError::PointOutsideQl {
                a: self.a,
                b: self.b,
                lo,
                hi,
                level: self.level,
            });
        }
        Ok((lo, hi))
    }
}

/// Which of the two curves through (lambda_l, lambda_l) is being traced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Nu,
    Mu,
}

impl std::fmt::Display for CurveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CurveKind::Nu => "nu",
            CurveKind::Mu => "mu",
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nodal slope vector: c_i = b where u_i >= 0, c_i = a where u_i < 0, so
/// that b u^+ - a u^- = c .* u holds nodally.
fn slopes(u: &[f64], a: f64, b: f64, out: &mut [f64]) {
    for (c, &v) in out.iter_mut().zip(u) {
        *c = if v < 0.0 { a } else { b };
    }
}

fn i_value_raw(u: &[f64], au: &[f64], a: f64, b: f64, vol: f64) -> f64 {
    let mut acc = 0.0;
    for (&ui, &aui) in u.iter().zip(au) {
        let c = if ui < 0.0 { a } else { b };
        acc += (aui - c * ui) * ui;
    }
    acc * vol
}

/// Positive/negative parts, the value of the jumping functional, and its
/// L2-representation gradient 2(Au - b u^+ + a u^-).
#[derive(Debug, Clone)]
pub struct PartsAndI {
    pub plus: GridFunction,
    pub minus: GridFunction,
    pub value: f64,
    pub gradient: GridFunction,
}

pub fn parts_and_i(spec: &Spectrum, u: &GridFunction, a: f64, b: f64) -> Result<PartsAndI> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(FucikError::InvalidParameters(format!(
            "(a,b) = ({a}, {b}) must be positive"
        )));
    }
    let op = spec.operator();
    let au = op.apply(u);
    let (plus, minus) = u.split_signs();
    let value = op.d_inner(u, u)? - a * minus.l2_inner(&minus) - b * plus.l2_inner(&plus);
    let mut gradient = au;
    for ((g, p), m) in gradient
        .values_mut()
        .iter_mut()
        .zip(plus.values())
        .zip(minus.values())
    {
        *g = 2.0 * (*g - b * p + a * m);
    }
    Ok(PartsAndI {
        plus,
        minus,
        value,
        gradient,
    })
}

/// Tolerances for the reduction-map solvers.
#[derive(Debug, Clone)]
pub struct ReduceOptions {
    /// D-norm tolerance on the projected gradient, relative to max(1, ||input||_D).
    pub tol: f64,
    pub max_iter: usize,
    /// Relative residual tolerance of the inner conjugate-gradient solves.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100,
            cg_tol: 1e-12,
            cg_max_iter: 600,
        }
    }
}

/// Result of a theta or tau solve.
#[derive(Debug, Clone)]
pub struct ReductionSolve {
    pub input: GridFunction,
    pub output: GridFunction,
    /// D-norm of the gradient projected onto the subspace optimized over.
    pub residual: f64,
    pub iterations: usize,
}

struct ThetaSolve {
    coeffs: Vec<f64>,
    u: Vec<f64>,
    au: Vec<f64>,
    value: f64,
    residual: f64,
    iterations: usize,
}

/// Damped semismooth Newton for the concave maximization over N_{l-1}.
/// Works on raw nodal slices so callers can reuse precomputed A-applies.
fn theta_core(
    spec: &Spectrum,
    level: usize,
    a: f64,
    b: f64,
    w: &[f64],
    aw: &[f64],
    warm: Option<&[f64]>,
    opts: &ReduceOptions,
) -> Result<ThetaSolve> {
    let op = spec.operator();
    let vol = op.mesh().cell_volume();
    let n = w.len();
    let k = level - 1;
    let lam: Vec<f64> = (1..=k).map(|j| spec.lambda(j)).collect();
    let phis: Vec<&[f64]> = (1..=k).map(|j| spec.phi(j).values()).collect();

    let mut coeffs = match warm {
        Some(c) if c.len() == k => c.to_vec(),
        _ => vec![0.0; k],
    };
    let mut u = w.to_vec();
    let mut au = aw.to_vec();
    for j in 0..k {
        for i in 0..n {
            u[i] += coeffs[j] * phis[j][i];
            au[i] += coeffs[j] * lam[j] * phis[j][i];
        }
    }
    let scale = (vol * dot(aw, w)).max(0.0).sqrt().max(1.0);
    let mut value = i_value_raw(&u, &au, a, b, vol);
    let mut c = vec![0.0; n];
    let mut residual = f64::INFINITY;

    for iter in 1..=opts.max_iter {
        slopes(&u, a, b, &mut c);
        // Gradient components along the N-basis and the D-norm of the
        // N-projected Riesz representative.
        let mut g = vec![0.0; k];
        for (j, phi) in phis.iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..n {
                acc += (au[i] - c[i] * u[i]) * phi[i];
            }
            g[j] = 2.0 * vol * acc;
        }
        residual = g
            .iter()
            .zip(&lam)
            .map(|(gj, &l)| gj * gj / l)
            .sum::<f64>()
            .sqrt();
        if residual <= opts.tol * scale {
            return Ok(ThetaSolve {
                coeffs,
                u,
                au,
                value,
                residual,
                iterations: iter - 1,
            });
        }

        // Piecewise Hessian H_jm = 2(lambda_j delta_jm - <c phi_j, phi_m>).
        let mut h = DMatrix::zeros(k, k);
        for j in 0..k {
            for m in j..k {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += c[i] * phis[j][i] * phis[m][i];
                }
                let mut v = -2.0 * vol * acc;
                if j == m {
                    v += 2.0 * lam[j];
                }
                h[(j, m)] = v;
                h[(m, j)] = v;
            }
        }
        let minus_g = DVector::from_iterator(k, g.iter().map(|x| -x));
        let d: Vec<f64> = match h.lu().solve(&minus_g) {
            Some(d) => d.iter().copied().collect(),
            None => {
                return Err(FucikError::ReductionNonConvergence {
                    iterations: iter,
                    residual,
                })
            }
        };
        let mut gd = dot(&g, &d);
        let d = if gd > 0.0 {
            d
        } else {
            // Fallback to the D-metric steepest ascent direction.
            let d: Vec<f64> = g.iter().zip(&lam).map(|(gj, &l)| gj / (2.0 * l)).collect();
            gd = dot(&g, &d);
            d
        };

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut ut = u.clone();
            let mut aut = au.clone();
            for j in 0..k {
                let s = t * d[j];
                for i in 0..n {
                    ut[i] += s * phis[j][i];
                    aut[i] += s * lam[j] * phis[j][i];
                }
            }
            let vt = i_value_raw(&ut, &aut, a, b, vol);
            if vt >= value + 1e-4 * t * gd - 1e-14 * (1.0 + value.abs()) {
                for j in 0..k {
                    coeffs[j] += t * d[j];
                }
                u = ut;
                au = aut;
                value = vt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(FucikError::ReductionNonConvergence {
                iterations: iter,
                residual,
            });
        }
    }
    Err(FucikError::ReductionNonConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

struct TauSolve {
    w: Vec<f64>,
    u: Vec<f64>,
    au: Vec<f64>,
    value: f64,
    residual: f64,
    iterations: usize,
}

/// Sign-pattern-fixed projected conjugate gradients for the convex
/// minimization over M_l: freeze the nodal slopes, solve the resulting
/// linear problem on M_l exactly, refresh the slopes, repeat.
fn tau_core(
    spec: &Spectrum,
    level: usize,
    a: f64,
    b: f64,
    v: &[f64],
    av: &[f64],
    warm: Option<&[f64]>,
    opts: &ReduceOptions,
) -> Result<TauSolve> {
    let op = spec.operator();
    let vol = op.mesh().cell_volume();
    let n = v.len();
    let l = level;
    let lam: Vec<f64> = (1..=l).map(|j| spec.lambda(j)).collect();
    let phis: Vec<&[f64]> = (1..=l).map(|j| spec.phi(j).values()).collect();

    let project_out = |x: &mut [f64]| {
        for phi in &phis {
            let p = vol * dot(x, phi);
            for (xi, &pi) in x.iter_mut().zip(*phi) {
                *xi -= p * pi;
            }
        }
    };

    let mut w = warm.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    project_out(&mut w);
    let scale = (vol * dot(av, v)).max(0.0).sqrt().max(1.0);
    let mut aw = vec![0.0; n];
    op.apply_into(&w, &mut aw);
    let mut u: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
    let mut au: Vec<f64> = av.iter().zip(&aw).map(|(a, b)| a + b).collect();
    let mut value = i_value_raw(&u, &au, a, b, vol);
    let mut c = vec![0.0; n];

    // Gradient, its M_l-projected Riesz D-norm, refreshed after each step.
    let mut r = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let refresh =
        |u: &[f64], au: &[f64], c: &mut [f64], r: &mut [f64], residual: &mut f64| {
            slopes(u, a, b, c);
            for i in 0..u.len() {
                r[i] = 2.0 * (au[i] - c[i] * u[i]);
            }
            // Project the gradient and its Riesz representative onto M_l
            // explicitly before pairing them; the N-part of the gradient is
            // not small here, and the subtracted-scalar form of the same
            // quantity cancels catastrophically near the optimum.
            let mut z = r.to_vec();
            op.solve_in_place(&mut z);
            let mut rm = r.to_vec();
            for (j, phi) in phis.iter().enumerate() {
                let gj = vol * dot(r, phi);
                for ((zi, ri), &pi) in z.iter_mut().zip(rm.iter_mut()).zip(*phi) {
                    *zi -= gj / lam[j] * pi;
                    *ri -= gj * pi;
                }
            }
            *residual = (vol * dot(&rm, &z)).max(0.0).sqrt();
        };
    refresh(&u, &au, &mut c, &mut r, &mut residual);

    for outer in 1..=opts.max_iter {
        if residual <= opts.tol * scale {
            return Ok(TauSolve {
                w,
                u,
                au,
                value,
                residual,
                iterations: outer - 1,
            });
        }
        // Frozen-slope linear subproblem on M_l, solved by projected PCG
        // with the exact inverse as preconditioner.
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            rhs[i] = -(av[i] - c[i] * v[i]);
        }
        project_out(&mut rhs);
        let w_cand = {
            let c_ref = &c;
            let mut apply = |x: &[f64], out: &mut [f64]| {
                op.apply_into(x, out);
                for i in 0..n {
                    out[i] -= c_ref[i] * x[i];
                }
                for phi in &phis {
                    let p = vol * dot(out, phi);
                    for (oi, &pi) in out.iter_mut().zip(*phi) {
                        *oi -= p * pi;
                    }
                }
            };
            let mut precond = |x: &[f64], out: &mut [f64]| {
                out.copy_from_slice(x);
                op.solve_in_place(out);
                for phi in &phis {
                    let p = vol * dot(out, phi);
                    for (oi, &pi) in out.iter_mut().zip(*phi) {
                        *oi -= p * pi;
                    }
                }
            };
            let (w_new, _, _) = krylov::pcg(
                &mut apply,
                &mut precond,
                &rhs,
                Some(&w),
                opts.cg_tol,
                opts.cg_max_iter,
            );
            w_new
        };
        let mut delta: Vec<f64> = w_cand.iter().zip(&w).map(|(a, b)| a - b).collect();
        project_out(&mut delta);
        let mut adelta = vec![0.0; n];
        op.apply_into(&delta, &mut adelta);
        // The frozen model matches I's value and gradient at the current
        // iterate, so the subproblem minimizer is a descent direction; a
        // line search on the true (convex) value rules out pattern cycling.
        let gd = vol * dot(&r, &delta);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let ut: Vec<f64> = u.iter().zip(&delta).map(|(ui, di)| ui + t * di).collect();
            let aut: Vec<f64> = au.iter().zip(&adelta).map(|(ai, di)| ai + t * di).collect();
            let vt = i_value_raw(&ut, &aut, a, b, vol);
            if vt <= value + 1e-4 * t * gd + 1e-14 * (1.0 + value.abs()) {
                for i in 0..n {
                    w[i] += t * delta[i];
                    aw[i] += t * adelta[i];
                }
                u = ut;
                au = aut;
                value = vt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        refresh(&u, &au, &mut c, &mut r, &mut residual);
    }
    if residual <= opts.tol * scale {
        return Ok(TauSolve {
            w,
            u,
            au,
            value,
            residual,
            iterations: opts.max_iter,
        });
    }
    Err(FucikError::ReductionNonConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

fn subspace_violation(spec: &Spectrum, count: usize, u: &GridFunction, keep_low: bool) -> f64 {
    let mut viol: f64 = 0.0;
    if keep_low {
        // Input must live in the high part: any low component is a violation.
        for j in 1..=count {
            viol = viol.max(u.l2_inner(spec.phi(j)).abs());
        }
    } else {
        // Input must live in the low part: measure what projection removes.
        let mut rest = u.clone();
        for j in 1..=count {
            let c = rest.l2_inner(spec.phi(j));
            rest.axpy(-c, spec.phi(j));
        }
        viol = rest.l2_norm();
    }
    viol
}

/// theta(w,a,b): the unique maximizer of v -> I(v + w, a, b) over N_{l-1}.
pub fn theta_map(
    spec: &Spectrum,
    w: &GridFunction,
    point: &FucikPoint,
    opts: &ReduceOptions,
) -> Result<ReductionSolve> {
    point.validate(spec)?;
    let viol = subspace_violation(spec, point.level - 1, w, true);
    if viol > 1e-6 * w.l2_norm().max(1.0) {
        return Err(FucikError::InvalidParameters(format!(
            "theta input has N_{} component of size {viol:.3e}; project it out first",
            point.level - 1
        )));
    }
    let aw = spec.operator().apply(w);
    let sol = theta_core(
        spec,
        point.level,
        point.a,
        point.b,
        w.values(),
        aw.values(),
        None,
        opts,
    )?;
    let mut output = GridFunction::zeros(w.mesh());
    for (j, &cj) in sol.coeffs.iter().enumerate() {
        output.axpy(cj, spec.phi(j + 1));
    }
    Ok(ReductionSolve {
        input: w.clone(),
        output,
        residual: sol.residual,
        iterations: sol.iterations,
    })
}

/// tau(v,a,b): the unique minimizer of w -> I(v + w, a, b) over M_l.
pub fn tau_map(
    spec: &Spectrum,
    v: &GridFunction,
    point: &FucikPoint,
    opts: &ReduceOptions,
) -> Result<ReductionSolve> {
    point.validate(spec)?;
    let viol = subspace_violation(spec, point.level, v, false);
    if viol > 1e-6 * v.l2_norm().max(1.0) {
        return Err(FucikError::InvalidParameters(format!(
            "tau input has M_{} component of size {viol:.3e}; project it out first",
            point.level
        )));
    }
    let av = spec.operator().apply(v);
    let sol = tau_core(
        spec,
        point.level,
        point.a,
        point.b,
        v.values(),
        av.values(),
        None,
        opts,
    )?;
    let output = GridFunction::from_values(v.mesh(), sol.w)?;
    Ok(ReductionSolve {
        input: v.clone(),
        output,
        residual: sol.residual,
        iterations: sol.iterations,
    })
}

/// Options for the level-function optimizers n_{l-1} and m_l.
#[derive(Debug, Clone)]
pub struct LevelOptions {
    pub reduce: ReduceOptions,
    /// Number of sphere starts for the n-level descent.
    pub multistarts: usize,
    pub max_iter: usize,
    /// D-norm tolerance on the Riemannian (tangent) gradient.
    pub grad_tol: f64,
    /// Spread between multistart outcomes above which the value is flagged.
    pub spread_tol: f64,
    /// Sphere sample count for the m-level coarse search.
    pub angular_samples: usize,
    pub seed: u64,
    /// Previous optimizer, reused to warm-start continuation runs. When set,
    /// the coarse sampling stage is reduced to a handful of sanity probes.
    pub warm_start: Option<GridFunction>,
}

impl Default for LevelOptions {
    fn default() -> Self {
        Self {
            reduce: ReduceOptions::default(),
            multistarts: 8,
            max_iter: 500,
            grad_tol: 1e-7,
            spread_tol: 1e-6,
            angular_samples: 64,
            seed: 0,
            warm_start: None,
        }
    }
}

/// Value of a level function together with the optimizer that attains it.
#[derive(Debug, Clone)]
pub struct LevelValue {
    pub value: f64,
    pub optimizer: GridFunction,
    /// Spread between the best and worst multistart outcome.
    pub spread: f64,
    pub spread_flagged: bool,
}

/// n_{l-1}(a,b) = inf over w in M_{l-1} with ||w||_D = 1 of I(theta(w) + w).
///
/// Normalized-iterate Riemannian descent preconditioned by the exact inverse
/// (the D-metric Riesz map), with multistarts seeded deterministically.
pub fn n_level(spec: &Spectrum, point: &FucikPoint, opts: &LevelOptions) -> Result<LevelValue> {
    point.validate(spec)?;
    let op = spec.operator();
    let vol = op.mesh().cell_volume();
    let n = op.mesh().total();
    let l = point.level;
    let k = l - 1;
    let (a, b) = (point.a, point.b);
    let lam: Vec<f64> = (1..=k).map(|j| spec.lambda(j)).collect();
    let phis: Vec<&[f64]> = (1..=k).map(|j| spec.phi(j).values()).collect();

    let project_out = |x: &mut [f64]| {
        for phi in &phis {
            let p = vol * dot(x, phi);
            for (xi, &pi) in x.iter_mut().zip(*phi) {
                *xi -= p * pi;
            }
        }
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(wrm) = &opts.warm_start {
        starts.push(wrm.values().to_vec());
    }
    starts.push(spec.phi(l).values().to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while starts.len() < opts.multistarts.max(1) {
        starts.push((0..n).map(|_| rng.gen::<f64>() - 0.5).collect());
    }

    let mut outcomes: Vec<(f64, Vec<f64>)> = Vec::new();
    for mut w in starts {
        project_out(&mut w);
        let mut aw = vec![0.0; n];
        op.apply_into(&w, &mut aw);
        let d = (vol * dot(&aw, &w)).max(0.0).sqrt();
        if d < 1e-10 {
            continue;
        }
        for i in 0..n {
            w[i] /= d;
            aw[i] /= d;
        }

        let mut alpha = 1.0f64;
        let mut th = match theta_core(spec, l, a, b, &w, &aw, None, &opts.reduce) {
            Ok(t) => t,
            Err(_) => continue,
        };
        let mut coeffs: Option<Vec<f64>> = None;
        let mut value = th.value;
        for iter in 0..opts.max_iter {
            coeffs = Some(th.coeffs.clone());
            // Full gradient at u = theta(w) + w and its Riesz representative.
            let mut c = vec![0.0; n];
            slopes(&th.u, a, b, &mut c);
            let r: Vec<f64> = th
                .au
                .iter()
                .zip(&th.u)
                .zip(&c)
                .map(|((&aui, &ui), &ci)| 2.0 * (aui - ci * ui))
                .collect();
            let mut z = r.clone();
            op.solve_in_place(&mut z);
            // Remove the (near-zero, by theta-optimality) N-component and the
            // radial component; A z = r keeps everything stencil-free.
            let coefs: Vec<f64> = phis
                .iter()
                .zip(&lam)
                .map(|(phi, &lj)| vol * dot(&r, phi) / lj)
                .collect();
            let gamma = vol * dot(&r, &w);
            let mut zt = z;
            for (j, phi) in phis.iter().enumerate() {
                for (zi, &pi) in zt.iter_mut().zip(*phi) {
                    *zi -= coefs[j] * pi;
                }
            }
            for (zi, &wi) in zt.iter_mut().zip(&w) {
                *zi -= gamma * wi;
            }
            let res2 = (vol * dot(&r, &zt)).max(0.0);
            let res = res2.sqrt();
            if res <= opts.grad_tol {
                break;
            }
            // A zt, assembled from known applies.
            let mut azt = r.clone();
            for (j, phi) in phis.iter().enumerate() {
                let s = coefs[j] * lam[j];
                for (ai, &pi) in azt.iter_mut().zip(*phi) {
                    *ai -= s * pi;
                }
            }
            for (ai, &awi) in azt.iter_mut().zip(&aw) {
                *ai -= gamma * awi;
            }

            let mut accepted = false;
            let mut t = alpha;
            for _ in 0..30 {
                let mut wt: Vec<f64> = w.iter().zip(&zt).map(|(wi, zi)| wi - t * zi).collect();
                let mut awt: Vec<f64> =
                    aw.iter().zip(&azt).map(|(ai, zi)| ai - t * zi).collect();
                let nrm = (vol * dot(&awt, &wt)).max(0.0).sqrt();
                if nrm < 1e-12 {
                    t *= 0.5;
                    continue;
                }
                for i in 0..n {
                    wt[i] /= nrm;
                    awt[i] /= nrm;
                }
                match theta_core(spec, l, a, b, &wt, &awt, coeffs.as_deref(), &opts.reduce) {
                    Ok(tt) if tt.value <= value - 1e-4 * t * res2 => {
                        w = wt;
                        aw = awt;
                        value = tt.value;
                        th = tt;
                        accepted = true;
                        break;
                    }
                    _ => t *= 0.5,
                }
            }
            if !accepted {
                break;
            }
            alpha = (t * 2.0).min(32.0);
            // The constraint w in M_{l-1} must be enforced every step: the
            // unconstrained landscape has negative curvature along N, so any
            // roundoff leak gets amplified by the descent. The N-removal
            // updates the cached apply through A phi_j = lambda_j phi_j.
            for (j, phi) in phis.iter().enumerate() {
                let p = vol * dot(&w, phi);
                for ((wi, ai), &pi) in w.iter_mut().zip(aw.iter_mut()).zip(*phi) {
                    *wi -= p * pi;
                    *ai -= p * lam[j] * pi;
                }
            }
            let nrm = (vol * dot(&aw, &w)).max(0.0).sqrt();
            for i in 0..n {
                w[i] /= nrm;
                aw[i] /= nrm;
            }
            if iter % 64 == 63 {
                // Periodic full refresh of the cached stencil apply.
                op.apply_into(&w, &mut aw);
            }
        }
        // Fresh evaluation of the final iterate, free of incremental-cache
        // drift, so reported values are accurate to the solver tolerance.
        project_out(&mut w);
        op.apply_into(&w, &mut aw);
        let nrm = (vol * dot(&aw, &w)).max(0.0).sqrt();
        if nrm > 1e-12 {
            for i in 0..n {
                w[i] /= nrm;
                aw[i] /= nrm;
            }
            if let Ok(t) = theta_core(spec, l, a, b, &w, &aw, coeffs.as_deref(), &opts.reduce) {
                value = t.value;
            }
        }
        outcomes.push((value, w));
    }

    let best = outcomes
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .map(|(i, _)| i)
        .ok_or_else(|| FucikError::ReductionNonConvergence {
            iterations: 0,
            residual: f64::INFINITY,
        })?;
    let worst = outcomes
        .iter()
        .map(|o| o.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let (value, w) = outcomes.swap_remove(best);
    let spread = worst - value;
    Ok(LevelValue {
        value,
        optimizer: GridFunction::from_values(op.mesh(), w)?,
        spread,
        spread_flagged: spread > opts.spread_tol,
    })
}

/// m_l(a,b) = sup over v in N_l with ||v||_D = 1 of I(v + tau(v)).
///
/// Coarse sphere sampling over the low-dimensional coefficient sphere of the
/// D-orthonormal basis phi_j / sqrt(lambda_j), then projected gradient ascent.
pub fn m_level(spec: &Spectrum, point: &FucikPoint, opts: &LevelOptions) -> Result<LevelValue> {
    point.validate(spec)?;
    let op = spec.operator();
    let vol = op.mesh().cell_volume();
    let n = op.mesh().total();
    let l = point.level;
    let (a, b) = (point.a, point.b);
    let lam: Vec<f64> = (1..=l).map(|j| spec.lambda(j)).collect();
    let phis: Vec<&[f64]> = (1..=l).map(|j| spec.phi(j).values()).collect();

    // D-orthonormal basis psi_j = phi_j / sqrt(lambda_j); A psi_j = sqrt(lambda_j) phi_j.
    let build = |c: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut v = vec![0.0; n];
        let mut av = vec![0.0; n];
        for (j, phi) in phis.iter().enumerate() {
            let s = c[j] / lam[j].sqrt();
            let sa = c[j] * lam[j].sqrt();
            for i in 0..n {
                v[i] += s * phi[i];
                av[i] += sa * phi[i];
            }
        }
        (v, av)
    };

    let normalize = |c: &mut [f64]| {
        let nrm = dot(c, c).sqrt();
        for x in c.iter_mut() {
            *x /= nrm;
        }
    };

    let mut candidates: Vec<Vec<f64>> = Vec::new();
    if let Some(wrm) = &opts.warm_start {
        let mut c: Vec<f64> = (0..l)
            .map(|j| lam[j].sqrt() * vol * dot(wrm.values(), phis[j]))
            .collect();
        if dot(&c, &c).sqrt() > 1e-10 {
            normalize(&mut c);
            candidates.push(c);
        }
    }
    let warm_mode = !candidates.is_empty();
    for j in 0..l {
        for s in [1.0, -1.0] {
            let mut c = vec![0.0; l];
            c[j] = s;
            candidates.push(c);
        }
    }
    if !warm_mode {
        match l {
            1 => {}
            2 => {
                let grid = opts.angular_samples.max(8);
                for q in 0..grid {
                    let t = 2.0 * std::f64::consts::PI * q as f64 / grid as f64;
                    candidates.push(vec![t.cos(), t.sin()]);
                }
            }
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6d5f);
                for _ in 0..opts.angular_samples.max(8) {
                    let mut c: Vec<f64> = (0..l)
                        .map(|_| {
                            // Box-Muller for an isotropic direction.
                            let u1: f64 = rng.gen::<f64>().max(1e-12);
                            let u2: f64 = rng.gen();
                            (-2.0 * u1.ln()).sqrt()
                                * (2.0 * std::f64::consts::PI * u2).cos()
                        })
                        .collect();
                    if dot(&c, &c).sqrt() > 1e-8 {
                        normalize(&mut c);
                        candidates.push(c);
                    }
                }
            }
        }
    }

    let mut warm_w: Option<Vec<f64>> = None;
    let eval = |c: &[f64], warm_w: &mut Option<Vec<f64>>| -> Result<TauSolve> {
        let (v, av) = build(c);
        let sol = tau_core(spec, l, a, b, &v, &av, warm_w.as_deref(), &opts.reduce)?;
        *warm_w = Some(sol.w.clone());
        Ok(sol)
    };

    let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
    for c in &candidates {
        if let Ok(sol) = eval(c, &mut warm_w) {
            scored.push((sol.value, c.clone()));
        }
    }
    if scored.is_empty() {
        return Err(FucikError::ReductionNonConvergence {
            iterations: 0,
            residual: f64::INFINITY,
        });
    }
    scored.sort_by(|x, y| y.0.total_cmp(&x.0));
    // Polish the best coarse candidate; off warm starts, also the best
    // direction pointing elsewhere on the sphere, to expose multimodality.
    let mut polish_starts: Vec<Vec<f64>> = vec![scored[0].1.clone()];
    if !warm_mode {
        if let Some((_, c2)) = scored[1..]
            .iter()
            .find(|(_, c)| dot(c, &scored[0].1).abs() < 0.95)
        {
            polish_starts.push(c2.clone());
        }
    }

    let mut outcomes: Vec<(f64, Vec<f64>)> = Vec::new();
    for mut c in polish_starts {
        let mut sol = match eval(&c, &mut warm_w) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let mut value = sol.value;
        // Projected gradient ascent on the coefficient sphere; by the
        // envelope property the tau-part contributes no first-order term.
        let mut alpha = 0.5f64;
        for _ in 0..opts.max_iter {
            let mut cw = vec![0.0; n];
            slopes(&sol.u, a, b, &mut cw);
            let r: Vec<f64> = sol
                .au
                .iter()
                .zip(&sol.u)
                .zip(&cw)
                .map(|((&aui, &ui), &ci)| 2.0 * (aui - ci * ui))
                .collect();
            let g: Vec<f64> = (0..l)
                .map(|j| vol * dot(&r, phis[j]) / lam[j].sqrt())
                .collect();
            let gc = dot(&g, &c);
            let gt: Vec<f64> = g.iter().zip(&c).map(|(gi, ci)| gi - gc * ci).collect();
            let res2 = dot(&gt, &gt);
            if res2.sqrt() <= opts.grad_tol {
                break;
            }
            let mut accepted = false;
            let mut t = alpha;
            for _ in 0..30 {
                let mut ct: Vec<f64> = c.iter().zip(&gt).map(|(ci, gi)| ci + t * gi).collect();
                normalize(&mut ct);
                match eval(&ct, &mut warm_w) {
                    Ok(st) if st.value >= value + 1e-4 * t * res2 => {
                        c = ct;
                        value = st.value;
                        sol = st;
                        accepted = true;
                        break;
                    }
                    _ => t *= 0.5,
                }
            }
            if !accepted {
                break;
            }
            alpha = (t * 2.0).min(100.0);
        }
        outcomes.push((value, c));
    }

    let best = outcomes
        .iter()
        .enumerate()
        .max_by(|x, y| x.1 .0.total_cmp(&y.1 .0))
        .map(|(i, _)| i)
        .ok_or(FucikError::ReductionNonConvergence {
            iterations: 0,
            residual: f64::INFINITY,
        })?;
    let spread = if outcomes.len() > 1 {
        let lo = outcomes.iter().map(|o| o.0).fold(f64::INFINITY, f64::min);
        outcomes[best].0 - lo
    } else {
        0.0
    };
    let (value, c) = outcomes.swap_remove(best);
    let (v, _) = build(&c);
    Ok(LevelValue {
        value,
        optimizer: GridFunction::from_values(op.mesh(), v)?,
        spread,
        spread_flagged: spread > opts.spread_tol,
    })
}

/// A traced point on one of the spectral curves.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CurveSample {
    pub a: f64,
    pub b: f64,
    pub kind: CurveKind,
    pub level: usize,
    /// Final bisection bracket width.
    pub bracket_width: f64,
    /// Level-function values at the final bracket ends.
    pub f_lo: f64,
    pub f_hi: f64,
}

/// An ordered trace of curve samples over an a-grid.
#[derive(Debug, Clone, Serialize)]
pub struct CurveTrace {
    pub kind: CurveKind,
    pub level: usize,
    pub tol_b: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub points_per_axis: Vec<usize>,
    pub seed: u64,
    pub samples: Vec<CurveSample>,
}

impl CurveTrace {
    /// b strictly decreasing in a, within the given slack.
    pub fn check_monotone(&self, slack: f64) -> bool {
        self.samples
            .windows(2)
            .all(|p| p[0].a >= p[1].a || p[1].b < p[0].b + slack)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("a,b,kind,level,bracket_width\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{:.12e},{:.12e},{},{},{:.6e}\n",
                s.a, s.b, s.kind, s.level, s.bracket_width
            ));
        }
        out
    }
}

/// Options for curve tracing.
#[derive(Debug, Clone)]
pub struct TraceOptions {
    /// Bisection bracket target; defaults to 1e-4 * (lambda_{l+1} - lambda_{l-1}).
    pub tol_b: Option<f64>,
    /// Values within this band of zero count as >= 0 (closed condition).
    pub deadband: f64,
    pub level: LevelOptions,
    pub parallel: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            tol_b: None,
            deadband: 1e-8,
            level: LevelOptions::default(),
            parallel: true,
        }
    }
}

/// Traces b = nu_{l-1}(a) or b = mu_l(a) over the a-grid by bisection on the
/// sign of the corresponding level function. Entries of the a-grid are
/// independent and run in parallel; each gets its own deterministic seed.
pub fn trace_curve(
    spec: &Spectrum,
    kind: CurveKind,
    level: usize,
    a_grid: &[f64],
    opts: &TraceOptions,
) -> Result<CurveTrace> {
    spec.check_split_level(level - 1)?;
    spec.check_split_level(level)?;
    let lo = spec.lambda(level - 1);
    let hi = spec.lambda(level + 1);
    let tol_b = opts.tol_b.unwrap_or(1e-4 * (hi - lo));
    if a_grid.is_empty() {
        return Err(FucikError::InvalidParameters("empty a-grid".into()));
    }
    for &a in a_grid {
        if !(a > lo && a < hi) {
            return Err(FucikError::PointOutsideQl {
                a,
                b: lo,
                lo,
                hi,
                level,
            });
        }
    }

    let worker = |(idx, &a): (usize, &f64)| -> Result<CurveSample> {
        let mut lopts = opts.level.clone();
        lopts.seed = opts
            .level
            .seed
            .wrapping_add((idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        lopts.warm_start = None;
        let eval = |bb: f64, lopts: &mut LevelOptions| -> Result<f64> {
            let point = FucikPoint::new(a, bb, level)?;
            let lv = match kind {
                CurveKind::Nu => n_level(spec, &point, lopts)?,
                CurveKind::Mu => m_level(spec, &point, lopts)?,
            };
            lopts.warm_start = Some(lv.optimizer);
            Ok(lv.value)
        };
        // The reduction subproblems lose their strict concavity/convexity
        // margins at the boundary of Q_l, so the bracket keeps a standoff.
        let margin = 1e-3 * (hi - lo);
        let mut blo = lo + margin;
        let mut bhi = hi - margin;
        let below = |f: f64| match kind {
            CurveKind::Nu => f >= -opts.deadband,
            CurveKind::Mu => f > opts.deadband,
        };
        let mut f_lo = eval(blo, &mut lopts)?;
        let mut f_hi = eval(bhi, &mut lopts)?;
        if !below(f_lo) || below(f_hi) {
            return Err(FucikError::NoSignChange { a, lo, hi });
        }
        while bhi - blo > tol_b {
            let mid = 0.5 * (blo + bhi);
            let f_mid = eval(mid, &mut lopts)?;
            if below(f_mid) {
                blo = mid;
                f_lo = f_mid;
            } else {
                bhi = mid;
                f_hi = f_mid;
            }
        }
        Ok(CurveSample {
            a,
            b: 0.5 * (blo + bhi),
            kind,
            level,
            bracket_width: bhi - blo,
            f_lo,
            f_hi,
        })
    };

    let samples: Vec<CurveSample> = if opts.parallel {
        a_grid
            .par_iter()
            .enumerate()
            .map(worker)
            .collect::<Result<Vec<_>>>()?
    } else {
        a_grid
            .iter()
            .enumerate()
            .map(worker)
            .collect::<Result<Vec<_>>>()?
    };

    Ok(CurveTrace {
        kind,
        level,
        tol_b,
        lambda_lo: lo,
        lambda_hi: hi,
        points_per_axis: spec.operator().mesh().points_per_axis().to_vec(),
        seed: opts.level.seed,
        samples,
    })
}

/// Options for the membership residual search.
#[derive(Debug, Clone)]
pub struct MembershipOptions {
    pub random_starts: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Also seed the search with an n-level optimizer when (a,b) sits inside
    /// a valid Q_l window.
    pub reduction_start: bool,
}

impl Default for MembershipOptions {
    fn default() -> Self {
        Self {
            random_starts: 4,
            max_iter: 60,
            seed: 0,
            reduction_start: true,
        }
    }
}

/// Best found value of ||A u - b u^+ + a u^-||_{L2} over the unit D-sphere.
#[derive(Debug, Clone)]
pub struct MembershipReport {
    pub residual: f64,
    pub minimizer: GridFunction,
}

fn enclosing_level(spec: &Spectrum, a: f64, b: f64) -> Option<usize> {
    let lo_ab = a.min(b);
    let hi_ab = a.max(b);
    (2..spec.count()).find(|&l| {
        spec.check_split_level(l - 1).is_ok()
            && spec.check_split_level(l).is_ok()
            && spec.lambda(l - 1) < lo_ab
            && spec.lambda(l + 1) > hi_ab
    })
}

/// Multi-start Gauss-Newton least squares for the defect of Au = b u^+ - a u^-
/// on the unit D-sphere. Small values indicate (a,b) near the spectrum.
pub fn membership_residual(
    spec: &Spectrum,
    a: f64,
    b: f64,
    opts: &MembershipOptions,
) -> Result<MembershipReport> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(FucikError::InvalidParameters(format!(
            "(a,b) = ({a}, {b}) must be positive"
        )));
    }
    let op = spec.operator();
    let vol = op.mesh().cell_volume();
    let n = op.mesh().total();

    let mut starts: Vec<Vec<f64>> = Vec::new();
    for j in 1..=spec.count() {
        starts.push(spec.phi(j).values().to_vec());
    }
    if opts.reduction_start {
        if let Some(l) = enclosing_level(spec, a, b) {
            let point = FucikPoint::new(a, b, l)?;
            let lopts = LevelOptions {
                multistarts: 4,
                ..LevelOptions::default()
            };
            if let Ok(lv) = n_level(spec, &point, &lopts) {
                let aw = op.apply(&lv.optimizer);
                if let Ok(th) = theta_core(
                    spec,
                    l,
                    a,
                    b,
                    lv.optimizer.values(),
                    aw.values(),
                    None,
                    &lopts.reduce,
                ) {
                    starts.push(th.u);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_starts {
        starts.push((0..n).map(|_| rng.gen::<f64>() - 0.5).collect());
    }

    let residual_of = |u: &[f64], au: &[f64]| -> (Vec<f64>, f64) {
        let r: Vec<f64> = au
            .iter()
            .zip(u)
            .map(|(&aui, &ui)| {
                let c = if ui < 0.0 { a } else { b };
                aui - c * ui
            })
            .collect();
        let nrm = (vol * dot(&r, &r)).sqrt();
        (r, nrm)
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    for mut u in starts {
        let mut au = vec![0.0; n];
        op.apply_into(&u, &mut au);
        let d = (vol * dot(&au, &u)).max(0.0).sqrt();
        if d < 1e-12 {
            continue;
        }
        for i in 0..n {
            u[i] /= d;
            au[i] /= d;
        }
        let (_, mut phi) = residual_of(&u, &au);
        for _ in 0..opts.max_iter {
            // Inverse-iteration step with frozen nodal slopes: solve
            // (A - c) v = u, preconditioned by the exact inverse so the
            // operator is I - A^{-1} c. The defect r = (A - c) u is itself
            // in the range of the frozen operator with preimage u, so a
            // Newton step would be purely radial and carry no information;
            // inverse iteration instead amplifies the minimal-defect
            // direction of A - c, which is exactly the one we are after.
            let mut c = vec![0.0; n];
            slopes(&u, a, b, &mut c);
            let mut apply = |x: &[f64], out: &mut [f64]| {
                for i in 0..n {
                    out[i] = c[i] * x[i];
                }
                op.solve_in_place(out);
                for i in 0..n {
                    out[i] = x[i] - out[i];
                }
            };
            let mut rhs = u.clone();
            op.solve_in_place(&mut rhs);
            let (v, _) = krylov::gmres(&mut apply, &rhs, 40, 1e-12, 2);
            let mut av = vec![0.0; n];
            op.apply_into(&v, &mut av);
            let nv = (vol * dot(&av, &v)).max(0.0).sqrt();
            if !(nv > 1e-300) || !nv.is_finite() {
                break;
            }
            // Normalize and align with the current iterate so the damped
            // update interpolates rather than flips sign.
            let s = if vol * dot(&av, &u) < 0.0 { -1.0 } else { 1.0 } / nv;
            let dt: Vec<f64> = v.iter().zip(&u).map(|(vi, ui)| s * vi - ui).collect();
            let adt: Vec<f64> = av.iter().zip(&au).map(|(ai, aui)| s * ai - aui).collect();

            let mut improved = false;
            let mut t = 1.0;
            for _ in 0..25 {
                let mut ut: Vec<f64> = u.iter().zip(&dt).map(|(ui, di)| ui + t * di).collect();
                let mut aut: Vec<f64> =
                    au.iter().zip(&adt).map(|(ai, di)| ai + t * di).collect();
                let nrm = (vol * dot(&aut, &ut)).max(0.0).sqrt();
                if nrm > 1e-12 {
                    for i in 0..n {
                        ut[i] /= nrm;
                        aut[i] /= nrm;
                    }
                    let (_, phit) = residual_of(&ut, &aut);
                    if phit < phi * (1.0 - 1e-10) {
                        u = ut;
                        au = aut;
                        phi = phit;
                        improved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !improved || phi < 1e-14 {
                break;
            }
        }
        if best.as_ref().map_or(true, |(bp, _)| phi < *bp) {
            best = Some((phi, u));
        }
    }
    let (residual, u) = best.ok_or(FucikError::ReductionNonConvergence {
        iterations: 0,
        residual: f64::INFINITY,
    })?;
    Ok(MembershipReport {
        residual,
        minimizer: GridFunction::from_values(op.mesh(), u)?,
    })
}
