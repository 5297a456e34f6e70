//! Saddle search over a linking patch: coarse maximization of the energy
//! over the patch, descent with re-maximization along the unstable span,
//! and a semismooth Newton polish of the resulting near-critical point.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{FucikError, Result};
use crate::fucik::{tau_map, FucikPoint, ReduceOptions};
use crate::krylov;
use crate::operator::{DiscreteOperator, GridFunction, Spectrum};

use super::{
    c_star, energy, gradient_d_norm, GeometryKind, LinkingGeometry, Nonlinearity,
    EXP_GUARD,
};

/// Outcome of the criticality check on the search's terminal iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// Converged, nontrivial, and 0 < E < c*.
    NontrivialOk,
    /// Converged onto (numerically) the zero function.
    Trivial,
    /// Converged but the energy level is outside (0, c*).
    LevelViolation,
    /// The criticality residual never met the tolerance.
    NotConverged,
}

/// Search report. Field order fixes the JSON key order.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalReport {
    pub energy: f64,
    pub grad_norm: f64,
    pub c_star: f64,
    pub classification: Classification,
    /// ||A u - b u^+ + a u^- - f(u)||_{L2}.
    pub pde_residual: f64,
    pub seed: u64,
    /// Largest sampled energy over the Q-patch (absent for bare checks).
    pub sup_q: Option<f64>,
    pub iterations: usize,
    #[serde(skip)]
    pub candidate: GridFunction,
}

#[derive(Debug, Clone)]
pub struct MinimaxOptions {
    /// Random patch directions sampled besides the pure spike ray.
    pub dir_samples: usize,
    /// Amplitude samples per direction in the coarse maximization.
    pub amp_samples: usize,
    pub descent_max_iter: usize,
    /// Gradient norm at which descent hands over to Newton.
    pub newton_switch_tol: f64,
    pub newton_max_iter: usize,
    /// Target ||E'||_{D*} for criticality.
    pub grad_tol: f64,
    /// D-norm below which the terminal iterate counts as trivial.
    pub trivial_floor: f64,
    /// Classification threshold; computed from the nonlinearity when absent.
    pub c_star_override: Option<f64>,
    pub reduce: ReduceOptions,
    pub seed: u64,
}

impl Default for MinimaxOptions {
    fn default() -> Self {
        Self {
            dir_samples: 24,
            amp_samples: 28,
            descent_max_iter: 300,
            newton_switch_tol: 1e-3,
            newton_max_iter: 60,
            grad_tol: 1e-8,
            trivial_floor: 1e-6,
            c_star_override: None,
            reduce: ReduceOptions::default(),
            seed: 0,
        }
    }
}

/// Energy treating overflow as minus infinity; the coarse phases only
/// compare values, and an overflowing candidate is never a maximizer of a
/// functional that is bounded above on the patch.
fn energy_or_neg_inf(
    op: &Arc<DiscreteOperator>,
    u: &GridFunction,
    a: f64,
    b: f64,
    nl: &Nonlinearity,
) -> f64 {
    match energy(op, u, a, b, nl) {
        Ok((e, _)) => e,
        Err(_) => f64::NEG_INFINITY,
    }
}

/// D-orthonormalized span of the given directions (degenerate ones dropped).
fn orthonormal_span(op: &DiscreteOperator, dirs: &[&GridFunction]) -> Vec<GridFunction> {
    let mut out: Vec<GridFunction> = Vec::with_capacity(dirs.len());
    for d in dirs {
        let mut v = (*d).clone();
        for q in &out {
            let c = op.d_inner_unchecked(&v, q);
            v.axpy(-c, q);
        }
        let nrm = op.d_norm(&v);
        if nrm > 1e-10 {
            v.scale(1.0 / nrm);
            out.push(v);
        }
    }
    out
}

/// Maximize E over u + span(q) by coordinate pattern search; returns the
/// maximizer in place and the attained value.
fn span_maximize(
    op: &Arc<DiscreteOperator>,
    u: &mut GridFunction,
    span: &[GridFunction],
    a: f64,
    b: f64,
    nl: &Nonlinearity,
) -> f64 {
    let mut best = energy_or_neg_inf(op, u, a, b, nl);
    if span.is_empty() {
        return best;
    }
    let mut h = 0.25 * op.d_norm(u).max(1.0);
    let mut evals = 0usize;
    while h > 1e-9 && evals < 400 {
        let mut improved = false;
        for q in span {
            for sign in [1.0, -1.0] {
                let cand = {
                    let mut c = u.clone();
                    c.axpy(sign * h, q);
                    c
                };
                let e = energy_or_neg_inf(op, &cand, a, b, nl);
                evals += 1;
                if e > best + 1e-14 * best.abs() {
                    best = e;
                    *u = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    best
}

/// Coarse maximization over the Q-patch. Returns (sup over samples, argmax).
fn coarse_patch_max(
    spec: &Spectrum,
    geom: &LinkingGeometry,
    nl: &Nonlinearity,
    opts: &MinimaxOptions,
) -> Result<(f64, GridFunction)> {
    let op = spec.operator();
    let k = geom.basis.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    // Unit direction bases within the patch: the pure spike ray first, then
    // random mixtures with nonnegative spike amplitude. Above-curve patches
    // ride the graph of tau, which is positively homogeneous, so one tau
    // solve per direction covers the whole amplitude scan.
    let spike_norm = op.d_norm(&geom.spike).max(1e-300);
    let mut bases: Vec<GridFunction> = vec![geom.spike.scaled(1.0 / spike_norm)];
    for _ in 0..opts.dir_samples {
        let mut coeffs = vec![0.0; k];
        for c in coeffs.iter_mut() {
            *c = rng.gen::<f64>() - 0.5;
        }
        let s = rng.gen::<f64>();
        let mut v = GridFunction::zeros(op.mesh());
        for (j, &c) in coeffs.iter().enumerate() {
            v.axpy(c, &geom.basis[j]);
        }
        if geom.kind == GeometryKind::AboveCurve && k > 0 {
            let nrm = op.d_norm(&v);
            if nrm > 1e-12 {
                let point = FucikPoint::new(geom.a, geom.b, geom.level)?;
                let tau = tau_map(spec, &v, &point, &opts.reduce)?;
                v = tau.input.add(&tau.output);
            }
        }
        v.axpy(s / spike_norm, &geom.spike);
        let nrm = op.d_norm(&v);
        if nrm > 1e-12 {
            v.scale(1.0 / nrm);
            bases.push(v);
        }
    }

    // Amplitude scan per direction, expanding the horizon until the energy
    // is negative at the rim for every direction (patch coercivity).
    let mut t_max = geom.rho.max(1.0);
    let mut expansions = 0usize;
    loop {
        let all_negative = bases
            .iter()
            .all(|v| energy_or_neg_inf(op, &v.scaled(t_max), geom.a, geom.b, nl) < 0.0);
        if all_negative {
            break;
        }
        t_max *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(FucikError::CoercivityHorizon(format!(
                "patch energy still nonnegative at amplitude {t_max:.3e}"
            )));
        }
    }

    let mut sup = f64::NEG_INFINITY;
    let mut arg: Option<(usize, f64)> = None;
    let t_min = 1e-3 * geom.rho;
    for (i, v) in bases.iter().enumerate() {
        for j in 0..opts.amp_samples {
            let t = t_min * (t_max / t_min).powf(j as f64 / (opts.amp_samples - 1) as f64);
            let e = energy_or_neg_inf(op, &v.scaled(t), geom.a, geom.b, nl);
            if e > sup {
                sup = e;
                arg = Some((i, t));
            }
        }
    }
    let (i, t0) = arg.ok_or_else(|| {
        FucikError::CoercivityHorizon("no finite patch energy sample".into())
    })?;

    // Golden-section refinement of the amplitude along the best direction,
    // keeping the best finite evaluation seen (the bracket may touch the
    // overflow region of the exponential potential).
    let dir = &bases[i];
    let (mut lo, mut hi) = (t0 / 4.0, (t0 * 4.0).min(t_max));
    let gr = 0.618_033_988_749_895;
    let mut t_best = t0;
    let mut e_best = sup;
    for _ in 0..40 {
        let m1 = hi - gr * (hi - lo);
        let m2 = lo + gr * (hi - lo);
        let e1 = energy_or_neg_inf(op, &dir.scaled(m1), geom.a, geom.b, nl);
        let e2 = energy_or_neg_inf(op, &dir.scaled(m2), geom.a, geom.b, nl);
        if e1 > e_best && e1.is_finite() {
            e_best = e1;
            t_best = m1;
        }
        if e2 > e_best && e2.is_finite() {
            e_best = e2;
            t_best = m2;
        }
        if e1 < e2 {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let peak = dir.scaled(t_best);
    Ok((e_best.max(sup), peak))
}

/// Damped semismooth Newton on r(u) = A u - b u^+ + a u^- - f(u), solving
/// the preconditioned correction (I - A^{-1}(c + f') .) d = -A^{-1} r.
fn newton_polish(
    op: &Arc<DiscreteOperator>,
    u: &mut GridFunction,
    a: f64,
    b: f64,
    nl: &Nonlinearity,
    opts: &MinimaxOptions,
) -> Result<(f64, f64, usize)> {
    let mesh = op.mesh();
    let mut iters = 0usize;
    let (mut e_val, mut r) = energy(op, u, a, b, nl)?;
    let mut gn = gradient_d_norm(op, &r);
    // Levenberg-Marquardt shift: the Jacobian can be nearly singular close
    // to the saddle (symmetric domains carry near-degenerate modes), so the
    // correction solve is regularized and the shift adapts to acceptance.
    let mut mu = 1e-4f64;
    for _ in 0..opts.newton_max_iter {
        if gn <= opts.grad_tol {
            break;
        }
        iters += 1;
        let slopes: Vec<f64> = u
            .values()
            .iter()
            .map(|&ui| {
                let c = if ui < 0.0 { a } else { b };
                c + nl.slope_deriv(ui.clamp(-EXP_GUARD, EXP_GUARD))
            })
            .collect();
        // J_hat = I - A^{-1}(c + f') is self-adjoint in the D-inner product;
        // the normal equations (J_hat^2 + mu) d = -J_hat A^{-1} r give a
        // guaranteed descent direction for ||E'||_{D*}^2 even where the
        // Jacobian is indefinite or singular.
        let j_hat = |x: &[f64], out: &mut [f64]| {
            let gx = GridFunction::from_values(mesh, x.to_vec()).expect("finite Krylov iterate");
            let mut scaled = gx.clone();
            for (v, &s) in scaled.values_mut().iter_mut().zip(&slopes) {
                *v *= s;
            }
            let sol = op.solve(&scaled);
            for ((o, &xi), &si) in out.iter_mut().zip(x).zip(sol.values()) {
                *o = xi - si;
            }
        };
        let r_hat = op.solve(&r);
        let mut neg_rhs = vec![0.0; r_hat.values().len()];
        j_hat(r_hat.values(), &mut neg_rhs);
        for v in neg_rhs.iter_mut() {
            *v = -*v;
        }
        let mut accepted = false;
        for _ in 0..16 {
            let mut apply = |x: &[f64], out: &mut [f64]| {
                let mut mid = vec![0.0; x.len()];
                j_hat(x, &mut mid);
                j_hat(&mid, out);
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o += mu * xi;
                }
            };
            let (d, _) = krylov::gmres(&mut apply, &neg_rhs, 60, 1e-10, 3);
            let d_gf = GridFunction::from_values(mesh, d)?;
            let mut cand = u.clone();
            cand.axpy(1.0, &d_gf);
            if let Ok((e_new, r_new)) = energy(op, &cand, a, b, nl) {
                let gn_new = gradient_d_norm(op, &r_new);
                if gn_new < gn {
                    *u = cand;
                    e_val = e_new;
                    r = r_new;
                    gn = gn_new;
                    accepted = true;
                    mu = (mu * 0.25).max(1e-14);
                    break;
                }
            }
            mu = (mu * 8.0).min(1e8);
        }
        if !accepted {
            break;
        }
    }
    Ok((e_val, gn, iters))
}

fn classify(
    op: &DiscreteOperator,
    u: &GridFunction,
    e_val: f64,
    gn: f64,
    c_star_value: f64,
    opts: &MinimaxOptions,
) -> Classification {
    if gn > opts.grad_tol.max(1e-6) {
        Classification::NotConverged
    } else if op.d_norm(u) <= opts.trivial_floor {
        Classification::Trivial
    } else if e_val > 0.0 && e_val < c_star_value {
        Classification::NontrivialOk
    } else {
        Classification::LevelViolation
    }
}

/// Full minimax search over a verified linking geometry.
pub fn minimax_search(
    spec: &Spectrum,
    geom: &LinkingGeometry,
    nl: &Nonlinearity,
    opts: &MinimaxOptions,
) -> Result<CriticalReport> {
    let op = spec.operator();
    let c_star_value = match opts.c_star_override {
        Some(v) => v,
        None => c_star(nl, Some(op))?.value,
    };

    let (sup_q, mut u) = coarse_patch_max(spec, geom, nl, opts)?;

    // Descent with re-maximization along the unstable span, so the iterate
    // slides along the maximized crest toward the saddle.
    let mut step = 1.0f64;
    let mut descent_iters = 0usize;
    for _ in 0..opts.descent_max_iter {
        descent_iters += 1;
        // The unstable span has the patch dimension: the linear part plus the
        // current ray (which starts with the spike content). Keeping the
        // spike as an extra direction would over-maximize onto higher-index
        // saddles above the linking level.
        let mut dirs: Vec<&GridFunction> = geom.basis.iter().collect();
        dirs.push(&u);
        let span = orthonormal_span(op, &dirs);
        span_maximize(op, &mut u, &span, geom.a, geom.b, nl);

        let (e_val, r) = energy(op, &u, geom.a, geom.b, nl)?;
        let gn = gradient_d_norm(op, &r);
        if gn <= opts.newton_switch_tol {
            break;
        }
        let mut z = op.solve(&r);
        for q in &span {
            let c = op.d_inner_unchecked(&z, q);
            z.axpy(-c, q);
        }
        let zn = op.d_norm(&z);
        let zn2 = zn * zn;
        if zn2 < 1e-30 {
            break;
        }
        // Trust region: keep each move short relative to the iterate so the
        // crest-following maximization can absorb it; large jumps tunnel past
        // the saddle into the coercive far field and never come back.
        let max_move = (0.2 * gn).clamp(1e-6, 0.25);
        step = step.min(max_move / zn);
        let mut accepted = false;
        for _ in 0..30 {
            let mut cand = u.clone();
            cand.axpy(-step, &z);
            let e_new = energy_or_neg_inf(op, &cand, geom.a, geom.b, nl);
            if e_new.is_finite() && e_new < e_val - 1e-4 * step * zn2 {
                u = cand;
                accepted = true;
                step = (step * 1.5).min(max_move / zn);
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let (e_val, gn, newton_iters) = newton_polish(op, &mut u, geom.a, geom.b, nl, opts)?;
    let (_, r) = energy(op, &u, geom.a, geom.b, nl)?;
    let classification = classify(op, &u, e_val, gn, c_star_value, opts);
    Ok(CriticalReport {
        energy: e_val,
        grad_norm: gn,
        c_star: c_star_value,
        classification,
        pde_residual: r.l2_norm(),
        seed: opts.seed,
        sup_q: Some(sup_q),
        iterations: descent_iters + newton_iters,
        candidate: u,
    })
}

/// Criticality check of a given candidate without any search.
pub fn verify_critical(
    op: &Arc<DiscreteOperator>,
    u: &GridFunction,
    a: f64,
    b: f64,
    nl: &Nonlinearity,
    opts: &MinimaxOptions,
) -> Result<CriticalReport> {
    let c_star_value = match opts.c_star_override {
        Some(v) => v,
        None => c_star(nl, Some(op))?.value,
    };
    let (e_val, r) = energy(op, u, a, b, nl)?;
    let gn = gradient_d_norm(op, &r);
    let classification = classify(op, u, e_val, gn, c_star_value, opts);
    Ok(CriticalReport {
        energy: e_val,
        grad_norm: gn,
        c_star: c_star_value,
        classification,
        pde_residual: r.l2_norm(),
        seed: opts.seed,
        sup_q: None,
        iterations: 0,
        candidate: u.clone(),
    })
}
