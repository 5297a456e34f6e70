//! Acceptance suite: eleven numbered criteria covering the eigenvalue
//! oracle, curve tracing, the reduction maps, membership residuals, the
//! linking and mountain-pass solves, concentration-estimate exponents, the
//! strict-level energy checks, and determinism. Each criterion prints one
//! PASS/FAIL line (run with `--nocapture` to see them as they complete);
//! the test fails if any criterion does.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use fucik_link::concentration::{
    annular_cutoff, bubble_profile, eta, eta_deriv, fit_scaling, moser_profile, radial_integral,
    sup_energy_check, truncated_bubble_profile, BubbleParams, CutoffParams, IntegralKind,
    MoserParams, ScalingFit, StrictLevelLemma, SupEnergyOptions,
};
use fucik_link::fucik::oracle1d::fucik_1d_oracle;
use fucik_link::fucik::{
    m_level, membership_residual, n_level, parts_and_i, tau_map, theta_map, trace_curve, CurveKind,
    FucikPoint, LevelOptions, MembershipOptions, ReduceOptions, TraceOptions,
};
use fucik_link::linking::{
    build_geometry, minimax_search, mountain_pass_geometry, Classification, CriticalReport,
    GeometryKind, GeometryOptions, MinimaxOptions, Nonlinearity, SpikeSpec,
};
use fucik_link::operator::{
    build_operator, compute_spectrum, Domain, GridFunction, SplitPart, Spectrum,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Detail = Result<String, String>;

fn fail<E: std::fmt::Display>(e: E) -> String {
    format!("{e}")
}

fn check(ok: bool, what: &str) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(format!("violated: {what}"))
    }
}

/// Runs one criterion behind a panic guard and prints its line immediately.
fn run(results: &mut Vec<(usize, bool)>, idx: usize, name: &str, f: impl FnOnce() -> Detail) {
    let outcome = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        }
    };
    match &outcome {
        Ok(d) => println!("criterion {idx:2} ({name}): PASS — {d}"),
        Err(d) => println!("criterion {idx:2} ({name}): FAIL — {d}"),
    }
    results.push((idx, outcome.is_ok()));
}

fn interval_spectrum(n: usize, count: usize) -> Spectrum {
    let op = build_operator(Domain::interval(PI).unwrap(), &[n]).unwrap();
    compute_spectrum(&op, count).unwrap()
}

fn geometric(base: f64, points: usize) -> Vec<(f64, f64)> {
    (0..points)
        .map(|k| (base * 10.0f64.powf(-0.25 * k as f64), 0.0))
        .collect()
}

fn eval_series(base: f64, points: usize, f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let mut s = geometric(base, points);
    for p in &mut s {
        p.1 = f(p.0);
    }
    s
}

#[test]
fn acceptance_criteria() {
    let mut results: Vec<(usize, bool)> = Vec::new();
    let nu_csv: RefCell<Option<(Vec<f64>, String)>> = RefCell::new(None);
    let below_json: RefCell<Option<String>> = RefCell::new(None);

    // ------------------------------------------------------------------
    run(&mut results, 1, "eigenvalue oracle", || {
        let t = Instant::now();
        let n = 511usize;
        let spec = interval_spectrum(n, 5);
        let h = PI / (n + 1) as f64;
        let mut worst_stencil = 0.0f64;
        let mut worst_continuum = 0.0f64;
        for k in 1..=4usize {
            let stencil = (4.0 / (h * h)) * (0.5 * k as f64 * h).sin().powi(2);
            let continuum = (k * k) as f64;
            let got = spec.lambda(k);
            worst_stencil = worst_stencil.max((got - stencil).abs() / stencil);
            worst_continuum = worst_continuum.max((got - continuum).abs() / continuum);
        }
        check(worst_stencil <= 1e-9, "stencil agreement 1e-9")?;
        check(worst_continuum <= 1e-3, "continuum agreement 1e-3")?;
        check(t.elapsed().as_secs_f64() < 5.0, "runtime < 5 s")?;
        Ok(format!(
            "stencil rel {worst_stencil:.2e}, continuum rel {worst_continuum:.2e}, {:.2} s",
            t.elapsed().as_secs_f64()
        ))
    });

    let spec1d = interval_spectrum(63, 4);
    let (l1, l2, l3) = (spec1d.lambda(1), spec1d.lambda(2), spec1d.lambda(3));

    // ------------------------------------------------------------------
    run(&mut results, 2, "1D curves vs shooting oracle", || {
        let t = Instant::now();
        // The level-2 curve leaves Q_2 (b above lambda_3) for small a, so
        // the window is clipped to where the traced b stays inside the
        // bisection bracket; the clip point comes from the hump-matching
        // relation 1/sqrt(a) + 1/sqrt(b) = 1.
        let a_lo = (l1 + 0.2).max((1.0 - 1.0 / (l3 - 0.3f64).sqrt()).powi(-2)) + 0.05;
        let a_hi = l3 - 0.2;
        let a_grid: Vec<f64> = (0..24)
            .map(|i| a_lo + (a_hi - a_lo) * i as f64 / 23.0)
            .collect();
        let opts = TraceOptions::default();
        let nu = trace_curve(&spec1d, CurveKind::Nu, 2, &a_grid, &opts).map_err(fail)?;
        let mu = trace_curve(&spec1d, CurveKind::Mu, 2, &a_grid, &opts).map_err(fail)?;
        let oracle = fucik_1d_oracle(PI, 2, &a_grid).map_err(fail)?;
        let mut worst = 0.0f64;
        for (trace, orc) in [(&nu, &oracle[0]), (&mu, &oracle[1])] {
            for (s, o) in trace.samples.iter().zip(&orc.samples) {
                worst = worst.max((s.b - o.b).abs() / o.b);
            }
        }
        check(worst <= 1e-2, "oracle agreement 1e-2 in b")?;
        for kind in [CurveKind::Nu, CurveKind::Mu] {
            let thr = trace_curve(&spec1d, kind, 2, &[l2], &opts).map_err(fail)?;
            check(
                (thr.samples[0].b - l2).abs() <= thr.tol_b,
                "passes through (lambda_2, lambda_2)",
            )?;
        }
        check(t.elapsed().as_secs_f64() < 600.0, "runtime < 10 min")?;
        *nu_csv.borrow_mut() = Some((a_grid, nu.to_csv()));
        Ok(format!(
            "24 samples, worst rel err {worst:.2e}, {:.1} s",
            t.elapsed().as_secs_f64()
        ))
    });

    // ------------------------------------------------------------------
    run(&mut results, 3, "2D curve properties", || {
        let t = Instant::now();
        let op = build_operator(Domain::rectangle(PI, PI).unwrap(), &[63, 63]).map_err(fail)?;
        let spec = compute_spectrum(&op, 6).map_err(fail)?;
        // lambda_2 = lambda_3 on the square, so levels 2 and 3 would split
        // the cluster; level 4 is the lowest with simple gaps on both sides.
        check(
            spec.check_split_level(2).is_err() && spec.check_split_level(4).is_ok(),
            "level 4 has simple gaps, levels 2/3 split the cluster",
        )?;
        let l4 = spec.lambda(4);
        let a_grid = [6.8, 7.4, l4, 8.6, 9.2];
        let opts = TraceOptions::default();
        let nu = trace_curve(&spec, CurveKind::Nu, 4, &a_grid, &opts).map_err(fail)?;
        let mu = trace_curve(&spec, CurveKind::Mu, 4, &a_grid, &opts).map_err(fail)?;
        check(
            nu.check_monotone(0.0) && mu.check_monotone(0.0),
            "strictly decreasing",
        )?;
        let tol = nu.tol_b;
        for (sn, sm) in nu.samples.iter().zip(&mu.samples) {
            check(sn.b <= sm.b + tol, "nu <= mu + tol_b")?;
        }
        // Reflection symmetry: trace again at the b-values; the curve must
        // return the original a-values.
        let mut refl_grid: Vec<f64> = nu.samples.iter().map(|s| s.b).collect();
        refl_grid.reverse();
        let refl = trace_curve(&spec, CurveKind::Nu, 4, &refl_grid, &opts).map_err(fail)?;
        let mut worst = 0.0f64;
        for (i, s) in refl.samples.iter().enumerate() {
            worst = worst.max((s.b - a_grid[a_grid.len() - 1 - i]).abs());
        }
        check(worst <= 2.0 * tol, "(a,b) <-> (b,a) symmetry within 2 tol_b")?;
        check(t.elapsed().as_secs_f64() < 1800.0, "runtime < 30 min")?;
        Ok(format!(
            "5-point grid, symmetry defect {worst:.2e} (tol_b {tol:.2e}), {:.0} s",
            t.elapsed().as_secs_f64()
        ))
    });

    // ------------------------------------------------------------------
    run(&mut results, 4, "reduction maps", || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let op = spec1d.operator().clone();
        let mesh = op.mesh().clone();
        let n = mesh.total();
        let ropts = ReduceOptions::default();
        let random_gf = |rng: &mut ChaCha8Rng| {
            let vals: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            GridFunction::from_values(&mesh, vals).unwrap()
        };
        let mut worst_res = 0.0f64;
        let mut worst_hom = 0.0f64;
        for _ in 0..10 {
            let a = l1 + 0.3 + (l3 - l1 - 0.6) * rng.gen::<f64>();
            let b = l1 + 0.3 + (l3 - l1 - 0.6) * rng.gen::<f64>();
            let point = FucikPoint::new(a, b, 2).map_err(fail)?;
            let mut w = spec1d
                .project(1, &random_gf(&mut rng), SplitPart::MPart)
                .map_err(fail)?;
            w.scale(1.0 / op.d_norm(&w));
            let th = theta_map(&spec1d, &w, &point, &ropts).map_err(fail)?;
            let th_t = theta_map(&spec1d, &w.scaled(2.5), &point, &ropts).map_err(fail)?;
            // Homogeneity defects are measured against the larger of the
            // (unit) input and output scales: the maps solve to a fixed
            // gradient tolerance, so a near-zero output makes the
            // output-relative quotient meaningless.
            let hom = op.d_norm(&th_t.output.sub(&th.output.scaled(2.5)))
                / (2.5 * op.d_norm(&th.output).max(1.0));
            let mut v = spec1d
                .project(2, &random_gf(&mut rng), SplitPart::NPart)
                .map_err(fail)?;
            v.scale(1.0 / op.d_norm(&v));
            let ta = tau_map(&spec1d, &v, &point, &ropts).map_err(fail)?;
            let ta_t = tau_map(&spec1d, &v.scaled(0.4), &point, &ropts).map_err(fail)?;
            let hom_t = op.d_norm(&ta_t.output.sub(&ta.output.scaled(0.4)))
                / (0.4 * op.d_norm(&ta.output).max(1.0));
            worst_res = worst_res.max(th.residual).max(ta.residual);
            worst_hom = worst_hom.max(hom).max(hom_t);
        }
        check(worst_res <= 1e-8, "optimality residual 1e-8")?;
        check(worst_hom <= 1e-6, "positive homogeneity 1e-6")?;
        // At a = b = lambda_2 both maps vanish.
        let point = FucikPoint::new(l2, l2, 2).map_err(fail)?;
        let w = spec1d
            .project(1, &random_gf(&mut rng), SplitPart::MPart)
            .map_err(fail)?;
        let th0 = theta_map(&spec1d, &w, &point, &ropts).map_err(fail)?;
        let v = spec1d
            .project(2, &random_gf(&mut rng), SplitPart::NPart)
            .map_err(fail)?;
        let ta0 = tau_map(&spec1d, &v, &point, &ropts).map_err(fail)?;
        let zero = op.d_norm(&th0.output).max(op.d_norm(&ta0.output));
        check(zero <= 1e-6, "theta = tau = 0 at (lambda_2, lambda_2)")?;
        // Midpoint concavity over N_1 slices and convexity over M_2 slices.
        let value = |u: &GridFunction, a: f64, b: f64| -> Result<f64, String> {
            Ok(parts_and_i(&spec1d, u, a, b).map_err(fail)?.value)
        };
        for _ in 0..50 {
            let a = l1 + 0.3 + (l3 - l1 - 0.6) * rng.gen::<f64>();
            let b = l1 + 0.3 + (l3 - l1 - 0.6) * rng.gen::<f64>();
            let w = spec1d
                .project(1, &random_gf(&mut rng), SplitPart::MPart)
                .map_err(fail)?;
            let c1 = 4.0 * rng.gen::<f64>() - 2.0;
            let c2 = 4.0 * rng.gen::<f64>() - 2.0;
            let v1 = spec1d.phi(1).scaled(c1);
            let v2 = spec1d.phi(1).scaled(c2);
            let mid = v1.add(&v2).scaled(0.5);
            let e1 = value(&v1.add(&w), a, b)?;
            let e2 = value(&v2.add(&w), a, b)?;
            let em = value(&mid.add(&w), a, b)?;
            let scale = e1.abs().max(e2.abs()).max(1.0);
            check(em >= 0.5 * (e1 + e2) - 1e-9 * scale, "midpoint concavity")?;
            let v = spec1d
                .project(2, &random_gf(&mut rng), SplitPart::NPart)
                .map_err(fail)?;
            let w1 = spec1d
                .project(2, &random_gf(&mut rng), SplitPart::MPart)
                .map_err(fail)?;
            let w2 = spec1d
                .project(2, &random_gf(&mut rng), SplitPart::MPart)
                .map_err(fail)?;
            let midw = w1.add(&w2).scaled(0.5);
            let e1 = value(&v.add(&w1), a, b)?;
            let e2 = value(&v.add(&w2), a, b)?;
            let em = value(&v.add(&midw), a, b)?;
            let scale = e1.abs().max(e2.abs()).max(1.0);
            check(em <= 0.5 * (e1 + e2) + 1e-9 * scale, "midpoint convexity")?;
        }
        Ok(format!(
            "residual {worst_res:.2e}, homogeneity {worst_hom:.2e}, zero at eigenvalue {zero:.2e}, 50 midpoint checks"
        ))
    });

    // ------------------------------------------------------------------
    run(&mut results, 5, "level-function monotonicity and sign", || {
        let lopts = LevelOptions::default();
        let grid: Vec<f64> = (0..5)
            .map(|i| l1 + 0.3 + (l3 - l1 - 0.6) * i as f64 / 4.0)
            .collect();
        let mut nvals = [[0.0f64; 5]; 5];
        let mut mvals = [[0.0f64; 5]; 5];
        for (i, &a) in grid.iter().enumerate() {
            for (j, &b) in grid.iter().enumerate() {
                let p = FucikPoint::new(a, b, 2).map_err(fail)?;
                nvals[i][j] = n_level(&spec1d, &p, &lopts).map_err(fail)?.value;
                mvals[i][j] = m_level(&spec1d, &p, &lopts).map_err(fail)?.value;
            }
        }
        for i in 0..5 {
            for j in 0..5 {
                if i + 1 < 5 {
                    check(
                        nvals[i + 1][j] <= nvals[i][j] + 1e-7
                            && mvals[i + 1][j] <= mvals[i][j] + 1e-7,
                        "nonincreasing in a",
                    )?;
                }
                if j + 1 < 5 {
                    check(
                        nvals[i][j + 1] <= nvals[i][j] + 1e-7
                            && mvals[i][j + 1] <= mvals[i][j] + 1e-7,
                        "nonincreasing in b",
                    )?;
                }
            }
        }
        let p = FucikPoint::new(l2, l2, 2).map_err(fail)?;
        let n0 = n_level(&spec1d, &p, &lopts).map_err(fail)?.value;
        let m0 = m_level(&spec1d, &p, &lopts).map_err(fail)?.value;
        check(
            n0.abs() <= 1e-4 && m0.abs() <= 1e-4,
            "vanishing at (lambda_2, lambda_2)",
        )?;
        Ok(format!(
            "5x5 grid nonincreasing; |n|, |m| at the eigenvalue = {:.1e}, {:.1e}",
            n0.abs(),
            m0.abs()
        ))
    });

    // ------------------------------------------------------------------
    run(&mut results, 6, "membership residual gap", || {
        let mut topts = TraceOptions::default();
        topts.tol_b = Some(1e-6);
        let five: Vec<f64> = (0..5).map(|i| 2.6 + 1.5 * i as f64).collect();
        let on = trace_curve(&spec1d, CurveKind::Nu, 2, &five, &topts).map_err(fail)?;
        let mopts = MembershipOptions::default();
        let mut on_max = 0.0f64;
        for s in &on.samples {
            let r = membership_residual(&spec1d, s.a, s.b, &mopts)
                .map_err(fail)?
                .residual;
            on_max = on_max.max(r);
        }
        check(on_max <= 1e-4, "on-curve residual 1e-4")?;
        let mut off_min = f64::INFINITY;
        for s in &on.samples {
            let r = membership_residual(&spec1d, s.a, s.b - 0.25, &mopts)
                .map_err(fail)?
                .residual;
            off_min = off_min.min(r);
        }
        check(off_min >= 10.0 * on_max, "off-curve at least 10x on-curve")?;
        Ok(format!(
            "on-curve max {on_max:.2e}, off-curve min {off_min:.2e} ({:.0}x)",
            off_min / on_max
        ))
    });

    // ------------------------------------------------------------------
    let square31 = || -> Result<Spectrum, String> {
        let op = build_operator(Domain::rectangle(PI, PI).unwrap(), &[31, 31]).map_err(fail)?;
        compute_spectrum(&op, 6).map_err(fail)
    };
    let solve_31 = |spec: &Spectrum, kind: GeometryKind, a: f64| -> Result<CriticalReport, String> {
        let nl = Nonlinearity::exponential(2).map_err(fail)?;
        let point = FucikPoint::new(a, a, 4).map_err(fail)?;
        let spike = SpikeSpec::Moser {
            j: 2980.9579870417283,
        };
        let geom = build_geometry(spec, kind, &point, &spike, &nl, &GeometryOptions::default())
            .map_err(fail)?;
        minimax_search(spec, &geom, &nl, &MinimaxOptions::default()).map_err(fail)
    };

    run(&mut results, 7, "linking solves (planar exponential)", || {
        let spec = square31()?;
        let op = spec.operator();
        let mut details = Vec::new();
        for (kind, a, label) in [
            (GeometryKind::BelowCurve, 7.0, "below"),
            (GeometryKind::AboveCurve, 8.6, "above"),
        ] {
            let t = Instant::now();
            let rep = solve_31(&spec, kind, a)?;
            check(
                rep.classification == Classification::NontrivialOk,
                "classification nontrivial_ok",
            )?;
            check(rep.grad_norm <= 1e-6, "gradient norm 1e-6")?;
            check(op.d_norm(&rep.candidate) >= 1e-2, "nontrivial D-norm")?;
            check(
                rep.energy > 0.0 && rep.energy < 2.0 * PI,
                "0 < E < 2 pi",
            )?;
            check(t.elapsed().as_secs_f64() < 1200.0, "runtime < 20 min")?;
            if label == "below" {
                *below_json.borrow_mut() = Some(serde_json::to_string(&rep).map_err(fail)?);
            }
            details.push(format!(
                "{label} E = {:.4}, |grad| = {:.1e}",
                rep.energy, rep.grad_norm
            ));
        }
        Ok(details.join("; "))
    });

    // ------------------------------------------------------------------
    run(&mut results, 8, "critical-power mountain pass (4D)", || {
        let t = Instant::now();
        let op = build_operator(Domain::hyperbox(&[PI; 4]).unwrap(), &[15; 4]).map_err(fail)?;
        let spec = compute_spectrum(&op, 2).map_err(fail)?;
        let nl = Nonlinearity::critical_power(4).map_err(fail)?;
        let a = 0.5 * spec.lambda(1);
        let geom = mountain_pass_geometry(
            &spec,
            a,
            a,
            &SpikeSpec::Bubble { eps: 0.05, mu: 2.0 },
            &nl,
            &GeometryOptions::default(),
        )
        .map_err(fail)?;
        let rep = minimax_search(&spec, &geom, &nl, &MinimaxOptions::default()).map_err(fail)?;
        check(
            rep.classification == Classification::NontrivialOk,
            "classification nontrivial_ok",
        )?;
        let min = rep.candidate.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = rep.candidate.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        check(
            (min >= -1e-10 && max > 0.0) || (max <= 1e-10 && min < 0.0),
            "sign-definite nodal values",
        )?;
        check(rep.energy < rep.c_star, "E below the compactness threshold")?;
        Ok(format!(
            "E = {:.4} < c* = {:.4}, range [{min:.2e}, {max:.2e}], {:.0} s",
            rep.energy,
            rep.c_star,
            t.elapsed().as_secs_f64()
        ))
    });

    // ------------------------------------------------------------------
    run(&mut results, 9, "concentration-estimate exponents", || {
        let t = Instant::now();
        let mu = 2.0;
        let tb = |dim: usize, eps: f64, mu: f64, kind: IntegralKind| -> Result<f64, String> {
            let p = BubbleParams::new(dim, eps, mu, vec![0.5; dim]).map_err(fail)?;
            radial_integral(&truncated_bubble_profile(&p).map_err(fail)?, kind).map_err(fail)
        };
        let exact_grad = |dim: usize| -> Result<f64, String> {
            let p = BubbleParams::new(dim, 1.0, 1.0, vec![0.5; dim]).map_err(fail)?;
            radial_integral(&bubble_profile(&p).map_err(fail)?, IntegralKind::GradSquared)
                .map_err(fail)
        };
        let mo = |j: f64, d: f64, kind: IntegralKind| -> Result<f64, String> {
            let p = MoserParams::new(j, d, vec![0.5, 0.5]).map_err(fail)?;
            radial_integral(&moser_profile(&p).map_err(fail)?, kind).map_err(fail)
        };
        let mut fits: Vec<ScalingFit> = Vec::new();
        // Gradient excess of the truncated bubble: slope N - 2 in mu eps.
        for (dim, target) in [(4usize, 2.0), (5, 3.0)] {
            let g = exact_grad(dim)?;
            let mut s = eval_series(0.03, 8, |e| {
                tb(dim, e, mu, IntegralKind::GradSquared).unwrap() - g
            });
            for p in &mut s {
                p.0 *= mu;
            }
            fits.push(
                fit_scaling(&format!("grad_excess_n{dim}"), &s, target, 0.2).map_err(fail)?,
            );
        }
        // Subcritical mass: eps^2 for N = 5; eps^2 |log(mu eps)| for N = 4,
        // where dividing out the log factor must improve the fit residual.
        let s = eval_series(0.01, 8, |e| tb(5, e, mu, IntegralKind::Power(2.0)).unwrap());
        fits.push(fit_scaling("mass_l2_n5", &s, 2.0, 0.2).map_err(fail)?);
        let raw = eval_series(0.01, 8, |e| tb(4, e, mu, IntegralKind::Power(2.0)).unwrap());
        let raw_fit = fit_scaling("mass_l2_n4_raw", &raw, 2.0, 1.0).map_err(fail)?;
        let corr: Vec<(f64, f64)> = raw
            .iter()
            .map(|&(e, v)| (e, v / (mu * e).ln().abs()))
            .collect();
        let corr_fit = fit_scaling("mass_l2_n4_log", &corr, 2.0, 0.2).map_err(fail)?;
        check(
            corr_fit.residual < raw_fit.residual,
            "log correction improves the 4D mass fit",
        )?;
        fits.push(corr_fit);
        // L1 mass of the truncated bubble: eps^{(N-2)/2} in eps, mu^{-2} in mu.
        let s = eval_series(0.1, 8, |e| tb(4, e, mu, IntegralKind::Power(1.0)).unwrap());
        fits.push(fit_scaling("mass_l1_eps", &s, 1.0, 0.2).map_err(fail)?);
        let s: Vec<(f64, f64)> = (0..8)
            .map(|k| {
                let m = 10.0 * 10.0f64.powf(0.25 * k as f64);
                (m, tb(4, 1e-4, m, IntegralKind::Power(1.0)).unwrap())
            })
            .collect();
        fits.push(fit_scaling("mass_l1_mu", &s, -2.0, 0.2).map_err(fail)?);
        // Annular-cutoff defect against a smooth radial profile: mu^{-2}.
        let s: Vec<(f64, f64)> = (0..8)
            .map(|k| {
                let m = 10.0 * 10.0f64.powf(0.25 * k as f64);
                let f = |r: f64| {
                    let (v, dv) = (r.cos(), -r.sin());
                    let q = (1.0 - eta(m * r)) * dv - m * eta_deriv(m * r) * v;
                    q * q * r.powi(3)
                };
                let (val, _) = fucik_link::quadrature::integrate(f, 0.0, 1.0 / m, 1e-10).unwrap();
                (m, val)
            })
            .collect();
        fits.push(fit_scaling("cutoff_defect_mu", &s, -2.0, 0.2).map_err(fail)?);
        // Moser-peak integrals: slopes 1 and 2 in d, and -1 in log j.
        let j = 2980.9579870417283;
        let s = eval_series(0.9, 8, |d| mo(j, d, IntegralKind::GradAbs).unwrap());
        fits.push(fit_scaling("moser_grad_l1", &s, 1.0, 0.2).map_err(fail)?);
        let s = eval_series(0.9, 8, |d| mo(j, d, IntegralKind::Power(1.0)).unwrap());
        fits.push(fit_scaling("moser_mass_l1", &s, 2.0, 0.2).map_err(fail)?);
        let s = eval_series(0.9, 8, |d| mo(j, d, IntegralKind::Power(2.0)).unwrap());
        fits.push(fit_scaling("moser_mass_l2_d", &s, 2.0, 0.2).map_err(fail)?);
        let s: Vec<(f64, f64)> = (0..8)
            .map(|k| {
                let lj = 2.0 * 32.0f64.powf(k as f64 / 7.0);
                (lj, mo(lj.exp(), 0.5, IntegralKind::Power(2.0)).unwrap())
            })
            .collect();
        fits.push(fit_scaling("moser_mass_l2_logj", &s, -1.0, 0.2).map_err(fail)?);
        for f in &fits {
            check(
                f.pass,
                &format!("{}: exponent {:.3} vs target {:.1}", f.quantity, f.exponent, f.target),
            )?;
        }
        check(t.elapsed().as_secs_f64() < 300.0, "runtime < 5 min")?;
        Ok(format!(
            "{} exponent fits within 0.2, {:.0} s",
            fits.len(),
            t.elapsed().as_secs_f64()
        ))
    });

    // ------------------------------------------------------------------
    run(&mut results, 10, "strict-level energy bounds", || {
        // Planar Moser spikes: the sup stays below 2 pi for large j, with
        // the margin strictly improving along j = e^4, e^8, e^16 and
        // positive once j is past the first entry.
        let spec = square31()?;
        let basis = vec![spec.phi(1).clone()];
        let js = [54.598150033144236, 2980.9579870417283, 8886110.520507872];
        let reports = sup_energy_check(
            &spec,
            StrictLevelLemma::L60,
            4.9,
            4.9,
            &basis,
            &js,
            &SupEnergyOptions::default(),
        )
        .map_err(fail)?;
        let margins: Vec<f64> = reports.iter().map(|r| r.margin).collect();
        check(
            margins.windows(2).all(|w| w[1] > w[0]),
            "Moser margins strictly increasing in j",
        )?;
        check(
            margins[1] > 0.0 && margins[2] > 0.0,
            "Moser margins positive at the two largest j",
        )?;
        // Dimension 4: truncated bubble against an annular-cutoff patch.
        // The cutoff inflates the patch Rayleigh quotient to 6.85, so (a,b)
        // sits just above it (and below lambda_2 = 6.92); the spike's mass
        // gain b eps^2 |log| overtakes the (mu eps)^2 truncation defect as
        // eps shrinks.
        let op = build_operator(Domain::hyperbox(&[PI; 4]).unwrap(), &[13; 4]).map_err(fail)?;
        let spec4 = compute_spectrum(&op, 2).map_err(fail)?;
        let x0 = vec![0.5 * PI; 4];
        let mu = 1.3;
        let cut = annular_cutoff(
            spec4.phi(1),
            &CutoffParams::new(mu, x0.clone()).map_err(fail)?,
        )
        .map_err(fail)?;
        let mut opts = SupEnergyOptions::default();
        opts.mu = Some(mu);
        let reports = sup_energy_check(
            &spec4,
            StrictLevelLemma::L8,
            6.9,
            6.9,
            &vec![cut],
            &[1e-2, 3e-3, 1e-3],
            &opts,
        )
        .map_err(fail)?;
        let m4: Vec<f64> = reports.iter().map(|r| r.margin).collect();
        let last = reports.last().unwrap();
        check(
            last.sup < last.c_star && last.margin > 0.0,
            "4D sup below S_4^2/4 at the smallest eps",
        )?;
        check(
            m4.last().unwrap() > m4.first().unwrap(),
            "4D margin improves as eps shrinks",
        )?;
        Ok(format!(
            "Moser margins {:+.3}/{:+.3}/{:+.3}; 4D margins {:+.4} -> {:+.4}",
            margins[0], margins[1], margins[2], m4[0], m4[2]
        ))
    });

    // ------------------------------------------------------------------
    run(&mut results, 11, "determinism", || {
        let (a_grid, first_csv) = nu_csv
            .borrow()
            .clone()
            .ok_or_else(|| "criterion 2 artifacts unavailable".to_string())?;
        let nu = trace_curve(&spec1d, CurveKind::Nu, 2, &a_grid, &TraceOptions::default())
            .map_err(fail)?;
        check(nu.to_csv() == first_csv, "curve CSV bit-identical on rerun")?;
        let first_json = below_json
            .borrow()
            .clone()
            .ok_or_else(|| "criterion 7 artifacts unavailable".to_string())?;
        let spec = square31()?;
        let rep = solve_31(&spec, GeometryKind::BelowCurve, 7.0)?;
        let second_json = serde_json::to_string(&rep).map_err(fail)?;
        check(second_json == first_json, "solve JSON bit-identical on rerun")?;
        Ok("trace CSV and solve JSON reproduce byte-for-byte".to_string())
    });

    let failed: Vec<usize> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    assert!(
        failed.is_empty(),
        "acceptance criteria failed: {failed:?} (see the lines above)"
    );
}
