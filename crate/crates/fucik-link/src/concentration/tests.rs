use std::f64::consts::PI;

use super::*;
use crate::operator::{build_operator, compute_spectrum, Domain};

#[test]
fn moser_peaks_have_unit_dirichlet_norm() {
    for (j, d) in [
        (2.0, 0.3),
        (5.0, 0.7),
        (10.0, 0.1),
        (50.0, 0.9),
        (100.0, 0.25),
        (54.598, 0.5),
        (2980.958, 0.84),
        (8886110.5, 0.2),
        (3.0, 0.05),
        (1.0e4, 0.6),
    ] {
        let p = MoserParams::new(j, d, vec![0.5, 0.5]).unwrap();
        let prof = moser_profile(&p).unwrap();
        let norm = radial_integral(&prof, IntegralKind::GradSquared).unwrap();
        assert!((norm - 1.0).abs() < 1e-6, "j = {j}, d = {d}: got {norm}");
    }
}

#[test]
fn bubble_integrals_are_scale_invariant() {
    // The Dirichlet energy and the critical mass of the full bubble are
    // independent of eps; checked for N = 3 and N = 4.
    for dim in [3usize, 4] {
        let two_star = 2.0 * dim as f64 / (dim as f64 - 2.0);
        let mut grads = Vec::new();
        let mut masses = Vec::new();
        for eps in [0.3, 0.6, 1.7] {
            let p = BubbleParams::new(dim, eps, 1.0, vec![0.5; dim]).unwrap();
            let prof = bubble_profile(&p).unwrap();
            grads.push(radial_integral(&prof, IntegralKind::GradSquared).unwrap());
            masses.push(radial_integral(&prof, IntegralKind::Power(two_star)).unwrap());
        }
        for w in grads.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-6 * w[0], "{dim}D grads {w:?}");
        }
        for w in masses.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-6 * w[0], "{dim}D masses {w:?}");
        }
    }
}

#[test]
fn four_dimensional_sobolev_constant_matches_closed_form() {
    // S_4 = sqrt(32 pi^2 / 3): the quartic threshold S_4^2/4 is 8 pi^2 / 3.
    let s4 = sobolev_constant_radial(4).unwrap();
    let exact = (32.0 * PI * PI / 3.0f64).sqrt();
    assert!((s4 - exact).abs() < 1e-6 * exact, "got {s4}, want {exact}");
}

#[test]
fn sampled_profiles_vanish_on_the_boundary() {
    let domain = Domain::rectangle(PI, PI).unwrap();
    let op = build_operator(domain, &[31, 31]).unwrap();
    let mesh = op.mesh();
    let moser = moser_profile(&MoserParams::coupled(54.598, vec![0.5 * PI; 2]).unwrap())
        .unwrap()
        .sample(mesh)
        .unwrap();
    let domain3 = Domain::hyperbox(&[PI, PI, PI]).unwrap();
    let op3 = build_operator(domain3, &[15, 15, 15]).unwrap();
    let bubble = truncated_bubble_profile(
        &BubbleParams::new(3, 0.05, 1.0, vec![0.5 * PI; 3]).unwrap(),
    )
    .unwrap()
    .sample(op3.mesh())
    .unwrap();
    for (gf, m) in [(&moser, mesh), (&bubble, op3.mesh())] {
        let lengths = m.domain().lengths().to_vec();
        let spacing: Vec<f64> = m.spacing().to_vec();
        for i in 0..m.total() {
            let x = m.node(i);
            let near_boundary = x
                .iter()
                .zip(&lengths)
                .zip(&spacing)
                .any(|((&c, &l), &h)| c < 1.5 * h || c > l - 1.5 * h);
            if near_boundary {
                assert!(
                    gf.values()[i].abs() <= 1e-12,
                    "nonzero boundary value {}",
                    gf.values()[i]
                );
            }
        }
    }
}

#[test]
fn truncated_bubble_and_annular_cutoff_have_disjoint_supports() {
    let domain = Domain::hyperbox(&[PI; 4]).unwrap();
    let op = build_operator(domain, &[13; 4]).unwrap();
    let mesh = op.mesh();
    let x0 = vec![0.5 * PI; 4];
    let mu = 2.0;
    let spike = truncated_bubble_profile(&BubbleParams::new(4, 0.02, mu, x0.clone()).unwrap())
        .unwrap()
        .sample(mesh)
        .unwrap();
    let smooth = GridFunction::sample(mesh, |x| {
        x.iter().map(|&c| (c).sin()).product::<f64>() + 0.3
    });
    let cut = annular_cutoff(&smooth, &CutoffParams::new(mu, x0).unwrap()).unwrap();
    let overlap = spike
        .values()
        .iter()
        .zip(cut.values())
        .map(|(&a, &b)| (a * b).abs())
        .fold(0.0f64, f64::max);
    assert_eq!(overlap, 0.0, "supports overlap");
}

#[test]
fn coupling_windows_reject_out_of_range_parameters() {
    // The gamma window (1/N, 1 - 2/(N-2)) is empty in dimension 4.
    assert!(BubbleParams::coupled(4, 0.01, 0.3, vec![0.5; 4]).is_err());
    // In dimension 5 the window is (0.2, 1/3).
    assert!(BubbleParams::coupled(5, 0.01, 0.25, vec![0.5; 5]).is_ok());
    assert!(BubbleParams::coupled(5, 0.01, 0.4, vec![0.5; 5]).is_err());
    // The beta window ((N+2)/N, (N-2)/2) in dimension 6 is (4/3, 2).
    let base = BubbleParams::new(6, 0.01, 1.0, vec![0.5; 6]).unwrap();
    assert!(base.clone().with_beta(1.5).is_ok());
    assert!(base.with_beta(2.5).is_err());
}

#[test]
fn annular_step_is_continuous_with_bounded_slope() {
    let mut prev = eta(0.0);
    let mut max_slope = 0.0f64;
    let n = 200_000;
    for i in 1..=n {
        let s = 1.2 * i as f64 / n as f64;
        let v = eta(s);
        assert!((v - prev).abs() < 1e-4, "jump at s = {s}");
        prev = v;
        max_slope = max_slope.max(eta_deriv(s).abs());
    }
    assert!(max_slope <= 5.0, "slope {max_slope} exceeds 5");
    assert_eq!(eta(0.75), 0.0);
    assert_eq!(eta(1.0), 1.0);
    // xi is the complementary step at quarter scale.
    assert_eq!(xi(0.25), 1.0);
    assert_eq!(xi(0.5), 0.0);
    assert!((xi(0.375) - 0.5).abs() < 1e-12);
    assert_eq!(xi_deriv(0.2), 0.0);
}

#[test]
fn power_law_fits_recover_exponents_and_reject_short_spans() {
    let series: Vec<(f64, f64)> = (0..8)
        .map(|i| {
            let x = 10.0f64.powf(-0.25 * i as f64);
            (x, 3.0 * x.powf(1.75))
        })
        .collect();
    let fit = fit_scaling("synthetic", &series, 1.75, 0.05).unwrap();
    assert!(fit.pass);
    assert!((fit.exponent - 1.75).abs() < 1e-10);
    assert!((fit.constant - 3.0).abs() < 1e-8);
    let short: Vec<(f64, f64)> = (0..8).map(|i| (1.0 + i as f64 * 0.1, 1.0)).collect();
    assert!(matches!(
        fit_scaling("short", &short, 1.0, 0.1),
        Err(FucikError::InsufficientDecadeSpan { .. })
    ));
    assert!(fit_scaling("few", &series[..3], 1.75, 0.1).is_err());
}

#[test]
fn moser_spike_energy_stays_below_the_planar_threshold() {
    let domain = Domain::rectangle(PI, PI).unwrap();
    let op = build_operator(domain, &[31, 31]).unwrap();
    let spec = compute_spectrum(&op, 4).unwrap();
    // (a, b) = (4.9, 4.9) sits between lambda_1 = 2 and lambda_2 = 5, so the
    // jumping quadratic is negative along phi_1 as the bound requires; the
    // threshold holds once the Moser index is large (here j = e^16).
    let basis = vec![spec.phi(1).clone()];
    let reports = sup_energy_check(
        &spec,
        StrictLevelLemma::L60,
        4.9,
        4.9,
        &basis,
        &[8886110.520507872],
        &SupEnergyOptions::default(),
    )
    .unwrap();
    assert_eq!(reports.len(), 1);
    let r = &reports[0];
    assert!(r.sup < 2.0 * PI, "sup {} not below 2 pi", r.sup);
    assert!(r.margin > 0.0);
    assert_eq!(r.grid_values.len(), r.s_grid.len());
}

#[test]
fn high_dimensional_lemma_is_rejected_on_low_dimensional_meshes() {
    let domain = Domain::hyperbox(&[PI; 4]).unwrap();
    let op = build_operator(domain, &[9; 4]).unwrap();
    let spec = compute_spectrum(&op, 2).unwrap();
    let basis = vec![spec.phi(1).clone()];
    let err = sup_energy_check(
        &spec,
        StrictLevelLemma::L6,
        6.0,
        6.0,
        &basis,
        &[0.05],
        &SupEnergyOptions::default(),
    );
    assert!(matches!(
        err,
        Err(FucikError::IncompatibleNonlinearity { .. })
    ));
}
