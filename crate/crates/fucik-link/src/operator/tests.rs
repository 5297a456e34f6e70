use std::f64::consts::PI;

use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn interval_op(n: usize) -> std::sync::Arc<DiscreteOperator> {
    build_operator(Domain::interval(PI).unwrap(), &[n]).unwrap()
}

fn square_op(n: usize) -> std::sync::Arc<DiscreteOperator> {
    build_operator(Domain::rectangle(PI, PI).unwrap(), &[n, n]).unwrap()
}

fn random_u(mesh: &std::sync::Arc<Mesh>, rng: &mut impl Rng) -> GridFunction {
    GridFunction::from_values(mesh, (0..mesh.total()).map(|_| rng.gen::<f64>() - 0.5).collect())
        .unwrap()
}

/// Closed-form eigenvalues of the 1D three-point stencil with Dirichlet ends.
fn stencil_eigs_1d(n: usize, length: f64, count: usize) -> Vec<f64> {
    let h = length / (n + 1) as f64;
    (1..=count)
        .map(|l| 2.0 / (h * h) * (1.0 - (l as f64 * h * PI / length).cos()))
        .collect()
}

#[test]
fn domain_rejects_bad_inputs() {
    assert!(Domain::interval(0.0).is_err());
    assert!(Domain::interval(-1.0).is_err());
    assert!(Domain::new(vec![]).is_err());
    assert!(Domain::new(vec![1.0; 5]).is_err());
}

#[test]
fn mesh_budget_and_minimum_nodes() {
    let d = Domain::rectangle(PI, PI).unwrap();
    assert!(matches!(
        Mesh::with_budget(d.clone(), &[100, 100], 500),
        Err(FucikError::BudgetExceeded { .. })
    ));
    assert!(Mesh::new(d, &[2, 5]).is_err());
}

#[test]
fn stencil_symmetry_and_positivity() {
    let op = square_op(9);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let u = random_u(op.mesh(), &mut rng);
        let v = random_u(op.mesh(), &mut rng);
        let uv = op.d_inner(&u, &v).unwrap();
        let vu = op.d_inner(&v, &u).unwrap();
        assert_relative_eq!(uv, vu, max_relative = 1e-12);
        assert!(op.d_inner(&u, &u).unwrap() > 0.0);
    }
}

#[test]
fn exact_inverse_round_trip() {
    for op in [interval_op(17), square_op(9)] {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_u(op.mesh(), &mut rng);
        let au = op.apply(&u);
        let back = op.solve(&au);
        assert!(back.sub(&u).max_abs() < 1e-10 * u.max_abs().max(1.0));
    }
}

#[test]
fn eigenvalues_match_1d_closed_form() {
    let op = interval_op(511);
    let spec = compute_spectrum(&op, 4).unwrap();
    let exact = stencil_eigs_1d(511, PI, 4);
    for l in 1..=4 {
        assert_relative_eq!(spec.lambda(l), exact[l - 1], max_relative = 1e-9);
        // Discrete eigenvalues approach l^2 from below.
        let cont = (l * l) as f64;
        assert!(spec.lambda(l) < cont);
        assert_relative_eq!(spec.lambda(l), cont, max_relative = 1e-3);
    }
}

#[test]
fn square_cluster_matches_dense_oracle() {
    // 9x9 mesh: small enough for a dense eigensolve oracle.
    let op = square_op(9);
    let spec = compute_spectrum(&op, 4).unwrap();

    let total = op.mesh().total();
    let mut dense = nalgebra::DMatrix::zeros(total, total);
    for j in 0..total {
        let mut e = GridFunction::zeros(op.mesh());
        e.values_mut()[j] = 1.0;
        let col = op.apply(&e);
        for i in 0..total {
            dense[(i, j)] = col.values()[i];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(dense);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    for l in 1..=4 {
        assert_relative_eq!(spec.lambda(l), vals[l - 1], max_relative = 1e-8);
    }
    // lambda_2 = lambda_3 is a multiplicity cluster (continuum 5 = 1+4 = 4+1).
    assert!(spec.same_cluster(2, 3));
    assert!(!spec.same_cluster(1, 2));
}

#[test]
fn ground_state_has_constant_sign() {
    for op in [interval_op(31), square_op(15)] {
        let spec = compute_spectrum(&op, 1).unwrap();
        let phi = spec.phi(1);
        let min = phi.values().iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > 0.0, "Perron eigenvector should be positive after sign fix");
    }
}

#[test]
fn eigenvectors_l2_orthonormal_with_small_residuals() {
    let op = square_op(15);
    let spec = compute_spectrum(&op, 5).unwrap();
    for i in 1..=5 {
        for j in 1..=5 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((spec.phi(i).l2_inner(spec.phi(j)) - want).abs() < 1e-8);
        }
        assert!(spec.residuals()[i - 1] <= 1e-8);
    }
}

#[test]
fn d_inner_of_sampled_sine() {
    let op = interval_op(511);
    let u = GridFunction::sample(op.mesh(), |x| x[0].sin());
    let val = op.d_inner(&u, &u).unwrap();
    // integral of cos^2 over (0, pi)
    assert_relative_eq!(val, PI / 2.0, max_relative = 1e-4);
}

#[test]
fn d_inner_diagonalizes_eigenvectors() {
    let op = interval_op(63);
    let spec = compute_spectrum(&op, 4).unwrap();
    for l in 1..=4 {
        for m in 1..=4 {
            let v = op.d_inner(spec.phi(l), spec.phi(m)).unwrap();
            if l == m {
                assert_relative_eq!(v, spec.lambda(l), max_relative = 1e-8);
            } else {
                assert!(v.abs() < 1e-7);
            }
        }
    }
}

#[test]
fn projection_identities() {
    let op = interval_op(63);
    let spec = compute_spectrum(&op, 4).unwrap();
    // phi_1 is fixed by the N-projection at level 1.
    let p = spec.project(1, spec.phi(1), SplitPart::NPart).unwrap();
    assert!(p.sub(spec.phi(1)).max_abs() < 1e-9);
    // phi_{l+1} has no N_l component.
    let q = spec.project(2, spec.phi(3), SplitPart::NPart).unwrap();
    assert!(q.max_abs() < 1e-7);
    // u = P_N u + P_M u exactly, and the parts are D-orthogonal.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = random_u(op.mesh(), &mut rng);
    let n = spec.project(2, &u, SplitPart::NPart).unwrap();
    let m = spec.project(2, &u, SplitPart::MPart).unwrap();
    assert!(n.add(&m).sub(&u).max_abs() < 1e-12 * u.max_abs());
    assert!(op.d_inner(&n, &m).unwrap().abs() < 1e-6 * op.d_norm(&u).powi(2));
    // Idempotence.
    let nn = spec.project(2, &n, SplitPart::NPart).unwrap();
    assert!(nn.sub(&n).max_abs() < 1e-10);
}

#[test]
fn cluster_split_guard() {
    let op = square_op(9);
    let spec = compute_spectrum(&op, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u = random_u(op.mesh(), &mut rng);
    assert!(matches!(
        spec.project(2, &u, SplitPart::NPart),
        Err(FucikError::ClusterSplit { level: 2, .. })
    ));
    assert!(spec.project(3, &u, SplitPart::NPart).is_ok());
}

#[test]
fn rayleigh_bounds_on_split_parts() {
    // Rayleigh bounds: D-norm vs lambda_l on N_l, lambda_{l+1} on M_l.
    let op = interval_op(63);
    let spec = compute_spectrum(&op, 4).unwrap();
    let l = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let u = random_u(op.mesh(), &mut rng);
        let v = spec.project(l, &u, SplitPart::NPart).unwrap();
        let w = spec.project(l, &u, SplitPart::MPart).unwrap();
        let dv = op.d_inner(&v, &v).unwrap();
        let dw = op.d_inner(&w, &w).unwrap();
        assert!(dv <= spec.lambda(l) * v.l2_inner(&v) * (1.0 + 1e-8));
        assert!(dw >= spec.lambda(l + 1) * w.l2_inner(&w) * (1.0 - 1e-6));
        // Poincare: d_norm^2 >= lambda_1 ||u||^2.
        let du = op.d_inner(&u, &u).unwrap();
        assert!(du >= spec.lambda(1) * u.l2_inner(&u) * (1.0 - 1e-8));
    }
}

#[test]
fn refinement_converges_monotonically_from_below() {
    for l in 1..=3usize {
        let mut prev = f64::NEG_INFINITY;
        for n in [31, 63, 127] {
            let spec = compute_spectrum(&interval_op(n), 3).unwrap();
            let lam = spec.lambda(l);
            assert!(lam > prev);
            assert!(lam < (l * l) as f64);
            prev = lam;
        }
    }
    let mut prev = f64::NEG_INFINITY;
    for n in [15, 31, 63] {
        let spec = compute_spectrum(&square_op(n), 1).unwrap();
        assert!(spec.lambda(1) > prev && spec.lambda(1) < 2.0);
        prev = spec.lambda(1);
    }
}

#[test]
fn spectrum_deterministic_for_fixed_seed() {
    let op = square_op(15);
    let a = compute_spectrum(&op, 4).unwrap();
    let b = compute_spectrum(&op, 4).unwrap();
    assert_eq!(a.eigenvalues(), b.eigenvalues());
    for l in 1..=4 {
        assert_eq!(a.phi(l).values(), b.phi(l).values());
    }
}

#[test]
fn hyperbox_4d_builds_and_solves() {
    let op = build_operator(Domain::hyperbox(&[PI; 4]).unwrap(), &[9; 4]).unwrap();
    let spec = compute_spectrum(&op, 2).unwrap();
    // continuum: lambda_1 = 4, lambda_2 = 7 (discrete slightly below).
    assert!((spec.lambda(1) - 4.0).abs() < 0.1);
    assert!((spec.lambda(2) - 7.0).abs() < 0.3);
}
