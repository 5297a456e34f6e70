//! Shift-free block eigensolver for the smallest eigenpairs of the SPD
//! stencil operator, preconditioned by the exact tensor-basis inverse.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FucikError, Result};
use crate::operator::{DiscreteOperator, GridFunction};

#[derive(Debug, Clone)]
pub struct EigOptions {
    /// Residual tolerance on ||A phi - lambda phi||_{L2} relative to max(1, lambda).
    pub tol: f64,
    pub max_iter: usize,
    /// Relative gap below which neighboring eigenvalues count as one cluster.
    pub cluster_tol: f64,
    pub seed: u64,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
            cluster_tol: 1e-6,
            seed: 0,
        }
    }
}

type Column = Vec<f64>;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Modified Gram-Schmidt of `cols` against `fixed` and themselves, dropping
/// columns that lose all their mass.
fn orthonormalize(fixed: &[Column], cols: &mut Vec<Column>) {
    let mut kept: Vec<Column> = Vec::with_capacity(cols.len());
    for mut c in cols.drain(..) {
        for _ in 0..2 {
            for f in fixed.iter().chain(kept.iter()) {
                let p = dot(f, &c);
                for (ci, fi) in c.iter_mut().zip(f) {
                    *ci -= p * fi;
                }
            }
        }
        let n = norm(&c);
        if n > 1e-12 {
            for ci in &mut c {
                *ci /= n;
            }
            kept.push(c);
        }
    }
    *cols = kept;
}

/// Returns (eigenvalues, L2-orthonormal eigenvectors, L2 residual norms).
pub(crate) fn smallest_eigenpairs(
    op: &Arc<DiscreteOperator>,
    count: usize,
    opts: &EigOptions,
) -> Result<(Vec<f64>, Vec<GridFunction>, Vec<f64>)> {
    let total = op.mesh().total();
    let extra = (count / 2).clamp(2, 8);
    let m = (count + extra).min(total);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Column> = (0..m)
        .map(|_| (0..total).map(|_| rng.gen::<f64>() - 0.5).collect())
        .collect();
    orthonormalize(&[], &mut x);
    // Smooth starts converge faster than white noise.
    for c in x.iter_mut() {
        op.solve_in_place(c);
    }
    orthonormalize(&[], &mut x);

    let apply_all = |cols: &[Column]| -> Vec<Column> {
        cols.iter()
            .map(|c| {
                let mut out = vec![0.0; total];
                op.apply_into(c, &mut out);
                out
            })
            .collect()
    };

    let mut ax = apply_all(&x);
    let mut lambdas = vec![0.0; m];
    let mut residuals = vec![f64::INFINITY; m];

    let mut iterations = 0;
    let volume_sqrt = op.mesh().cell_volume().sqrt();
    loop {
        iterations += 1;
        // Rayleigh-Ritz on the current block.
        let h = DMatrix::from_fn(x.len(), x.len(), |i, j| dot(&x[i], &ax[j]));
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

        let rotate = |cols: &[Column]| -> Vec<Column> {
            order
                .iter()
                .map(|&k| {
                    let mut out = vec![0.0; total];
                    for (j, col) in cols.iter().enumerate() {
                        let w = eig.eigenvectors[(j, k)];
                        for (o, v) in out.iter_mut().zip(col) {
                            *o += w * v;
                        }
                    }
                    out
                })
                .collect()
        };
        x = rotate(&x);
        ax = rotate(&ax);
        for (j, &k) in order.iter().enumerate() {
            lambdas[j] = eig.eigenvalues[k];
        }

        // Residuals in the L2 norm (columns are L2-normalized up to the
        // uniform cell volume factor, which cancels).
        let mut worst = 0.0f64;
        for j in 0..x.len().min(count) {
            let r: f64 = ax[j]
                .iter()
                .zip(&x[j])
                .map(|(a, b)| {
                    let d = a - lambdas[j] * b;
                    d * d
                })
                .sum::<f64>()
                .sqrt();
            residuals[j] = r;
            worst = worst.max(r / lambdas[j].abs().max(1.0));
        }
        if worst <= opts.tol {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(FucikError::EigNonConvergence {
                iterations,
                residual: worst,
            });
        }

        // Preconditioned residuals extend the search space.
        let mut w: Vec<Column> = (0..x.len())
            .map(|j| {
                let mut r: Column = ax[j]
                    .iter()
                    .zip(&x[j])
                    .map(|(a, b)| a - lambdas[j] * b)
                    .collect();
                op.solve_in_place(&mut r);
                r
            })
            .collect();
        orthonormalize(&x, &mut w);
        if w.is_empty() {
            break;
        }
        let aw = apply_all(&w);

        let nb = x.len() + w.len();
        let basis: Vec<&Column> = x.iter().chain(w.iter()).collect();
        let abasis: Vec<&Column> = ax.iter().chain(aw.iter()).collect();
        let t = DMatrix::from_fn(nb, nb, |i, j| dot(basis[i], abasis[j]));
        let t = (&t + t.transpose()) * 0.5;
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..nb).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let take = m.min(nb);
        let combine = |cols: &[&Column]| -> Vec<Column> {
            order[..take]
                .iter()
                .map(|&k| {
                    let mut out = vec![0.0; total];
                    for (j, col) in cols.iter().enumerate() {
                        let wgt = eig.eigenvectors[(j, k)];
                        for (o, v) in out.iter_mut().zip(col.iter()) {
                            *o += wgt * v;
                        }
                    }
                    out
                })
                .collect()
        };
        x = combine(&basis);
        ax = combine(&abasis);
        // Re-orthonormalize to control drift; refresh ax when that changes x.
        let before = x.len();
        orthonormalize(&[], &mut x);
        if x.len() != before {
            ax = apply_all(&x);
        }
    }

    let mesh = op.mesh();
    let mut values = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    let mut res_out = Vec::with_capacity(count);
    for j in 0..count {
        let mut col = x[j].clone();
        // L2-normalize and fix the sign at the largest-magnitude node.
        let peak = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap();
        let flip = if col[peak] < 0.0 { -1.0 } else { 1.0 };
        for v in &mut col {
            *v *= flip / volume_sqrt;
        }
        values.push(lambdas[j]);
        // Euclidean residual of the Euclidean-normalized column equals the
        // L2 residual of the L2-normalized eigenvector.
        res_out.push(residuals[j]);
        vectors.push(GridFunction::from_values(mesh, col).expect("finite eigenvector"));
    }
    Ok((values, vectors, res_out))
}
