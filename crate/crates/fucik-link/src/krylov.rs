//! Small matrix-free Krylov solvers used by the reduction maps and the
//! critical point polish.

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Preconditioned conjugate gradients for an SPD operator given as a closure.
/// Returns (solution, iterations, relative residual).
pub fn pcg(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    precond: &mut dyn FnMut(&[f64], &mut [f64]),
    rhs: &[f64],
    x0: Option<&[f64]>,
    tol_rel: f64,
    max_iter: usize,
) -> (Vec<f64>, usize, f64) {
    let n = rhs.len();
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    let mut r = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    apply(&x, &mut tmp);
    for i in 0..n {
        r[i] = rhs[i] - tmp[i];
    }
    let rhs_norm = norm(rhs).max(f64::MIN_POSITIVE);
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iters = 0;
    while iters < max_iter {
        let res = norm(&r) / rhs_norm;
        if res <= tol_rel {
            break;
        }
        iters += 1;
        apply(&p, &mut tmp);
        let denom = dot(&p, &tmp);
        if denom <= 0.0 || !denom.is_finite() {
            break; // lost positivity, return best iterate
        }
        let alpha = rz / denom;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * tmp[i];
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm(&r) / rhs_norm;
    (x, iters, res)
}

/// Restarted GMRES on a (not necessarily symmetric or definite) operator.
/// Used for Newton corrections where the preconditioned system is a compact
/// perturbation of the identity.
pub fn gmres(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    rhs: &[f64],
    restart: usize,
    tol_rel: f64,
    max_outer: usize,
) -> (Vec<f64>, f64) {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let rhs_norm = norm(rhs).max(f64::MIN_POSITIVE);
    let mut tmp = vec![0.0; n];

    for _ in 0..max_outer {
        apply(&x, &mut tmp);
        let r0: Vec<f64> = rhs.iter().zip(&tmp).map(|(b, a)| b - a).collect();
        let beta = norm(&r0);
        if beta / rhs_norm <= tol_rel {
            return (x, beta / rhs_norm);
        }
        let m = restart.min(n);
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r0.iter().map(|a| a / beta).collect());
        let mut h = vec![vec![0.0f64; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = vec![0.0f64; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            apply(&v[k], &mut tmp);
            let mut w = tmp.clone();
            for (j, vj) in v.iter().enumerate() {
                let hjk = dot(vj, &w);
                h[j][k] = hjk;
                for i in 0..n {
                    w[i] -= hjk * vj[i];
                }
            }
            let wn = norm(&w);
            h[k + 1][k] = wn;
            // Givens rotations to maintain the least-squares triangle.
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + wn * wn).sqrt();
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = wn / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if wn <= 1e-14 * beta || g[k + 1].abs() / rhs_norm <= tol_rel {
                break;
            }
            v.push(w.iter().map(|a| a / wn).collect());
        }
        // Back-substitution.
        let mut y = vec![0.0f64; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= h[i][j] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for i in 0..n {
                x[i] += yj * v[j][i];
            }
        }
        if g[k_used].abs() / rhs_norm <= tol_rel {
            break;
        }
    }
    apply(&x, &mut tmp);
    let res: f64 = rhs
        .iter()
        .zip(&tmp)
        .map(|(b, a)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt()
        / rhs_norm;
    (x, res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcg_solves_spd_system() {
        // 1D Laplacian-like tridiagonal system.
        let n = 50;
        let mut apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                out[i] = 2.0 * x[i] - l - r;
            }
        };
        let mut ident = |x: &[f64], out: &mut [f64]| out.copy_from_slice(x);
        let rhs = vec![1.0; n];
        let (x, _, res) = pcg(&mut apply, &mut ident, &rhs, None, 1e-12, 500);
        assert!(res < 1e-10);
        let mut out = vec![0.0; n];
        apply(&x, &mut out);
        assert!((out[10] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 40;
        let mut apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let up = if i + 1 < n { x[i + 1] } else { 0.0 };
                out[i] = x[i] + 0.3 * up;
            }
        };
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (x, res) = gmres(&mut apply, &rhs, 30, 1e-12, 5);
        assert!(res < 1e-10);
        let mut out = vec![0.0; n];
        apply(&x, &mut out);
        assert!((out[3] - rhs[3]).abs() < 1e-9);
    }
}
