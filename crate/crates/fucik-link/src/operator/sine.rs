//! Per-axis sine eigenbasis of the 1D three-point Dirichlet stencil.
//!
//! The matrix S with S[i][k] = sin((i+1)(k+1) pi / (n+1)) is symmetric and
//! satisfies S S = ((n+1)/2) I, so forward and inverse transforms are the
//! same dense apply up to a scale factor.

use std::f64::consts::PI;

#[derive(Debug)]
pub(crate) struct SineBasis {
    n: usize,
    /// Row-major n x n sine matrix.
    s: Vec<f64>,
    /// Stencil eigenvalues (2/h^2)(1 - cos((k+1) pi / (n+1))), ascending.
    eigs: Vec<f64>,
}

impl SineBasis {
    pub fn new(n: usize, h: f64) -> Self {
        let np1 = (n + 1) as f64;
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                s[i * n + k] = ((i + 1) as f64 * (k + 1) as f64 * PI / np1).sin();
            }
        }
        let eigs = (0..n)
            .map(|k| 2.0 / (h * h) * (1.0 - ((k + 1) as f64 * PI / np1).cos()))
            .collect();
        Self { n, s, eigs }
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.eigs[k]
    }

    /// Applies scale * S to the strided line starting at `base`.
    pub fn apply(&self, data: &mut [f64], base: usize, stride: usize, scale: f64, buf: &mut [f64]) {
        let n = self.n;
        for (i, b) in buf[..n].iter_mut().enumerate() {
            *b = data[base + i * stride];
        }
        for i in 0..n {
            let row = &self.s[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for (r, b) in row.iter().zip(&buf[..n]) {
                acc += r * b;
            }
            data[base + i * stride] = acc * scale;
        }
    }
}
