//! Tensor-product Dirichlet Laplacian discretizations.
//!
//! Second-order central differences with a lumped (diagonal) mass, so nodal
//! positive/negative part splitting is exact in the discrete L2 inner product.
//! The operator keeps a per-axis sine eigenbasis around, which gives an exact
//! inverse apply; the block eigensolver uses it as a preconditioner and the
//! optimizers use it as the D-metric Riesz map.

mod lobpcg;
mod sine;

use std::sync::Arc;

use serde::Serialize;

use crate::error::{FucikError, Result};
use sine::SineBasis;

pub use lobpcg::EigOptions;

/// Tensor-product box domain, dimension 1 through 4.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Domain {
    lengths: Vec<f64>,
}

impl Domain {
    pub fn new(lengths: Vec<f64>) -> Result<Self> {
        if lengths.is_empty() || lengths.len() > 4 {
            return Err(FucikError::DegenerateDomain(format!(
                "dimension {} not in 1..=4",
                lengths.len()
            )));
        }
        if lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(FucikError::DegenerateDomain(format!(
                "side lengths must be positive and finite, got {lengths:?}"
            )));
        }
        Ok(Self { lengths })
    }

    pub fn interval(length: f64) -> Result<Self> {
        Self::new(vec![length])
    }

    pub fn rectangle(lx: f64, ly: f64) -> Result<Self> {
        Self::new(vec![lx, ly])
    }

    pub fn hyperbox(lengths: &[f64]) -> Result<Self> {
        Self::new(lengths.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }
}

/// Tensor grid of interior nodes; boundary values are implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    domain: Domain,
    points: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    total: usize,
    cell_volume: f64,
}

/// Default unknown budgets: desk-scale meshes, tighter in four dimensions.
pub fn default_budget(dim: usize) -> usize {
    if dim == 4 {
        17usize.pow(4)
    } else {
        1 << 19
    }
}

impl Mesh {
    pub fn new(domain: Domain, points_per_axis: &[usize]) -> Result<Arc<Self>> {
        Self::with_budget(domain, points_per_axis, default_budget(points_per_axis.len()))
    }

    pub fn with_budget(domain: Domain, points_per_axis: &[usize], budget: usize) -> Result<Arc<Self>> {
        if points_per_axis.len() != domain.dim() {
            return Err(FucikError::DegenerateDomain(format!(
                "{} point counts for a {}-dimensional domain",
                points_per_axis.len(),
                domain.dim()
            )));
        }
        if points_per_axis.iter().any(|&n| n < 3) {
            return Err(FucikError::DegenerateDomain(
                "need at least 3 interior nodes per axis".into(),
            ));
        }
        let total: usize = points_per_axis.iter().product();
        if total > budget {
            return Err(FucikError::BudgetExceeded {
                requested: total,
                budget,
            });
        }
        let spacing: Vec<f64> = domain
            .lengths
            .iter()
            .zip(points_per_axis)
            .map(|(&l, &n)| l / (n + 1) as f64)
            .collect();
        let dim = points_per_axis.len();
        let mut strides = vec![1usize; dim];
        for d in (0..dim.saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * points_per_axis[d + 1];
        }
        let cell_volume = spacing.iter().product();
        Ok(Arc::new(Self {
            domain,
            points: points_per_axis.to_vec(),
            spacing,
            strides,
            total,
            cell_volume,
        }))
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn points_per_axis(&self) -> &[usize] {
        &self.points
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Coordinates of the interior node with the given flat index.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut rem = flat;
        let mut x = vec![0.0; self.dim()];
        for d in 0..self.dim() {
            let i = rem / self.strides[d];
            rem %= self.strides[d];
            x[d] = (i + 1) as f64 * self.spacing[d];
        }
        x
    }

    /// Calls `f` with the flat base index of every grid line along `axis`.
    fn for_each_line(&self, axis: usize, mut f: impl FnMut(usize)) {
        let outer: usize = self.total / self.points[axis];
        let dims: Vec<usize> = (0..self.dim()).filter(|&d| d != axis).collect();
        for k in 0..outer {
            let mut rem = k;
            let mut base = 0usize;
            for &d in dims.iter().rev() {
                let i = rem % self.points[d];
                rem /= self.points[d];
                base += i * self.strides[d];
            }
            f(base);
        }
    }
}

/// Nodal values over the interior nodes of a mesh; zero on the boundary.
#[derive(Debug, Clone)]
pub struct GridFunction {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        Self {
            mesh: Arc::clone(mesh),
            values: vec![0.0; mesh.total()],
        }
    }

    pub fn from_values(mesh: &Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.total() {
            return Err(FucikError::MeshMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FucikError::DegenerateDomain(
                "grid function values must be finite".into(),
            ));
        }
        Ok(Self {
            mesh: Arc::clone(mesh),
            values,
        })
    }

    pub fn sample(mesh: &Arc<Mesh>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..mesh.total()).map(|i| f(&mesh.node(i))).collect();
        Self {
            mesh: Arc::clone(mesh),
            values,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_mesh(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh) || *self.mesh == *other.mesh
    }

    /// Discrete L2 inner product (lumped mass).
    pub fn l2_inner(&self, other: &GridFunction) -> f64 {
        debug_assert!(self.same_mesh(other));
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        dot * self.mesh.cell_volume
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_inner(self).sqrt()
    }

    pub fn scale(&mut self, t: f64) {
        for v in &mut self.values {
            *v *= t;
        }
    }

    pub fn scaled(&self, t: f64) -> GridFunction {
        let mut out = self.clone();
        out.scale(t);
        out
    }

    /// self += t * other
    pub fn axpy(&mut self, t: f64, other: &GridFunction) {
        debug_assert!(self.same_mesh(other));
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += t * b;
        }
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Nodal positive and negative parts: u = plus - minus, plus*minus = 0.
    pub fn split_signs(&self) -> (GridFunction, GridFunction) {
        let plus = GridFunction {
            mesh: Arc::clone(&self.mesh),
            values: self.values.iter().map(|&v| v.max(0.0)).collect(),
        };
        let minus = GridFunction {
            mesh: Arc::clone(&self.mesh),
            values: self.values.iter().map(|&v| (-v).max(0.0)).collect(),
        };
        (plus, minus)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

/// The discrete Dirichlet Laplacian as a symmetric positive-definite form.
#[derive(Debug)]
pub struct DiscreteOperator {
    mesh: Arc<Mesh>,
    axes: Vec<SineBasis>,
    /// Sum of per-axis stencil eigenvalues for every flat index.
    eig_sum: Vec<f64>,
}

pub fn build_operator(domain: Domain, points_per_axis: &[usize]) -> Result<Arc<DiscreteOperator>> {
    let mesh = Mesh::new(domain, points_per_axis)?;
    Ok(DiscreteOperator::new(&mesh))
}

pub fn build_operator_with_budget(
    domain: Domain,
    points_per_axis: &[usize],
    budget: usize,
) -> Result<Arc<DiscreteOperator>> {
    let mesh = Mesh::with_budget(domain, points_per_axis, budget)?;
    Ok(DiscreteOperator::new(&mesh))
}

impl DiscreteOperator {
    pub fn new(mesh: &Arc<Mesh>) -> Arc<Self> {
        let axes: Vec<SineBasis> = (0..mesh.dim())
            .map(|d| SineBasis::new(mesh.points_per_axis()[d], mesh.spacing()[d]))
            .collect();
        let mut eig_sum = vec![0.0; mesh.total()];
        for (flat, s) in eig_sum.iter_mut().enumerate() {
            let mut rem = flat;
            let mut acc = 0.0;
            for (d, basis) in axes.iter().enumerate() {
                let i = rem / mesh.strides[d];
                rem %= mesh.strides[d];
                acc += basis.eigenvalue(i);
            }
            *s = acc;
        }
        Arc::new(Self {
            mesh: Arc::clone(mesh),
            axes,
            eig_sum,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// Stencil apply: (A u)_i = sum_d (2 u_i - u_{i-} - u_{i+}) / h_d^2.
    pub fn apply(&self, u: &GridFunction) -> GridFunction {
        let mut out = GridFunction::zeros(&self.mesh);
        self.apply_into(u.values(), out.values_mut());
        out
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for d in 0..self.mesh.dim() {
            let n = self.mesh.points[d];
            let stride = self.mesh.strides[d];
            let inv_h2 = 1.0 / (self.mesh.spacing[d] * self.mesh.spacing[d]);
            self.mesh.for_each_line(d, |base| {
                for i in 0..n {
                    let idx = base + i * stride;
                    let left = if i > 0 { u[idx - stride] } else { 0.0 };
                    let right = if i + 1 < n { u[idx + stride] } else { 0.0 };
                    out[idx] += (2.0 * u[idx] - left - right) * inv_h2;
                }
            });
        }
    }

    /// Exact inverse apply through the tensor sine eigenbasis.
    pub fn solve(&self, rhs: &GridFunction) -> GridFunction {
        let mut c = rhs.values().to_vec();
        self.solve_in_place(&mut c);
        GridFunction {
            mesh: Arc::clone(&self.mesh),
            values: c,
        }
    }

    pub fn solve_in_place(&self, c: &mut [f64]) {
        let mut buf = vec![0.0; *self.mesh.points.iter().max().unwrap()];
        for (d, basis) in self.axes.iter().enumerate() {
            let stride = self.mesh.strides[d];
            let n = self.mesh.points[d];
            let scale = 2.0 / (n + 1) as f64;
            self.mesh.for_each_line(d, |base| {
                basis.apply(c, base, stride, scale, &mut buf);
            });
        }
        for (v, &lam) in c.iter_mut().zip(&self.eig_sum) {
            *v /= lam;
        }
        for (d, basis) in self.axes.iter().enumerate() {
            let stride = self.mesh.strides[d];
            self.mesh.for_each_line(d, |base| {
                basis.apply(c, base, stride, 1.0, &mut buf);
            });
        }
    }

    /// D-inner product <u, v>_D = <A u, v>_{L2}.
    pub fn d_inner(&self, u: &GridFunction, v: &GridFunction) -> Result<f64> {
        if !u.same_mesh(v) || *u.mesh().as_ref() != *self.mesh {
            return Err(FucikError::MeshMismatch);
        }
        Ok(self.d_inner_unchecked(u, v))
    }

    pub fn d_inner_unchecked(&self, u: &GridFunction, v: &GridFunction) -> f64 {
        // A is symmetric, so one stencil apply suffices.
        let au = self.apply(u);
        au.l2_inner(v)
    }

    pub fn d_norm(&self, u: &GridFunction) -> f64 {
        self.d_inner_unchecked(u, u).max(0.0).sqrt()
    }

    /// Smallest exact stencil eigenvalue (used for scaling checks).
    pub fn lambda_min_exact(&self) -> f64 {
        self.eig_sum
            .iter()
            .fold(f64::INFINITY, |m, &v| m.min(v))
    }
}

/// Which side of the splitting D = N_l (+) M_l a projection targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    NPart,
    MPart,
}

/// Low eigenpairs of a discrete operator, L2-orthonormal, ascending.
#[derive(Debug)]
pub struct Spectrum {
    op: Arc<DiscreteOperator>,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<GridFunction>,
    residuals: Vec<f64>,
    cluster_tol: f64,
}

pub fn compute_spectrum(op: &Arc<DiscreteOperator>, count: usize) -> Result<Spectrum> {
    compute_spectrum_with(op, count, &EigOptions::default())
}

pub fn compute_spectrum_with(
    op: &Arc<DiscreteOperator>,
    count: usize,
    opts: &EigOptions,
) -> Result<Spectrum> {
    if count == 0 || count > op.mesh().total() {
        return Err(FucikError::LevelOutOfRange {
            level: count,
            needed: count,
            available: op.mesh().total(),
        });
    }
    let (eigenvalues, eigenvectors, residuals) = lobpcg::smallest_eigenpairs(op, count, opts)?;
    Ok(Spectrum {
        op: Arc::clone(op),
        eigenvalues,
        eigenvectors,
        residuals,
        cluster_tol: opts.cluster_tol,
    })
}

impl Spectrum {
    pub fn operator(&self) -> &Arc<DiscreteOperator> {
        &self.op
    }

    pub fn count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// 1-based eigenvalue accessor.
    pub fn lambda(&self, l: usize) -> f64 {
        self.eigenvalues[l - 1]
    }

    /// 1-based eigenvector accessor.
    pub fn phi(&self, l: usize) -> &GridFunction {
        &self.eigenvectors[l - 1]
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn cluster_tol(&self) -> f64 {
        self.cluster_tol
    }

    /// True when lambda_l and lambda_{l+1} belong to the same multiplicity
    /// cluster under the relative gap tolerance.
    pub fn same_cluster(&self, l: usize, next: usize) -> bool {
        let a = self.eigenvalues[l - 1];
        let b = self.eigenvalues[next - 1];
        (b - a).abs() <= self.cluster_tol * a.abs().max(1.0)
    }

    /// Checks that splitting after level l does not cut through a cluster.
    pub fn check_split_level(&self, l: usize) -> Result<()> {
        if l == 0 {
            return Ok(());
        }
        if l + 1 > self.count() {
            return Err(FucikError::LevelOutOfRange {
                level: l,
                needed: l + 1,
                available: self.count(),
            });
        }
        if self.same_cluster(l, l + 1) {
            return Err(FucikError::ClusterSplit {
                level: l,
                lambda_l: self.eigenvalues[l - 1],
                lambda_next: self.eigenvalues[l],
            });
        }
        Ok(())
    }

    /// L2 projection of u onto N_l = span(phi_1 .. phi_l) or its complement.
    /// The eigenvectors are A-invariant, so this is also the D-orthogonal
    /// projection.
    pub fn project(&self, l: usize, u: &GridFunction, part: SplitPart) -> Result<GridFunction> {
        self.check_split_level(l)?;
        if !u.same_mesh(&self.eigenvectors[0]) {
            return Err(FucikError::MeshMismatch);
        }
        let mut n_part = GridFunction::zeros(u.mesh());
        for j in 0..l {
            let c = u.l2_inner(&self.eigenvectors[j]);
            n_part.axpy(c, &self.eigenvectors[j]);
        }
        Ok(match part {
            SplitPart::NPart => n_part,
            SplitPart::MPart => u.sub(&n_part),
        })
    }
}

pub fn split_and_project(
    spectrum: &Spectrum,
    l: usize,
    u: &GridFunction,
    part: SplitPart,
) -> Result<GridFunction> {
    spectrum.project(l, u, part)
}

pub fn d_inner(op: &DiscreteOperator, u: &GridFunction, v: &GridFunction) -> Result<f64> {
    op.d_inner(u, v)
}

pub fn d_norm(op: &DiscreteOperator, u: &GridFunction) -> f64 {
    op.d_norm(u)
}

/// JSON-facing spectrum dump: domain, eigenvalues, residuals.
#[derive(Debug, Serialize)]
pub struct SpectrumDump<'a> {
    pub domain: &'a Domain,
    pub points_per_axis: &'a [usize],
    pub eigenvalues: &'a [f64],
    pub residuals: &'a [f64],
}

impl Spectrum {
    pub fn dump(&self) -> SpectrumDump<'_> {
        SpectrumDump {
            domain: self.op.mesh().domain(),
            points_per_axis: self.op.mesh().points_per_axis(),
            eigenvalues: &self.eigenvalues,
            residuals: &self.residuals,
        }
    }
}

#[cfg(test)]
mod tests;
