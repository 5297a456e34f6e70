//! Strict-level suprema: grid searches certifying that the energy over a
//! spiked patch stays below the compactness threshold c*.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{FucikError, Result};
use crate::linking::{split_and_potential, Nonlinearity, EXP_GUARD};
use crate::operator::{GridFunction, Spectrum};
use crate::quadrature;

use super::{
    moser_profile, radial_integral, sobolev_constant_radial, sphere_area,
    truncated_bubble_profile, BubbleParams, IntegralKind, MoserParams, RadialProfile,
};

/// Which strict-level bound is being checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StrictLevelLemma {
    /// Coupled-bubble spike in dimension N >= 5; threshold S_N^{N/2}/N.
    L6,
    /// Truncated-bubble spike over an annular-cutoff patch in dimension 4;
    /// threshold S_4^2/4. Cross terms vanish by disjoint supports, so the
    /// spike half is integrated by radial quadrature at full accuracy while
    /// the patch half stays on the mesh.
    L8,
    /// Moser spike with the exponential energy in dimension 2;
    /// threshold 2 pi.
    L60,
}

#[derive(Debug, Clone)]
pub struct SupEnergyOptions {
    /// Spike center; defaults to the domain center.
    pub x0: Option<Vec<f64>>,
    /// Cutoff scale for the dimension-4 check; defaults to 2 / distance to
    /// the boundary so the spike support is well inside the annulus.
    pub mu: Option<f64>,
    /// Coupling exponent mu = eps^{-gamma} for the N >= 5 check; defaults to
    /// the midpoint of the admissible window.
    pub gamma: Option<f64>,
    /// Sphere samples of the patch subspace; defaults to 2 per signed basis
    /// direction for one-dimensional patches, 64 up to dimension 3, 512
    /// beyond.
    pub k_samples: Option<usize>,
    /// Cells per amplitude axis of the (s, t) grid.
    pub grid: usize,
    /// Local refinement rounds around the grid maximizer.
    pub zoom_rounds: usize,
    /// Horizon doublings before giving up on coercivity.
    pub max_expansions: usize,
    pub seed: u64,
}

impl Default for SupEnergyOptions {
    fn default() -> Self {
        Self {
            x0: None,
            mu: None,
            gamma: None,
            k_samples: None,
            grid: 24,
            zoom_rounds: 2,
            max_expansions: 40,
            seed: 0,
        }
    }
}

/// One parameter's check: the supremum over the sampled patch, the
/// threshold, and the full coarse grid for plotting.
#[derive(Debug, Clone, Serialize)]
pub struct SupEnergyReport {
    pub lemma: StrictLevelLemma,
    /// The spike parameter: eps for bubbles, j for Moser peaks.
    pub param: f64,
    pub sup: f64,
    pub c_star: f64,
    pub margin: f64,
    pub s_at_max: f64,
    pub t_at_max: f64,
    pub s_horizon: f64,
    pub t_horizon: f64,
    pub s_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    /// Max energy over the patch samples at each (s index, t index).
    pub grid_values: Vec<Vec<f64>>,
}

/// Radial-quadrature enrichment of a ball around the spike center. A
/// concentrating profile's inner structure (the Moser plateau) is far below
/// the grid scale, and pointwise sampling both inflates its discrete
/// Dirichlet norm and misses the plateau's potential blow-up. Inside the
/// ball the patch part is frozen at its center value and all local integrals
/// are taken against the exact profile; the mesh handles the rest.
struct BallEnrichment {
    /// Ball radius, a few grid cells.
    r0: f64,
    /// Node indices inside the ball, excluded from the nodal sums.
    inside: Vec<usize>,
    /// Patch sample value at the center node, per sample.
    v0: Vec<f64>,
    /// Profile value at the origin, bounding |u| inside the ball.
    peak: f64,
    profile: RadialProfile,
}

/// Energy evaluator for one spike parameter. The mesh variant carries the
/// precomputed Dirichlet Gram data; the split variant carries the two
/// one-dimensional quartic profiles.
enum Evaluator {
    Mesh {
        samples: Vec<GridFunction>,
        spike: GridFunction,
        guu: Vec<f64>,
        guw: Vec<f64>,
        /// Spike Dirichlet norm squared; from radial quadrature when the
        /// evaluator is ball-enriched, from the mesh otherwise.
        gww: f64,
        a: f64,
        b: f64,
        nl: Nonlinearity,
        vol: f64,
        ball: Option<BallEnrichment>,
    },
    Split {
        /// Per sample: (||u||_D^2 - int[a(u^-)^2 + b(u^+)^2], int u^4).
        patch: Vec<(f64, f64)>,
        /// Spike quartic: (int |grad|^2 - b int u^2, int u^4).
        spike: (f64, f64),
    },
}

impl Evaluator {
    fn sample_count(&self) -> usize {
        match self {
            Evaluator::Mesh { samples, .. } => samples.len(),
            Evaluator::Split { patch, .. } => patch.len(),
        }
    }

    /// E(t u_k + s spike); overflow counts as minus infinity.
    fn energy(&self, k: usize, t: f64, s: f64, buf: &mut Vec<f64>) -> f64 {
        match self {
            Evaluator::Mesh {
                samples,
                spike,
                guu,
                guw,
                gww,
                a,
                b,
                nl,
                vol,
                ball,
            } => {
                let quadratic =
                    t * t * guu[k] + 2.0 * t * s * guw[k] + s * s * gww;
                buf.clear();
                buf.extend(
                    samples[k]
                        .values()
                        .iter()
                        .zip(spike.values())
                        .map(|(&u, &w)| t * u + s * w),
                );
                let mut correction = 0.0;
                if let Some(ball) = ball {
                    for &i in &ball.inside {
                        buf[i] = 0.0;
                    }
                    let v0 = t * ball.v0[k];
                    if v0.abs() + s * ball.peak > EXP_GUARD {
                        return f64::NEG_INFINITY;
                    }
                    let dim = ball.profile.dim;
                    let area = sphere_area(dim).expect("supported dimension");
                    let nm1 = dim as f64 - 1.0;
                    let f = |r: f64| {
                        let u = v0 + s * ball.profile.value(r);
                        let c = if u < 0.0 { *a } else { *b };
                        let dens = nl.density(u).unwrap_or(f64::MAX);
                        (0.5 * c * u * u + dens) * r.powf(nm1)
                    };
                    match quadrature::integrate_log_split(
                        f,
                        0.0,
                        ball.r0,
                        ball.profile.inner_scale * 1e-3,
                        1e-7,
                    ) {
                        Ok((v, _)) => correction = area * v,
                        Err(_) => return f64::NEG_INFINITY,
                    }
                }
                match split_and_potential(buf, *a, *b, nl, *vol) {
                    Ok((quad, pot)) => 0.5 * (quadratic - quad) - pot - correction,
                    Err(_) => f64::NEG_INFINITY,
                }
            }
            Evaluator::Split { patch, spike } => {
                let (au, p4) = patch[k];
                let (aw, q4) = *spike;
                0.5 * (t * t * au + s * s * aw) - 0.25 * (t.powi(4) * p4 + s.powi(4) * q4)
            }
        }
    }
}

fn default_k_samples(subspace_dim: usize) -> usize {
    if subspace_dim == 1 {
        2
    } else if subspace_dim <= 3 {
        64
    } else {
        512
    }
}

/// D-normalized sphere samples of span(basis): the signed basis directions
/// first, then random mixtures.
fn sphere_samples(
    spec: &Spectrum,
    basis: &[GridFunction],
    count: usize,
    seed: u64,
) -> Result<Vec<GridFunction>> {
    let op = spec.operator();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut v = GridFunction::zeros(op.mesh());
        if out.len() < 2 * basis.len() {
            let i = out.len() / 2;
            let sign = if out.len() % 2 == 0 { 1.0 } else { -1.0 };
            v.axpy(sign, &basis[i]);
        } else {
            for q in basis {
                v.axpy(rng.gen::<f64>() - 0.5, q);
            }
        }
        let nrm = op.d_norm(&v);
        if nrm > 1e-12 {
            v.scale(1.0 / nrm);
            out.push(v);
        }
    }
    Ok(out)
}

fn boundary_distance_of(spec: &Spectrum, x0: &[f64]) -> Result<f64> {
    super::boundary_distance(spec.operator().mesh(), x0)
}

/// Grid search with expanding horizons, then local zoom. Returns the report
/// for one parameter value.
fn search(
    lemma: StrictLevelLemma,
    param: f64,
    eval: &Evaluator,
    c_star: f64,
    opts: &SupEnergyOptions,
) -> Result<SupEnergyReport> {
    let g = opts.grid.max(4);
    let mut buf: Vec<f64> = Vec::new();
    let (mut s_hi, mut t_hi) = (2.0f64, 2.0f64);
    let mut grid_values = Vec::new();
    let mut s_grid = Vec::new();
    let mut t_grid = Vec::new();
    let mut sup = f64::NEG_INFINITY;
    let (mut s_at, mut t_at) = (0.0, 0.0);

    for expansion in 0..=opts.max_expansions {
        s_grid = (0..=g).map(|i| s_hi * i as f64 / g as f64).collect();
        t_grid = (0..=g).map(|i| t_hi * i as f64 / g as f64).collect();
        grid_values = vec![vec![f64::NEG_INFINITY; g + 1]; g + 1];
        sup = f64::NEG_INFINITY;
        let mut interior = f64::NEG_INFINITY;
        let mut rim = f64::NEG_INFINITY;
        for (si, &s) in s_grid.iter().enumerate() {
            for (ti, &t) in t_grid.iter().enumerate() {
                let mut best = f64::NEG_INFINITY;
                for k in 0..eval.sample_count() {
                    best = best.max(eval.energy(k, t, s, &mut buf));
                }
                grid_values[si][ti] = best;
                if best > sup {
                    sup = best;
                    s_at = s;
                    t_at = t;
                }
                if si == g || ti == g {
                    rim = rim.max(best);
                } else {
                    interior = interior.max(best);
                }
            }
        }
        // Coercivity rule: the rim must sit below half the interior max
        // (below zero when the interior never goes positive).
        let ceiling = if interior > 0.0 { 0.5 * interior } else { 0.0 };
        if rim < ceiling {
            break;
        }
        if expansion == opts.max_expansions {
            return Err(FucikError::CoercivityHorizon(format!(
                "{lemma:?} at parameter {param:.3e}: rim energy {rim:.3e} at \
                 horizon ({s_hi:.3e}, {t_hi:.3e}) never fell below {ceiling:.3e}"
            )));
        }
        s_hi *= 2.0;
        t_hi *= 2.0;
    }

    // Local zoom around the maximizer; the coarse grid stays in the report.
    let mut hs = s_hi / g as f64;
    let mut ht = t_hi / g as f64;
    for _ in 0..opts.zoom_rounds {
        let (s_lo, s_up) = ((s_at - 2.0 * hs).max(0.0), s_at + 2.0 * hs);
        let (t_lo, t_up) = ((t_at - 2.0 * ht).max(0.0), t_at + 2.0 * ht);
        for si in 0..=g {
            let s = s_lo + (s_up - s_lo) * si as f64 / g as f64;
            for ti in 0..=g {
                let t = t_lo + (t_up - t_lo) * ti as f64 / g as f64;
                for k in 0..eval.sample_count() {
                    let e = eval.energy(k, t, s, &mut buf);
                    if e > sup {
                        sup = e;
                        s_at = s;
                        t_at = t;
                    }
                }
            }
        }
        hs = (s_up - s_lo) / g as f64;
        ht = (t_up - t_lo) / g as f64;
    }

    Ok(SupEnergyReport {
        lemma,
        param,
        sup,
        c_star,
        margin: c_star - sup,
        s_at_max: s_at,
        t_at_max: t_at,
        s_horizon: s_hi,
        t_horizon: t_hi,
        s_grid,
        t_grid,
        grid_values,
    })
}

/// Checks one strict-level bound over a range of spike parameters: for each
/// parameter, the supremum of E(t u + s spike) over sampled patch functions
/// u and amplitudes s, t >= 0 is compared against the threshold. The margins
/// should be positive and improve as bubbles shrink or Moser indices grow.
pub fn sup_energy_check(
    spec: &Spectrum,
    lemma: StrictLevelLemma,
    a: f64,
    b: f64,
    k_basis: &[GridFunction],
    params: &[f64],
    opts: &SupEnergyOptions,
) -> Result<Vec<SupEnergyReport>> {
    let op = spec.operator();
    let mesh = op.mesh();
    let dim = mesh.dim();
    if k_basis.is_empty() || params.is_empty() {
        return Err(FucikError::InvalidParameters(
            "sup_energy_check needs a patch basis and at least one parameter".into(),
        ));
    }
    let x0: Vec<f64> = opts
        .x0
        .clone()
        .unwrap_or_else(|| mesh.domain().lengths().iter().map(|&l| 0.5 * l).collect());
    let dist = boundary_distance_of(spec, &x0)?;
    let count = opts
        .k_samples
        .unwrap_or_else(|| default_k_samples(k_basis.len()));
    let samples = sphere_samples(spec, k_basis, count, opts.seed)?;
    let vol = mesh.cell_volume();

    let threshold = match lemma {
        StrictLevelLemma::L60 => {
            if dim != 2 {
                return Err(FucikError::IncompatibleNonlinearity {
                    dim,
                    reason: "the Moser-spike check is two-dimensional".into(),
                });
            }
            2.0 * std::f64::consts::PI
        }
        StrictLevelLemma::L8 => {
            if dim != 4 {
                return Err(FucikError::IncompatibleNonlinearity {
                    dim,
                    reason: "the annular-patch check is four-dimensional".into(),
                });
            }
            let s4 = sobolev_constant_radial(4)?;
            0.25 * s4 * s4
        }
        StrictLevelLemma::L6 => {
            if dim < 5 {
                return Err(FucikError::IncompatibleNonlinearity {
                    dim,
                    reason: "the coupled-bubble window is empty below dimension 5".into(),
                });
            }
            let n = dim as f64;
            sobolev_constant_radial(dim)?.powf(n / 2.0) / n
        }
    };

    let mut reports = Vec::with_capacity(params.len());
    for &param in params {
        let eval = match lemma {
            StrictLevelLemma::L60 => {
                let nl = Nonlinearity::exponential(2)?;
                let profile = moser_profile(&MoserParams::coupled(param, x0.clone())?)?;
                let spike = profile.sample(mesh)?;
                build_mesh_evaluator(
                    spec,
                    &samples,
                    spike,
                    &x0,
                    Some(profile),
                    a,
                    b,
                    nl,
                    vol,
                )?
            }
            StrictLevelLemma::L6 => {
                let n = dim as f64;
                let gamma = opts
                    .gamma
                    .unwrap_or_else(|| 0.5 * (1.0 / n + 1.0 - 2.0 / (n - 2.0)));
                let nl = Nonlinearity::critical_power(dim)?;
                let bubble = BubbleParams::coupled(dim, param, gamma, x0.clone())?;
                let profile = truncated_bubble_profile(&bubble)?;
                let spike = profile.sample(mesh)?;
                build_mesh_evaluator(
                    spec,
                    &samples,
                    spike,
                    &x0,
                    Some(profile),
                    a,
                    b,
                    nl,
                    vol,
                )?
            }
            StrictLevelLemma::L8 => {
                let mu = opts.mu.unwrap_or(2.0 / dist);
                // Patch samples must vanish on the spike's support so the
                // energy splits exactly.
                let inner = 0.75 / mu;
                for u in &samples {
                    for (i, &v) in u.values().iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        let r = mesh
                            .node(i)
                            .iter()
                            .zip(&x0)
                            .map(|(p, q)| (p - q) * (p - q))
                            .sum::<f64>()
                            .sqrt();
                        if r < inner {
                            return Err(FucikError::GeometryPrecondition(format!(
                                "patch function does not vanish at radius {r:.3e} \
                                 inside the spike annulus ({inner:.3e})"
                            )));
                        }
                    }
                }
                let bubble = BubbleParams::new(4, param, mu, x0.clone())?;
                let profile = truncated_bubble_profile(&bubble)?;
                let grad = radial_integral(&profile, IntegralKind::GradSquared)?;
                let m2 = radial_integral(&profile, IntegralKind::Power(2.0))?;
                let m4 = radial_integral(&profile, IntegralKind::Power(4.0))?;
                let nl = Nonlinearity::critical_power(4)?;
                let mut patch = Vec::with_capacity(samples.len());
                for u in &samples {
                    let duu = op.d_norm(u).powi(2);
                    let (quad, pot) = split_and_potential(u.values(), a, b, &nl, vol)?;
                    // pot = int |u|^4 / 4 for the quartic potential.
                    patch.push((duu - quad, 4.0 * pot));
                }
                Evaluator::Split {
                    patch,
                    spike: (grad - b * m2, m4),
                }
            }
        };
        reports.push(search(lemma, param, &eval, threshold, opts)?);
    }
    Ok(reports)
}

/// Builds the mesh evaluator; with a profile, the spike center is enriched
/// by radial quadrature over a ball of a few grid cells and the spike's
/// Dirichlet norm is taken from the exact profile.
fn build_mesh_evaluator(
    spec: &Spectrum,
    samples: &[GridFunction],
    spike: GridFunction,
    x0: &[f64],
    enrich: Option<RadialProfile>,
    a: f64,
    b: f64,
    nl: Nonlinearity,
    vol: f64,
) -> Result<Evaluator> {
    let op = spec.operator();
    let mesh = op.mesh();
    let guu: Vec<f64> = samples
        .iter()
        .map(|u| op.d_inner_unchecked(u, u))
        .collect();
    let guw: Vec<f64> = samples
        .iter()
        .map(|u| op.d_inner_unchecked(u, &spike))
        .collect();
    let (gww, ball) = match enrich {
        None => (op.d_inner_unchecked(&spike, &spike), None),
        Some(profile) => {
            let gww = radial_integral(&profile, IntegralKind::GradSquared)?;
            let h = mesh
                .spacing()
                .iter()
                .fold(0.0f64, |m, &s| m.max(s));
            let r0 = 4.0 * h;
            let mut inside = Vec::new();
            let mut center = 0usize;
            let mut center_dist = f64::INFINITY;
            for i in 0..mesh.total() {
                let r = mesh
                    .node(i)
                    .iter()
                    .zip(x0)
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt();
                if r < r0 {
                    inside.push(i);
                }
                if r < center_dist {
                    center_dist = r;
                    center = i;
                }
            }
            let v0: Vec<f64> = samples.iter().map(|u| u.values()[center]).collect();
            let peak = profile.value(0.0);
            (
                gww,
                Some(BallEnrichment {
                    r0,
                    inside,
                    v0,
                    peak,
                    profile,
                }),
            )
        }
    };
    Ok(Evaluator::Mesh {
        samples: samples.to_vec(),
        spike,
        guu,
        guw,
        gww,
        a,
        b,
        nl,
        vol,
        ball,
    })
}
