//! Independent 1D oracle for the spectral curves on an interval (0, L).
//!
//! A nontrivial solution of -u'' = b u^+ - a u^- with u(0) = u(L) = 0 is a
//! chain of alternating sine humps: positive humps of width pi/sqrt(b) and
//! negative humps of width pi/sqrt(a). A level-l solution uses p positive and
//! q negative humps with p + q = l and |p - q| <= 1, so the curves solve the
//! matching equation p pi / sqrt(b) + q pi / sqrt(a) = L.

use std::f64::consts::PI;

use crate::error::{FucikError, Result};
use crate::fucik::{CurveKind, CurveSample, CurveTrace};

/// Hump counts (positive, negative) of the branches through (lambda_l, lambda_l).
fn branches(level: usize) -> Vec<(usize, usize)> {
    if level % 2 == 0 {
        vec![(level / 2, level / 2)]
    } else {
        vec![
            ((level + 1) / 2, (level - 1) / 2),
            ((level - 1) / 2, (level + 1) / 2),
        ]
    }
}

/// Solves p pi / sqrt(b) + q pi / sqrt(a) = L for b by bisection to relative
/// width 1e-12. Returns None when the branch has no solution at this a.
pub fn matching_b(length: f64, p: usize, q: usize, a: f64) -> Option<f64> {
    let rest = length - q as f64 * PI / a.sqrt();
    if rest <= 0.0 || p == 0 {
        return None;
    }
    // Closed form exists; bisection keeps the oracle self-contained and
    // pins the root to the stated tolerance regardless of formula shuffles.
    let guess = (p as f64 * PI / rest).powi(2);
    let g = |b: f64| p as f64 * PI / b.sqrt() + q as f64 * PI / a.sqrt() - length;
    let (mut lo, mut hi) = (guess * 0.25, guess * 4.0);
    if !(g(lo) > 0.0 && g(hi) < 0.0) {
        return None;
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Shooting oracle: the minimal and maximal curve branches through
/// (lambda_l, lambda_l) sampled over the a-grid. For even l the two branches
/// coincide; the returned pair is (nu-labeled lower, mu-labeled upper).
pub fn fucik_1d_oracle(length: f64, level: usize, a_grid: &[f64]) -> Result<Vec<CurveTrace>> {
    if !(length > 0.0) || !length.is_finite() {
        return Err(FucikError::DegenerateDomain(format!(
            "interval length {length} must be positive and finite"
        )));
    }
    if level < 2 {
        return Err(FucikError::InvalidParameters(format!(
            "oracle level {level} must be at least 2"
        )));
    }
    let brs = branches(level);
    let mut lo_samples = Vec::with_capacity(a_grid.len());
    let mut hi_samples = Vec::with_capacity(a_grid.len());
    for &a in a_grid {
        if !(a > 0.0) {
            return Err(FucikError::InvalidParameters(format!(
                "oracle a-grid entry {a} must be positive"
            )));
        }
        let bs: Vec<f64> = brs
            .iter()
            .filter_map(|&(p, q)| matching_b(length, p, q, a))
            .collect();
        if bs.is_empty() {
            return Err(FucikError::NoSignChange {
                a,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        let b_min = bs.iter().cloned().fold(f64::INFINITY, f64::min);
        let b_max = bs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mk = |b: f64, kind: CurveKind| CurveSample {
            a,
            b,
            kind,
            level,
            bracket_width: 0.0,
            f_lo: 0.0,
            f_hi: 0.0,
        };
        lo_samples.push(mk(b_min, CurveKind::Nu));
        hi_samples.push(mk(b_max, CurveKind::Mu));
    }
    let mk_trace = |kind, samples| CurveTrace {
        kind,
        level,
        tol_b: 0.0,
        lambda_lo: ((level - 1) as f64 * PI / length).powi(2),
        lambda_hi: ((level + 1) as f64 * PI / length).powi(2),
        points_per_axis: vec![],
        seed: 0,
        samples,
    };
    Ok(vec![
        mk_trace(CurveKind::Nu, lo_samples),
        mk_trace(CurveKind::Mu, hi_samples),
    ])
}
