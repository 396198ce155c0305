//! Energy conditions of the warped product, the `H^2 <= f'^2/f^2` classifier
//! for graphs, and the constant-curvature test for the warping function.
//!
//! With a two-dimensional fiber of constant curvature `Kf` and a unit
//! spacelike `E` tangent to the fiber,
//!
//! ```text
//! Ric(d_t, d_t) = -2 f''/f,      Ric(E, E) = Kf/f^2 + f''/f + f'^2/f^2,      Ric(d_t, E) = 0.
//! ```

use serde::Serialize;

use crate::error::Result;
use crate::graph::SpacelikeGraph;
use crate::mesh::ScalarField;
use crate::warp::{IntervalSpec, WarpValues, WarpingFunction, DEFAULT_TOLERANCE};

/// Upper end of the rapidity grid for the ubiquitous check.
pub const MAX_RAPIDITY: f64 = 3.0;

/// Tolerance for the constant-curvature test.
pub const CONSTANCY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConditionName {
    #[serde(rename = "NCC")]
    Ncc,
    #[serde(rename = "TCC")]
    Tcc,
    Ubiquitous,
    LogConcavity,
}

/// Where the defining quantity attains its sampled minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstPoint {
    pub t: f64,
    /// Graph node, when the check was run over a graph's heights.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    /// Rapidity of the timelike direction (ubiquitous check only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rapidity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionVerdict {
    #[serde(rename = "condition")]
    pub name: ConditionName,
    pub holds: bool,
    pub margin: f64,
    pub worst: WorstPoint,
    pub tolerance: f64,
    /// Whether `holds` comes from a finite sample of directions.
    pub sampled: bool,
    /// `f'' < 0` at every sampled `t` (ubiquitous check only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub necessary_f_second_negative: Option<bool>,
}

fn min_over(grid: &[f64], wf: &WarpingFunction, q: impl Fn(WarpValues) -> f64) -> (f64, f64) {
    grid.iter()
        .map(|&t| (t, q(wf.eval_unchecked(t))))
        .fold((f64::NAN, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
}

fn verdict(name: ConditionName, (t, margin): (f64, f64), tol: f64) -> ConditionVerdict {
    ConditionVerdict {
        name,
        holds: margin >= -tol,
        margin,
        worst: WorstPoint {
            t,
            node: None,
            rapidity: None,
        },
        tolerance: tol,
        sampled: false,
        necessary_f_second_negative: None,
    }
}

/// Null convergence: `min Kf/f^2 - (log f)''` over the sampled window.
pub fn ncc_margin(wf: &WarpingFunction, kf: f64, window: &IntervalSpec, samples: usize) -> Result<ConditionVerdict> {
    let grid = wf.sample_grid(window, samples)?;
    let m = min_over(&grid, wf, |v| kf / (v.f * v.f) - v.logf_second);
    Ok(verdict(ConditionName::Ncc, m, DEFAULT_TOLERANCE))
}

/// Timelike convergence: `f'' <= 0` and `Kf >= f f'' - f'^2`; the margin is the
/// smaller of the two minima.
pub fn tcc_check(wf: &WarpingFunction, kf: f64, window: &IntervalSpec, samples: usize) -> Result<ConditionVerdict> {
    let grid = wf.sample_grid(window, samples)?;
    let time = min_over(&grid, wf, |v| -v.f_second);
    let fiber = min_over(&grid, wf, |v| kf - (v.f * v.f_second - v.f_prime * v.f_prime));
    let m = if fiber.1 < time.1 { fiber } else { time };
    Ok(verdict(ConditionName::Tcc, m, DEFAULT_TOLERANCE))
}

/// `Ric(Z, Z)` for `Z = cosh(s) d_t + sinh(s) E`.
pub fn ricci_timelike(v: WarpValues, kf: f64, rapidity: f64) -> f64 {
    let (c, s) = (rapidity.cosh(), rapidity.sinh());
    let fiber = kf / (v.f * v.f) + v.f_second / v.f + v.hubble() * v.hubble();
    s * s * fiber - 2.0 * v.f_second / v.f * c * c
}

/// Ubiquitous energy condition, `Ric(Z, Z) > 0` for timelike `Z`, sampled
/// on `directions` rapidities in `[0, 3]`.
pub fn ubiquitous_check(
    wf: &WarpingFunction,
    kf: f64,
    window: &IntervalSpec,
    samples: usize,
    directions: usize,
) -> Result<ConditionVerdict> {
    if directions < 8 {
        return Err(crate::Error::InvalidParameter(format!(
            "ubiquitous check needs at least 8 directions, got {directions}"
        )));
    }
    let grid = wf.sample_grid(window, samples)?;
    let mut worst = (f64::NAN, f64::NAN, f64::INFINITY);
    let mut necessary = true;
    for &t in &grid {
        let v = wf.eval_unchecked(t);
        necessary &= v.f_second < 0.0;
        for j in 0..directions {
            let s = MAX_RAPIDITY * j as f64 / (directions - 1) as f64;
            let r = ricci_timelike(v, kf, s);
            if r < worst.2 {
                worst = (t, s, r);
            }
        }
    }
    let tol = DEFAULT_TOLERANCE;
    Ok(ConditionVerdict {
        name: ConditionName::Ubiquitous,
        holds: worst.2 > tol,
        margin: worst.2,
        worst: WorstPoint {
            t: worst.0,
            node: None,
            rapidity: Some(worst.1),
        },
        tolerance: tol,
        sampled: true,
        necessary_f_second_negative: Some(necessary),
    })
}

/// `(log f)'' <= 0` as a verdict.
pub fn log_concavity_check(wf: &WarpingFunction, window: &IntervalSpec, samples: usize) -> Result<ConditionVerdict> {
    let grid = wf.sample_grid(window, samples)?;
    let m = min_over(&grid, wf, |v| -v.logf_second);
    Ok(verdict(ConditionName::LogConcavity, m, DEFAULT_TOLERANCE))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InequalityVerdict {
    /// `H^2 <= f'^2/f^2` everywhere, within tolerance.
    SatisfiesTilde,
    /// Strict inequality everywhere.
    SatisfiesStrict,
    Violates,
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityClassification {
    #[serde(skip)]
    pub residual: ScalarField,
    pub verdict: InequalityVerdict,
    pub max_residual: f64,
    pub min_residual: f64,
    pub argmax: usize,
    pub tolerance: f64,
}

/// Residual `H^2 - f'(u)^2/f(u)^2` with the default tolerance.
pub fn inequality_classify(graph: &SpacelikeGraph) -> InequalityClassification {
    inequality_classify_tol(graph, DEFAULT_TOLERANCE)
}

pub fn inequality_classify_tol(graph: &SpacelikeGraph, tol: f64) -> InequalityClassification {
    let h = graph.mean_curvature();
    let residual = h.zip_map(&graph.slice_h2(), |h, s| h * h - s);
    let max = residual.max();
    let verdict = if max < -tol {
        InequalityVerdict::SatisfiesStrict
    } else if max <= tol {
        InequalityVerdict::SatisfiesTilde
    } else {
        InequalityVerdict::Violates
    };
    InequalityClassification {
        verdict,
        max_residual: max,
        min_residual: residual.min(),
        argmax: residual.argmax(),
        tolerance: tol,
        residual,
    }
}

/// Agreement of a constant-curvature result with "`cbar <= 0` implies `c < 0`".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignNote {
    /// Not constant, or `cbar > 0`.
    NotApplicable,
    Consistent,
    /// `cbar = 0` with `c = 0` from a constant warping function: a product
    /// spacetime, flat in every direction.
    ProductException,
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantCurvature {
    pub is_constant: bool,
    pub cbar: Option<f64>,
    pub sign_note: SignNote,
    /// Sampled ranges of `f''/f` and `(c + f'^2)/f^2`.
    pub ratio_range: [f64; 2],
    pub gauss_range: [f64; 2],
}

/// Whether `f''/f = (c + f'^2)/f^2` is a single constant over the window.
pub fn constant_curvature_classify(
    wf: &WarpingFunction,
    c: f64,
    window: &IntervalSpec,
    samples: usize,
) -> Result<ConstantCurvature> {
    let grid = wf.sample_grid(window, samples)?;
    let mut ratio = [f64::INFINITY, f64::NEG_INFINITY];
    let mut gauss = [f64::INFINITY, f64::NEG_INFINITY];
    for &t in &grid {
        let v = wf.eval_unchecked(t);
        let a = v.f_second / v.f;
        let b = (c + v.f_prime * v.f_prime) / (v.f * v.f);
        ratio = [ratio[0].min(a), ratio[1].max(a)];
        gauss = [gauss[0].min(b), gauss[1].max(b)];
    }
    let tol = CONSTANCY_TOLERANCE;
    let is_constant = ratio[1] - ratio[0] <= tol
        && gauss[1] - gauss[0] <= tol
        && (ratio[0] - gauss[0]).abs() <= tol
        && (ratio[1] - gauss[1]).abs() <= tol;
    let cbar = is_constant.then(|| 0.25 * (ratio[0] + ratio[1] + gauss[0] + gauss[1]));
    let sign_note = match cbar {
        Some(cb) if cb <= tol => {
            if c < 0.0 {
                SignNote::Consistent
            } else if wf.is_constant() && c == 0.0 && cb.abs() <= tol {
                SignNote::ProductException
            } else {
                SignNote::Inconsistent
            }
        }
        _ => SignNote::NotApplicable,
    };
    Ok(ConstantCurvature {
        is_constant,
        cbar,
        sign_note,
        ratio_range: ratio,
        gauss_range: gauss,
    })
}
