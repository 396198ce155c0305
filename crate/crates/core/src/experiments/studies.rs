//! Violation scans, superharmonicity, the CMC bracket and refinement studies.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::conditions::{inequality_classify_tol, InequalityVerdict};
use crate::error::{Error, Result};
use crate::experiments::recipe::FieldRecipe;
use crate::graph::{fit_order, graph_log_f_rhs, residual_study, IdentityName, Order, ResidualReport, SpacelikeGraph};
use crate::mesh::{AnalyticField, FiberMesh, ScalarField};
use crate::warp::{log_concavity_margin, WarpingFunction};

/// Scan tolerance `1e-3 (h / h_ref)^2` with `h_ref = 2 pi / 128`.
pub fn scan_epsilon(h: f64) -> f64 {
    let r = h / (2.0 * std::f64::consts::PI / 128.0);
    1e-3 * r * r
}

/// Superharmonicity tolerance `c h^2`.
pub fn superharmonic_tolerance(h: f64, c: f64) -> f64 {
    c * h * h
}

/// Default constant in [`superharmonic_tolerance`].
pub const SUPERHARMONIC_CONSTANT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldScan {
    pub recipe: FieldRecipe,
    /// `max (H^2 - f'^2/f^2)` over the nodes.
    pub max_residual: f64,
    pub argmax: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationScan {
    pub per_field: Vec<FieldScan>,
    pub min_over_fields: f64,
    pub worst_field: usize,
    pub epsilon: f64,
    /// `min_over_fields > -epsilon`.
    pub within_floor: bool,
}

/// Largest inequality residual of each field; fields are fitted to the
/// safeguard first. Runs in parallel with results in input order.
pub fn violation_scan(
    wf: &WarpingFunction,
    mesh: &Arc<FiberMesh>,
    recipes: &[FieldRecipe],
    safeguard: f64,
) -> Result<ViolationScan> {
    if recipes.is_empty() {
        return Err(Error::InvalidParameter(
            "violation scan needs at least one field".into(),
        ));
    }
    if recipes.iter().any(FieldRecipe::is_constant) {
        return Err(Error::ConstantRecipe);
    }
    let per_field: Vec<FieldScan> = recipes
        .par_iter()
        .map(|r| {
            let (fitted, u) = r.generate(wf, mesh, safeguard)?;
            let g = SpacelikeGraph::new(*wf, mesh.clone(), u)?;
            let c = inequality_classify_tol(&g, 0.0);
            Ok(FieldScan {
                recipe: fitted,
                max_residual: c.max_residual,
                argmax: c.argmax,
            })
        })
        .collect::<Result<_>>()?;
    let (worst_field, min_over_fields) = per_field
        .iter()
        .enumerate()
        .map(|(i, f)| (i, f.max_residual))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let epsilon = scan_epsilon(mesh.h_max());
    Ok(ViolationScan {
        per_field,
        min_over_fields,
        worst_field,
        epsilon,
        within_floor: min_over_fields > -epsilon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementOrder {
    pub resolutions: Vec<[usize; 2]>,
    /// Max change of the residual field at the coarse nodes between
    /// consecutive levels.
    pub differences: Vec<f64>,
    pub order: Option<f64>,
}

/// Discretization order of the inequality residual for one field, from
/// three levels compared at the nodes of the coarsest mesh.
pub fn residual_refinement_order(
    wf: &WarpingFunction,
    mesh: &FiberMesh,
    recipe: &FieldRecipe,
) -> Result<RefinementOrder> {
    let mut meshes = vec![mesh.clone()];
    for _ in 0..2 {
        let next = meshes.last().expect("non-empty").doubled();
        meshes.push(next);
    }
    let fields: Vec<Vec<f64>> = meshes
        .iter()
        .map(|m| {
            let g = SpacelikeGraph::new(*wf, Arc::new(m.clone()), recipe.sample(m)?)?;
            let r = inequality_classify_tol(&g, 0.0).residual;
            Ok(restrict_to_coarse(mesh, m, r.values()))
        })
        .collect::<Result<_>>()?;
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0, |m: f64, (x, y)| m.max((x - y).abs()));
    let differences = vec![diff(&fields[0], &fields[1]), diff(&fields[1], &fields[2])];
    let order = (differences[1] > 0.0).then(|| (differences[0] / differences[1]).log2());
    Ok(RefinementOrder {
        resolutions: meshes.iter().map(FiberMesh::resolution).collect(),
        differences,
        order,
    })
}

/// Values of a field on `fine` at the nodes it shares with `coarse`.
///
/// Periodic axes share every other node. The sphere's cell-centered latitudes
/// are not shared, so its rows are averaged pairwise onto the coarse centers.
fn restrict_to_coarse(coarse: &FiberMesh, fine: &FiberMesh, v: &[f64]) -> Vec<f64> {
    let [c0, c1] = coarse.resolution();
    let [f0, f1] = fine.resolution();
    let (r0, r1) = (f0 / c0, f1 / c1);
    let mut out = Vec::with_capacity(coarse.len());
    for i in 0..c0 {
        for j in 0..c1 {
            if coarse.is_sphere() {
                // Cell-centered rows: the coarse center is the mean of the
                // r0 fine centers inside it, evaluated at the fine column.
                let s: f64 = (0..r0).map(|a| v[fine.index(i * r0 + a, j * r1)]).sum();
                out.push(s / r0 as f64);
            } else {
                out.push(v[fine.index(i * r0, j * r1)]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuperharmonicReport {
    pub holds_pointwise: bool,
    /// `max Delta log f(u)`, discrete Laplace-Beltrami of the induced metric.
    pub max_laplacian: f64,
    /// `max` of the identity's right-hand side.
    pub via_identity: f64,
    /// `max |direct - identity|`.
    pub max_disagreement: f64,
    pub tolerance: f64,
}

/// `Delta log f(u) <= 0`, checked directly and through the identity, for a
/// graph satisfying `H^2 <= f'^2/f^2` with `(log f)'' <= 0` on its range.
///
/// Both the inequality and the sign are judged against `c h^2`.
pub fn superharmonic_check(graph: &SpacelikeGraph, c: f64) -> Result<SuperharmonicReport> {
    let tol = superharmonic_tolerance(graph.mesh().h_max(), c);
    let class = inequality_classify_tol(graph, tol);
    if class.verdict == InequalityVerdict::Violates {
        return Err(Error::Precondition(format!(
            "H^2 - f'^2/f^2 reaches {} > {tol} at node {}",
            class.max_residual, class.argmax
        )));
    }
    let lc = log_concavity_margin(graph.warping(), &graph.height_window(), 64)?;
    if !lc.holds {
        return Err(Error::Precondition(format!("(log f)'' > 0 at t = {}", lc.argmin)));
    }
    let log_f: Vec<f64> = graph.warp_values().iter().map(|w| w.f.ln()).collect();
    let direct = graph.laplacian(&log_f);
    let rhs = graph_log_f_rhs(graph);
    let max_laplacian = direct.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let via_identity = rhs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let max_disagreement = direct.iter().zip(&rhs).fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
    Ok(SuperharmonicReport {
        holds_pointwise: max_laplacian <= tol && via_identity <= tol,
        max_laplacian,
        via_identity,
        max_disagreement,
        tolerance: tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmcBracket {
    pub h_min: f64,
    pub h_max: f64,
    /// Area-weighted mean of `H`.
    pub h_mean: f64,
    /// `[-f'/f at the max of F(u), -f'/f at the min of F(u)]`, `F` a primitive of `f`.
    pub bracket: [f64; 2],
    pub consistent: bool,
}

/// Mean curvature against the slice values at the extrema of `F(u)`.
pub fn cmc_bracket(graph: &SpacelikeGraph) -> CmcBracket {
    let w = graph.warp_values();
    let prim = ScalarField::from_vec_unchecked(w.iter().map(|v| v.primitive).collect());
    let (at_min, at_max) = (prim.argmin(), prim.argmax());
    let bracket = [-w[at_max].hubble(), -w[at_min].hubble()];
    let h = graph.mean_curvature();
    let h_mean = graph.integrate(&h) / graph.area();
    let tol = 1e-10 * (1.0 + bracket[0].abs().max(bracket[1].abs()));
    let lo = bracket[0].min(bracket[1]) - tol;
    let hi = bracket[0].max(bracket[1]) + tol;
    let inside = |v: f64| v >= lo && v <= hi;
    let mut consistent = inside(h_mean);
    if h.oscillation() <= 1e-10 {
        consistent &= inside(h.values()[0]);
    }
    CmcBracket {
        h_min: h.min(),
        h_max: h.max(),
        h_mean,
        bracket,
        consistent,
    }
}

/// The four identities plus the two mean-curvature paths, on `levels`
/// successive refinements of `mesh0` with exact resampling of `recipe`.
pub fn convergence_study(
    wf: &WarpingFunction,
    mesh0: &FiberMesh,
    recipe: &FieldRecipe,
    levels: usize,
) -> Result<ResidualReport> {
    if levels < 3 {
        return Err(Error::Levels { given: levels, min: 3 });
    }
    let mesh = Arc::new(mesh0.clone());
    let g = SpacelikeGraph::new(*wf, mesh.clone(), recipe.sample(&mesh)?)?;
    residual_study(
        &g,
        levels,
        Some(recipe),
        &[
            IdentityName::LaplacianT,
            IdentityName::LaplacianF,
            IdentityName::LaplacianLogF,
            IdentityName::GaussCurvature,
            IdentityName::MeanCurvatureCrossCheck,
        ],
    )
}

/// Order of agreement between the direct and identity-based `Delta log f(u)`
/// over `levels` refinements.
pub fn superharmonic_agreement_order(
    wf: &WarpingFunction,
    mesh0: &FiberMesh,
    recipe: &FieldRecipe,
    levels: usize,
) -> Result<(Vec<f64>, Option<Order>)> {
    let mut errs = Vec::new();
    let mut hs = Vec::new();
    let mut mesh = mesh0.clone();
    for level in 0..levels {
        if level > 0 {
            mesh = mesh.doubled();
        }
        let m = Arc::new(mesh.clone());
        let g = SpacelikeGraph::new(*wf, m.clone(), recipe.sample(&m)?)?;
        errs.push(superharmonic_check(&g, SUPERHARMONIC_CONSTANT)?.max_disagreement);
        hs.push(m.h_max());
    }
    let order = fit_order(&hs, &errs);
    Ok((errs, order))
}
