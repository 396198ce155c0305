//! One runner per suite. Failures of the numerics are recorded in the
//! suite result, never raised.

use std::sync::Arc;

use grw_core::conditions::{
    constant_curvature_classify, inequality_classify, log_concavity_check, ncc_margin, tcc_check, ubiquitous_check,
    InequalityVerdict,
};
use grw_core::experiments::{
    cmc_bracket, convergence_study, residual_refinement_order, scan_epsilon, solve_slice, superharmonic_check,
    violation_scan, HistoryEntry,
};
use grw_core::graph::{identity_residuals, ResidualReport};
use grw_core::warp::inf_ratio_alpha;
use grw_core::{FiberMesh, FieldRecipe, IntervalSpec, ScalarField, SpacelikeGraph, WarpingFunction};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, Suite};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub passed: bool,
    pub failures: Vec<String>,
    pub details: Value,
    /// Tables written next to `report.json`, keyed by file name.
    #[serde(skip)]
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

/// What every suite needs: the spacetime, the mesh and the fitted fields.
pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub wf: WarpingFunction,
    pub mesh: Arc<FiberMesh>,
    pub window: IntervalSpec,
    pub kf: f64,
    /// Recipes with the run seed applied, before fitting.
    pub recipes: Vec<FieldRecipe>,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a RunConfig) -> grw_core::Result<Self> {
        let mesh = Arc::new(cfg.fiber.build()?);
        Ok(Self {
            wf: cfg.spacetime.warping,
            kf: mesh.gauss_curvature(),
            window: cfg.spacetime.window(),
            recipes: cfg.seeded_fields(),
            mesh,
            cfg,
        })
    }

    fn graph(&self, recipe: &FieldRecipe) -> grw_core::Result<(FieldRecipe, SpacelikeGraph)> {
        let (fitted, u) = recipe.generate(&self.wf, &self.mesh, self.cfg.solver.spacelike_safeguard)?;
        Ok((fitted, SpacelikeGraph::new(self.wf, self.mesh.clone(), u)?))
    }
}

pub fn run_suite(suite: Suite, ctx: &Context<'_>) -> SuiteResult {
    let mut out = Outcome::default();
    let details = match suite {
        Suite::Identities => identities(ctx, &mut out),
        Suite::Conditions => conditions(ctx, &mut out),
        Suite::SliceSolve => slice_solve(ctx, &mut out),
        Suite::InequalityScan => inequality_scan(ctx, &mut out),
        Suite::Energy => energy(ctx, &mut out),
        Suite::Convergence => convergence(ctx, &mut out),
    };
    SuiteResult {
        suite,
        passed: out.failures.is_empty(),
        failures: out.failures,
        details,
        tables: out.tables,
    }
}

#[derive(Default)]
struct Outcome {
    failures: Vec<String>,
    tables: Vec<Table>,
}

impl Outcome {
    fn fail(&mut self, msg: impl Into<String>) {
        self.failures.push(msg.into());
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn order_threshold(ctx: &Context<'_>) -> f64 {
    if ctx.mesh.is_sphere() {
        ctx.cfg.tolerances.sphere_identity_order
    } else {
        ctx.cfg.tolerances.identity_order
    }
}

/// Checks each series of a refinement study and appends its levels to `rows`.
fn judge_study(ctx: &Context<'_>, field: usize, rep: &ResidualReport, out: &mut Outcome, rows: &mut Vec<Vec<String>>) {
    let min = order_threshold(ctx);
    for s in &rep.identities {
        // Pole rows are excluded from the norm on the sphere.
        let order = if ctx.mesh.is_sphere() {
            s.interior_order
        } else {
            s.order
        };
        if !order.is_some_and(|o| o.at_least(min)) {
            out.fail(format!("field {field}: {:?} order {:?} below {min}", s.name, order));
        }
        for l in &s.levels {
            rows.push(vec![
                field.to_string(),
                serde_json::to_value(s.name)
                    .unwrap()
                    .as_str()
                    .unwrap_or_default()
                    .to_string(),
                l.resolution[0].to_string(),
                l.resolution[1].to_string(),
                num(l.h),
                num(l.max_abs_residual),
                num(l.l2_residual),
                l.interior_max_abs_residual.map(num).unwrap_or_default(),
            ]);
        }
    }
}

const STUDY_HEADER: [&str; 8] = [
    "field",
    "identity",
    "n0",
    "n1",
    "h",
    "max_abs_residual",
    "l2_residual",
    "interior_max_abs_residual",
];

fn study_suite(ctx: &Context<'_>, out: &mut Outcome, file: &str, full: bool) -> Value {
    let levels = ctx.cfg.tolerances.levels;
    let mut rows = Vec::new();
    let mut per_field = Vec::new();
    for (i, r) in ctx.recipes.iter().enumerate() {
        let result = ctx.graph(r).and_then(|(fitted, g)| {
            let rep = if full {
                convergence_study(&ctx.wf, &ctx.mesh, &fitted, levels)?
            } else {
                identity_residuals(&g, levels, Some(&fitted))?
            };
            Ok((fitted, rep))
        });
        match result {
            Ok((fitted, rep)) => {
                judge_study(ctx, i, &rep, out, &mut rows);
                per_field.push(json!({ "recipe": fitted, "study": rep }));
            }
            Err(e) => {
                out.fail(format!("field {i}: {e}"));
                per_field.push(json!({ "recipe": r, "error": e.to_string() }));
            }
        }
    }
    out.tables.push(Table {
        file: file.into(),
        header: STUDY_HEADER.to_vec(),
        rows,
    });
    json!({ "levels": levels, "min_order": order_threshold(ctx), "fields": per_field })
}

fn identities(ctx: &Context<'_>, out: &mut Outcome) -> Value {
    study_suite(ctx, out, "identities.csv", false)
}

fn convergence(ctx: &Context<'_>, out: &mut Outcome) -> Value {
    let mut details = study_suite(ctx, out, "convergence.csv", true);
    let mut scan_orders = Vec::new();
    for (i, r) in ctx.recipes.iter().enumerate().filter(|(_, r)| !r.is_constant()) {
        let result = r
            .fit(&ctx.wf, &ctx.mesh, ctx.cfg.solver.spacelike_safeguard)
            .and_then(|fitted| residual_refinement_order(&ctx.wf, &ctx.mesh, &fitted));
        match result {
            Ok(o) => scan_orders.push(json!({ "field": i, "refinement": o })),
            Err(e) => out.fail(format!("field {i}: inequality residual refinement: {e}")),
        }
    }
    details["inequality_residual_refinement"] = Value::Array(scan_orders);
    details
}

fn conditions(ctx: &Context<'_>, out: &mut Outcome) -> Value {
    let (wf, kf, w, n) = (&ctx.wf, ctx.kf, &ctx.window, ctx.cfg.tolerances.samples);
    let evaluated = (|| -> grw_core::Result<Value> {
        let ncc = ncc_margin(wf, kf, w, n)?;
        let tcc = tcc_check(wf, kf, w, n)?;
        let ubiquitous = ubiquitous_check(wf, kf, w, n, 16)?;
        let log_concave = log_concavity_check(wf, w, n)?;
        let alpha = inf_ratio_alpha(wf, w, n)?;
        let constant = constant_curvature_classify(wf, kf, w, n)?;
        if tcc.holds && !ncc.holds {
            out.fail("TCC holds but NCC fails");
        }
        if ubiquitous.holds && !tcc.holds {
            out.fail("ubiquitous condition holds but TCC fails");
        }
        let mut flags = Vec::new();
        if !log_concave.holds {
            flags.push("(log f)'' <= 0 is FALSE on the window; slice-uniqueness hypotheses not met");
        }
        if !ncc.holds {
            flags.push("NCC fails on the window");
        }
        Ok(json!({
            "fiber_curvature": kf,
            "window": w,
            "ncc": ncc,
            "tcc": tcc,
            "ubiquitous": ubiquitous,
            "log_concavity": log_concave,
            "alpha": alpha,
            "proper": wf.family().is_proper(),
            "constant_curvature": constant,
            "flags": flags,
        }))
    })();
    evaluated.unwrap_or_else(|e| {
        out.fail(e.to_string());
        json!({ "error": e.to_string() })
    })
}

fn history_rows(field: usize, h: &[HistoryEntry]) -> Vec<Vec<String>> {
    h.iter()
        .map(|e| {
            vec![
                field.to_string(),
                e.iteration.to_string(),
                num(e.residual_inf),
                num(e.oscillation),
                num(e.max_speed),
            ]
        })
        .collect()
}

fn slice_solve(ctx: &Context<'_>, out: &mut Outcome) -> Value {
    let tol = ctx.cfg.tolerances.oscillation;
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for (i, r) in ctx.recipes.iter().enumerate() {
        match solve_slice(&ctx.wf, ctx.mesh.clone(), r, &ctx.cfg.solver) {
            Ok(rec) => {
                let class = inequality_classify(&rec.final_graph);
                if rec.oscillation >= tol {
                    out.fail(format!("field {i}: final oscillation {:e} >= {tol:e}", rec.oscillation));
                }
                rows.extend(history_rows(i, &rec.history));
                runs.push(json!({
                    "initial": rec.initial,
                    "converged": true,
                    "iterations": rec.iterations,
                    "residual": rec.residual,
                    "oscillation": rec.oscillation,
                    "final_mean": mean(rec.final_graph.u()),
                    "final_verdict": class.verdict,
                    "final_max_inequality_residual": class.max_residual,
                }));
            }
            Err(e) => {
                out.fail(format!("field {i}: {e}"));
                runs.push(json!({ "initial": r, "converged": false, "error": e.to_string() }));
            }
        }
    }
    out.tables.push(Table {
        file: "solver_history.csv".into(),
        header: vec!["field", "iteration", "residual_inf", "oscillation", "max_speed"],
        rows,
    });
    json!({ "oscillation_tolerance": tol, "runs": runs })
}

fn mean(u: &ScalarField) -> f64 {
    u.values().iter().sum::<f64>() / u.len() as f64
}

fn inequality_scan(ctx: &Context<'_>, out: &mut Outcome) -> Value {
    let non_constant: Vec<FieldRecipe> = ctx.recipes.iter().filter(|r| !r.is_constant()).cloned().collect();
    let mut details = json!({});
    match violation_scan(&ctx.wf, &ctx.mesh, &non_constant, ctx.cfg.solver.spacelike_safeguard) {
        Ok(mut scan) => {
            if let Some(eps) = ctx.cfg.tolerances.scan_epsilon {
                scan.epsilon = eps;
                scan.within_floor = scan.min_over_fields > -eps;
            }
            if !scan.within_floor {
                out.fail(format!(
                    "min over fields {:e} below the floor -{:e}",
                    scan.min_over_fields, scan.epsilon
                ));
            }
            out.tables.push(Table {
                file: "inequality_scan.csv".into(),
                header: vec!["field", "max_residual", "argmax"],
                rows: scan
                    .per_field
                    .iter()
                    .enumerate()
                    .map(|(i, f)| vec![i.to_string(), num(f.max_residual), f.argmax.to_string()])
                    .collect(),
            });
            details["default_epsilon"] = json!(scan_epsilon(ctx.mesh.h_max()));
            details["scan"] = json!(scan);
        }
        Err(e) => {
            out.fail(format!("scan: {e}"));
            details["scan"] = json!({ "error": e.to_string() });
        }
    }
    let mut checks = Vec::new();
    for (i, r) in ctx.recipes.iter().enumerate() {
        let (fitted, g) = match ctx.graph(r) {
            Ok(x) => x,
            Err(e) => {
                out.fail(format!("field {i}: {e}"));
                continue;
            }
        };
        let class = inequality_classify(&g);
        let superharmonic = match superharmonic_check(&g, ctx.cfg.tolerances.superharmonic_c) {
            Ok(s) => {
                if !s.holds_pointwise {
                    out.fail(format!(
                        "field {i}: Delta log f(u) reaches {:e} above c h^2",
                        s.max_laplacian.max(s.via_identity)
                    ));
                }
                json!(s)
            }
            Err(e) => json!({ "skipped": e.to_string() }),
        };
        checks.push(json!({
            "recipe": fitted,
            "verdict": class.verdict,
            "max_residual": class.max_residual,
            "min_residual": class.min_residual,
            "satisfies": class.verdict != InequalityVerdict::Violates,
            "superharmonic": superharmonic,
        }));
    }
    details["fields"] = Value::Array(checks);
    details
}

fn energy(ctx: &Context<'_>, out: &mut Outcome) -> Value {
    let mut per_field = Vec::new();
    let mut rows = Vec::new();
    for (i, r) in ctx.recipes.iter().enumerate() {
        let result = ctx
            .graph(r)
            .and_then(|(fitted, g)| Ok((fitted, g.energy_report()?, cmc_bracket(&g))));
        match result {
            Ok((fitted, e, bracket)) => {
                if e.ncc.holds && !e.bound_holds {
                    out.fail(format!(
                        "field {i}: NCC holds but E_S = {} exceeds the bound {}",
                        e.e_s, e.bound_rhs
                    ));
                }
                rows.push(vec![
                    i.to_string(),
                    num(e.e_s),
                    num(e.bound_rhs),
                    e.bound_holds.to_string(),
                    e.ncc.holds.to_string(),
                ]);
                per_field.push(json!({ "recipe": fitted, "energy": e, "cmc_bracket": bracket }));
            }
            Err(e) => {
                out.fail(format!("field {i}: {e}"));
                per_field.push(json!({ "recipe": r, "error": e.to_string() }));
            }
        }
    }
    out.tables.push(Table {
        file: "energy.csv".into(),
        header: vec!["field", "e_s", "bound_rhs", "bound_holds", "ncc_holds"],
        rows,
    });
    json!({ "fields": per_field })
}
