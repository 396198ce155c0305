//! Pseudo-transient continuation for `H(u) = -f'(u)/f(u)`.
//!
//! Each step solves `(I/tau - L/(2 fbar^2)) delta = -R(u)` with `R = H + f'/f`,
//! `L` the compact fiber Laplacian and `fbar = f(mean u)`, then sets
//! `u <- u + damping * delta`. Near a slice `R ~ -L u / (2 f^2)`, so the step
//! is a damped, frozen-coefficient Newton step. The preconditioner is
//! diagonalized by an FFT along the periodic axis; each Fourier mode leaves a
//! dense system along the other axis, factored once.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, LU};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::recipe::FieldRecipe;
use crate::graph::SpacelikeGraph;
use crate::mesh::{FiberMesh, ScalarField};
use crate::warp::{log_concavity_margin, WarpingFunction};

/// Step halvings allowed per iteration before the safeguard is declared breached.
pub const MAX_REJECTIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// On `max |H(u) + f'(u)/f(u)|`.
    pub residual_tolerance: f64,
    pub damping: f64,
    pub pseudo_time_step: f64,
    /// Largest relative speed `|Du|/f(u)` an accepted iterate may have.
    pub spacelike_safeguard: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            residual_tolerance: 1e-10,
            damping: 1.0,
            pseudo_time_step: 20.0,
            spacelike_safeguard: 0.95,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("solver {what}")));
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if !(self.residual_tolerance > 0.0) {
            return bad("residual_tolerance must be positive");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping must lie in (0, 1]");
        }
        if !(self.pseudo_time_step > 0.0) {
            return bad("pseudo_time_step must be positive");
        }
        if !(self.spacelike_safeguard > 0.0 && self.spacelike_safeguard < 1.0) {
            return bad("spacelike_safeguard must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub residual_inf: f64,
    pub oscillation: f64,
    pub max_speed: f64,
}

#[derive(Debug, Clone)]
pub struct SolveRecord {
    pub final_graph: SpacelikeGraph,
    /// The starting recipe after amplitude fitting.
    pub initial: Option<FieldRecipe>,
    pub iterations: usize,
    pub history: Vec<HistoryEntry>,
    pub oscillation: f64,
    pub residual: f64,
}

/// `R(u) = H(u) + f'(u)/f(u)` per node.
pub fn slice_residual(graph: &SpacelikeGraph) -> ScalarField {
    let h = graph.mean_curvature();
    let hub: Vec<f64> = graph.warp_values().iter().map(|w| w.hubble()).collect();
    ScalarField::from_vec_unchecked(h.values().iter().zip(&hub).map(|(h, r)| h + r).collect())
}

/// Solves for a graph with `H = -f'/f` starting from `initial`, whose
/// amplitude is first reduced if needed to meet the safeguard.
pub fn solve_slice(
    wf: &WarpingFunction,
    mesh: Arc<FiberMesh>,
    initial: &FieldRecipe,
    cfg: &SolverConfig,
) -> Result<SolveRecord> {
    cfg.validate()?;
    let (fitted, u) = initial.generate(wf, &mesh, cfg.spacelike_safeguard)?;
    let graph = SpacelikeGraph::new(*wf, mesh, u)?;
    let mut rec = solve_from(graph, cfg)?;
    rec.initial = Some(fitted);
    Ok(rec)
}

/// Runs the iteration from an existing graph.
pub fn solve_from(graph: SpacelikeGraph, cfg: &SolverConfig) -> Result<SolveRecord> {
    cfg.validate()?;
    let wf = *graph.warping();
    if graph.lambda() > cfg.spacelike_safeguard {
        return Err(Error::Precondition(format!(
            "initial graph has speed {} above the safeguard {}",
            graph.lambda(),
            cfg.spacelike_safeguard
        )));
    }
    if let Ok(lc) = log_concavity_margin(&wf, &graph.height_window(), 64) {
        if !lc.holds {
            log::warn!(
                "(log f)'' > 0 at t = {} on the initial range; constants need not be the only solutions",
                lc.argmin
            );
        }
    }

    let mesh = graph.mesh_arc().clone();
    let mut fbar = wf.eval(mean(graph.u().values()))?.f;
    let mut pre = Preconditioner::new(&mesh, cfg.pseudo_time_step, fbar)?;
    let mut g = graph;
    let mut history = Vec::new();

    for it in 0..=cfg.max_iterations {
        let r = slice_residual(&g);
        let res = r.max_abs();
        history.push(HistoryEntry {
            iteration: it,
            residual_inf: res,
            oscillation: g.u().oscillation(),
            max_speed: g.lambda(),
        });
        log::debug!(
            "iteration {it}: residual {res:e}, oscillation {:e}",
            g.u().oscillation()
        );
        if res < cfg.residual_tolerance {
            return Ok(SolveRecord {
                oscillation: g.u().oscillation(),
                final_graph: g,
                initial: None,
                iterations: it,
                history,
                residual: res,
            });
        }
        if it == cfg.max_iterations {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: res,
            });
        }

        let f_now = wf.eval(mean(g.u().values()))?.f;
        if (f_now / fbar - 1.0).abs() > 0.05 {
            fbar = f_now;
            pre = Preconditioner::new(&mesh, cfg.pseudo_time_step, fbar)?;
        }
        let neg: Vec<f64> = r.values().iter().map(|v| -v).collect();
        let delta = pre.apply(&neg);

        let mut step = cfg.damping;
        let mut rejections = 0;
        g = loop {
            let cand: Vec<f64> = g.u().values().iter().zip(&delta).map(|(u, d)| u + step * d).collect();
            let accepted = ScalarField::new(cand)
                .and_then(|u| SpacelikeGraph::new(wf, mesh.clone(), u))
                .ok()
                .filter(|c| c.lambda() <= cfg.spacelike_safeguard);
            if let Some(c) = accepted {
                break c;
            }
            rejections += 1;
            if rejections > MAX_REJECTIONS {
                return Err(Error::SafeguardBreach {
                    iteration: it,
                    max_speed: g.lambda(),
                });
            }
            step *= 0.5;
        };
    }
    unreachable!("the loop returns at max_iterations")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `(I/tau - L/(2 fbar^2))^{-1}` on a mesh whose second axis is periodic
/// and whose metric does not depend on that axis.
struct Preconditioner {
    n: [usize; 2],
    modes: Vec<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Preconditioner {
    fn new(mesh: &FiberMesh, tau: f64, fbar: f64) -> Result<Self> {
        let [n0, n1] = mesh.resolution();
        let geo = mesh.fiber_geometry();
        let h1 = mesh.spacing()[1];
        let symbol = |m: usize| {
            let s = 2.0 * (std::f64::consts::PI * m as f64 / n1 as f64).sin();
            s * s / (h1 * h1)
        };
        // Axis-0 part of L, probed with fields constant along axis 1.
        let mut l0 = DMatrix::<f64>::zeros(n0, n0);
        let mut e = vec![0.0; mesh.len()];
        for j in 0..n0 {
            for i1 in 0..n1 {
                e[mesh.index(j, i1)] = 1.0;
            }
            let col = mesh.compact_laplacian(&e);
            for i in 0..n0 {
                l0[(i, j)] = col[mesh.index(i, 0)];
            }
            for i1 in 0..n1 {
                e[mesh.index(j, i1)] = 0.0;
            }
        }
        let c = 1.0 / (2.0 * fbar * fbar);
        let modes = (0..n1)
            .map(|m| {
                let mut a = -&l0 * c;
                for i in 0..n0 {
                    a[(i, i)] += 1.0 / tau + c * geo.inv22[mesh.index(i, 0)] * symbol(m);
                }
                a.lu()
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            n: [n0, n1],
            modes,
            forward: planner.plan_fft_forward(n1),
            inverse: planner.plan_fft_inverse(n1),
        })
    }

    fn apply(&self, rhs: &[f64]) -> Vec<f64> {
        let [n0, n1] = self.n;
        let mut spec: Vec<Complex64> = rhs.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for row in spec.chunks_mut(n1) {
            self.forward.process(row);
        }
        let mut out = vec![Complex64::new(0.0, 0.0); n0 * n1];
        for (m, lu) in self.modes.iter().enumerate() {
            let re = DVector::from_iterator(n0, (0..n0).map(|i| spec[i * n1 + m].re));
            let im = DVector::from_iterator(n0, (0..n0).map(|i| spec[i * n1 + m].im));
            let xr = lu.solve(&re).expect("shifted operator is nonsingular");
            let xi = lu.solve(&im).expect("shifted operator is nonsingular");
            for i in 0..n0 {
                out[i * n1 + m] = Complex64::new(xr[i], xi[i]);
            }
        }
        for row in out.chunks_mut(n1) {
            self.inverse.process(row);
        }
        out.into_iter().map(|z| z.re / n1 as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn preconditioner_inverts_the_shifted_laplacian() {
        for mesh in [
            FiberMesh::build_torus(16, 12, 2.0 * PI, 3.0).unwrap(),
            FiberMesh::build_sphere(10, 16, 1.3).unwrap(),
        ] {
            let (tau, fbar) = (7.0, 1.4);
            let p = Preconditioner::new(&mesh, tau, fbar).unwrap();
            let x: Vec<f64> = (0..mesh.len()).map(|k| ((k * 37 % 11) as f64 - 5.0) / 3.0).collect();
            let lx = mesh.compact_laplacian(&x);
            let b: Vec<f64> = x
                .iter()
                .zip(&lx)
                .map(|(x, l)| x / tau - l / (2.0 * fbar * fbar))
                .collect();
            let y = p.apply(&b);
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 1e-10, "{a} {b}");
            }
        }
    }

    #[test]
    fn constant_start_takes_no_iterations() {
        let mesh = Arc::new(FiberMesh::build_torus(16, 16, 2.0 * PI, 2.0 * PI).unwrap());
        let rec = solve_slice(
            &WarpingFunction::cosh(),
            mesh,
            &FieldRecipe::Constant { t0: 0.4 },
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(rec.iterations, 0);
        assert_eq!(rec.oscillation, 0.0);
    }

    #[test]
    fn exponential_single_mode_flattens() {
        let mesh = Arc::new(FiberMesh::build_torus(64, 64, 2.0 * PI, 2.0 * PI).unwrap());
        let init = FieldRecipe::SingleMode {
            t0: 0.0,
            amplitude: 0.2,
            wavevector: [1, 0],
        };
        let cfg = SolverConfig::default();
        let rec = solve_slice(&WarpingFunction::exponential(), mesh, &init, &cfg).unwrap();
        assert!(rec.oscillation < 1e-6, "{}", rec.oscillation);
        assert!(rec.history.iter().all(|h| h.max_speed <= cfg.spacelike_safeguard));
        assert!(rec.residual < cfg.residual_tolerance);
    }

    #[test]
    fn sphere_run_flattens() {
        let mesh = Arc::new(FiberMesh::build_sphere(16, 32, 1.0).unwrap());
        let init = FieldRecipe::RandomBandLimited {
            t0: 2.0,
            amplitude: 0.1,
            max_mode: 2,
            seed: 5,
        };
        let rec = solve_slice(
            &WarpingFunction::power_law(1.0).unwrap(),
            mesh,
            &init,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(rec.oscillation < 1e-6, "{}", rec.oscillation);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let mesh = Arc::new(FiberMesh::build_torus(16, 16, 2.0 * PI, 2.0 * PI).unwrap());
        let init = FieldRecipe::SingleMode {
            t0: 0.0,
            amplitude: 0.2,
            wavevector: [1, 1],
        };
        let cfg = SolverConfig {
            max_iterations: 1,
            ..SolverConfig::default()
        };
        let err = solve_slice(&WarpingFunction::exponential(), mesh, &init, &cfg).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 1, .. }));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = SolverConfig {
            spacelike_safeguard: 1.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            damping: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
