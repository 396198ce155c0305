//! Shared fixtures for the benchmarks.

use std::f64::consts::PI;
use std::sync::Arc;

use grw_core::{FiberMesh, FieldRecipe, SpacelikeGraph, WarpingFunction};

pub fn torus(n: usize) -> Arc<FiberMesh> {
    Arc::new(FiberMesh::build_torus(n, n, 2.0 * PI, 2.0 * PI).expect("valid torus"))
}

pub fn sphere(n: usize) -> Arc<FiberMesh> {
    Arc::new(FiberMesh::build_sphere(n, 2 * n, 1.0).expect("valid sphere"))
}

pub fn random_recipe(t0: f64, amplitude: f64, seed: u64) -> FieldRecipe {
    FieldRecipe::RandomBandLimited {
        t0,
        amplitude,
        max_mode: 4,
        seed,
    }
}

/// A fitted random graph over `mesh`.
pub fn graph(wf: WarpingFunction, mesh: &Arc<FiberMesh>, recipe: &FieldRecipe) -> SpacelikeGraph {
    let (_, u) = recipe.generate(&wf, mesh, 0.95).expect("recipe fits");
    SpacelikeGraph::new(wf, mesh.clone(), u).expect("spacelike")
}
