//! Numerical experiments on spacelike graphs: the slice-equation solver,
//! inequality scans, superharmonicity, the CMC bracket and refinement studies.

pub mod recipe;
pub mod solver;
pub mod studies;

pub use recipe::FieldRecipe;
pub use solver::{slice_residual, solve_from, solve_slice, HistoryEntry, SolveRecord, SolverConfig};
pub use studies::{
    cmc_bracket, convergence_study, residual_refinement_order, scan_epsilon, superharmonic_agreement_order,
    superharmonic_check, superharmonic_tolerance, violation_scan, CmcBracket, FieldScan, RefinementOrder,
    SuperharmonicReport, ViolationScan, SUPERHARMONIC_CONSTANT,
};
