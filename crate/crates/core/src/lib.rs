//! Wasserstein-2 distributionally robust k-means.
//!
//! Centroids are fit against the worst distribution within a W2 ball around
//! the data, through the dual variable γ > 1: [`solver::fit_fixed_gamma`]
//! alternates per-point simplex QPs with a closed-form centroid update,
//! [`solver::fit_joint`] also optimizes γ for a given radius, and
//! [`solver::fit_entropy`] smooths the assignments with an entropy term.
//! [`seeding`] provides k-means++ and the Lloyd baseline, [`risk`] evaluates
//! worst-case risk and calibrates radii, and [`bench`] holds the synthetic
//! experiments and outlier scoring.

pub mod assignment;
pub mod bench;
pub mod error;
pub mod io;
mod linalg;
pub mod model;
pub mod risk;
pub mod rng;
pub mod seeding;
pub mod solver;
pub mod update;

pub use assignment::{solve_assignment, solve_assignment_entropy, InnerSolution};
pub use error::{Error, Result};
pub use model::{Centroids, DataSet, FitResult, RobustConfig, SoftAssignment};
pub use rng::Rng;
pub use solver::{fit, fit_entropy, fit_fixed_gamma, fit_from, fit_joint, SolverMode};
