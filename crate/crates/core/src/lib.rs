//! Large-deviation transport semidistances between Lagrangian trajectories
//! and coherent-set detection built on them.

pub mod coherence;
pub mod ensemble;
pub mod error;
pub mod flows;
pub mod matrix_file;
pub mod paths;
pub mod presets;
pub mod rates;
pub mod transition;

pub use ensemble::{Geometry, TimeGrid, TrajectoryEnsemble};
pub use error::{Error, Result};
pub use paths::{all_pairs_rates, RateVector, SolveOptions, Solver};
pub use rates::{RateMatrix, SemidistanceKind, SemidistanceMatrix};
pub use transition::{HopCostModel, PathRecord};
