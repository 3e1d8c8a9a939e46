//! Best-case and worst-case optimal values of linear programs whose cost
//! vector and right-hand side are perturbed jointly inside a convex set.

pub mod bqp;
pub mod conic;
pub mod analysis;
pub mod error;
pub mod heuristics;
pub mod instance;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod relaxation;
pub mod uncertainty;
mod tolerances;

pub use error::{Error, Result};
pub use model::SolveContext;
pub use tolerances::Tolerances;
