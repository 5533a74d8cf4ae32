//! Finite element solver for a coupled poroelasticity / two-species
//! advection-diffusion-reaction system in 2D, with a locking-free
//! three-field (displacement, fluid pressure, total pressure) discretisation
//! and fully implicit backward-Euler/Newton time stepping, plus the
//! verification harness (manufactured-solution convergence studies and a
//! stress-modulated pattern-formation scenario).

pub mod error;
pub mod fem;
pub mod forms;
pub mod linalg;
pub mod mesh;
pub mod scenarios;
pub mod solver;
pub mod verification;

pub use error::{Error, Result};
pub use fem::{BlockLayout, Space, SpaceKind, Spaces};
pub use forms::{BoundaryData, ModelParams, Sources};
pub use linalg::{SolveReport, SparseMatrix};
pub use mesh::{Mesh, Side, Tag};
pub use solver::{NewtonOptions, State, StepReport, TimeStepper};
