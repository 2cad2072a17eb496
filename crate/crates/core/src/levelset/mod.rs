//! Continuation of optimal controls over scale and unscaled parameters.
//!
//! A sweep solves the control problem on a tensor grid of (s, c) nodes and
//! stores the optima as a [`SolutionSheet`]. Nodes whose optima are joined
//! by small steps in b form a branch; each branch is interpolated
//! ([`fit`]) so that controls for new (s, c) can be read off ([`predict`])
//! together with the level-set geometry ([`geometry`]): directions along c
//! span the level set at fixed s, and ∂b/∂s gives its motion.

mod basis;
mod geometry;
mod interp;
mod sheet;

pub use basis::{AxisBasis, Method};
pub use geometry::{geometry, FrontGeometry};
pub use interp::{fit, predict, BranchInterpolant, Evaluation, Prediction, SheetInterpolant, MAX_SPLINE_AXES};
pub use sheet::{sweep, SheetEntry, SolutionSheet, SweepGrid, SweepSettings, SHEET_FORMAT_VERSION};
