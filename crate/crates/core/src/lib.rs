//! Optimal control of an observable's expectation value in finite-dimensional
//! quantum systems, with continuation of the optimal controls across scale
//! parameters.
//!
//! The pipeline: build a [`QuantumModel`], evaluate the cost and its adjoint
//! gradient for a parametric pulse train ([`cost_and_gradient`]), refine the
//! pulse parameters ([`optimize`], [`multistart`]), sweep the optimum over a
//! grid of scale and unscaled parameters ([`levelset::sweep`]), and
//! interpolate the resulting sheet for new queries ([`levelset::predict`]).

pub mod cost;
pub mod error;
pub mod field;
pub mod levelset;
pub mod optimizer;
pub mod propagator;
pub mod quantum;

pub use cost::{
    cost_and_gradient, deviation_cost, evaluate_cost, intensity_cost, terminal_costate, CostBreakdown, CostWeights,
    Objective, PropagationCounter,
};
pub use error::{Error, Result};
pub use field::{ControlParams, Pulse};
pub use optimizer::{multistart, optimize, OptResult, OptSettings, StopReason, TraceEntry};
pub use propagator::{propagate_backward, propagate_forward, CostateTrajectory, TimeGrid, Trajectory};
pub use quantum::{
    build_hamiltonian, expectation, map_scale, Factor, HermitianOperator, Interval, ModelKind, ProductTerm,
    QuantumModel, QuantumState, ScaleMap, ScaleVector, SystemParams, C64,
};
