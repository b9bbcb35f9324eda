//! Boundary control of first-order hyperbolic PDEs by backstepping, with the
//! gain computations optionally replaced by learned operators.
//!
//! The crate covers the full pipeline: grid primitives and Volterra
//! convolutions ([`grid`]), the 1D and 2D gain-kernel integral-equation
//! solvers ([`kernel1d`], [`kernel2d`]), a CFL-aligned simulator for the
//! transport and PIDE plants ([`sim`]), a from-scratch operator-learning
//! stack ([`nn`]), corpus generation and persistence ([`dataset`]), and
//! Lyapunov-based closed-loop verification ([`stability`]).

pub mod dataset;
pub mod error;
pub mod grid;
pub mod kernel1d;
pub mod kernel2d;
pub mod nn;
pub mod sim;
pub mod stability;

pub use error::{Error, Result};
pub use grid::{convolve, trapezoid_integrate, GridFunction1D, TriangularGridFunction};
pub use kernel1d::{solve_inverse_kernel, solve_kernel, KernelSolveConfig};
pub use kernel2d::{solve_inverse_kernel_2d, solve_kernel_2d};
pub use sim::{
    control_1d, control_2d, forward_transform, inverse_transform, observer_state,
    simulate_pide, simulate_transport, Controller, TrajectoryRecord,
};
pub use stability::{StabilityBounds, StabilityReport};
