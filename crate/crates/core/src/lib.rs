//! Numerical laboratory for asymmetric nearest-neighbor vehicle platoons with
//! friction and integral action.
//!
//! * [`dynamics`]: Laplacians, block state matrix, RK4 simulation.
//! * [`spectral`]: circulant per-mode cubics, stability conditions, phase and
//!   signal velocities.
//! * [`wave`]: transient prediction and measurement, total absolute error,
//!   flock-stability classification.
//! * [`optimizer`]: gain and velocity-asymmetry selection.
//! * [`io`]: CSV and JSON formats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cubic;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod optimizer;
pub mod params;
pub mod spectral;
pub mod wave;

pub use dynamics::{
    assemble_system, build_laplacian, simulate, Laplacian, LaplacianPair, PlatoonSystem,
    SimOptions, SimulationTrace, StateVector,
};
pub use error::{PlatoonError, Result};
pub use params::{PlatoonParams, Topology};
