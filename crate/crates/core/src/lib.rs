//! Inchworm Monte Carlo for open quantum systems, with the stochastic
//! Runge-Kutta toy problem it generalises and the analytic error envelopes
//! used to judge both.

pub mod algebra;
pub mod bath;
pub mod bounds;
pub mod error;
pub mod harness;
pub mod inchworm;
pub mod mesh;
pub mod ode_mc;
pub mod rng;

pub use algebra::{Mat2, C64};
pub use bath::{build_bath, BathSpec, Correlation, CorrelationTable, TimeSequence};
pub use error::{Error, Result};
pub use mesh::{Coord, Mesh, Node, PropagatorGrid};
pub use inchworm::{observable_trace, solve_grid, Inchworm, Mode, SchemeConfig, SystemSpec};
