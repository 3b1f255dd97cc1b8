//! Planning engine that configures OFDM transponders (modulation level,
//! subcarrier count, coding rate, transmit optical power, active modes,
//! carrier frequency) in few-mode-fiber elastic optical networks so that
//! total transponder power consumption is minimized subject to OSNR,
//! spectrum and rate constraints.
//!
//! The configuration problem is posed as a geometric program, convexified
//! by the `x = e^X` variable change, solved with a primal log-barrier
//! interior-point method and driven to integer-feasible configurations by
//! an iterative relaxation-rounding loop. A brute-force grid oracle and
//! numerical checkers (finite differences, midpoint-convexity sampling)
//! validate the solver at desk scale.

pub mod constants;
pub mod error;
pub mod instance;
pub mod net;
pub mod oracle;
pub mod phy;
pub mod program;
pub mod report;
pub mod ros;
pub mod solver;

pub use constants::PhysicalConstants;
pub use error::{ModelError, OracleError, SolveError};
pub use instance::{DiscreteSets, ProblemInstance};
pub use net::{Link, Request, RoutingSolution, Topology};
pub use phy::{CouplingModel, TransponderConfig};
pub use program::ConvexProgram;
pub use report::SolveReport;
pub use ros::{OrderingRule, RosConfig, RosSolution};
pub use solver::SolverOptions;
