//! Vehicle routing core: instances, solutions, feasibility checking and the
//! large neighborhood search whose removal and ordering steps are pluggable
//! operators.
//!
//! Three variants share one model: CVRP (capacity), VRPTW (capacity plus
//! customer time windows) and PCVRP (capacity, customers optional, each
//! unserved customer costs its prize). All objectives are minimized.

pub mod batch;
pub mod error;
pub mod generate;
pub mod instance;
pub mod io;
pub mod lns;
pub mod operators;
pub mod solution;
pub mod splits;
pub mod validate;

pub use error::{Error, Result};
pub use generate::{generate, GenParams};
pub use instance::{Instance, Node, ProblemKind};
pub use lns::{greedy_reinsert, initial_solution, run, LnsConfig, LnsError, RunStats};
pub use operators::{OperatorError, OperatorPair, Origin, OrderingOperator, RemovalOperator};
pub use solution::{Solution, Tour};
pub use validate::{validate, validate_routes, FeasibilityReport, Violation, ViolationKind};
