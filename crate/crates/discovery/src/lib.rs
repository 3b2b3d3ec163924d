//! Operator discovery: prompts and the LLM gateway, building and scoring
//! C++ operator candidates in supervised worker processes, and the genetic
//! loop that evolves them.

pub mod compile;
pub mod evaluate;
pub mod ffi;
pub mod fitness;
pub mod ga;
pub mod gateway;
pub mod mock_corpus;
pub mod prompts;
pub mod worker;

pub use compile::{line_count, Artifact, BuildError, Compiler, SHIM_VERSION};
pub use evaluate::{fitness_from_report, EvalManifest, EvalReport, EvalStatus, Evaluator, WorkerCommand};
pub use fitness::Fitness;
pub use ga::{ga_run, DiscoveryConfig, DiscoveryError, GaOutcome, Individual, RunDir, RunOptions};
pub use gateway::{extract_code, Gateway, GatewayError, HttpProvider, MockProvider};
pub use prompts::{CrossoverMode, ProblemContext, TemplateId};
