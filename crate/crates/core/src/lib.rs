//! Classification and repair of static-analysis warnings with a tool-calling
//! LLM agent.
//!
//! The crate is organized around the life of a single warning:
//!
//! - [`analyzer`] produces the baseline [`model::AnalysisReport`];
//! - [`subagents`] runs the classification agent and then the repair agent
//!   (fix or suppress), both driven by the cycle loop in [`runtime`] and the
//!   tools in [`tools`];
//! - every proposed fix is an [`edit::FixSpec`], applied to the checkout held
//!   by [`workspace::ProjectHandle`] and validated by [`approver`];
//! - [`gateway`] talks to the model (or replays a script) and accounts for
//!   tokens and cost, and [`trajectory`] persists everything for replay.

pub mod analyzer;
pub mod approver;
pub mod edit;
pub mod fixtures;
pub mod gateway;
pub mod model;
pub mod runtime;
pub mod subagents;
pub mod tools;
pub mod trajectory;
pub mod workspace;

pub use approver::{ApprovalVerdict, Approver, ApproverConfig, CheckSet, Stage};
pub use edit::{FixSpec, LineShiftMap};
pub use model::{AnalysisReport, Classification, RuleType, RunOutcome, Verdict, Warning};
pub use runtime::AgentMode;
