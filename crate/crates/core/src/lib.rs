//! Structured LLM workflows that a person can edit before they run.
//!
//! A planning model drafts a workflow of `STEP` lines ([`workflow`]), which
//! is shown as a flowchart ([`flowgraph`]) and changed through a small set of
//! edits ([`editops`]). Once confirmed, an executing model follows the frozen
//! text ([`llm`]). [`session`] ties the pieces together as an event-sourced
//! HTTP service and [`cli`] drives it all from a terminal.

pub mod cli;
pub mod editops;
pub mod flowgraph;
pub mod llm;
pub mod session;
pub mod workflow;
