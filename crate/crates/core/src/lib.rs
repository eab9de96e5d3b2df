//! Situation-calculus domain specifications turned into plans, repaired plans,
//! Petri nets and token-game executions.

pub mod dsl;
pub mod net;
pub mod plan;
pub mod planner;
pub mod query;
pub mod service;
pub mod simulator;
pub mod state;
pub mod term;
pub mod token;
