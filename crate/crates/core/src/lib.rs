//! Gossip averaging on two-sided graphs with a sparse cut: graph model,
//! event-driven simulator, update rules, averaging-time estimation and
//! the random-walk tools used to study non-convex cut updates.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod engine;
pub mod graph;
pub mod rules;
pub mod walks;
