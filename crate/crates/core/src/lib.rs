//! Multipath routing and spectrum assignment for elastic optical networks.
//!
//! A request asks for a number of contiguous frequency slots between two
//! nodes. The engine may split it over several spectrum paths, as long as
//! the arrival-time spread between the paths stays within a bound. The
//! crate contains the heuristic, an integer-programming formulation used to
//! check it, an exhaustive reference solver and an event-driven simulator.

pub mod cli;
pub mod error;
pub mod heuristic;
pub mod ilp;
pub mod oracle;
pub mod physics;
pub mod sim;
pub mod spectrum;
pub mod topology;
