//! Core building blocks for the abyssal multi-AUV mission engine.
//!
//! * [`knowledge`] holds the robot capability graph, the object taxonomy and
//!   the runtime state, behind a versioned store with refresh-gated visibility.
//! * [`mission`] parses and renders the line-oriented mission format.
//! * [`planner`] validates missions, synthesizes behavior trees and decides
//!   context-driven behavior switches.
//! * [`bt`] is the behavior-tree runtime: tick semantics and the priority stack.
//! * [`sim`] is the deterministic discrete-time underwater world.
//! * [`oracle`] recomputes feasibility by brute force, independent of the planner.

pub mod bt;
pub mod fixtures;
pub mod geometry;
pub mod knowledge;
pub mod mission;
pub mod oracle;
pub mod planner;
pub mod scenario;
pub mod sim;

pub use knowledge::ActionKind;
