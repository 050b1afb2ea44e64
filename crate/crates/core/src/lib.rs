//! Congestion-aware shuttle fleet navigation.
//!
//! Candidate routes come from a k-shortest-path search over a road graph
//! with traffic-dependent link times. Route choice across the fleet is
//! posed as a QUBO that penalises vehicles sharing road, solved by one of
//! several interchangeable solvers, and served to vehicles through the
//! fleet service.

pub mod analysis;
pub mod day;
pub mod geo;
pub mod ids;
pub mod qubo;
pub mod routing;
pub mod scenario;
pub mod service;
pub mod solver;
pub mod traffic;

