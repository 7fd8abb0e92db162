//! Event engine: configuration, random streams, the event queue and the replication loop.

pub mod config;
pub mod queue;
pub mod rng;
pub mod sim;
