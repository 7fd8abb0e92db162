//! Discrete-event simulator of base-station-assisted D2D content offloading on a
//! straight street.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cdms;
pub mod channel;
pub mod engine;
pub mod error;
pub mod harness;
pub mod phy;
pub mod scheduler;
pub mod traffic;
pub mod types;

pub use engine::config::{CatalogSize, Numerology, SimConfig};
pub use error::{Error, Result};
pub use types::*;
pub use engine::sim::{run_replication, ReplicationOutcome};
pub use harness::metrics::MetricsRecord;
pub use phy::calibration::{CalibrationSettings, CalibrationTable};
