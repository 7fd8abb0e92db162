use thiserror::Error;

use crate::types::{ChannelModel, LinkKind, NodeId, Scenario};

#[derive(Debug, Error)]
pub enum Error {
    /// Every violated invariant, one per entry.
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("event scheduled at t={requested} but the clock already reads {clock}")]
    PastEvent { requested: f64, clock: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("a single packet needs {needed} PRBs but a control interval holds {available}")]
    PacketTooLarge { needed: u64, available: u64 },

    /// Deterministic models borrow the M4 margin rather than having their own.
    #[error("{0} is deterministic; apply the M4 margin")]
    UseM4Margin(ChannelModel),

    #[error("no calibrated margin for {model}/{scenario}/{kind}")]
    MissingCalibration {
        model: ChannelModel,
        scenario: Scenario,
        kind: LinkKind,
    },

    #[error("logic error: {0}")]
    Logic(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
