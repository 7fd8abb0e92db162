//! Identifiers and small enums shared by every module.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub type NodeId = u32;
pub type BsId = u32;
pub type ContentId = u32;
pub type RequestId = u64;

/// Deployment scenario. A is the urban-micro layout, B the urban-macro one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(alias = "A_UMi", alias = "umi")]
    A,
    #[serde(alias = "B_UMa", alias = "uma")]
    B,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::A, Scenario::B];

    pub fn default_cell_diameter(self) -> f64 {
        match self {
            Scenario::A => 370.0,
            Scenario::B => 635.0,
        }
    }

    pub fn default_bs_height(self) -> f64 {
        match self {
            Scenario::A => 10.0,
            Scenario::B => 25.0,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::A => "A",
            Scenario::B => "B",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "a_umi" | "umi" => Ok(Scenario::A),
            "b" | "b_uma" | "uma" => Ok(Scenario::B),
            _ => Err(Error::Parse(format!("unknown scenario `{s}`"))),
        }
    }
}

/// The six channel models, from plain Friis up to the frequency-selective GSCM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelModel {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
}

impl ChannelModel {
    pub const ALL: [ChannelModel; 6] = [
        ChannelModel::M1,
        ChannelModel::M2,
        ChannelModel::M3,
        ChannelModel::M4,
        ChannelModel::M5,
        ChannelModel::M6,
    ];
    pub const STOCHASTIC: [ChannelModel; 3] = [ChannelModel::M4, ChannelModel::M5, ChannelModel::M6];

    pub fn is_stochastic(self) -> bool {
        matches!(self, ChannelModel::M4 | ChannelModel::M5 | ChannelModel::M6)
    }

    /// Deterministic path-loss model underlying this model.
    pub fn path_loss_model(self) -> PathLossModel {
        match self {
            ChannelModel::M1 => PathLossModel::M1,
            ChannelModel::M2 => PathLossModel::M2,
            _ => PathLossModel::M3,
        }
    }
}

impl fmt::Display for ChannelModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}", *self as u8 + 1)
    }
}

impl FromStr for ChannelModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_uppercase().as_str() {
            "M1" => Ok(ChannelModel::M1),
            "M2" => Ok(ChannelModel::M2),
            "M3" => Ok(ChannelModel::M3),
            "M4" => Ok(ChannelModel::M4),
            "M5" => Ok(ChannelModel::M5),
            "M6" => Ok(ChannelModel::M6),
            _ => Err(Error::Parse(format!("unknown channel model `{s}`"))),
        }
    }
}

/// Deterministic path-loss laws: Friis, close-in with a steeper slope, dual slope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathLossModel {
    M1,
    M2,
    M3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkKind {
    I2D,
    D2D,
}

impl LinkKind {
    pub const ALL: [LinkKind; 2] = [LinkKind::I2D, LinkKind::D2D];
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkKind::I2D => "I2D",
            LinkKind::D2D => "D2D",
        })
    }
}

impl FromStr for LinkKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I2D" => Ok(LinkKind::I2D),
            "D2D" => Ok(LinkKind::D2D),
            _ => Err(Error::Parse(format!("unknown link kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Offloading,
    BenchmarkI2dOnly,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Offloading => "offloading",
            Mode::BenchmarkI2dOnly => "benchmark_i2d_only",
        })
    }
}

/// Point on the street plane. `x` runs along the street, `y` across it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Transmitting end of a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Endpoint {
    Bs(BsId),
    Node(NodeId),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Bs(b) => write!(f, "bs{b}"),
            Endpoint::Node(n) => write!(f, "v{n}"),
        }
    }
}
