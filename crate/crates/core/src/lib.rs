//! Modality competition lab.
//!
//! Synthetic two-modality sparse coding data, smoothed-ReLU late-fusion and
//! uni-modal networks trained by full-batch gradient descent, and the
//! diagnostics that track which modality each class ends up being learned
//! from.

pub mod data;
pub mod diag;
pub mod error;
pub mod harness;
pub mod net;
pub mod power;
pub mod rng;
pub mod train;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// One of the two input streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Modality {
    First,
    Second,
}

impl Modality {
    pub const BOTH: [Modality; 2] = [Modality::First, Modality::Second];

    /// Zero-based array index.
    pub fn index(self) -> usize {
        match self {
            Modality::First => 0,
            Modality::Second => 1,
        }
    }

    /// One-based modality number.
    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn other(self) -> Modality {
        match self {
            Modality::First => Modality::Second,
            Modality::Second => Modality::First,
        }
    }

    pub fn from_index(i: usize) -> Modality {
        if i == 0 {
            Modality::First
        } else {
            Modality::Second
        }
    }
}

impl TryFrom<u8> for Modality {
    type Error = Error;

    fn try_from(r: u8) -> Result<Self> {
        match r {
            1 => Ok(Modality::First),
            2 => Ok(Modality::Second),
            other => Err(Error::Argument(format!("modality must be 1 or 2, got {other}"))),
        }
    }
}

impl From<Modality> for u8 {
    fn from(m: Modality) -> u8 {
        m.number()
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.number())
    }
}
pub use harness::cli_main;
