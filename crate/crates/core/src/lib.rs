//! Raman gradient echo memory: absorption analytics, a Maxwell–Bloch
//! solver for the full write/flip/read protocol, and an optimizer that tunes
//! control power, memory bandwidth and carrier offset for maximum recall.
//!
//! Units throughout: angular frequencies in rad/μs, times in μs, position
//! `z` dimensionless on `[-1/2, +1/2]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub mod config;
pub mod error;
pub mod grid;
pub mod mbsolver;
pub mod objective;
pub mod optimizer;
pub mod output;
pub mod params;
pub mod pulse;
pub mod quadrature;
pub mod schedule;
pub mod setup;
pub mod spectrum;

pub use error::{GemError, Result};
pub use grid::SolverGrid;
pub use mbsolver::{run_gem, FieldState, MemoryResult};
pub use params::{make_params, PhysicalParams};
pub use pulse::{pulse_energy, PulseSpec};
pub use schedule::{ProtocolSchedule, Segment};
pub use setup::RunSetup;

/// Sign of the spinwave phase-rate term `i·BW·sign·z`.
///
/// The local two-photon resonance frequency goes as `-sign·BW·z`, so a
/// `Positive` sign is a frequency gradient that *decreases* along the
/// propagation direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientSign {
    Positive,
    Negative,
}

impl GradientSign {
    pub fn value(self) -> f64 {
        match self {
            GradientSign::Positive => 1.0,
            GradientSign::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            GradientSign::Positive => GradientSign::Negative,
            GradientSign::Negative => GradientSign::Positive,
        }
    }

    pub fn from_value(v: f64) -> Option<Self> {
        if v == 1.0 {
            Some(GradientSign::Positive)
        } else if v == -1.0 {
            Some(GradientSign::Negative)
        } else {
            None
        }
    }
}

/// Which side of the Raman line the signal crosses on its way in and out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientOrder {
    /// Through the transparency window: the efficient order.
    Eit,
    /// Through the absorption-enhanced wing: the lossy order.
    Eia,
}

impl GradientOrder {
    pub const BOTH: [GradientOrder; 2] = [GradientOrder::Eit, GradientOrder::Eia];

    /// Gradient sign used while writing. For Δ_C > 0 the transparency window
    /// lies below the Raman line, so the signal must meet atoms whose
    /// resonance is above its own frequency first: a decreasing resonance
    /// frequency, i.e. [`GradientSign::Positive`].
    pub fn write_sign(self, delta_c: f64) -> GradientSign {
        let eit = if delta_c < 0.0 {
            GradientSign::Negative
        } else {
            GradientSign::Positive
        };
        match self {
            GradientOrder::Eit => eit,
            GradientOrder::Eia => eit.flipped(),
        }
    }

    pub fn other(self) -> Self {
        match self {
            GradientOrder::Eit => GradientOrder::Eia,
            GradientOrder::Eia => GradientOrder::Eit,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GradientOrder::Eit => "eit",
            GradientOrder::Eia => "eia",
        }
    }
}

impl fmt::Display for GradientOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GradientOrder {
    type Err = GemError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eit" => Ok(GradientOrder::Eit),
            "eia" => Ok(GradientOrder::Eia),
            other => Err(GemError::UnknownStrategy {
                kind: "gradient order",
                name: other.to_string(),
                known: "eit, eia".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_mirror_with_detuning_sign() {
        for o in GradientOrder::BOTH {
            assert_eq!(o.write_sign(1.0), o.write_sign(-1.0).flipped());
            assert_eq!(o.write_sign(1.0), o.other().write_sign(1.0).flipped());
        }
        assert_eq!(GradientOrder::Eit.write_sign(5.0), GradientSign::Positive);
        assert_eq!("eia".parse::<GradientOrder>().unwrap(), GradientOrder::Eia);
        assert!("up".parse::<GradientOrder>().is_err());
    }
}
