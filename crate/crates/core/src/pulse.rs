use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    #[default]
    Gaussian,
}

/// Signal pulse entering the ensemble at z = -1/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    #[serde(default)]
    pub shape: PulseShape,
    /// Full width at half maximum of the amplitude envelope (μs).
    pub fwhm: f64,
    /// Carrier offset δ₀ from the nominal memory center (rad/μs).
    pub carrier_offset: f64,
    /// Peak time t₀ (μs).
    pub center_time: f64,
    #[serde(default = "unit")]
    pub amplitude: f64,
    /// Global phase of the envelope (rad).
    #[serde(default)]
    pub phase: f64,
}

fn unit() -> f64 {
    1.0
}

impl PulseSpec {
    pub fn gaussian(fwhm: f64, center_time: f64, carrier_offset: f64) -> Result<Self> {
        let p = PulseSpec {
            shape: PulseShape::Gaussian,
            fwhm,
            carrier_offset,
            center_time,
            amplitude: 1.0,
            phase: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm.is_finite() && self.fwhm > 0.0) {
            return Err(GemError::param("fwhm", "must be finite and > 0"));
        }
        for (name, v) in [
            ("carrier_offset", self.carrier_offset),
            ("center_time", self.center_time),
            ("amplitude", self.amplitude),
            ("phase", self.phase),
        ] {
            if !v.is_finite() {
                return Err(GemError::param(name, "must be finite"));
            }
        }
        Ok(())
    }

    pub fn with_carrier_offset(mut self, offset: f64) -> Self {
        self.carrier_offset = offset;
        self
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// Real envelope magnitude at time `t`.
    pub fn envelope(&self, t: f64) -> f64 {
        match self.shape {
            PulseShape::Gaussian => {
                let x = (t - self.center_time) / self.fwhm;
                self.amplitude * (-4.0 * LN_2 * x * x).exp()
            }
        }
    }

    /// Complex field E_in(t) in the rotating frame, carrier offset included.
    pub fn field(&self, t: f64) -> Complex64 {
        let phase = self.phase - self.carrier_offset * (t - self.center_time);
        Complex64::from_polar(self.envelope(t), phase)
    }

    /// Spectral FWHM of the amplitude envelope (rad/μs).
    pub fn spectral_fwhm(&self) -> f64 {
        8.0 * LN_2 / self.fwhm
    }
}

/// ∫|E_in(t)|² dt over the whole real line.
pub fn pulse_energy(p: &PulseSpec) -> f64 {
    match p.shape {
        PulseShape::Gaussian => p.amplitude * p.amplitude * p.fwhm * (PI / (8.0 * LN_2)).sqrt(),
    }
}
