//! Physical parameters of the Λ-system ensemble.
//!
//! Every frequency is stored as an angular frequency in rad/μs and every
//! time in μs. Laboratory inputs quoted in MHz go through [`mhz_to_angular`]
//! exactly once.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};

/// Linewidth of the Rb-87 D1 memory transition, in MHz.
pub const RB87_GAMMA_MHZ: f64 = 5.75;

/// MHz (cycles per μs) to rad/μs.
pub fn mhz_to_angular(f_mhz: f64) -> f64 {
    TAU * f_mhz
}

/// rad/μs to MHz.
pub fn angular_to_mhz(omega: f64) -> f64 {
    omega / TAU
}

/// Atomic and optical constants for one memory configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Resonant optical depth `d`.
    pub optical_depth: f64,
    /// Excited-state linewidth Γ (rad/μs).
    pub gamma_e: f64,
    /// Spinwave dephasing rate γ (rad/μs).
    pub gamma_s: f64,
    /// Control detuning Δ_C (rad/μs), signed.
    pub delta_c: f64,
    /// Control Rabi frequency Ω (rad/μs).
    pub rabi: f64,
    /// Total frequency span of the gradient across the ensemble (rad/μs).
    pub bandwidth: f64,
}

impl PhysicalParams {
    /// Builds parameters from angular frequencies, validating the invariants.
    pub fn new(
        optical_depth: f64,
        gamma_e: f64,
        gamma_s: f64,
        delta_c: f64,
        rabi: f64,
        bandwidth: f64,
    ) -> Result<Self> {
        let p = PhysicalParams {
            optical_depth,
            gamma_e,
            gamma_s,
            delta_c,
            rabi,
            bandwidth,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("optical_depth", self.optical_depth),
            ("gamma_e", self.gamma_e),
            ("gamma_s", self.gamma_s),
            ("delta_c", self.delta_c),
            ("rabi", self.rabi),
            ("bandwidth", self.bandwidth),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(GemError::param(name, format!("must be finite, got {v}")));
            }
        }
        if self.optical_depth < 0.0 {
            return Err(GemError::param("optical_depth", "must be >= 0"));
        }
        if self.gamma_e <= 0.0 {
            return Err(GemError::param("gamma_e", "must be > 0"));
        }
        if self.gamma_s < 0.0 {
            return Err(GemError::param("gamma_s", "must be >= 0"));
        }
        if self.rabi < 0.0 {
            return Err(GemError::param("rabi", "must be >= 0"));
        }
        if self.bandwidth <= 0.0 {
            return Err(GemError::param("bandwidth", "must be > 0"));
        }
        Ok(())
    }

    /// Δ_Γ = Δ_C / Γ.
    pub fn delta_gamma(&self) -> f64 {
        self.delta_c / self.gamma_e
    }

    pub fn with_rabi(mut self, rabi: f64) -> Self {
        self.rabi = rabi;
        self
    }

    pub fn with_bandwidth(mut self, bandwidth: f64) -> Self {
        self.bandwidth = bandwidth;
        self
    }

    pub fn with_delta_c(mut self, delta_c: f64) -> Self {
        self.delta_c = delta_c;
        self
    }

    pub fn with_optical_depth(mut self, d: f64) -> Self {
        self.optical_depth = d;
        self
    }

    pub fn with_gamma_s(mut self, gamma_s: f64) -> Self {
        self.gamma_s = gamma_s;
        self
    }

    /// The same record expressed in MHz, in constructor argument order.
    pub fn to_mhz(&self) -> ParamsMhz {
        ParamsMhz {
            optical_depth: self.optical_depth,
            gamma_e_mhz: angular_to_mhz(self.gamma_e),
            gamma_s_mhz: angular_to_mhz(self.gamma_s),
            delta_c_mhz: angular_to_mhz(self.delta_c),
            rabi_mhz: angular_to_mhz(self.rabi),
            bandwidth_mhz: angular_to_mhz(self.bandwidth),
        }
    }
}

/// Laboratory-unit mirror of [`PhysicalParams`]; this is what config files carry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsMhz {
    pub optical_depth: f64,
    pub gamma_e_mhz: f64,
    #[serde(default)]
    pub gamma_s_mhz: f64,
    pub delta_c_mhz: f64,
    #[serde(default)]
    pub rabi_mhz: f64,
    pub bandwidth_mhz: f64,
}

impl ParamsMhz {
    pub fn to_params(&self) -> Result<PhysicalParams> {
        make_params(
            self.optical_depth,
            self.gamma_e_mhz,
            self.gamma_s_mhz,
            self.delta_c_mhz,
            self.rabi_mhz,
            self.bandwidth_mhz,
        )
    }
}

/// Builds [`PhysicalParams`] from frequencies given in MHz.
pub fn make_params(
    d: f64,
    gamma_e_mhz: f64,
    gamma_s_mhz: f64,
    delta_c_mhz: f64,
    rabi_mhz: f64,
    bandwidth_mhz: f64,
) -> Result<PhysicalParams> {
    PhysicalParams::new(
        d,
        mhz_to_angular(gamma_e_mhz),
        mhz_to_angular(gamma_s_mhz),
        mhz_to_angular(delta_c_mhz),
        mhz_to_angular(rabi_mhz),
        mhz_to_angular(bandwidth_mhz),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rb_linewidth_converts_to_angular() {
        let p = make_params(400.0, 5.75, 0.0, 175.0, 1.0, 0.3).unwrap();
        assert!((p.gamma_e - TAU * 5.75).abs() < 1e-12);
        assert!((p.gamma_e - 36.128).abs() < 1e-3);
    }

    #[test]
    fn empty_medium_is_valid() {
        let p = make_params(0.0, 5.75, 0.0, 0.0, 0.0, 0.3).unwrap();
        assert_eq!(p.optical_depth, 0.0);
        assert_eq!(p.rabi, 0.0);
    }

    #[test]
    fn negative_detuning_keeps_sign() {
        let p = make_params(400.0, 5.75, 0.0, -180.0, 1.0, 0.3).unwrap();
        assert_eq!(p.delta_c, -TAU * 180.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(make_params(-1.0, 5.75, 0.0, 100.0, 1.0, 0.3).is_err());
        assert!(make_params(1.0, 0.0, 0.0, 100.0, 1.0, 0.3).is_err());
        assert!(make_params(1.0, 5.75, -0.1, 100.0, 1.0, 0.3).is_err());
        assert!(make_params(1.0, 5.75, 0.0, 100.0, -1.0, 0.3).is_err());
        assert!(make_params(1.0, 5.75, 0.0, 100.0, 1.0, 0.0).is_err());
        assert!(make_params(f64::NAN, 5.75, 0.0, 100.0, 1.0, 0.3).is_err());
        assert!(make_params(1.0, 5.75, 0.0, f64::INFINITY, 1.0, 0.3).is_err());
    }

    proptest! {
        #[test]
        fn mhz_round_trip(f in -1.0e4f64..1.0e4) {
            let back = angular_to_mhz(mhz_to_angular(f));
            prop_assert!((back - f).abs() <= 1e-12 * f.abs().max(1.0));
        }

        #[test]
        fn params_round_trip_through_mhz(
            d in 0.0f64..2000.0,
            g in 0.1f64..20.0,
            gs in 0.0f64..1.0,
            dc in -500.0f64..500.0,
            om in 0.0f64..100.0,
            bw in 0.01f64..5.0,
        ) {
            let p = make_params(d, g, gs, dc, om, bw).unwrap();
            let m = p.to_mhz();
            let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1e-300);
            prop_assert!(rel(m.gamma_e_mhz, g) || (m.gamma_e_mhz - g).abs() < 1e-15);
            prop_assert!((m.delta_c_mhz - dc).abs() <= 1e-12 * dc.abs().max(1.0));
            prop_assert!((m.rabi_mhz - om).abs() <= 1e-12 * om.abs().max(1.0));
            prop_assert!((m.bandwidth_mhz - bw).abs() <= 1e-12 * bw.abs().max(1.0));
            prop_assert!((m.gamma_s_mhz - gs).abs() <= 1e-12 * gs.abs().max(1.0));
            prop_assert_eq!(m.to_params().unwrap().optical_depth, d);
        }
    }
}
