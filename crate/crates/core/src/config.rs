//! JSON scenario files. Frequencies are given in MHz and times in μs; every
//! section except `params` may be omitted.
//!
//! ```json
//! {
//!   "name": "reference",
//!   "params": { "optical_depth": 400, "gamma_e_mhz": 5.75, "gamma_s_mhz": 0,
//!               "delta_c_mhz": 175, "rabi_mhz": 7.7, "bandwidth_mhz": 0.265 },
//!   "pulse": { "fwhm_us": 5, "center_time_us": 7.5, "carrier_offset_mhz": null },
//!   "protocol": { "program": "gated", "order": "eit", "write_margin_fwhm": 1,
//!                 "hold_us": 10 },
//!   "grid": { "nz": 256, "phase_per_step": 0.5 },
//!   "optimization": { "free_params": ["rabi", "bandwidth", "carrier_offset"] },
//!   "sweep": { "detunings_mhz": [75, 100, 125] },
//!   "outputs": { "summary": true, "traces": true, "snapshots": false }
//! }
//! ```
//!
//! `carrier_offset_mhz: null` puts the carrier on the AC-Stark-shifted memory
//! center. `hold_us` and `storage_us` are alternatives; with neither the hold
//! lasts two pulse widths. `protocol.segments` replaces the generated
//! schedule with explicit segments.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GemError, Result};
use crate::optimizer::OptimizationSpec;
use crate::params::{mhz_to_angular, ParamsMhz, RB87_GAMMA_MHZ};
use crate::pulse::{PulseShape, PulseSpec};
use crate::schedule::{ControlProgramRegistry, Explicit, ProtocolSchedule, ProtocolTiming, DEFAULT_LEAD_FWHM};
use crate::setup::{stark_offset, GridPolicy, RunSetup};
use crate::GradientOrder;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseConfig {
    pub shape: PulseShape,
    pub fwhm_us: f64,
    /// Defaults to 1.5 FWHM.
    pub center_time_us: Option<f64>,
    /// Defaults to the AC-Stark-shifted memory center.
    pub carrier_offset_mhz: Option<f64>,
    pub amplitude: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        PulseConfig {
            shape: PulseShape::Gaussian,
            fwhm_us: 5.0,
            center_time_us: None,
            carrier_offset_mhz: None,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub program: String,
    pub order: GradientOrder,
    /// Write window closes this many FWHM after the pulse peak.
    pub write_margin_fwhm: f64,
    pub hold_us: Option<f64>,
    /// Input-peak to echo-peak time; sets the hold.
    pub storage_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segments: Option<ProtocolSchedule>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            program: "gated".into(),
            order: GradientOrder::Eit,
            write_margin_fwhm: 1.0,
            hold_us: None,
            storage_us: None,
            segments: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub detunings_mhz: Vec<f64>,
    pub orders: Vec<GradientOrder>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            detunings_mhz: (3..=20).map(|k| 25.0 * k as f64).collect(),
            orders: GradientOrder::BOTH.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotFormat {
    #[default]
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub summary: bool,
    pub traces: bool,
    pub snapshots: bool,
    pub snapshot_format: SnapshotFormat,
    /// Approximate number of z samples kept in snapshots.
    pub snapshot_nz: usize,
    /// Approximate number of time samples kept in snapshots.
    pub snapshot_nt: usize,
    pub sweep_table: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            summary: true,
            traces: true,
            snapshots: false,
            snapshot_format: SnapshotFormat::Csv,
            snapshot_nz: 64,
            snapshot_nt: 400,
            sweep_table: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub params: ParamsMhz,
    #[serde(default)]
    pub pulse: PulseConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub grid: GridPolicy,
    #[serde(default)]
    pub optimization: OptimizationSpec,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

fn default_name() -> String {
    "scenario".into()
}

impl Scenario {
    /// d = 400 at 175 MHz with control power and bandwidth near the
    /// efficient-order optimum.
    pub fn reference() -> Self {
        Scenario {
            name: "reference".into(),
            params: ParamsMhz {
                optical_depth: 400.0,
                gamma_e_mhz: RB87_GAMMA_MHZ,
                gamma_s_mhz: 0.0,
                delta_c_mhz: 175.0,
                rabi_mhz: 7.7,
                bandwidth_mhz: 0.265,
            },
            pulse: PulseConfig::default(),
            protocol: ProtocolConfig::default(),
            grid: GridPolicy::default(),
            optimization: OptimizationSpec::default(),
            sweep: SweepConfig::default(),
            outputs: OutputConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GemError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// SHA-256 of the compact JSON form, in hex.
    pub fn config_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.to_params()?;
        self.pulse()?;
        if self.protocol.hold_us.is_some() && self.protocol.storage_us.is_some() {
            return Err(GemError::Config("give either protocol.hold_us or protocol.storage_us".into()));
        }
        if self.grid.nz < 2 {
            return Err(GemError::Config("grid.nz must be >= 2".into()));
        }
        if self.outputs.snapshot_nz == 0 || self.outputs.snapshot_nt == 0 {
            return Err(GemError::Config("snapshot sizes must be >= 1".into()));
        }
        self.optimization.validate()?;
        if self.protocol.segments.is_none() {
            ControlProgramRegistry::default().get(&self.protocol.program)?;
        }
        Ok(())
    }

    pub fn pulse(&self) -> Result<PulseSpec> {
        let params = self.params.to_params()?;
        let c = &self.pulse;
        let offset = match c.carrier_offset_mhz {
            Some(f) => mhz_to_angular(f),
            None => stark_offset(&params),
        };
        let p = PulseSpec {
            shape: c.shape,
            fwhm: c.fwhm_us,
            carrier_offset: offset,
            center_time: c.center_time_us.unwrap_or(DEFAULT_LEAD_FWHM * c.fwhm_us),
            amplitude: c.amplitude,
            phase: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn timing(&self, pulse: &PulseSpec) -> Result<ProtocolTiming> {
        let pr = &self.protocol;
        match (pr.hold_us, pr.storage_us) {
            (Some(h), None) => ProtocolTiming::for_pulse(pulse, pr.write_margin_fwhm, h),
            (None, Some(s)) => ProtocolTiming::with_storage_time(pulse, pr.write_margin_fwhm, s),
            (None, None) => ProtocolTiming::for_pulse(pulse, pr.write_margin_fwhm, 2.0 * pulse.fwhm),
            (Some(_), Some(_)) => Err(GemError::Config("give either hold_us or storage_us".into())),
        }
    }

    pub fn to_setup(&self) -> Result<RunSetup> {
        self.to_setup_with(&ControlProgramRegistry::default())
    }

    pub fn to_setup_with(&self, programs: &ControlProgramRegistry) -> Result<RunSetup> {
        let params = self.params.to_params()?;
        let pulse = self.pulse()?;
        let program = match &self.protocol.segments {
            Some(s) => Arc::new(Explicit(s.clone())),
            None => programs.get(&self.protocol.program)?,
        };
        Ok(RunSetup::new(params, pulse, self.protocol.order)?
            .with_timing(self.timing(&pulse)?)
            .with_program(program)
            .with_grid_policy(self.grid))
    }

    /// Sweep detunings in rad/μs.
    pub fn sweep_detunings(&self) -> Vec<f64> {
        self.sweep.detunings_mhz.iter().map(|&f| mhz_to_angular(f)).collect()
    }
}
