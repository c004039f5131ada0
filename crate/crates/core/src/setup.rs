//! One fully specified store-and-recall experiment.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};
use crate::grid::{SolverGrid, DEFAULT_NZ, DEFAULT_PHASE_PER_STEP};
use crate::mbsolver::{run_gem_with, MemoryResult, RunOptions};
use crate::params::PhysicalParams;
use crate::pulse::PulseSpec;
use crate::schedule::{ControlProgram, Gated, ProtocolSchedule, ProtocolTiming, DEFAULT_LEAD_FWHM};
use crate::GradientOrder;

/// How the solver grid follows the parameters: `nt` is re-derived whenever
/// a rate changes, `nz` is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridPolicy {
    pub nz: usize,
    pub phase_per_step: f64,
    /// Fixed number of time samples, overriding `phase_per_step`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nt: Option<usize>,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy {
            nz: DEFAULT_NZ,
            phase_per_step: DEFAULT_PHASE_PER_STEP,
            nt: None,
        }
    }
}

impl GridPolicy {
    /// Coarser grid for sweeps; efficiencies stay within a few 1e-4 of the
    /// default grid.
    pub const DESK: GridPolicy = GridPolicy {
        nz: 128,
        phase_per_step: 1.0,
        nt: None,
    };

    pub fn grid(&self, params: &PhysicalParams, t_total: f64) -> Result<SolverGrid> {
        match self.nt {
            Some(nt) => SolverGrid::new(self.nz, nt, t_total),
            None => SolverGrid::auto(params, t_total, self.nz, self.phase_per_step),
        }
    }
}

/// Gaussian input peaked far enough after t = 0 that its leading tail is
/// negligible.
pub fn default_pulse(fwhm: f64, carrier_offset: f64) -> Result<PulseSpec> {
    PulseSpec::gaussian(fwhm, DEFAULT_LEAD_FWHM * fwhm, carrier_offset)
}

/// AC-Stark-shifted memory center Ω²/(4Δ_C), the default carrier offset.
pub fn stark_offset(params: &PhysicalParams) -> f64 {
    if params.delta_c == 0.0 {
        0.0
    } else {
        params.rabi * params.rabi / (4.0 * params.delta_c)
    }
}

#[derive(Debug, Clone)]
pub struct RunSetup {
    pub params: PhysicalParams,
    pub pulse: PulseSpec,
    pub timing: ProtocolTiming,
    pub program: Arc<dyn ControlProgram>,
    pub order: GradientOrder,
    pub grid_policy: GridPolicy,
    pub options: RunOptions,
}

impl RunSetup {
    /// Gated control, default timing and grid.
    pub fn new(params: PhysicalParams, pulse: PulseSpec, order: GradientOrder) -> Result<Self> {
        params.validate()?;
        pulse.validate()?;
        Ok(RunSetup {
            params,
            timing: ProtocolTiming::default_for(&pulse)?,
            pulse,
            program: Arc::new(Gated),
            order,
            grid_policy: GridPolicy::default(),
            options: RunOptions::default(),
        })
    }

    pub fn with_timing(mut self, timing: ProtocolTiming) -> Self {
        self.timing = timing;
        self
    }

    pub fn with_program(mut self, program: Arc<dyn ControlProgram>) -> Self {
        self.program = program;
        self
    }

    pub fn with_order(mut self, order: GradientOrder) -> Self {
        self.order = order;
        self
    }

    pub fn with_grid_policy(mut self, policy: GridPolicy) -> Self {
        self.grid_policy = policy;
        self
    }

    pub fn with_options(mut self, options: RunOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_params(mut self, params: PhysicalParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_carrier_offset(mut self, offset: f64) -> Self {
        self.pulse = self.pulse.with_carrier_offset(offset);
        self
    }

    pub fn schedule(&self) -> Result<ProtocolSchedule> {
        self.program
            .build(&self.timing, self.order.write_sign(self.params.delta_c))
    }

    pub fn grid(&self) -> Result<SolverGrid> {
        self.grid_policy.grid(&self.params, self.schedule()?.total_time())
    }

    pub fn run(&self) -> Result<MemoryResult> {
        let schedule = self.schedule()?;
        if schedule.flip_count() == 0 {
            return Err(GemError::InvalidSchedule("program never flips the gradient".into()));
        }
        let grid = self.grid_policy.grid(&self.params, schedule.total_time())?;
        run_gem_with(&self.params, &self.pulse, &schedule, &grid, &self.options)
    }

    /// Mirror image: control detuning and carrier offset negated. The
    /// gradient order is kept, so both gradient signs flip with them.
    pub fn mirrored(&self) -> Self {
        let mut m = self.clone();
        m.params.delta_c = -m.params.delta_c;
        m.pulse.carrier_offset = -m.pulse.carrier_offset;
        m
    }
}
