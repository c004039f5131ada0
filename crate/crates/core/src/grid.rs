use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};
use crate::params::PhysicalParams;

/// Default phase advanced per time step by the fastest rotation (rad).
pub const DEFAULT_PHASE_PER_STEP: f64 = 0.5;
/// Largest phase per step the solver accepts (rad); explicit RK4 loses
/// stability on the imaginary axis at 2√2.
pub const STABILITY_CEILING: f64 = 2.0;
pub const DEFAULT_NZ: usize = 256;

/// Uniform space–time grid: `nz` points on z ∈ [-1/2, 1/2], `nt` samples on
/// [0, t_total].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverGrid {
    pub nz: usize,
    pub nt: usize,
    pub t_total: f64,
}

impl SolverGrid {
    pub fn new(nz: usize, nt: usize, t_total: f64) -> Result<Self> {
        if nz < 2 {
            return Err(GemError::InvalidGrid(format!("nz must be >= 2, got {nz}")));
        }
        if nt < 2 {
            return Err(GemError::InvalidGrid(format!("nt must be >= 2, got {nt}")));
        }
        if !(t_total.is_finite() && t_total > 0.0) {
            return Err(GemError::InvalidGrid(format!("t_total must be > 0, got {t_total}")));
        }
        Ok(SolverGrid { nz, nt, t_total })
    }

    /// Picks `nt` so the fastest rotation advances at most `phase_per_step`
    /// radians per step.
    pub fn auto(params: &PhysicalParams, t_total: f64, nz: usize, phase_per_step: f64) -> Result<Self> {
        if !(phase_per_step > 0.0 && phase_per_step <= STABILITY_CEILING) {
            return Err(GemError::InvalidGrid(format!(
                "phase per step must be in (0, {STABILITY_CEILING}], got {phase_per_step}"
            )));
        }
        let rate = max_rate(params).max(coupling_rate(params)).max(1e-12);
        let steps = (t_total * rate / phase_per_step).ceil().max(1.0);
        if steps > 5e8 {
            return Err(GemError::InvalidGrid(format!("{steps:e} time steps requested")));
        }
        Self::new(nz, steps as usize + 1, t_total)
    }

    pub fn dz(&self) -> f64 {
        1.0 / (self.nz - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_total / (self.nt - 1) as f64
    }

    pub fn z(&self, i: usize) -> f64 {
        -0.5 + i as f64 * self.dz()
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    /// Phase advanced per step by the fastest rotation in `params`.
    pub fn phase_per_step(&self, params: &PhysicalParams) -> f64 {
        self.dt() * max_rate(params)
    }

    pub fn check_resolution(&self, params: &PhysicalParams, ceiling: f64) -> Result<()> {
        let phase = self.phase_per_step(params);
        if phase > ceiling {
            return Err(GemError::InvalidGrid(format!(
                "time step {:.3e} us advances {phase:.3} rad per step, above the ceiling {ceiling}",
                self.dt()
            )));
        }
        Ok(())
    }

    /// Same time span with `factor` times the resolution in both directions.
    pub fn refined(&self, factor: usize) -> Self {
        SolverGrid {
            nz: (self.nz - 1) * factor + 1,
            nt: (self.nt - 1) * factor + 1,
            t_total: self.t_total,
        }
    }
}

fn max_rate(p: &PhysicalParams) -> f64 {
    (0.5 * p.bandwidth).max(p.delta_c.abs()).max(p.rabi)
}

/// Stiffness of the field back-action Γd/64. It only limits the step at high
/// optical depth: the explicit step goes unstable near dt·Γd/70 ≈ 1 with the
/// control off. Automatic grids respect it; explicit ones are only checked
/// against the rotation rates.
fn coupling_rate(p: &PhysicalParams) -> f64 {
    p.gamma_e * p.optical_depth / 64.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::make_params;

    #[test]
    fn spacing() {
        let g = SolverGrid::new(5, 11, 2.0).unwrap();
        assert_eq!(g.dz(), 0.25);
        assert!((g.dt() - 0.2).abs() < 1e-15);
        assert_eq!(g.z(0), -0.5);
        assert_eq!(g.z(4), 0.5);
        assert!(SolverGrid::new(1, 10, 1.0).is_err());
        assert!(SolverGrid::new(10, 1, 1.0).is_err());
        assert!(SolverGrid::new(10, 10, 0.0).is_err());
    }

    #[test]
    fn auto_respects_phase_rule() {
        let p = make_params(400.0, 5.75, 0.0, 175.0, 8.0, 0.3).unwrap();
        let g = SolverGrid::auto(&p, 35.0, 64, 0.1).unwrap();
        assert!(g.phase_per_step(&p) <= 0.1 + 1e-12);
        assert!(g.check_resolution(&p, 0.1 + 1e-12).is_ok());
        let coarse = SolverGrid::new(64, 100, 35.0).unwrap();
        assert!(coarse.check_resolution(&p, STABILITY_CEILING).is_err());
        assert!(SolverGrid::auto(&p, 35.0, 64, 3.0).is_err());
    }

    #[test]
    fn refinement_halves_spacing() {
        let g = SolverGrid::new(65, 101, 10.0).unwrap();
        let r = g.refined(2);
        assert!((r.dz() - 0.5 * g.dz()).abs() < 1e-15);
        assert!((r.dt() - 0.5 * g.dt()).abs() < 1e-15);
    }
}
