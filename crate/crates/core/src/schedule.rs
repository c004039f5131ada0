//! Time-segmented gradient and control-field programs.
//!
//! A [`ProtocolSchedule`] is the explicit list of segments the solver
//! follows. [`ControlProgram`] implementations turn a [`ProtocolTiming`] and
//! a write gradient into a schedule and are looked up by name through a
//! [`ControlProgramRegistry`].

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};
use crate::pulse::PulseSpec;
use crate::GradientSign;

// absolute slack when checking segment contiguity (μs)
const JOIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub gradient_sign: GradientSign,
    pub control_on: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Segment>", into = "Vec<Segment>")]
pub struct ProtocolSchedule {
    segments: Vec<Segment>,
}

impl TryFrom<Vec<Segment>> for ProtocolSchedule {
    type Error = GemError;

    fn try_from(segments: Vec<Segment>) -> Result<Self> {
        ProtocolSchedule::new(segments)
    }
}

impl From<ProtocolSchedule> for Vec<Segment> {
    fn from(s: ProtocolSchedule) -> Self {
        s.segments
    }
}

impl ProtocolSchedule {
    /// Validates segments given in time order.
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let s = ProtocolSchedule { segments };
        s.validate()?;
        if s.flip_count() != 1 {
            log::warn!("schedule has {} gradient flips; the baseline protocol uses one", s.flip_count());
        }
        Ok(s)
    }

    /// Sorts segments by start time, then validates.
    pub fn normalize(mut segments: Vec<Segment>) -> Result<Self> {
        segments.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        Self::new(segments)
    }

    fn validate(&self) -> Result<()> {
        let first = self
            .segments
            .first()
            .ok_or_else(|| GemError::InvalidSchedule("no segments".into()))?;
        if first.t_start.abs() > JOIN_TOL {
            return Err(GemError::InvalidSchedule(format!(
                "first segment starts at {} instead of 0",
                first.t_start
            )));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if !(seg.t_start.is_finite() && seg.t_end.is_finite()) || seg.t_end <= seg.t_start {
                return Err(GemError::InvalidSchedule(format!(
                    "segment {i} has empty or invalid span [{}, {}]",
                    seg.t_start, seg.t_end
                )));
            }
        }
        for (i, w) in self.segments.windows(2).enumerate() {
            let gap = w[1].t_start - w[0].t_end;
            if gap > JOIN_TOL {
                return Err(GemError::InvalidSchedule(format!(
                    "gap of {gap} us between segments {i} and {}",
                    i + 1
                )));
            }
            if gap < -JOIN_TOL {
                return Err(GemError::InvalidSchedule(format!(
                    "segments {i} and {} overlap by {} us",
                    i + 1,
                    -gap
                )));
            }
        }
        Ok(())
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_time(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t_end)
    }

    /// Segment settings in force at time `t` (clamped to the schedule span).
    pub fn at(&self, t: f64) -> (GradientSign, bool) {
        let seg = self
            .segments
            .iter()
            .find(|s| t < s.t_end)
            .unwrap_or_else(|| self.segments.last().expect("validated non-empty"));
        (seg.gradient_sign, seg.control_on)
    }

    /// Times at which the gradient sign changes.
    pub fn flip_times(&self) -> Vec<f64> {
        self.segments
            .windows(2)
            .filter(|w| w[0].gradient_sign != w[1].gradient_sign)
            .map(|w| w[1].t_start)
            .collect()
    }

    pub fn flip_count(&self) -> usize {
        self.flip_times().len()
    }

    /// First gradient flip, which separates the write and read windows.
    pub fn flip_time(&self) -> Option<f64> {
        self.flip_times().first().copied()
    }

    pub fn write_sign(&self) -> GradientSign {
        self.segments[0].gradient_sign
    }

    /// Same program with every gradient sign reversed.
    pub fn mirrored(&self) -> Self {
        ProtocolSchedule {
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    gradient_sign: s.gradient_sign.flipped(),
                    ..*s
                })
                .collect(),
        }
    }
}

/// Protocol timing in μs, derived from the pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTiming {
    /// End of the write window; the control is switched off here for the hold.
    pub write_end: f64,
    /// Dark time between the write and read windows.
    pub hold: f64,
    /// Length of the read window.
    pub read_duration: f64,
}

/// Write window closes this many FWHM after the pulse peak.
pub const DEFAULT_WRITE_MARGIN_FWHM: f64 = 1.0;
/// Pulse peak sits this many FWHM after t = 0.
pub const DEFAULT_LEAD_FWHM: f64 = 1.5;

impl ProtocolTiming {
    /// Write window ends `write_margin` FWHM after the pulse peak, the hold
    /// is `hold` μs, and the read window is as long as the write window.
    pub fn for_pulse(pulse: &PulseSpec, write_margin: f64, hold: f64) -> Result<Self> {
        let write_end = pulse.center_time + write_margin * pulse.fwhm;
        let t = ProtocolTiming {
            write_end,
            hold,
            read_duration: write_end,
        };
        t.validate()?;
        Ok(t)
    }

    /// Default timing: gradient flips 2·FWHM after the pulse peak.
    pub fn default_for(pulse: &PulseSpec) -> Result<Self> {
        Self::for_pulse(pulse, DEFAULT_WRITE_MARGIN_FWHM, 2.0 * pulse.fwhm)
    }

    /// Timing whose echo arrives `storage` μs after the input peak.
    pub fn with_storage_time(pulse: &PulseSpec, write_margin: f64, storage: f64) -> Result<Self> {
        let write_end = pulse.center_time + write_margin * pulse.fwhm;
        let flip = pulse.center_time + 0.5 * storage;
        let hold = 2.0 * (flip - write_end);
        if hold < 0.0 {
            return Err(GemError::InvalidSchedule(format!(
                "storage time {storage} us is shorter than the write window allows"
            )));
        }
        Self::for_pulse(pulse, write_margin, hold)
    }

    fn validate(&self) -> Result<()> {
        if !(self.write_end > 0.0 && self.write_end.is_finite()) {
            return Err(GemError::InvalidSchedule("write window must end after t = 0".into()));
        }
        if !(self.hold >= 0.0 && self.hold.is_finite()) {
            return Err(GemError::InvalidSchedule("hold must be >= 0".into()));
        }
        if !(self.read_duration > 0.0 && self.read_duration.is_finite()) {
            return Err(GemError::InvalidSchedule("read window must be > 0".into()));
        }
        Ok(())
    }

    pub fn flip_time(&self) -> f64 {
        self.write_end + 0.5 * self.hold
    }

    pub fn read_start(&self) -> f64 {
        self.write_end + self.hold
    }

    pub fn total_time(&self) -> f64 {
        self.read_start() + self.read_duration
    }
}

/// A named rule for when the control field is on.
pub trait ControlProgram: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    fn describe(&self) -> &'static str;

    fn build(&self, timing: &ProtocolTiming, write_sign: GradientSign) -> Result<ProtocolSchedule>;
}

/// Control on while writing and reading, off during the hold.
#[derive(Debug, Default, Clone, Copy)]
pub struct Gated;

impl ControlProgram for Gated {
    fn name(&self) -> &'static str {
        "gated"
    }

    fn describe(&self) -> &'static str {
        "control on during write and read windows, off during the hold"
    }

    fn build(&self, timing: &ProtocolTiming, write_sign: GradientSign) -> Result<ProtocolSchedule> {
        let flip = timing.flip_time();
        let read = write_sign.flipped();
        let mut segs = vec![Segment {
            t_start: 0.0,
            t_end: timing.write_end,
            gradient_sign: write_sign,
            control_on: true,
        }];
        if timing.hold > 0.0 {
            segs.push(Segment {
                t_start: timing.write_end,
                t_end: flip,
                gradient_sign: write_sign,
                control_on: false,
            });
            segs.push(Segment {
                t_start: flip,
                t_end: timing.read_start(),
                gradient_sign: read,
                control_on: false,
            });
        }
        segs.push(Segment {
            t_start: timing.read_start(),
            t_end: timing.total_time(),
            gradient_sign: read,
            control_on: true,
        });
        ProtocolSchedule::new(segs)
    }
}

/// Control left on for the whole protocol.
#[derive(Debug, Default, Clone, Copy)]
pub struct ConstantOn;

impl ControlProgram for ConstantOn {
    fn name(&self) -> &'static str {
        "constant-on"
    }

    fn describe(&self) -> &'static str {
        "control on throughout, including the hold"
    }

    fn build(&self, timing: &ProtocolTiming, write_sign: GradientSign) -> Result<ProtocolSchedule> {
        let flip = timing.flip_time();
        ProtocolSchedule::new(vec![
            Segment {
                t_start: 0.0,
                t_end: flip,
                gradient_sign: write_sign,
                control_on: true,
            },
            Segment {
                t_start: flip,
                t_end: timing.total_time(),
                gradient_sign: write_sign.flipped(),
                control_on: true,
            },
        ])
    }
}

/// A fixed, user-supplied schedule. Requesting the opposite write sign
/// mirrors every segment, so gradient orders keep their meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct Explicit(pub ProtocolSchedule);

impl ControlProgram for Explicit {
    fn name(&self) -> &'static str {
        "explicit"
    }

    fn describe(&self) -> &'static str {
        "segments given verbatim in the configuration"
    }

    fn build(&self, _timing: &ProtocolTiming, write_sign: GradientSign) -> Result<ProtocolSchedule> {
        Ok(if self.0.write_sign() == write_sign {
            self.0.clone()
        } else {
            self.0.mirrored()
        })
    }
}

#[derive(Debug, Clone)]
pub struct ControlProgramRegistry {
    programs: BTreeMap<&'static str, Arc<dyn ControlProgram>>,
}

impl Default for ControlProgramRegistry {
    fn default() -> Self {
        let mut r = ControlProgramRegistry::empty();
        r.register(Arc::new(Gated));
        r.register(Arc::new(ConstantOn));
        r
    }
}

impl ControlProgramRegistry {
    pub fn empty() -> Self {
        ControlProgramRegistry {
            programs: BTreeMap::new(),
        }
    }

    /// Registers `program`, replacing any previous one with the same name.
    pub fn register(&mut self, program: Arc<dyn ControlProgram>) {
        self.programs.insert(program.name(), program);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ControlProgram>> {
        self.programs.get(name).cloned().ok_or_else(|| GemError::UnknownStrategy {
            kind: "control program",
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.programs.keys().copied().collect()
    }
}
