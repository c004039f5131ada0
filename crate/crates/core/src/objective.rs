//! Figures of merit the optimizer can maximise, selectable by name.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{GemError, Result};
use crate::mbsolver::RunSummary;
use crate::setup::RunSetup;
use crate::spectrum::LossBudget;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    /// Present when the value came from a full simulation.
    pub summary: Option<RunSummary>,
}

pub trait Objective: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    fn describe(&self) -> &'static str;

    fn evaluate(&self, setup: &RunSetup) -> Result<ObjectiveValue>;
}

/// Simulated recall efficiency.
#[derive(Debug, Default, Clone, Copy)]
pub struct Efficiency;

impl Objective for Efficiency {
    fn name(&self) -> &'static str {
        "eta"
    }

    fn describe(&self) -> &'static str {
        "recall efficiency from a full Maxwell-Bloch run"
    }

    fn evaluate(&self, setup: &RunSetup) -> Result<ObjectiveValue> {
        let r = setup.run()?;
        Ok(ObjectiveValue {
            value: r.eta,
            summary: Some(r.summary()),
        })
    }
}

/// Far-detuned loss product (1 - L_leakage)(1 - L_scatter); no simulation.
#[derive(Debug, Default, Clone, Copy)]
pub struct AnalyticProduct;

impl Objective for AnalyticProduct {
    fn name(&self) -> &'static str {
        "analytic-product"
    }

    fn describe(&self) -> &'static str {
        "closed-form leakage and scatter product"
    }

    fn evaluate(&self, setup: &RunSetup) -> Result<ObjectiveValue> {
        Ok(ObjectiveValue {
            value: LossBudget::new(&setup.params)?.product_efficiency,
            summary: None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ObjectiveRegistry {
    objectives: BTreeMap<&'static str, Arc<dyn Objective>>,
}

impl Default for ObjectiveRegistry {
    fn default() -> Self {
        let mut r = ObjectiveRegistry {
            objectives: BTreeMap::new(),
        };
        r.register(Arc::new(Efficiency));
        r.register(Arc::new(AnalyticProduct));
        r
    }
}

impl ObjectiveRegistry {
    pub fn register(&mut self, objective: Arc<dyn Objective>) {
        self.objectives.insert(objective.name(), objective);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Objective>> {
        self.objectives.get(name).cloned().ok_or_else(|| GemError::UnknownStrategy {
            kind: "objective",
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.objectives.keys().copied().collect()
    }
}
