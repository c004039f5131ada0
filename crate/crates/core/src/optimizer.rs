//! Deterministic maximisation of the recall efficiency over control Rabi
//! frequency, memory bandwidth and carrier offset, plus detuning sweeps.
//!
//! Each search starts from the closed-form seed, scans a coarse grid, then
//! refines the best grid point with a bounded Nelder–Mead simplex in
//! normalised coordinates. The Rabi frequency and bandwidth are searched on a
//! log scale; the carrier offset is measured from the AC-Stark-shifted memory
//! center in units of half the bandwidth, with the sign of Δ_C folded in so
//! that mirrored detunings follow mirrored paths.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};
use crate::mbsolver::RunSummary;
use crate::objective::{Objective, ObjectiveRegistry};
use crate::params::PhysicalParams;
use crate::setup::RunSetup;
use crate::spectrum::omega_for_optimal;
use crate::{GradientOrder, GradientSign};

/// Factor applied to Ω* for the deliberately sub-optimal companion run.
pub const HIGH_RABI_FACTOR: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeParam {
    Rabi,
    Bandwidth,
    CarrierOffset,
}

impl FreeParam {
    pub const ALL: [FreeParam; 3] = [FreeParam::Rabi, FreeParam::Bandwidth, FreeParam::CarrierOffset];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    /// Multiples of the closed-form seed Rabi frequency.
    pub rabi_factor: [f64; 2],
    /// Multiples of 2π / pulse FWHM.
    pub bandwidth_factor: [f64; 2],
    /// Offset from the AC-Stark-shifted center, in units of BW/2.
    pub offset_half_bw: [f64; 2],
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            rabi_factor: [0.5, 32.0],
            bandwidth_factor: [0.5, 4.0],
            offset_half_bw: [-1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseGrid {
    pub rabi: usize,
    pub bandwidth: usize,
    pub carrier_offset: usize,
}

impl Default for CoarseGrid {
    fn default() -> Self {
        CoarseGrid {
            rabi: 6,
            bandwidth: 3,
            carrier_offset: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizationSpec {
    pub free_params: Vec<FreeParam>,
    pub bounds: Bounds,
    pub coarse: CoarseGrid,
    pub max_iterations: usize,
    /// Stop once the simplex values span less than this.
    pub spread_tol: f64,
    pub objective: String,
}

impl Default for OptimizationSpec {
    fn default() -> Self {
        OptimizationSpec {
            free_params: FreeParam::ALL.to_vec(),
            bounds: Bounds::default(),
            coarse: CoarseGrid::default(),
            max_iterations: 60,
            spread_tol: 1e-4,
            objective: "eta".into(),
        }
    }
}

impl OptimizationSpec {
    pub fn only(free: &[FreeParam]) -> Self {
        OptimizationSpec {
            free_params: free.to_vec(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.free_params.is_empty() {
            return Err(GemError::Config("at least one free parameter is required".into()));
        }
        let mut seen = self.free_params.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.free_params.len() {
            return Err(GemError::Config("free parameters listed twice".into()));
        }
        let b = &self.bounds;
        for (name, [lo, hi], positive) in [
            ("rabi_factor", b.rabi_factor, true),
            ("bandwidth_factor", b.bandwidth_factor, true),
            ("offset_half_bw", b.offset_half_bw, false),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) || (positive && lo <= 0.0) {
                return Err(GemError::Config(format!("bounds `{name}` must be finite and ordered: [{lo}, {hi}]")));
            }
        }
        let c = &self.coarse;
        if c.rabi == 0 || c.bandwidth == 0 || c.carrier_offset == 0 {
            return Err(GemError::Config("coarse grid counts must be >= 1".into()));
        }
        if !(self.spread_tol >= 0.0) {
            return Err(GemError::Config("spread_tol must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Seed,
    Coarse,
    Refine,
}

impl Phase {
    pub fn code(self) -> u8 {
        match self {
            Phase::Seed => 0,
            Phase::Coarse => 1,
            Phase::Refine => 2,
        }
    }
}

/// One objective evaluation, kept for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub index: usize,
    pub phase: Phase,
    pub rabi: f64,
    pub bandwidth: f64,
    pub carrier_offset: f64,
    /// Objective value; `None` if the evaluation failed.
    pub value: Option<f64>,
    pub summary: Option<RunSummary>,
    pub cached: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationOutcome {
    /// Base parameters with Ω* and BW* substituted.
    pub params: PhysicalParams,
    pub carrier_offset: f64,
    pub value: f64,
    pub summary: Option<RunSummary>,
    /// Objective at the closed-form seed point.
    pub seed_value: Option<f64>,
    pub evaluations: Vec<Evaluation>,
    pub iterations: usize,
    pub converged: bool,
    pub on_bound: Vec<FreeParam>,
    pub warnings: Vec<String>,
}

impl OptimizationOutcome {
    /// `base` with the optimum applied.
    pub fn apply(&self, base: &RunSetup) -> RunSetup {
        base.clone()
            .with_params(self.params)
            .with_carrier_offset(self.carrier_offset)
    }
}

/// Maps normalised coordinates to physical parameters.
#[derive(Debug, Clone)]
struct Space {
    free: Vec<FreeParam>,
    rabi_seed: f64,
    rabi_log: [f64; 2],
    bw_log: [f64; 2],
    offset: [f64; 2],
    base_rabi: f64,
    base_bw: f64,
    sign_dc: f64,
    delta_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Point {
    rabi: f64,
    bandwidth: f64,
    carrier_offset: f64,
}

impl Space {
    fn new(base: &RunSetup, spec: &OptimizationSpec, warnings: &mut Vec<String>) -> Result<Self> {
        let p = &base.params;
        let bw_unit = TAU / base.pulse.fwhm;
        let bw_b = spec.bounds.bandwidth_factor;
        let seed_bw = p.bandwidth.clamp(bw_b[0] * bw_unit, bw_b[1] * bw_unit);
        let d = if p.optical_depth > 0.0 {
            p.optical_depth
        } else {
            warnings.push("optical depth is zero; Rabi seed taken at d = 1".into());
            1.0
        };
        let rabi_seed = omega_for_optimal(d, p.gamma_e, seed_bw, p.delta_c)?;
        let rb = spec.bounds.rabi_factor;
        Ok(Space {
            free: spec.free_params.clone(),
            rabi_seed,
            rabi_log: [(rb[0] * rabi_seed).ln(), (rb[1] * rabi_seed).ln()],
            bw_log: [(bw_b[0] * bw_unit).ln(), (bw_b[1] * bw_unit).ln()],
            offset: spec.bounds.offset_half_bw,
            base_rabi: p.rabi,
            base_bw: seed_bw,
            sign_dc: p.delta_c.signum(),
            delta_c: p.delta_c,
        })
    }

    fn coord(&self, which: FreeParam, u: &[f64]) -> Option<f64> {
        self.free.iter().position(|&f| f == which).map(|i| u[i])
    }

    fn point(&self, u: &[f64]) -> Point {
        let lerp = |r: [f64; 2], x: f64| r[0] + x * (r[1] - r[0]);
        let rabi = self
            .coord(FreeParam::Rabi, u)
            .map_or(self.base_rabi, |x| lerp(self.rabi_log, x).exp());
        let bandwidth = self
            .coord(FreeParam::Bandwidth, u)
            .map_or(self.base_bw, |x| lerp(self.bw_log, x).exp());
        let v = self.coord(FreeParam::CarrierOffset, u).map_or(0.0, |x| lerp(self.offset, x));
        let stark = rabi * rabi / (4.0 * self.delta_c);
        Point {
            rabi,
            bandwidth,
            carrier_offset: stark + self.sign_dc * v * 0.5 * bandwidth,
        }
    }

    /// Normalised position of the closed-form seed.
    fn seed(&self) -> Vec<f64> {
        let unlerp = |r: [f64; 2], x: f64| ((x - r[0]) / (r[1] - r[0])).clamp(0.0, 1.0);
        self.free
            .iter()
            .map(|f| match f {
                FreeParam::Rabi => unlerp(self.rabi_log, self.rabi_seed.ln()),
                FreeParam::Bandwidth => unlerp(self.bw_log, self.base_bw.ln()),
                FreeParam::CarrierOffset => unlerp(self.offset, 0.0),
            })
            .collect()
    }

    fn coarse_axes(&self, grid: &CoarseGrid) -> Vec<Vec<f64>> {
        let seed = self.seed();
        self.free
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let n = match f {
                    FreeParam::Rabi => grid.rabi,
                    FreeParam::Bandwidth => grid.bandwidth,
                    FreeParam::CarrierOffset => grid.carrier_offset,
                };
                if n == 1 {
                    vec![seed[i]]
                } else {
                    (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
                }
            })
            .collect()
    }
}

fn cache_key(p: &Point) -> String {
    format!("{:.6e}|{:.6e}|{:.6e}", p.rabi, p.bandwidth, p.carrier_offset)
}

/// Total order on (value, coordinates): larger value first, then
/// lexicographically smaller coordinates.
fn better(a: (f64, &[f64]), b: (f64, &[f64])) -> Ordering {
    let va = if a.0.is_nan() { f64::NEG_INFINITY } else { a.0 };
    let vb = if b.0.is_nan() { f64::NEG_INFINITY } else { b.0 };
    vb.total_cmp(&va).then_with(|| {
        a.1.iter()
            .zip(b.1)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

struct Evaluator<'a> {
    base: &'a RunSetup,
    space: &'a Space,
    objective: &'a dyn Objective,
    cache: HashMap<String, (Option<f64>, Option<RunSummary>, Option<String>)>,
    log: Vec<Evaluation>,
    best: Option<(f64, Vec<f64>)>,
}

impl Evaluator<'_> {
    /// Objective at `u`; failures count as -∞.
    fn eval(&mut self, u: &[f64], phase: Phase) -> f64 {
        let pt = self.space.point(u);
        let key = cache_key(&pt);
        let (entry, cached) = match self.cache.get(&key) {
            Some(e) => (e.clone(), true),
            None => {
                let setup = self
                    .base
                    .clone()
                    .with_params(self.base.params.with_rabi(pt.rabi).with_bandwidth(pt.bandwidth))
                    .with_carrier_offset(pt.carrier_offset);
                let e = match self.objective.evaluate(&setup) {
                    Ok(v) => (Some(v.value), v.summary, None),
                    Err(err) => {
                        log::debug!("evaluation failed at {pt:?}: {err}");
                        (None, None, Some(err.to_string()))
                    }
                };
                self.cache.insert(key, e.clone());
                (e, false)
            }
        };
        self.log.push(Evaluation {
            index: self.log.len(),
            phase,
            rabi: pt.rabi,
            bandwidth: pt.bandwidth,
            carrier_offset: pt.carrier_offset,
            value: entry.0,
            summary: entry.1,
            cached,
            error: entry.2,
        });
        let v = entry.0.unwrap_or(f64::NEG_INFINITY);
        let replace = match &self.best {
            None => true,
            Some((bv, bu)) => better((v, u), (*bv, bu)).is_lt(),
        };
        if replace {
            self.best = Some((v, u.to_vec()));
        }
        v
    }
}

fn clamp_unit(mut u: Vec<f64>) -> Vec<f64> {
    u.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
    u
}

/// Bounded Nelder–Mead maximisation. Returns (iterations, converged).
fn nelder_mead(ev: &mut Evaluator<'_>, start: Vec<f64>, steps: &[f64], max_iter: usize, tol: f64) -> (usize, bool) {
    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = ev.eval(&start, Phase::Refine);
    simplex.push((start.clone(), f0));
    for i in 0..n {
        let mut u = start.clone();
        u[i] = if u[i] + steps[i] <= 1.0 { u[i] + steps[i] } else { u[i] - steps[i] };
        let f = ev.eval(&u, Phase::Refine);
        simplex.push((u, f));
    }
    let comb = |a: &[f64], b: &[f64], t: f64| clamp_unit(a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect());

    let mut iter = 0;
    loop {
        simplex.sort_by(|a, b| better((a.1, &a.0), (b.1, &b.0)));
        let spread = simplex[0].1 - simplex[n].1;
        if spread.is_finite() && spread < tol {
            return (iter, true);
        }
        if iter >= max_iter {
            return (iter, false);
        }
        iter += 1;

        let mut centroid = vec![0.0; n];
        for (u, _) in &simplex[..n] {
            centroid.iter_mut().zip(u).for_each(|(c, x)| *c += x / n as f64);
        }
        let worst = simplex[n].0.clone();
        let (f_best, f_second, f_worst) = (simplex[0].1, simplex[n - 1].1, simplex[n].1);

        let xr = comb(&centroid, &worst, -1.0);
        let fr = ev.eval(&xr, Phase::Refine);
        if fr > f_best {
            let xe = comb(&centroid, &worst, -2.0);
            let fe = ev.eval(&xe, Phase::Refine);
            simplex[n] = if fe > fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr > f_second {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr > f_worst {
            let xc = comb(&centroid, &xr, 0.5);
            let fc = ev.eval(&xc, Phase::Refine);
            let ok = fc >= fr;
            (xc, fc, ok)
        } else {
            let xc = comb(&centroid, &worst, 0.5);
            let fc = ev.eval(&xc, Phase::Refine);
            let ok = fc > f_worst;
            (xc, fc, ok)
        };
        if accept {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let u = comb(&best, &v.0, 0.5);
            let f = ev.eval(&u, Phase::Refine);
            *v = (u, f);
        }
    }
}

/// Maximises the spec's objective around `base`.
pub fn optimize(base: &RunSetup, spec: &OptimizationSpec) -> Result<OptimizationOutcome> {
    optimize_with(base, spec, &ObjectiveRegistry::default())
}

pub fn optimize_with(base: &RunSetup, spec: &OptimizationSpec, registry: &ObjectiveRegistry) -> Result<OptimizationOutcome> {
    spec.validate()?;
    base.params.validate()?;
    let objective = registry.get(&spec.objective)?;
    let mut warnings = Vec::new();
    let space = Space::new(base, spec, &mut warnings)?;
    let mut ev = Evaluator {
        base,
        space: &space,
        objective: objective.as_ref(),
        cache: HashMap::new(),
        log: Vec::new(),
        best: None,
    };

    let seed = space.seed();
    let seed_value = Some(ev.eval(&seed, Phase::Seed)).filter(|v| v.is_finite());

    // coarse grid, last axis fastest
    let axes = space.coarse_axes(&spec.coarse);
    let mut idx = vec![0usize; axes.len()];
    loop {
        let u: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
        ev.eval(&u, Phase::Coarse);
        let mut k = axes.len();
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
        if idx.iter().all(|&i| i == 0) {
            break;
        }
    }

    let start = ev.best.clone().expect("at least one evaluation").1;
    let steps: Vec<f64> = axes
        .iter()
        .map(|a| if a.len() > 1 { 0.5 / (a.len() - 1) as f64 } else { 0.1 })
        .collect();
    let (iterations, converged) = nelder_mead(&mut ev, start, &steps, spec.max_iterations, spec.spread_tol);

    let (value, u_best) = ev.best.clone().expect("at least one evaluation");
    if !value.is_finite() {
        return Err(GemError::AllEvaluationsFailed);
    }
    if !converged {
        warnings.push(format!("simplex did not converge within {} iterations", spec.max_iterations));
    }
    let on_bound: Vec<FreeParam> = space
        .free
        .iter()
        .zip(&u_best)
        .filter(|(_, &x)| x <= 1e-3 || x >= 1.0 - 1e-3)
        .map(|(&f, _)| f)
        .collect();
    if !on_bound.is_empty() {
        warnings.push(format!("optimum lies on the bound of {on_bound:?}"));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let pt = space.point(&u_best);
    let summary = ev
        .log
        .iter()
        .find(|e| cache_key(&space_point(e)) == cache_key(&pt))
        .and_then(|e| e.summary);
    Ok(OptimizationOutcome {
        params: base.params.with_rabi(pt.rabi).with_bandwidth(pt.bandwidth),
        carrier_offset: pt.carrier_offset,
        value,
        summary,
        seed_value,
        evaluations: ev.log,
        iterations,
        converged,
        on_bound,
        warnings,
    })
}

fn space_point(e: &Evaluation) -> Point {
    Point {
        rabi: e.rabi,
        bandwidth: e.bandwidth,
        carrier_offset: e.carrier_offset,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta_c: f64,
    pub order: GradientOrder,
    pub rabi: f64,
    pub bandwidth: f64,
    pub carrier_offset: f64,
    pub eta: f64,
    /// Efficiency with Ω raised to 1.2·Ω*, everything else at the optimum.
    pub eta_high_rabi: f64,
    pub seed_eta: Option<f64>,
    pub warnings: Vec<String>,
    /// Set when this row failed; numeric fields are then NaN.
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(delta_c: f64, order: GradientOrder, err: &GemError) -> Self {
        SweepRow {
            delta_c,
            order,
            rabi: f64::NAN,
            bandwidth: f64::NAN,
            carrier_offset: f64::NAN,
            eta: f64::NAN,
            eta_high_rabi: f64::NAN,
            seed_eta: None,
            warnings: Vec::new(),
            error: Some(err.to_string()),
        }
    }

    pub fn write_sign(&self) -> GradientSign {
        self.order.write_sign(self.delta_c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub optical_depth: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn rows_for(&self, order: GradientOrder) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.order == order)
    }

    /// Row with the highest efficiency for `order`.
    pub fn best(&self, order: GradientOrder) -> Option<&SweepRow> {
        self.rows_for(order)
            .filter(|r| r.error.is_none())
            .max_by(|a, b| a.eta.total_cmp(&b.eta))
    }
}

fn run_row(base: &RunSetup, delta_c: f64, order: GradientOrder, spec: &OptimizationSpec) -> SweepRow {
    let setup = base.clone().with_params(base.params.with_delta_c(delta_c)).with_order(order);
    let attempt = || -> Result<SweepRow> {
        let out = optimize(&setup, spec)?;
        let objective = ObjectiveRegistry::default().get(&spec.objective)?;
        let best = out.apply(&setup);
        let high = best.clone().with_params(best.params.with_rabi(HIGH_RABI_FACTOR * out.params.rabi));
        let eta_high_rabi = objective.evaluate(&high)?.value;
        Ok(SweepRow {
            delta_c,
            order,
            rabi: out.params.rabi,
            bandwidth: out.params.bandwidth,
            carrier_offset: out.carrier_offset,
            eta: out.value,
            eta_high_rabi,
            seed_eta: out.seed_value,
            warnings: out.warnings,
            error: None,
        })
    };
    attempt().unwrap_or_else(|e| {
        log::error!("row delta_c = {delta_c}, order = {order} failed: {e}");
        SweepRow::failed(delta_c, order, &e)
    })
}

/// Optimises every (Δ_C, order) pair. Rows follow the input order, detuning
/// major; rows run in parallel on the ambient rayon pool.
pub fn sweep_detuning(
    base: &RunSetup,
    detunings: &[f64],
    orders: &[GradientOrder],
    spec: &OptimizationSpec,
) -> Result<SweepResult> {
    if detunings.is_empty() || orders.is_empty() {
        return Err(GemError::Config("sweep needs at least one detuning and one order".into()));
    }
    spec.validate()?;
    let mut keys: Vec<(u64, GradientOrder)> = detunings
        .iter()
        .flat_map(|d| orders.iter().map(move |&o| (d.to_bits(), o)))
        .collect();
    let n = keys.len();
    keys.sort();
    keys.dedup();
    if keys.len() != n {
        return Err(GemError::Config("sweep rows must be unique in (detuning, order)".into()));
    }
    let jobs: Vec<(f64, GradientOrder)> = detunings
        .iter()
        .flat_map(|&d| orders.iter().map(move |&o| (d, o)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(d, o)| run_row(base, d, o, spec))
        .collect();
    Ok(SweepResult {
        optical_depth: base.params.optical_depth,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub row: SweepRow,
    /// Same parameters rerun with the spinwave dephasing switched off.
    pub eta_lossless: f64,
    pub eta_high_rabi_lossless: f64,
}

/// Optimised efficiency band over ±detunings and both orders, each row
/// paired with a dephasing-free rerun at identical settings.
pub fn experiment_band(base: &RunSetup, detunings: &[f64], spec: &OptimizationSpec) -> Result<Vec<BandRow>> {
    let mut signed = Vec::with_capacity(2 * detunings.len());
    for &d in detunings {
        if d == 0.0 {
            return Err(GemError::Config("band detunings must be non-zero".into()));
        }
        signed.push(-d.abs());
        signed.push(d.abs());
    }
    let sweep = sweep_detuning(base, &signed, &GradientOrder::BOTH, spec)?;
    let objective = ObjectiveRegistry::default().get(&spec.objective)?;
    let rows = sweep
        .rows
        .into_par_iter()
        .map(|row| {
            if row.error.is_some() {
                return BandRow {
                    row,
                    eta_lossless: f64::NAN,
                    eta_high_rabi_lossless: f64::NAN,
                };
            }
            let params = base
                .params
                .with_delta_c(row.delta_c)
                .with_rabi(row.rabi)
                .with_bandwidth(row.bandwidth)
                .with_gamma_s(0.0);
            let setup = base
                .clone()
                .with_params(params)
                .with_order(row.order)
                .with_carrier_offset(row.carrier_offset);
            let eval = |s: &RunSetup| objective.evaluate(s).map(|v| v.value).unwrap_or(f64::NAN);
            let eta_lossless = eval(&setup);
            let high = setup.clone().with_params(params.with_rabi(HIGH_RABI_FACTOR * row.rabi));
            let eta_high_rabi_lossless = eval(&high);
            BandRow {
                row,
                eta_lossless,
                eta_high_rabi_lossless,
            }
        })
        .collect();
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::make_params;
    use crate::setup::{default_pulse, GridPolicy};
    use crate::spectrum::{omega_for_optimal_numeric, LossBudget};

    fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    fn analytic_setup(d: f64) -> RunSetup {
        let p = make_params(d, 5.75, 0.0, 175.0, 1.0, 0.3).unwrap();
        RunSetup::new(p, default_pulse(5.0, 0.0).unwrap(), GradientOrder::Eit).unwrap()
    }

    #[test]
    fn recovers_analytic_maximiser() {
        let base = analytic_setup(400.0);
        let spec = OptimizationSpec {
            objective: "analytic-product".into(),
            spread_tol: 1e-12,
            max_iterations: 200,
            ..OptimizationSpec::only(&[FreeParam::Rabi])
        };
        let out = optimize(&base, &spec).unwrap();
        let p = base.params;
        let oracle = golden_max(
            |om| LossBudget::new(&p.with_rabi(om)).unwrap().product_efficiency,
            0.1,
            100.0,
        );
        assert!(((out.params.rabi - oracle) / oracle).abs() < 0.01, "{} vs {oracle}", out.params.rabi);
        let closed = omega_for_optimal_numeric(400.0, p.gamma_e, p.bandwidth, p.delta_c).unwrap();
        assert!(((oracle - closed) / closed).abs() < 1e-6);
        assert!(out.value >= out.seed_value.unwrap());
        assert!(out.on_bound.is_empty());
        assert_eq!(out.params.bandwidth, p.bandwidth);
    }

    #[test]
    fn deterministic_and_cached() {
        let base = analytic_setup(400.0);
        let spec = OptimizationSpec {
            objective: "analytic-product".into(),
            ..OptimizationSpec::default()
        };
        let a = optimize(&base, &spec).unwrap();
        let b = optimize(&base, &spec).unwrap();
        assert_eq!(a, b);
        assert!(a.evaluations.iter().any(|e| e.cached));
        assert!(a.evaluations.iter().filter(|e| e.phase == Phase::Coarse).count() == 18);
    }

    #[test]
    fn empty_medium_ends_on_a_bound() {
        let base = analytic_setup(0.0).with_grid_policy(GridPolicy::DESK);
        let spec = OptimizationSpec {
            coarse: CoarseGrid {
                rabi: 2,
                bandwidth: 1,
                carrier_offset: 1,
            },
            ..OptimizationSpec::only(&[FreeParam::Rabi])
        };
        let out = optimize(&base, &spec).unwrap();
        assert!(out.value.abs() < 1e-9);
        assert!(out.converged);
        assert_eq!(out.on_bound, vec![FreeParam::Rabi]);
        assert!(out.warnings.iter().any(|w| w.contains("bound")));
    }

    #[test]
    fn spec_validation() {
        assert!(OptimizationSpec::only(&[]).validate().is_err());
        assert!(OptimizationSpec::only(&[FreeParam::Rabi, FreeParam::Rabi]).validate().is_err());
        let mut s = OptimizationSpec::default();
        s.bounds.rabi_factor = [2.0, 1.0];
        assert!(s.validate().is_err());
        let mut s = OptimizationSpec::default();
        s.coarse.bandwidth = 0;
        assert!(s.validate().is_err());
        let s = OptimizationSpec {
            objective: "nope".into(),
            ..OptimizationSpec::default()
        };
        assert!(matches!(
            optimize(&analytic_setup(10.0), &s),
            Err(GemError::UnknownStrategy { .. })
        ));
    }

    #[test]
    fn sweep_rows_keep_input_order() {
        let base = analytic_setup(400.0);
        let spec = OptimizationSpec {
            objective: "analytic-product".into(),
            ..OptimizationSpec::only(&[FreeParam::Rabi])
        };
        let dets = [300.0, 100.0, 200.0];
        let r = sweep_detuning(&base, &dets, &GradientOrder::BOTH, &spec).unwrap();
        assert_eq!(r.rows.len(), 6);
        for (i, row) in r.rows.iter().enumerate() {
            assert_eq!(row.delta_c, dets[i / 2]);
            assert_eq!(row.order, GradientOrder::BOTH[i % 2]);
            assert!(row.eta_high_rabi <= row.eta);
        }
        let single = sweep_detuning(&base, &[150.0], &GradientOrder::BOTH, &spec).unwrap();
        assert_eq!(single.rows.len(), 2);
        assert!(sweep_detuning(&base, &[], &GradientOrder::BOTH, &spec).is_err());
        assert!(sweep_detuning(&base, &[1.0, 1.0], &GradientOrder::BOTH, &spec).is_err());
    }

    #[test]
    fn failing_row_is_recorded() {
        let base = analytic_setup(400.0);
        let spec = OptimizationSpec {
            objective: "analytic-product".into(),
            ..OptimizationSpec::only(&[FreeParam::Rabi])
        };
        // zero detuning has no closed-form seed
        let r = sweep_detuning(&base, &[0.0, 100.0], &[GradientOrder::Eit], &spec).unwrap();
        assert!(r.rows[0].error.is_some());
        assert!(r.rows[0].eta.is_nan());
        assert!(r.rows[1].error.is_none());
    }
}
