use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use gem_core::config::{Scenario, SnapshotFormat};
use gem_core::mbsolver::{Decimation, RunOptions};
use gem_core::optimizer::{self, FreeParam, SweepResult, SweepRow};
use gem_core::output::{self, Provenance};
use gem_core::params::{angular_to_mhz, mhz_to_angular};
use gem_core::spectrum;
use gem_core::{GemError, GradientOrder, Result};

#[derive(Parser, Debug)]
#[command(name = "gem", version, about = "Raman gradient echo memory simulator")]
struct Cli {
    /// Maximum number of concurrent solver runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario file (JSON); a built-in preset is used otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Optical depth.
    #[arg(long = "d")]
    d: Option<f64>,
    /// Control detuning in MHz.
    #[arg(long = "detuning-mhz", allow_hyphen_values = true)]
    detuning_mhz: Option<f64>,
    #[arg(long)]
    order: Option<GradientOrder>,
    /// Record decimated field snapshots.
    #[arg(long)]
    snapshots: bool,
    /// Print the effective scenario as JSON and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Absorption spectrum scan.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Scan start (signal detuning, MHz); defaults around the Raman line.
        #[arg(long, allow_hyphen_values = true)]
        from_mhz: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        to_mhz: Option<f64>,
        #[arg(long, default_value_t = 2001)]
        points: usize,
        /// Small detuning that exaggerates the EIT and EIA features.
        #[arg(long)]
        small_detuning: bool,
    },
    /// Gradient-order effect, closed form against quadrature.
    Geffect {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [200.0, 400.0, 800.0])]
        depths: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [115.0, 175.0, 345.0])]
        detunings_mhz: Vec<f64>,
    },
    /// One store-and-recall run.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Optimise Ω, BW and the carrier offset for one configuration.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Optimised efficiency over the configured detunings and orders.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Efficiency against detuning for both gradient orders at d = 400.
    #[command(name = "reproduce-fig2b")]
    ReproduceFig2b {
        #[command(flatten)]
        common: Common,
        /// Also sweep d = 1000 (slow).
        #[arg(long)]
        with_d1000: bool,
    },
    /// Efficiency bands at optimal and 20 % higher Rabi frequency, both
    /// detuning signs, with and without spinwave dephasing.
    ExperimentBand {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Spectrum {
            common,
            from_mhz,
            to_mhz,
            points,
            small_detuning,
        } => {
            let mut preset = Scenario::reference();
            preset.name = "spectrum".into();
            if small_detuning {
                let g = preset.params.gamma_e_mhz;
                preset.params.delta_c_mhz = 3.0 * g;
                preset.params.rabi_mhz = g;
                preset.params.gamma_s_mhz = 0.0;
                preset.params.optical_depth = 1.0;
            }
            with_scenario(&common, preset, |s, ctx| cmd_spectrum(s, ctx, from_mhz, to_mhz, points))
        }
        Command::Geffect {
            common,
            depths,
            detunings_mhz,
        } => {
            let mut preset = Scenario::reference();
            preset.name = "geffect".into();
            preset.params.bandwidth_mhz = 0.3;
            let depths = common.d.map(|d| vec![d]).unwrap_or(depths);
            let dets = common.detuning_mhz.map(|d| vec![d]).unwrap_or(detunings_mhz);
            with_scenario(&common, preset, |s, ctx| cmd_geffect(s, ctx, &depths, &dets))
        }
        Command::Run { common } => with_scenario(&common, Scenario::reference(), cmd_run),
        Command::Optimize { common } => {
            let mut preset = Scenario::reference();
            preset.name = "optimize".into();
            preset.grid = gem_core::setup::GridPolicy::DESK;
            preset.protocol.hold_us = Some(0.0);
            with_scenario(&common, preset, cmd_optimize)
        }
        Command::Sweep { common } => with_scenario(&common, fig2b_preset(), cmd_sweep),
        Command::ReproduceFig2b { common, with_d1000 } => {
            with_scenario(&common, fig2b_preset(), |s, ctx| cmd_fig2b(s, ctx, with_d1000))
        }
        Command::ExperimentBand { common } => with_scenario(&common, band_preset(), cmd_band),
    }
}

/// d = 400 sweep preset at desk scale: coarse grid, no hold (the hold does
/// not change the efficiency without dephasing).
fn fig2b_preset() -> Scenario {
    let mut s = Scenario::reference();
    s.name = "fig2b".into();
    s.grid = gem_core::setup::GridPolicy::DESK;
    s.protocol.hold_us = Some(0.0);
    s
}

/// Lab-like settings: fixed 300 kHz memory bandwidth, 13 μs storage and a
/// small spinwave dephasing rate.
fn band_preset() -> Scenario {
    let mut s = Scenario::reference();
    s.name = "experiment-band".into();
    s.params.bandwidth_mhz = 0.3;
    s.params.gamma_s_mhz = 0.002;
    s.grid = gem_core::setup::GridPolicy::DESK;
    s.protocol.storage_us = Some(13.0);
    s.optimization.free_params = vec![FreeParam::Rabi, FreeParam::CarrierOffset];
    s.optimization.coarse.bandwidth = 1;
    s.sweep.detunings_mhz = vec![100.0, 140.0, 180.0, 220.0, 260.0];
    s
}

struct Context {
    out: PathBuf,
    provenance: Provenance,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn table<R: AsRef<[f64]>>(&self, name: &str, columns: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
        let path = self.path(name);
        output::write_table_file(&path, &self.provenance, columns, rows)?;
        log::info!("wrote {}", path.display());
        Ok(())
    }

    fn json(&self, name: &str, mut value: serde_json::Value) -> Result<()> {
        if let Some(obj) = value.as_object_mut() {
            obj.insert("tool".into(), json!(self.provenance.tool));
            obj.insert("config_sha256".into(), json!(self.provenance.config_hash));
        }
        let path = self.path(name);
        output::write_json(&path, &value)?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

fn with_scenario(
    common: &Common,
    preset: Scenario,
    body: impl FnOnce(&Scenario, &Context) -> Result<()>,
) -> Result<()> {
    let mut s = match &common.config {
        Some(path) => Scenario::load(path)?,
        None => preset,
    };
    if let Some(d) = common.d {
        s.params.optical_depth = d;
    }
    if let Some(f) = common.detuning_mhz {
        s.params.delta_c_mhz = f;
        s.sweep.detunings_mhz = vec![f];
    }
    if let Some(o) = common.order {
        s.protocol.order = o;
        s.sweep.orders = vec![o];
    }
    if common.snapshots {
        s.outputs.snapshots = true;
    }
    s.validate()?;
    if common.dump_config {
        println!("{}", s.to_json_pretty());
        return Ok(());
    }
    fs::create_dir_all(&common.out)
        .map_err(|e| GemError::Config(format!("cannot create {}: {e}", common.out.display())))?;
    let ctx = Context {
        out: common.out.clone(),
        provenance: Provenance::new(s.config_hash()),
    };
    body(&s, &ctx)
}

fn cmd_spectrum(s: &Scenario, ctx: &Context, from: Option<f64>, to: Option<f64>, points: usize) -> Result<()> {
    if points < 2 {
        return Err(GemError::Config("--points must be at least 2".into()));
    }
    let p = s.params.to_params()?;
    let (lo, hi) = match (from, to) {
        (Some(a), Some(b)) => (mhz_to_angular(a), mhz_to_angular(b)),
        (a, b) => {
            let center = spectrum::raman_line_center(&p)?;
            let span = (10.0 * spectrum::raman_fwhm(&p)?).max(2.0 * p.bandwidth).max(p.gamma_e);
            (
                a.map(mhz_to_angular).unwrap_or(center + p.delta_c - span),
                b.map(mhz_to_angular).unwrap_or(center + p.delta_c + span),
            )
        }
    };
    if !(hi > lo) {
        return Err(GemError::Config("scan range is empty".into()));
    }
    let rows = spectrum::scan(&p, lo, hi, points)?;
    ctx.table(
        "spectrum.csv",
        &["delta_s_mhz", "alpha", "alpha_lorentzian", "alpha_prime"],
        rows.iter()
            .map(|r| [angular_to_mhz(r.delta_s), r.alpha, r.alpha_lorentzian, r.alpha_prime]),
    )
}

fn cmd_geffect(s: &Scenario, ctx: &Context, depths: &[f64], dets: &[f64]) -> Result<()> {
    let base = s.params.to_params()?;
    let mut rows = Vec::new();
    for &d in depths {
        for &f in dets {
            let dc = mhz_to_angular(f);
            let closed = spectrum::gradient_order_effect_closed(d, dc / base.gamma_e)?;
            let rabi = spectrum::omega_for_optimal(d, base.gamma_e, base.bandwidth, dc)?;
            let p = base.with_optical_depth(d).with_delta_c(dc).with_rabi(rabi);
            let numeric = spectrum::gradient_order_effect_numeric(&p, GradientOrder::Eit)?;
            rows.push([d, f, closed.g_closed.unwrap(), numeric.g_numeric.unwrap()]);
        }
    }
    ctx.table("geffect.csv", &["d", "delta_c_mhz", "g_closed", "g_numeric"], &rows)
}

fn cmd_run(s: &Scenario, ctx: &Context) -> Result<()> {
    let mut setup = s.to_setup()?;
    if s.outputs.snapshots {
        let grid = setup.grid()?;
        setup.options = RunOptions {
            snapshots: Some(Decimation::target(&grid, s.outputs.snapshot_nz, s.outputs.snapshot_nt)),
            ..setup.options
        };
    }
    let r = setup.run()?;
    if s.outputs.summary {
        ctx.json(
            "summary.json",
            json!({
                "scenario": s.name,
                "eta": r.eta,
                "leakage_fraction": r.leakage_fraction,
                "recall_peak_time": r.recall_peak_time,
                "flip_time": r.flip_time,
                "excited_exposure": r.excited_exposure,
                "order": setup.order,
            }),
        )?;
    }
    if s.outputs.traces {
        ctx.table("traces.csv", &output::TRACE_COLUMNS, output::trace_rows(&r))?;
    }
    if let Some(snap) = &r.snapshots {
        match s.outputs.snapshot_format {
            SnapshotFormat::Csv => ctx.table("snapshots.csv", &output::SNAPSHOT_COLUMNS, output::snapshot_rows(snap))?,
            SnapshotFormat::Binary => output::write_snapshots_binary(&ctx.out, "snapshot", snap)?,
        }
    }
    println!("eta = {:.6}  leakage = {:.6}  recall peak = {:.4} us", r.eta, r.leakage_fraction, r.recall_peak_time);
    Ok(())
}

fn cmd_optimize(s: &Scenario, ctx: &Context) -> Result<()> {
    let setup = s.to_setup()?;
    let out = optimizer::optimize(&setup, &s.optimization)?;
    for w in &out.warnings {
        log::warn!("{w}");
    }
    ctx.json(
        "optimize.json",
        json!({
            "scenario": s.name,
            "objective": s.optimization.objective,
            "order": setup.order,
            "delta_c_mhz": s.params.delta_c_mhz,
            "rabi_mhz": angular_to_mhz(out.params.rabi),
            "bandwidth_mhz": angular_to_mhz(out.params.bandwidth),
            "carrier_offset_mhz": angular_to_mhz(out.carrier_offset),
            "value": out.value,
            "summary": out.summary,
            "seed_value": out.seed_value,
            "iterations": out.iterations,
            "evaluations": out.evaluations.len(),
            "converged": out.converged,
            "on_bound": out.on_bound,
            "warnings": out.warnings,
        }),
    )?;
    ctx.table(
        "evaluations.csv",
        &["index", "phase", "rabi_mhz", "bandwidth_mhz", "carrier_offset_mhz", "value", "cached"],
        out.evaluations.iter().map(|e| {
            [
                e.index as f64,
                e.phase.code() as f64,
                angular_to_mhz(e.rabi),
                angular_to_mhz(e.bandwidth),
                angular_to_mhz(e.carrier_offset),
                e.value.unwrap_or(f64::NAN),
                e.cached as u8 as f64,
            ]
        }),
    )?;
    println!(
        "{} = {:.6} at rabi = {:.4} MHz, bandwidth = {:.4} MHz, carrier offset = {:.4} MHz",
        s.optimization.objective,
        out.value,
        angular_to_mhz(out.params.rabi),
        angular_to_mhz(out.params.bandwidth),
        angular_to_mhz(out.carrier_offset)
    );
    Ok(())
}

const SWEEP_COLUMNS: [&str; 7] = [
    "delta_c_mhz",
    "order",
    "rabi_mhz",
    "bandwidth_mhz",
    "carrier_offset_mhz",
    "eta",
    "eta_high_rabi",
];

fn order_code(o: GradientOrder) -> f64 {
    match o {
        GradientOrder::Eit => 1.0,
        GradientOrder::Eia => -1.0,
    }
}

fn sweep_line(r: &SweepRow) -> [f64; 7] {
    [
        angular_to_mhz(r.delta_c),
        order_code(r.order),
        angular_to_mhz(r.rabi),
        angular_to_mhz(r.bandwidth),
        angular_to_mhz(r.carrier_offset),
        r.eta,
        r.eta_high_rabi,
    ]
}

/// Runs the sweep row by row, appending each finished row to
/// `<stem>.partial.csv` so an interrupted sweep keeps its results. The final
/// table, in input order, replaces the partial file.
fn streamed_sweep(s: &Scenario, ctx: &Context, stem: &str) -> Result<SweepResult> {
    let base = s.to_setup()?;
    let detunings = s.sweep_detunings();
    let orders = &s.sweep.orders;
    // validates the request before any work is done
    if detunings.is_empty() || orders.is_empty() {
        return Err(GemError::Config("sweep needs at least one detuning and one order".into()));
    }
    let partial_path = ctx.path(&format!("{stem}.partial.csv"));
    let mut partial = BufWriter::new(File::create(&partial_path)?);
    partial.write_all(ctx.provenance.header(&SWEEP_COLUMNS).as_bytes())?;
    partial.flush()?;
    let partial = Mutex::new(partial);
    let jobs: Vec<(f64, GradientOrder)> = detunings
        .iter()
        .flat_map(|&d| orders.iter().map(move |&o| (d, o)))
        .collect();
    let mut seen: Vec<(u64, GradientOrder)> = jobs.iter().map(|&(d, o)| (d.to_bits(), o)).collect();
    seen.sort();
    seen.dedup();
    if seen.len() != jobs.len() {
        return Err(GemError::Config("sweep rows must be unique in (detuning, order)".into()));
    }
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(d, o)| -> Result<SweepRow> {
            let mut one = optimizer::sweep_detuning(&base, &[d], &[o], &s.optimization)?;
            let row = one.rows.remove(0);
            let mut f = partial.lock().unwrap();
            writeln!(f, "{}", output::format_row(&sweep_line(&row)))?;
            f.flush()?;
            log::info!("{}: delta_c = {:.1} MHz, order = {}, eta = {:.4}", stem, angular_to_mhz(d), o, row.eta);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let result = SweepResult {
        optical_depth: base.params.optical_depth,
        rows,
    };
    if s.outputs.sweep_table {
        ctx.table(&format!("{stem}.csv"), &SWEEP_COLUMNS, result.rows.iter().map(sweep_line))?;
    }
    drop(partial);
    fs::remove_file(&partial_path)?;
    for r in &result.rows {
        if let Some(e) = &r.error {
            log::warn!("row {:.1} MHz {} failed: {e}", angular_to_mhz(r.delta_c), r.order);
        }
    }
    if result.rows.iter().all(|r| r.error.is_some()) {
        return Err(GemError::AllEvaluationsFailed);
    }
    Ok(result)
}

fn row_json(r: &SweepRow) -> serde_json::Value {
    json!({
        "delta_c_mhz": angular_to_mhz(r.delta_c),
        "order": r.order,
        "write_sign": r.write_sign(),
        "eta": r.eta,
        "eta_high_rabi": r.eta_high_rabi,
        "seed_eta": r.seed_eta,
        "warnings": r.warnings,
        "error": r.error,
    })
}

fn curve_summary(result: &SweepResult) -> Vec<serde_json::Value> {
    GradientOrder::BOTH
        .iter()
        .filter_map(|&o| {
            result.best(o).map(|b| {
                json!({
                    "optical_depth": result.optical_depth,
                    "order": o,
                    "max_eta": b.eta,
                    "argmax_delta_c_mhz": angular_to_mhz(b.delta_c),
                })
            })
        })
        .collect()
}

fn cmd_sweep(s: &Scenario, ctx: &Context) -> Result<()> {
    let result = streamed_sweep(s, ctx, "sweep")?;
    if s.outputs.summary {
        ctx.json(
            "sweep.json",
            json!({
                "scenario": s.name,
                "optical_depth": result.optical_depth,
                "curves": curve_summary(&result),
                "rows": result.rows.iter().map(row_json).collect::<Vec<_>>(),
            }),
        )?;
    }
    for c in curve_summary(&result) {
        println!("{c}");
    }
    Ok(())
}

fn cmd_fig2b(s: &Scenario, ctx: &Context, with_d1000: bool) -> Result<()> {
    let mut runs = vec![s.clone()];
    if with_d1000 {
        let mut big = s.clone();
        big.params.optical_depth = 1000.0;
        big.sweep.detunings_mhz = (10..=24).map(|k| 25.0 * k as f64).collect();
        runs.push(big);
    }
    let mut curves = Vec::new();
    let mut rows = Vec::new();
    for run in &runs {
        let stem = format!("fig2b_d{}", run.params.optical_depth);
        let result = streamed_sweep(run, ctx, &stem)?;
        curves.extend(curve_summary(&result));
        rows.extend(result.rows.iter().map(|r| {
            let mut v = row_json(r);
            v["optical_depth"] = json!(result.optical_depth);
            v
        }));
    }
    ctx.json("fig2b_summary.json", json!({ "curves": curves, "rows": rows }))?;
    for c in &curves {
        println!("{c}");
    }
    Ok(())
}

fn cmd_band(s: &Scenario, ctx: &Context) -> Result<()> {
    if s.params.gamma_s_mhz <= 0.0 {
        log::warn!("experiment band without spinwave dephasing: both bands coincide");
    }
    let base = s.to_setup()?;
    let band = optimizer::experiment_band(&base, &s.sweep_detunings(), &s.optimization)?;
    ctx.table(
        "band.csv",
        &[
            "delta_c_mhz",
            "order",
            "write_sign",
            "rabi_mhz",
            "carrier_offset_mhz",
            "eta",
            "eta_high_rabi",
            "eta_lossless",
            "eta_high_rabi_lossless",
        ],
        band.iter().map(|b| {
            let r = &b.row;
            [
                angular_to_mhz(r.delta_c),
                order_code(r.order),
                r.write_sign().value(),
                angular_to_mhz(r.rabi),
                angular_to_mhz(r.carrier_offset),
                r.eta,
                r.eta_high_rabi,
                b.eta_lossless,
                b.eta_high_rabi_lossless,
            ]
        }),
    )?;
    if band.iter().all(|b| b.row.error.is_some()) {
        return Err(GemError::AllEvaluationsFailed);
    }
    if s.outputs.summary {
        ctx.json(
            "band.json",
            json!({
                "scenario": s.name,
                "rows": band.iter().map(|b| {
                    let mut v = row_json(&b.row);
                    v["eta_lossless"] = json!(b.eta_lossless);
                    v["eta_high_rabi_lossless"] = json!(b.eta_high_rabi_lossless);
                    v
                }).collect::<Vec<_>>(),
            }),
        )?;
    }
    println!("{} band rows written to {}", band.len(), ctx.path("band.csv").display());
    Ok(())
}
