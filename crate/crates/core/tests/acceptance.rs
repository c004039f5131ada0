//! Acceptance checks, one report line per criterion. Runs without the libtest
//! harness so the report is printed by a plain `cargo test`.
//!
//! Set `GEM_ACCEPT_D1000=1` to include the slow d = 1000 sweep.

use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use gem_core::mbsolver::{excited_population_map, recall_timing_compare, run_gem_with, Decimation, RunOptions};
use gem_core::optimizer::{experiment_band, optimize, sweep_detuning, FreeParam, OptimizationSpec, SweepResult};
use gem_core::params::{angular_to_mhz, mhz_to_angular};
use gem_core::schedule::ProtocolTiming;
use gem_core::setup::{default_pulse, stark_offset, GridPolicy, RunSetup};
use gem_core::spectrum::{
    alpha, gradient_order_effect_closed, gradient_order_effect_numeric, omega_for_optimal, predicted_near_efficiency,
    raman_line_center,
};
use gem_core::config::Scenario;
use gem_core::{make_params, GradientOrder, PhysicalParams};

const GAMMA_MHZ: f64 = 5.75;

struct Report {
    failed: Vec<&'static str>,
}

impl Report {
    fn line(&mut self, id: &'static str, pass: bool, text: String, started: Instant) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} {id:<4} {text} [{:.1} s]", started.elapsed().as_secs_f64());
        if !pass {
            self.failed.push(id);
        }
    }

    fn note(&self, text: String) {
        println!("       {text}");
    }
}

/// Efficient-order-friendly desk setup: d = 400, 5 μs pulse, no hold.
fn desk_setup(d: f64, delta_c_mhz: f64, order: GradientOrder) -> RunSetup {
    let p = make_params(d, GAMMA_MHZ, 0.0, delta_c_mhz, 1.0, 0.3).unwrap();
    let pulse = default_pulse(5.0, 0.0).unwrap();
    let timing = ProtocolTiming::for_pulse(&pulse, 1.0, 0.0).unwrap();
    RunSetup::new(p, pulse, order)
        .unwrap()
        .with_timing(timing)
        .with_grid_policy(GridPolicy::DESK)
}

fn c1_transparency(r: &mut Report) {
    let t = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x6e6d);
    let n = 20_000;
    let mut worst = 0.0f64;
    for _ in 0..n {
        let d = rng.gen_range(1.0..=2000.0);
        let dg = rng.gen_range(1.0..=200.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let g = mhz_to_angular(GAMMA_MHZ);
        let omega = g * 10f64.powf(rng.gen_range(-2.0..2.0));
        let p = PhysicalParams::new(d, g, 0.0, dg * g, omega, 1.0).unwrap();
        worst = worst.max(alpha(&p, p.delta_c).unwrap().abs());
    }
    r.line(
        "C1",
        worst <= 1e-12,
        format!("exact EIT transparency: max |alpha(delta=0)| = {worst:.1e} over {n} random draws (tol 1e-12)"),
        t,
    );
}

/// Half-maximum crossing of the Raman line by bisection, moving away from
/// the center in direction `dir`.
fn half_max_crossing(p: &PhysicalParams, center: f64, peak: f64, dir: f64) -> f64 {
    let f = |x: f64| alpha(p, p.delta_c + x).unwrap() - 0.5 * peak;
    let mut step = 1e-6 * p.delta_c.abs();
    while f(center + dir * step) > 0.0 {
        step *= 2.0;
    }
    let (mut a, mut b) = (center + dir * 0.5 * step, center + dir * step);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m) > 0.0 {
            a = m
        } else {
            b = m
        }
    }
    0.5 * (a + b)
}

fn c2_far_lorentzian(r: &mut Report) {
    let t = Instant::now();
    let d = 400.0;
    let p = make_params(d, GAMMA_MHZ, 0.0, 200.0 * GAMMA_MHZ, 50.0, 0.3).unwrap();
    let center = raman_line_center(&p).unwrap();
    let peak = alpha(&p, p.delta_c + center).unwrap();
    let width = half_max_crossing(&p, center, peak, 1.0) - half_max_crossing(&p, center, peak, -1.0);
    let stated = p.gamma_e * p.rabi * p.rabi / (p.delta_c * p.delta_c);
    let height_err = (peak - d).abs() / d;
    let width_err = (width - stated).abs() / stated;
    r.line(
        "C2",
        height_err < 0.02 && width_err < 0.05,
        format!(
            "far-detuned Raman line at Delta_C/Gamma = 200: height {peak:.3} (err {:.2}%, tol 2%), \
             FWHM {width:.4e} vs Gamma*Omega^2/Delta_C^2 = {stated:.4e} (err {:.1}%, tol 5%)",
            100.0 * height_err,
            100.0 * width_err
        ),
        t,
    );
    r.note(format!(
        "measured FWHM / (Gamma*Omega^2/(4 Delta_C^2)) = {:.5}",
        width / (0.25 * stated)
    ));
}

fn c3_gradient_order_effect(r: &mut Report) {
    let t = Instant::now();
    let g = gradient_order_effect_closed(400.0, 30.43).unwrap().g_closed.unwrap();
    let headline = (g.abs() - 0.08).abs() <= 0.01;
    let bw = mhz_to_angular(0.3);
    let gamma = mhz_to_angular(GAMMA_MHZ);
    let mut worst = (0.0f64, 0.0, 0.0);
    let mut agree = 0;
    let mut total = 0;
    let mut cells = Vec::new();
    for d in [200.0, 400.0, 800.0] {
        for dg in [20.0, 30.0, 60.0] {
            let closed = gradient_order_effect_closed(d, dg).unwrap().g_closed.unwrap();
            let dc = dg * gamma;
            let omega = omega_for_optimal(d, gamma, bw, dc).unwrap();
            let p = PhysicalParams::new(d, gamma, 0.0, dc, omega, bw).unwrap();
            let numeric = gradient_order_effect_numeric(&p, GradientOrder::Eit).unwrap().g_numeric.unwrap();
            let rel = ((numeric - closed) / closed).abs();
            total += 1;
            if rel <= 0.25 {
                agree += 1;
            }
            if rel > worst.0 {
                worst = (rel, d, dg);
            }
            cells.push(format!("({d},{dg}): {closed:+.4}/{numeric:+.4}"));
        }
    }
    r.line(
        "C3",
        headline && agree == total,
        format!(
            "|G| at d=400, Delta_C/Gamma=30.43 is {:.4} (0.08 +- 0.01: {}); quadrature within 25% of the closed form \
             in {agree}/{total} cells, worst {:.0}% at d={}, Delta_C/Gamma={}",
            g.abs(),
            if headline { "ok" } else { "out" },
            100.0 * worst.0,
            worst.1,
            worst.2
        ),
        t,
    );
    r.note(format!("closed/numeric: {}", cells.join(", ")));
}

fn c4_boost(r: &mut Report) {
    let t = Instant::now();
    let eta = predicted_near_efficiency(0.83, 0.08);
    r.line(
        "C4",
        (eta - 0.90).abs() <= 0.01,
        format!("exp(G)*0.83 with G = 0.08 gives {eta:.4} (0.90 +- 0.01)"),
        t,
    );
}

fn fig2b_sweep(d: f64, detunings_mhz: &[f64]) -> SweepResult {
    let base = desk_setup(d, detunings_mhz[0], GradientOrder::Eit);
    let dets: Vec<f64> = detunings_mhz.iter().map(|&f| mhz_to_angular(f)).collect();
    sweep_detuning(&base, &dets, &GradientOrder::BOTH, &OptimizationSpec::default()).unwrap()
}

fn curve(s: &SweepResult, order: GradientOrder) -> Vec<(f64, f64)> {
    s.rows_for(order).map(|r| (angular_to_mhz(r.delta_c), r.eta)).collect()
}

fn c5_c6_fig2b(r: &mut Report) {
    let t = Instant::now();
    let dets: Vec<f64> = (3..=20).map(|k| 25.0 * k as f64).collect();
    let sweep = fig2b_sweep(400.0, &dets);
    let failed = sweep.rows.iter().filter(|r| r.error.is_some()).count();
    let eit = curve(&sweep, GradientOrder::Eit);
    let eia = curve(&sweep, GradientOrder::Eia);
    let best = sweep.best(GradientOrder::Eit).unwrap();
    let (peak_f, peak) = (angular_to_mhz(best.delta_c), best.eta);
    let below = eit.iter().zip(&eia).all(|(a, b)| b.1 < a.1);
    let monotone = eia.windows(2).all(|w| w[1].1 > w[0].1);
    let pass = failed == 0 && (peak - 0.914).abs() <= 0.02 && (peak_f - 175.0).abs() <= 25.0 && below && monotone;
    r.line(
        "C5",
        pass,
        format!(
            "d=400 sweep 75..500 MHz: efficient-order max eta {peak:.4} (0.914 +- 0.02) at {peak_f:.0} MHz \
             (175 +- 25); lossy below everywhere: {below}; lossy monotone: {monotone}; failed rows: {failed}"
        ),
        t,
    );
    r.note(format!(
        "eit: {}",
        eit.iter().map(|(f, e)| format!("{f:.0}:{e:.4}")).collect::<Vec<_>>().join(" ")
    ));
    r.note(format!(
        "eia: {}",
        eia.iter().map(|(f, e)| format!("{f:.0}:{e:.4}")).collect::<Vec<_>>().join(" ")
    ));
    let below_seed: Vec<String> = sweep
        .rows
        .iter()
        .filter(|r| r.seed_eta.map_or(false, |s| r.eta < s))
        .map(|r| format!("{:.0} {}", angular_to_mhz(r.delta_c), r.order))
        .collect();
    r.note(format!(
        "rows below their analytic seed: {}",
        if below_seed.is_empty() { "none".to_string() } else { below_seed.join(", ") }
    ));

    let t = Instant::now();
    let gap = |f: f64| {
        let a = eit.iter().find(|x| (x.0 - f).abs() < 1e-6).map(|x| x.1);
        let b = eia.iter().find(|x| (x.0 - f).abs() < 1e-6).map(|x| x.1);
        a.zip(b).map(|(a, b)| a - b)
    };
    let last = *dets.last().unwrap();
    let g_peak = gap(peak_f).unwrap();
    let g_last = gap(last).unwrap();
    let ratio = g_last / g_peak;
    r.line(
        "C6",
        last >= 2.0 * peak_f && ratio < 0.4,
        format!(
            "order gap at {last:.0} MHz is {g_last:.4}, {:.0}% of the gap {g_peak:.4} at the {peak_f:.0} MHz peak (tol < 40%)",
            100.0 * ratio
        ),
        t,
    );
    if let Some(g2) = gap(2.0 * peak_f) {
        r.note(format!(
            "gap at 2x argmax ({:.0} MHz): {g2:.4}, ratio {:.2}",
            2.0 * peak_f,
            g2 / g_peak
        ));
    }
}

fn c5_d1000(r: &mut Report) {
    if std::env::var("GEM_ACCEPT_D1000").map_or(true, |v| v != "1") {
        println!("SKIP C5b  d=1000 sweep (set GEM_ACCEPT_D1000=1)");
        return;
    }
    let t = Instant::now();
    let dets: Vec<f64> = (12..=18).map(|k| 25.0 * k as f64).collect();
    let sweep = fig2b_sweep(1000.0, &dets);
    let best = sweep.best(GradientOrder::Eit).unwrap();
    let (f, eta) = (angular_to_mhz(best.delta_c), best.eta);
    r.line(
        "C5b",
        (eta - 0.945).abs() <= 0.02 && (f - 375.0).abs() <= 25.0,
        format!("d=1000: efficient-order max eta {eta:.4} (0.945 +- 0.02) at {f:.0} MHz (375 +- 25)"),
        t,
    );
}

fn c7_c8_timing_and_exposure(r: &mut Report) {
    let t = Instant::now();
    let delta_c_mhz = -180.0;
    let tuned = optimize(&desk_setup(400.0, delta_c_mhz, GradientOrder::Eit), &OptimizationSpec::default()).unwrap();
    let params = tuned.params;
    let run = |order: GradientOrder, offset: f64| {
        let s = desk_setup(400.0, delta_c_mhz, order)
            .with_params(params)
            .with_carrier_offset(offset)
            .with_grid_policy(GridPolicy::default());
        let grid = s.grid().unwrap();
        s.with_options(RunOptions {
            snapshots: Some(Decimation::target(&grid, 64, 400)),
            ..RunOptions::default()
        })
        .run()
        .unwrap()
    };
    let stark = stark_offset(&params);
    let eit = run(GradientOrder::Eit, stark);
    let eia = run(GradientOrder::Eia, stark);
    let shift = recall_timing_compare(&eit, &eia).unwrap();
    r.line(
        "C7",
        shift < 0.0,
        format!(
            "d=400, Delta_C=-180 MHz, efficient-order Omega*={:.2} MHz, BW*={:.3} MHz, carrier on the Stark-shifted \
             center: lossy recall peak minus efficient = {shift:+.4} us (must be < 0)",
            angular_to_mhz(params.rabi),
            angular_to_mhz(params.bandwidth)
        ),
        t,
    );
    let eit_o = run(GradientOrder::Eit, tuned.carrier_offset);
    let eia_o = run(GradientOrder::Eia, tuned.carrier_offset);
    r.note(format!(
        "with the optimised carrier offset {:+.4} MHz instead: shift {:+.4} us (eta {:.4} / {:.4})",
        angular_to_mhz(tuned.carrier_offset),
        recall_timing_compare(&eit_o, &eia_o).unwrap(),
        eit_o.eta,
        eia_o.eta
    ));

    let t = Instant::now();
    let pe = excited_population_map(&eit).unwrap().integrated;
    let pl = excited_population_map(&eia).unwrap().integrated;
    r.line(
        "C8",
        pe < pl,
        format!(
            "time-integrated |P|^2 at matched parameters: efficient {pe:.4e} < lossy {pl:.4e} (eta {:.4} vs {:.4})",
            eit.eta, eia.eta
        ),
        t,
    );
    r.note(format!(
        "full-resolution exposure {:.4e} vs {:.4e}; optimised-offset variant {:.4e} vs {:.4e}",
        eit.excited_exposure, eia.excited_exposure, eit_o.excited_exposure, eia_o.excited_exposure
    ));
}

fn c9_properties(r: &mut Report) {
    let t = Instant::now();
    let setup = Scenario::reference().to_setup().unwrap();
    let base = setup.run().unwrap();

    let schedule = setup.schedule().unwrap();
    let fine = setup.grid().unwrap().refined(2);
    let refined = run_gem_with(&setup.params, &setup.pulse, &schedule, &fine, &setup.options).unwrap();
    let conv = (refined.eta - base.eta).abs();

    let mut scaled = setup.clone();
    scaled.pulse.amplitude = 3.7;
    scaled.pulse.phase = 1.1;
    let lin = (scaled.run().unwrap().eta - base.eta).abs() / base.eta;

    let mirror = (setup.mirrored().run().unwrap().eta - base.eta).abs();

    let lossless = setup
        .clone()
        .with_options(RunOptions {
            decay_free: true,
            ..RunOptions::default()
        })
        .run()
        .unwrap();
    let balance = lossless.balance_residual(setup.params.gamma_e);

    let pass = conv < 1e-3 && lin < 1e-10 && mirror < 1e-6 && balance < 1e-3;
    r.line(
        "C9",
        pass,
        format!(
            "properties at d=400, 175 MHz (eta {:.5}): grid doubling shift {conv:.1e} (< 1e-3), input scaling \
             {lin:.1e} (< 1e-10), mirror image {mirror:.1e} (< 1e-6), decay-free balance {balance:.1e} (< 1e-3)",
            base.eta
        ),
        t,
    );
    let no_hold = setup
        .clone()
        .with_timing(ProtocolTiming::for_pulse(&setup.pulse, 1.0, 0.0).unwrap())
        .run()
        .unwrap();
    r.note(format!(
        "hold 10 us vs no hold without dephasing: eta {:.6} vs {:.6}",
        base.eta, no_hold.eta
    ));
}

fn c10_band(r: &mut Report) {
    let t = Instant::now();
    let p = make_params(400.0, GAMMA_MHZ, 0.002, 180.0, 1.0, 0.3).unwrap();
    let pulse = default_pulse(5.0, 0.0).unwrap();
    let setup = RunSetup::new(p, pulse, GradientOrder::Eit)
        .unwrap()
        .with_timing(ProtocolTiming::with_storage_time(&pulse, 1.0, 13.0).unwrap())
        .with_grid_policy(GridPolicy::DESK);
    let mut spec = OptimizationSpec::only(&[FreeParam::Rabi, FreeParam::CarrierOffset]);
    spec.coarse.bandwidth = 1;
    let dets = [mhz_to_angular(180.0), mhz_to_angular(260.0)];
    let band = experiment_band(&setup, &dets, &spec).unwrap();
    let failed = band.iter().filter(|b| b.row.error.is_some()).count();
    let high_ok = band.iter().all(|b| b.row.eta_high_rabi <= b.row.eta);
    let lossless_ok = band
        .iter()
        .all(|b| b.row.eta < b.eta_lossless && b.row.eta_high_rabi < b.eta_high_rabi_lossless);
    r.line(
        "C10",
        failed == 0 && high_ok && lossless_ok,
        format!(
            "experiment band, {} rows over +-180, +-260 MHz, both orders, 13 us storage: eta(1.2 Omega*) <= eta*: \
             {high_ok}; dephased band below the dephasing-free band: {lossless_ok}; failed rows: {failed}",
            band.len()
        ),
        t,
    );
    let mut worst: f64 = 0.0;
    for b in &band {
        if let Some(m) = band
            .iter()
            .find(|o| o.row.order == b.row.order && o.row.delta_c == -b.row.delta_c)
        {
            worst = worst.max((m.row.eta - b.row.eta).abs());
        }
        r.note(format!(
            "{:+.0} MHz {} (write {:?}): eta {:.4}, 1.2 Omega {:.4}, no dephasing {:.4} / {:.4}",
            angular_to_mhz(b.row.delta_c),
            b.row.order,
            b.row.write_sign(),
            b.row.eta,
            b.row.eta_high_rabi,
            b.eta_lossless,
            b.eta_high_rabi_lossless
        ));
    }
    r.note(format!("largest efficiency difference between mirror-image rows: {worst:.1e}"));
}

fn main() {
    let mut r = Report { failed: Vec::new() };
    c1_transparency(&mut r);
    c2_far_lorentzian(&mut r);
    c3_gradient_order_effect(&mut r);
    c4_boost(&mut r);
    c9_properties(&mut r);
    c7_c8_timing_and_exposure(&mut r);
    c10_band(&mut r);
    c5_c6_fig2b(&mut r);
    c5_d1000(&mut r);
    if r.failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria: {}", r.failed.join(", "));
        std::process::exit(1);
    }
}
