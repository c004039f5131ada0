//! Closed-form absorption analytics for the three-level Λ system.
//!
//! `alpha` is the steady-state absorption exponent (transmission is
//! `exp(-alpha)` over the whole ensemble). It carries an overall factor Γ so
//! that the resonant, control-free value is exactly `d` and the far-detuned
//! Raman line has height `d`.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};
use crate::params::PhysicalParams;
use crate::quadrature::integrate_with_breaks;
use crate::GradientOrder;

const QUAD_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionPoint {
    pub delta_s: f64,
    pub alpha: f64,
}

/// One row of a spectrum scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub delta_s: f64,
    pub alpha: f64,
    pub alpha_lorentzian: f64,
    pub alpha_prime: f64,
}

fn require_detuned(params: &PhysicalParams) -> Result<()> {
    if params.delta_c == 0.0 {
        return Err(GemError::param("delta_c", "must be non-zero"));
    }
    Ok(())
}

/// Absorption exponent at signal detuning `delta_s` (rad/μs).
pub fn alpha(params: &PhysicalParams, delta_s: f64) -> Result<f64> {
    let PhysicalParams {
        optical_depth: d,
        gamma_e: g_e,
        gamma_s: g_s,
        delta_c,
        rabi,
        ..
    } = *params;
    let delta = delta_s - delta_c;
    let om2 = rabi * rabi;
    let num = 8.0 * delta * delta * g_e + 2.0 * g_s * (om2 + g_s * g_e);
    let den = (Complex64::new(om2, 0.0)
        + Complex64::new(g_e, 2.0 * (delta_c + delta)) * Complex64::new(g_s, 2.0 * delta))
    .norm_sqr();
    if den == 0.0 {
        return Err(GemError::SingularSpectrum { delta_s });
    }
    Ok(g_e * 0.5 * d * num / den)
}

pub fn absorption_point(params: &PhysicalParams, delta_s: f64) -> Result<AbsorptionPoint> {
    Ok(AbsorptionPoint {
        delta_s,
        alpha: alpha(params, delta_s)?,
    })
}

/// Two-photon detuning of the Raman line center, i.e. the AC-Stark-shifted
/// minimum of `|Ω² + (Γ + 2i(Δ_C + δ))(2iδ)|`. Close to `Ω²/(4Δ_C)`.
pub fn raman_line_center(params: &PhysicalParams) -> Result<f64> {
    require_detuned(params)?;
    // solved for |Δ_C| and mirrored, so opposite detunings give exactly
    // opposite centers
    let (g, dc, om) = (params.gamma_e, params.delta_c.abs(), params.rabi);
    if om == 0.0 {
        return Ok(0.0);
    }
    let modulus = |x: f64| {
        (Complex64::new(om * om, 0.0) + Complex64::new(g, 2.0 * (dc + x)) * Complex64::new(0.0, 2.0 * x))
            .norm_sqr()
    };
    // root of the real part nearest zero; the modulus minimum sits within a
    // relative Γ/Δ_C of it
    let root = 0.5 * (-dc + (dc * dc + om * om).sqrt());
    Ok(params.delta_c.signum() * golden_min(modulus, 0.5 * root, 1.5 * root, 200))
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, max_iter: usize) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..max_iter {
        if (b - a).abs() <= 4.0 * f64::EPSILON * (a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Full width at half maximum of the far-detuned Raman line, `ΓΩ²/(4Δ_C²)`,
/// in the convention where Ω is the full Rabi frequency of the absorption formula.
pub fn raman_fwhm(params: &PhysicalParams) -> Result<f64> {
    require_detuned(params)?;
    Ok(params.gamma_e * params.rabi * params.rabi / (4.0 * params.delta_c * params.delta_c))
}

/// Far-detuned limit of the Raman line: a symmetric Lorentzian of height `d`
/// and width [`raman_fwhm`] centred on [`raman_line_center`].
pub fn alpha_far_lorentzian(params: &PhysicalParams, delta_s: f64) -> Result<f64> {
    let center = raman_line_center(params)?;
    far_lorentzian_at(params, center, raman_fwhm(params)?, delta_s - params.delta_c)
}

fn far_lorentzian_at(params: &PhysicalParams, center: f64, fwhm: f64, delta: f64) -> Result<f64> {
    if fwhm == 0.0 {
        return Ok(0.0);
    }
    let x = (delta - center) / (0.5 * fwhm);
    Ok(params.optical_depth / (1.0 + x * x))
}

/// Near-detuned spectrum minus its far-detuned Lorentzian: negative in the
/// EIT window, positive on the EIA wing.
pub fn alpha_prime(params: &PhysicalParams, delta_s: f64) -> Result<f64> {
    Ok(alpha(params, delta_s)? - alpha_far_lorentzian(params, delta_s)?)
}

/// Samples `alpha`, its Lorentzian limit and `alpha_prime` on `n` evenly
/// spaced signal detunings.
pub fn scan(params: &PhysicalParams, from: f64, to: f64, n: usize) -> Result<Vec<SpectrumRow>> {
    let lorentz = if params.delta_c != 0.0 {
        Some((raman_line_center(params)?, raman_fwhm(params)?))
    } else {
        None
    };
    (0..n)
        .map(|i| {
            let delta_s = if n == 1 {
                from
            } else {
                from + (to - from) * i as f64 / (n - 1) as f64
            };
            let a = alpha(params, delta_s)?;
            let l = match lorentz {
                Some((c, w)) => far_lorentzian_at(params, c, w, delta_s - params.delta_c)?,
                None => 0.0,
            };
            Ok(SpectrumRow {
                delta_s,
                alpha: a,
                alpha_lorentzian: l,
                alpha_prime: a - l,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub l_leakage: f64,
    pub l_scatter: f64,
    pub product_efficiency: f64,
}

impl LossBudget {
    pub fn new(params: &PhysicalParams) -> Result<Self> {
        let l_leakage = leakage_loss(params)?;
        let l_scatter = scatter_loss(params)?;
        Ok(LossBudget {
            l_leakage,
            l_scatter,
            product_efficiency: (1.0 - l_leakage) * (1.0 - l_scatter),
        })
    }
}

/// πΓΩ²/(BW Δ_C²), the exponent shared by the leakage and scatter formulas.
pub fn raman_exponent(params: &PhysicalParams) -> Result<f64> {
    require_detuned(params)?;
    Ok(PI * params.gamma_e * params.rabi * params.rabi
        / (params.bandwidth * params.delta_c * params.delta_c))
}

/// Fraction of the signal transmitted unabsorbed while writing.
pub fn leakage_loss(params: &PhysicalParams) -> Result<f64> {
    Ok((-raman_exponent(params)? * params.optical_depth).exp())
}

/// Fraction of the stored excitation scattered by the control field.
pub fn scatter_loss(params: &PhysicalParams) -> Result<f64> {
    Ok(1.0 - (-raman_exponent(params)?).exp())
}

fn check_optimal_inputs(d: f64, gamma_e: f64, bandwidth: f64, delta_c: f64) -> Result<()> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(GemError::param("optical_depth", "must be > 0"));
    }
    if !(gamma_e > 0.0 && gamma_e.is_finite()) {
        return Err(GemError::param("gamma_e", "must be > 0"));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(GemError::param("bandwidth", "must be > 0"));
    }
    if delta_c == 0.0 || !delta_c.is_finite() {
        return Err(GemError::param("delta_c", "must be finite and non-zero"));
    }
    Ok(())
}

/// Rabi frequency for which πΓΩ²/(BW Δ_C²) = ln2 / d.
///
/// Note that this balance point puts the leakage at exactly 1/2; see
/// [`omega_for_optimal_numeric`] for the true maximiser of the loss product.
pub fn omega_for_optimal(d: f64, gamma_e: f64, bandwidth: f64, delta_c: f64) -> Result<f64> {
    check_optimal_inputs(d, gamma_e, bandwidth, delta_c)?;
    Ok(delta_c.abs() * (bandwidth * LN_2 / (PI * gamma_e * d)).sqrt())
}

/// Rabi frequency maximising (1 - L_leakage)(1 - L_scatter), which sits at
/// πΓΩ²/(BW Δ_C²) = ln(d + 1) / d.
pub fn omega_for_optimal_numeric(d: f64, gamma_e: f64, bandwidth: f64, delta_c: f64) -> Result<f64> {
    check_optimal_inputs(d, gamma_e, bandwidth, delta_c)?;
    Ok(delta_c.abs() * (bandwidth * d.ln_1p() / (PI * gamma_e * d)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// Positive exponents raise the efficiency (EIT side).
    #[default]
    EitPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientOrderEffect {
    /// The approximate closed form, evaluated as written.
    pub g_closed: Option<f64>,
    /// Quadrature of `-2 alpha'` over half the bandwidth, normalised by the
    /// bandwidth, with the ± of the chosen half applied.
    pub g_numeric: Option<f64>,
    pub sign_convention: SignConvention,
}

impl GradientOrderEffect {
    /// EIT boost implied by the closed form. The formula comes out negative
    /// over the useful detuning range, so the boost is its negation.
    pub fn eit_boost(&self) -> Option<f64> {
        self.g_closed.map(|g| -g)
    }

    /// Efficiency exponent for `order`: `+boost` for EIT, `-boost` for EIA.
    pub fn exponent(&self, order: GradientOrder) -> Option<f64> {
        self.eit_boost().map(|b| match order {
            GradientOrder::Eit => b,
            GradientOrder::Eia => -b,
        })
    }
}

/// Closed-form approximation of the gradient-order effect, valid for
/// `d, Δ_Γ ≫ 1`. Only `|Δ_Γ|` enters.
pub fn gradient_order_effect_closed(d: f64, delta_gamma: f64) -> Result<GradientOrderEffect> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(GemError::param("optical_depth", "must be > 0"));
    }
    if delta_gamma == 0.0 || !delta_gamma.is_finite() {
        return Err(GemError::param("delta_gamma", "must be finite and non-zero"));
    }
    if d <= 1.0 || delta_gamma.abs() <= 1.0 {
        log::warn!("closed-form G used outside d, delta_gamma >> 1 (d = {d}, delta_gamma = {delta_gamma})");
    }
    let dg = delta_gamma.abs();
    let ln4 = 4f64.ln();
    let g = d / (2.0 * PI * dg * dg)
        + ln4 * (1.0 + (2.0 / (PI * dg)) * ((ln4 / d).ln() - dg * (2.0 * dg).atan()));
    Ok(GradientOrderEffect {
        g_closed: Some(g),
        g_numeric: None,
        sign_convention: SignConvention::EitPositive,
    })
}

/// Detuning interval (relative to Δ_C) of the half bandwidth on the given
/// side of the Raman line. The EIT window lies between the Raman line and the
/// one-photon resonance, i.e. below the line for Δ_C > 0.
pub fn half_band(params: &PhysicalParams, order: GradientOrder) -> Result<(f64, f64)> {
    let center = raman_line_center(params)?;
    let half = 0.5 * params.bandwidth;
    let eit_below = params.delta_c > 0.0;
    let below = match order {
        GradientOrder::Eit => eit_below,
        GradientOrder::Eia => !eit_below,
    };
    Ok(if below {
        (center - half, center)
    } else {
        (center, center + half)
    })
}

/// Integrates `-2 alpha'` over the half bandwidth traversed by the signal
/// for `order`, divided by the bandwidth so the result is an absorption
/// exponent. The EIA half carries the opposite sign.
pub fn gradient_order_effect_numeric(
    params: &PhysicalParams,
    order: GradientOrder,
) -> Result<GradientOrderEffect> {
    require_detuned(params)?;
    if params.bandwidth <= 0.0 {
        return Err(GemError::param("bandwidth", "must be > 0"));
    }
    let center = raman_line_center(params)?;
    let fwhm = raman_fwhm(params)?;
    let (lo, hi) = half_band(params, order)?;
    let mut breaks = vec![lo, hi];
    // the transparency point and the line center are the sharp features
    for x in [0.0, center] {
        if x > lo && x < hi {
            breaks.push(x);
        }
    }
    breaks.sort_by(f64::total_cmp);

    let dc = params.delta_c;
    let integrand = |delta: f64| {
        let a = alpha(params, delta + dc).unwrap_or(0.0);
        let l = far_lorentzian_at(params, center, fwhm, delta).unwrap_or(0.0);
        -2.0 * (a - l)
    };
    let scale = params.optical_depth.max(1.0) * params.bandwidth;
    let q = integrate_with_breaks(integrand, &breaks, 1e-14 * scale, QUAD_REL_TOL)?;
    let sign = match order {
        GradientOrder::Eit => 1.0,
        GradientOrder::Eia => -1.0,
    };
    Ok(GradientOrderEffect {
        g_closed: None,
        g_numeric: Some(sign * q.value / params.bandwidth),
        sign_convention: SignConvention::EitPositive,
    })
}

/// Near-detuned efficiency predicted from a far-detuned one, `exp(g) η_F`.
/// Values above one are clamped with a warning.
pub fn predicted_near_efficiency(eta_far: f64, g: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&eta_far), "eta_far must lie in [0, 1]");
    let eta = g.exp() * eta_far;
    if eta > 1.0 {
        log::warn!("predicted efficiency {eta} exceeds 1, clamping");
        1.0
    } else {
        eta
    }
}
