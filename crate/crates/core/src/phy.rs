//! Closed-form physical-layer formulas: transponder power consumption,
//! OSNR, OSNR threshold fit and the cyclic-prefix-limited information
//! rate, plus the derived noise and nonlinearity coefficients.

use crate::constants::PhysicalConstants;
use crate::error::SolveError;
use crate::net::RoutingSolution;
use serde::{Deserialize, Serialize};

/// How the spatial modes of the fiber couple, which sets how group-delay
/// spread grows with the number of traversed spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingModel {
    /// Broadening grows with the square root of the span count.
    Strong,
    /// Broadening grows linearly with the span count.
    Weak,
}

impl CouplingModel {
    /// Span-count scaling of the mode-coupling broadening term.
    pub fn span_scaling(self, span_n: f64) -> f64 {
        match self {
            CouplingModel::Strong => span_n.sqrt(),
            CouplingModel::Weak => span_n,
        }
    }
}

/// Per-request transponder decision vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransponderConfig {
    /// Modulation level, bits/symbol.
    pub c: f64,
    /// log₂ of the OFDM subcarrier count.
    pub b: u32,
    /// Coding rate in (0, 1].
    pub r: f64,
    /// Total transmit optical power, W. Each active mode of each
    /// polarization is injected with `p / m`.
    pub p: f64,
    /// Number of active spatial modes.
    pub m: u32,
    /// Carrier frequency, Hz.
    pub omega: f64,
}

impl TransponderConfig {
    /// Occupied contiguous bandwidth Δ = 2^b · F, Hz.
    pub fn delta(&self, k: &PhysicalConstants) -> f64 {
        (1u64 << self.b) as f64 * k.f_sub
    }
}

/// ASE noise density added per span, ζ = (e^(α·L_spn) − 1)·h·ν·n_sp, W/Hz.
pub fn derived_zeta(k: &PhysicalConstants) -> f64 {
    ((k.alpha * k.l_spn).exp() - 1.0) * k.planck_h * k.nu * k.n_sp
}

/// Nonlinear interference coefficient ς = 3γ² / (2απ|β₂|), SI units.
pub fn derived_varsigma(k: &PhysicalConstants) -> f64 {
    3.0 * k.gamma_nl * k.gamma_nl / (2.0 * k.alpha * std::f64::consts::PI * k.beta2_abs)
}

/// Per-term power breakdown of a transmit/receive transponder pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub bias_w: f64,
    pub codec_w: f64,
    pub fft_w: f64,
    pub dsp_w: f64,
}

impl PowerBreakdown {
    pub fn total(&self) -> f64 {
        self.bias_w + self.codec_w + self.fft_w + self.dsp_w
    }
}

/// Power consumption of a transmit/receive transponder pair,
/// P = P_trb + 2·P_edc·m/r + 2·m·2^b·b·P_fft + 2·m²·2^b·P_dsp, W.
pub fn transponder_power(cfg: &TransponderConfig, k: &PhysicalConstants) -> Result<f64, SolveError> {
    Ok(transponder_power_breakdown(cfg, k)?.total())
}

/// Same as [`transponder_power`] but keeping the four terms apart.
pub fn transponder_power_breakdown(
    cfg: &TransponderConfig,
    k: &PhysicalConstants,
) -> Result<PowerBreakdown, SolveError> {
    if cfg.r <= 0.0 {
        return Err(SolveError::ZeroCodingRate);
    }
    let m = cfg.m as f64;
    let two_b = (1u64 << cfg.b) as f64;
    Ok(PowerBreakdown {
        bias_w: k.p_trb,
        codec_w: 2.0 * k.p_edc * m / cfg.r,
        fft_w: 2.0 * m * two_b * cfg.b as f64 * k.p_fft,
        dsp_w: 2.0 * m * m * two_b * k.p_dsp,
    })
}

/// Convex surrogate of the transponder power in the log domain, where
/// `ln_m = ln m`, `ln_r = ln r` and `b` stays untransformed:
/// P̃ = P_trb + 2·P_edc·e^(ln_m−ln_r) + 5.36·P_fft·e^(0.82·b+ln_m) + 2·P_dsp·e^(2·ln_m)·2^b.
///
/// The FFT term replaces the exact 2·e^(ln_m)·b·2^b with the exponential
/// fit 5.36·e^(0.82·b+ln_m); its log-domain relative error stays below 3%
/// for b ∈ [4, 11] and m ≥ 1.
pub fn transponder_power_convex(ln_m: f64, ln_r: f64, b: f64, k: &PhysicalConstants) -> f64 {
    k.p_trb
        + 2.0 * k.p_edc * (ln_m - ln_r).exp()
        + FFT_FIT_COEF * k.p_fft * (FFT_FIT_EXP * b + ln_m).exp()
        + 2.0 * k.p_dsp * (2.0 * ln_m + b * std::f64::consts::LN_2).exp()
}

/// Coefficient of the exponential fit to b·2^(b+1).
pub const FFT_FIT_COEF: f64 = 5.36;
/// Exponent of the exponential fit to b·2^(b+1).
pub const FFT_FIT_EXP: f64 = 0.82;

/// Linear OSNR of request `q` given the full configuration set:
/// Ψ_q = (p_q/m_q) / [ζ·𝓝_q·Δ_q + κ₁·ς·(p_q/m_q)·Σ_{i≠q} m_i·(p_i/m_i)²·𝓝_{q,i}/Δ_i/d_{q,i}].
///
/// Fails if two requests with shared spans sit on coincident carriers.
pub fn osnr(
    q: usize,
    cfgs: &[TransponderConfig],
    routing: &RoutingSolution,
    k: &PhysicalConstants,
) -> Result<f64, SolveError> {
    let zeta = derived_zeta(k);
    let varsigma = derived_varsigma(k);
    let cfg = &cfgs[q];
    let per_mode = cfg.p / cfg.m as f64;
    let ase = zeta * routing.span_n[q] as f64 * cfg.delta(k);

    let mut interference = 0.0;
    for (i, other) in cfgs.iter().enumerate() {
        let shared = routing.shared_spans[q][i];
        if i == q || shared == 0 {
            continue;
        }
        let d = (cfg.omega - other.omega).abs();
        if d == 0.0 {
            return Err(SolveError::CoincidentCarriers(
                routing.request_ids[q].clone(),
                routing.request_ids[i].clone(),
            ));
        }
        let other_per_mode = other.p / other.m as f64;
        interference +=
            other.m as f64 * other_per_mode * other_per_mode * shared as f64 / other.delta(k) / d;
    }
    Ok(per_mode / (ase + k.kappa1 * varsigma * per_mode * interference))
}

/// Minimum linear OSNR required by a (modulation level, coding rate)
/// pair: Θ = r^κ₂ · (1 + κ₃·c)^κ₄.
pub fn osnr_threshold(c: f64, r: f64, k: &PhysicalConstants) -> f64 {
    r.powf(k.kappa2) * (1.0 + k.kappa3 * c).powf(k.kappa4)
}

/// Information rate a configuration can carry over `span_n` spans,
/// accounting for the cyclic-prefix overhead of chromatic-dispersion and
/// mode-coupling broadening, bit/s:
/// capacity = 2·F⁻¹·m·r·c·Δ / (F⁻¹ + σ·𝓝·2^b + ϱ·m^(−mode_exp)·g(𝓝)).
pub fn rate_capacity(
    cfg: &TransponderConfig,
    span_n: usize,
    coupling: CouplingModel,
    k: &PhysicalConstants,
) -> f64 {
    let m = cfg.m as f64;
    let two_b = (1u64 << cfg.b) as f64;
    let n = span_n as f64;
    let symbol_time = 1.0 / k.f_sub;
    let overhead = symbol_time
        + k.sigma_cd * n * two_b
        + k.rho_mc * m.powf(-k.mode_exp) * coupling.span_scaling(n);
    2.0 * symbol_time * m * cfg.r * cfg.c * cfg.delta(k) / overhead
}
