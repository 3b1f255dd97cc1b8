//! Fiber, transponder and curve-fit constants.
//!
//! Everything is stored in SI units (Hz, W, m, s). Input files use the
//! customary units of the optical literature (dB/km, fs²/m, km, THz, ...)
//! and are converted on load; the dB/km attenuation converts via
//! `alpha[1/m] = alpha[dB/km] / (10·log10 e) / 1000`.

use crate::error::ModelError;
use serde::Deserialize;

/// Planck constant, J·s.
pub const PLANCK_H: f64 = 6.62607015e-34;

/// Physical and transponder constants, SI units throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalConstants {
    /// Fiber attenuation, 1/m.
    pub alpha: f64,
    /// |β₂| chromatic dispersion factor, s²/m.
    pub beta2_abs: f64,
    /// Fiber nonlinear constant γ, 1/(W·m).
    pub gamma_nl: f64,
    /// Light frequency ν, Hz.
    pub nu: f64,
    /// Spontaneous emission factor.
    pub n_sp: f64,
    /// Span length, m.
    pub l_spn: f64,
    /// OFDM subcarrier spacing, Hz.
    pub f_sub: f64,
    /// Chromatic-dispersion broadening coefficient σ, s.
    pub sigma_cd: f64,
    /// Mode-coupling broadening coefficient ϱ, s.
    pub rho_mc: f64,
    /// Exponent of the mode count in the mode-coupling broadening term.
    pub mode_exp: f64,
    /// Guard band between adjacent requests on a link, Hz.
    pub guard_band: f64,
    /// Nonlinear-interference weight κ₁.
    pub kappa1: f64,
    /// OSNR-threshold fit exponent on the coding rate, κ₂.
    pub kappa2: f64,
    /// OSNR-threshold fit coefficient on the modulation level, κ₃.
    pub kappa3: f64,
    /// OSNR-threshold fit outer exponent, κ₄.
    pub kappa4: f64,
    /// Transponder-pair bias power, W.
    pub p_trb: f64,
    /// Encoder/decoder power scaling coefficient, W.
    pub p_edc: f64,
    /// Two-point FFT operation power, W.
    pub p_fft: f64,
    /// DSP/MIMO power scaling coefficient, W.
    pub p_dsp: f64,
    /// Planck constant, J·s.
    pub planck_h: f64,
}

const DB_PER_KM_TO_PER_M: f64 = 1.0 / (10.0 * std::f64::consts::LOG10_E) / 1000.0;

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            alpha: 0.22 * DB_PER_KM_TO_PER_M,
            beta2_abs: 20393e-30,
            gamma_nl: 1.3e-3,
            nu: 193.55e12,
            n_sp: 1.58,
            l_spn: 80e3,
            f_sub: 80e6,
            sigma_cd: 14e-15,
            rho_mc: 113e-12,
            mode_exp: 0.78,
            guard_band: 20e9,
            kappa1: 0.4343,
            kappa2: 3.37,
            kappa3: 0.21,
            kappa4: 5.73,
            p_trb: 36.0,
            p_edc: 3.2,
            p_fft: 4e-3,
            p_dsp: 3e-3,
            planck_h: PLANCK_H,
        }
    }
}

/// Constants override document. Keys follow the symbol names, values are
/// in the units of the optical literature; omitted fields keep defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsOverride {
    pub alpha_db_per_km: Option<f64>,
    pub beta2_fs2_per_m: Option<f64>,
    pub gamma_per_w_per_km: Option<f64>,
    pub nu_thz: Option<f64>,
    pub n_sp: Option<f64>,
    pub l_spn_km: Option<f64>,
    pub f_mhz: Option<f64>,
    pub sigma_fs: Option<f64>,
    pub rho_ps: Option<f64>,
    pub mode_exp: Option<f64>,
    pub g_ghz: Option<f64>,
    pub kappa1: Option<f64>,
    pub kappa2: Option<f64>,
    pub kappa3: Option<f64>,
    pub kappa4: Option<f64>,
    pub p_trb_w: Option<f64>,
    pub p_edc_w: Option<f64>,
    pub p_fft_mw: Option<f64>,
    pub p_dsp_mw: Option<f64>,
}

impl PhysicalConstants {
    /// Applies an override document on top of the defaults, converting
    /// from file units to SI. Rejects non-positive values.
    pub fn with_overrides(ovr: &ConstantsOverride) -> Result<Self, ModelError> {
        let mut k = PhysicalConstants::default();
        fn set(target: &mut f64, v: Option<f64>, scale: f64, field: &'static str) -> Result<(), ModelError> {
            if let Some(x) = v {
                if x <= 0.0 || !x.is_finite() {
                    return Err(ModelError::BadConstant { field, value: x });
                }
                *target = x * scale;
            }
            Ok(())
        }
        set(&mut k.alpha, ovr.alpha_db_per_km, DB_PER_KM_TO_PER_M, "alpha_db_per_km")?;
        set(&mut k.beta2_abs, ovr.beta2_fs2_per_m, 1e-30, "beta2_fs2_per_m")?;
        set(&mut k.gamma_nl, ovr.gamma_per_w_per_km, 1e-3, "gamma_per_w_per_km")?;
        set(&mut k.nu, ovr.nu_thz, 1e12, "nu_thz")?;
        set(&mut k.n_sp, ovr.n_sp, 1.0, "n_sp")?;
        set(&mut k.l_spn, ovr.l_spn_km, 1e3, "l_spn_km")?;
        set(&mut k.f_sub, ovr.f_mhz, 1e6, "f_mhz")?;
        set(&mut k.sigma_cd, ovr.sigma_fs, 1e-15, "sigma_fs")?;
        set(&mut k.rho_mc, ovr.rho_ps, 1e-12, "rho_ps")?;
        set(&mut k.mode_exp, ovr.mode_exp, 1.0, "mode_exp")?;
        set(&mut k.guard_band, ovr.g_ghz, 1e9, "g_ghz")?;
        set(&mut k.kappa1, ovr.kappa1, 1.0, "kappa1")?;
        set(&mut k.kappa2, ovr.kappa2, 1.0, "kappa2")?;
        set(&mut k.kappa3, ovr.kappa3, 1.0, "kappa3")?;
        set(&mut k.kappa4, ovr.kappa4, 1.0, "kappa4")?;
        set(&mut k.p_trb, ovr.p_trb_w, 1.0, "p_trb_w")?;
        set(&mut k.p_edc, ovr.p_edc_w, 1.0, "p_edc_w")?;
        set(&mut k.p_fft, ovr.p_fft_mw, 1e-3, "p_fft_mw")?;
        set(&mut k.p_dsp, ovr.p_dsp_mw, 1e-3, "p_dsp_mw")?;
        Ok(k)
    }

    /// Parses an override document from JSON text and applies it.
    pub fn from_override_json(text: &str) -> Result<Self, ModelError> {
        let ovr: ConstantsOverride = serde_json::from_str(text)?;
        Self::with_overrides(&ovr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_attenuation_matches_db_conversion() {
        let k = PhysicalConstants::default();
        // 0.22 dB/km in 1/m, via alpha = 0.22/(10·log10 e)/1000
        assert!((k.alpha - 5.0656872045869005e-5).abs() / k.alpha < 1e-14);
    }

    #[test]
    fn overrides_convert_units() {
        let k = PhysicalConstants::from_override_json(
            r#"{"l_spn_km": 100, "p_fft_mw": 8, "nu_thz": 200}"#,
        )
        .unwrap();
        assert_eq!(k.l_spn, 100e3);
        assert_eq!(k.p_fft, 8e-3);
        assert_eq!(k.nu, 200e12);
        // untouched fields keep defaults
        assert_eq!(k.p_trb, 36.0);
    }

    #[test]
    fn negative_override_rejected() {
        let err = PhysicalConstants::from_override_json(r#"{"sigma_fs": -1}"#).unwrap_err();
        assert!(matches!(err, ModelError::BadConstant { field: "sigma_fs", .. }));
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(PhysicalConstants::from_override_json(r#"{"sigma": 14}"#).is_err());
    }
}
