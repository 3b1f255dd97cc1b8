//! Solver output: final configurations, objective decomposition,
//! residuals and the rounding trace.

use crate::constants::PhysicalConstants;
use crate::phy::{transponder_power_breakdown, PowerBreakdown, TransponderConfig};
use serde::{Deserialize, Serialize};

/// Which transmit-power policy produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerMode {
    Adaptive,
    Fixed,
}

/// One rounding-loop event: a relaxed variable pinned to a value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundingStep {
    pub epoch: usize,
    pub variable: String,
    pub relaxed: f64,
    pub fixed: f64,
}

/// Final result of a configuration solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub request_ids: Vec<String>,
    pub configs: Vec<TransponderConfig>,
    /// Σ P_q of the final integer configurations (exact formula, not the
    /// convex surrogate), W.
    pub objective_power_w: f64,
    /// Power decomposition of the final configurations, W.
    pub breakdown: PowerBreakdown,
    /// Carrier-distance penalty 𝓚·Σ d⁻¹ at the final point.
    pub penalty_value: f64,
    /// Objective of the first (fully relaxed) continuous solve, W,
    /// penalty included.
    pub relaxed_objective: f64,
    /// Per-constraint residuals g(x) ≤ 0 at the final continuous point.
    pub constraint_residuals: Vec<(String, f64)>,
    /// Stationarity residual of the final barrier stage.
    pub kkt_residual: f64,
    pub rounding_trace: Vec<RoundingStep>,
    pub epochs: usize,
    pub power_mode: PowerMode,
    /// Linear OSNR per request at the final configuration.
    pub osnr: Vec<f64>,
    /// Linear OSNR threshold per request.
    pub threshold: Vec<f64>,
    pub wall_time_s: f64,
}

impl SolveReport {
    /// Recomputes the power breakdown from the stored configurations.
    pub fn recompute_breakdown(&self, k: &PhysicalConstants) -> PowerBreakdown {
        let mut total = PowerBreakdown::default();
        for cfg in &self.configs {
            let b = transponder_power_breakdown(cfg, k).expect("valid config");
            total.bias_w += b.bias_w;
            total.codec_w += b.codec_w;
            total.fft_w += b.fft_w;
            total.dsp_w += b.dsp_w;
        }
        total
    }

    /// Flat per-request CSV with the exact header
    /// `request_id,c,b,r,p_mW,m,omega_GHz,osnr_dB,threshold_dB,power_W`.
    pub fn to_csv(&self, k: &PhysicalConstants) -> String {
        let mut out = String::from("request_id,c,b,r,p_mW,m,omega_GHz,osnr_dB,threshold_dB,power_W\n");
        for (q, cfg) in self.configs.iter().enumerate() {
            let power = transponder_power_breakdown(cfg, k).expect("valid config").total();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                self.request_ids[q],
                cfg.c,
                cfg.b,
                cfg.r,
                cfg.p * 1e3,
                cfg.m,
                cfg.omega / 1e9,
                10.0 * self.osnr[q].log10(),
                10.0 * self.threshold[q].log10(),
                power,
            ));
        }
        out
    }
}
