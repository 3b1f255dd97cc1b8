//! A fully assembled transponder-configuration problem.

use crate::constants::PhysicalConstants;
use crate::error::ModelError;
use crate::net::{Request, RoutingSolution};
use crate::phy::CouplingModel;
use serde::{Deserialize, Serialize};

/// Allowed discrete values for the integer decision variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSets {
    /// Modulation levels, bits/symbol, ascending.
    pub c_levels: Vec<f64>,
    /// Coding rates, ascending.
    pub r_rates: Vec<f64>,
    /// Inclusive log₂-subcarrier-count range.
    pub b_min: u32,
    pub b_max: u32,
    /// Mode budget; active modes range over 1..=m_max.
    pub m_max: u32,
}

impl Default for DiscreteSets {
    fn default() -> Self {
        DiscreteSets {
            c_levels: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            r_rates: vec![0.60, 0.70, 0.80, 0.90],
            b_min: 4,
            b_max: 11,
            m_max: 1,
        }
    }
}

impl DiscreteSets {
    fn validate(&self) -> Result<(), ModelError> {
        if self.c_levels.is_empty()
            || self.r_rates.is_empty()
            || self.b_min > self.b_max
            || self.m_max < 1
        {
            return Err(ModelError::BadTopology(
                "discrete sets must be non-empty with m_max >= 1".into(),
            ));
        }
        if self.c_levels.windows(2).any(|w| w[0] >= w[1])
            || self.r_rates.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(ModelError::BadTopology(
                "discrete sets must be strictly ascending".into(),
            ));
        }
        if self.c_levels[0] <= 0.0 || self.r_rates[0] <= 0.0 || *self.r_rates.last().unwrap() > 1.0
        {
            return Err(ModelError::BadTopology(
                "modulation levels must be positive and coding rates in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Everything the configuration solver needs for one scenario.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub constants: PhysicalConstants,
    pub routing: RoutingSolution,
    pub requests: Vec<Request>,
    pub coupling: CouplingModel,
    pub discrete: DiscreteSets,
    /// Objective weight 𝓚 on the carrier-distance penalty Σ d⁻¹.
    pub penalty_k: f64,
    /// Usable spectrum per link, Hz.
    pub bandwidth_b: f64,
}

/// Default penalty weight. Large enough that at the terminal barrier
/// parameter every carrier-distance variable is pressed onto its gap to
/// well below the feasibility tolerances (sag scales as μ·d²/𝓚, so the
/// worst case is a pair at opposite ends of the spectrum), yet small
/// enough that the penalty stays orders of magnitude under the power
/// objective.
pub const DEFAULT_PENALTY_K: f64 = 1e10;

impl ProblemInstance {
    pub fn new(
        constants: PhysicalConstants,
        routing: RoutingSolution,
        requests: Vec<Request>,
        coupling: CouplingModel,
        mut discrete: DiscreteSets,
        penalty_k: f64,
        bandwidth_b: f64,
        fiber_modes: u32,
    ) -> Result<Self, ModelError> {
        if penalty_k <= 0.0 {
            return Err(ModelError::BadTopology("penalty weight must be positive".into()));
        }
        discrete.m_max = discrete.m_max.min(fiber_modes).max(1);
        if discrete.m_max > fiber_modes {
            return Err(ModelError::BadTopology(format!(
                "mode range 1..={} exceeds the {} fiber modes",
                discrete.m_max, fiber_modes
            )));
        }
        discrete.validate()?;
        assert_eq!(routing.request_count(), requests.len());
        Ok(ProblemInstance {
            constants,
            routing,
            requests,
            coupling,
            discrete,
            penalty_k,
            bandwidth_b,
        })
    }

    pub fn request_count(&self) -> usize {
        self.requests.len()
    }
}
