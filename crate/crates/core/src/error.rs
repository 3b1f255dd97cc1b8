use thiserror::Error;

/// Errors raised while loading or validating network-model inputs.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed document: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("link {link}: unknown node reference `{node}` in field `{field}`")]
    UnknownNode {
        link: String,
        node: String,
        field: &'static str,
    },

    #[error("link {link}: field `{field}` must be positive, got {value}")]
    NonPositive {
        link: String,
        field: &'static str,
        value: f64,
    },

    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },

    #[error("request {request}: {reason}")]
    BadRequest { request: String, reason: String },

    #[error("topology: {0}")]
    BadTopology(String),

    #[error("request {request}: route is not a connected {src}->{dst} path (broken at `{at}`)")]
    DisconnectedRoute {
        request: String,
        src: String,
        dst: String,
        at: String,
    },

    #[error("request {request}: destination `{dst}` unreachable from `{src}`")]
    Unreachable {
        request: String,
        src: String,
        dst: String,
    },

    #[error("spectral ordering is not consistent with a single global frequency assignment: cycle through request `{0}`")]
    CyclicOrdering(String),

    #[error("ordering for link {link} references request `{request}` that does not traverse it")]
    OrderingMismatch { link: String, request: String },

    #[error("constants: field `{field}` must be positive, got {value}")]
    BadConstant { field: &'static str, value: f64 },
}

/// Errors raised by the transponder-configuration solver.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error("pre-solve infeasibility on link {link}: minimum occupied spectrum {needed_ghz:.3} GHz exceeds the {available_ghz:.3} GHz fiber bandwidth")]
    SpectrumOverCommitted {
        link: String,
        needed_ghz: f64,
        available_ghz: f64,
    },

    #[error("no strictly feasible point found; most violated constraints: {}",
            .certificate.iter().map(|(n, v)| format!("{n} (residual {v:.3e})")).collect::<Vec<_>>().join(", "))]
    Infeasible { certificate: Vec<(String, f64)> },

    #[error("Newton iteration stalled at barrier stage t={t:.3e} (gradient norm {grad_norm:.3e})")]
    Stalled { t: f64, grad_norm: f64 },

    #[error("rounding failed: fixing {variable} left no feasible configuration; binding constraint: {binding}")]
    RoundingExhausted { variable: String, binding: String },

    #[error("coincident carriers with shared spans between requests {0} and {1}")]
    CoincidentCarriers(String, String),

    #[error("coding rate must be positive")]
    ZeroCodingRate,
}

/// Errors raised by the brute-force oracle.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("enumeration size {estimate:.3e} exceeds the configured cap {cap:.3e}; shrink the grids or raise the cap")]
    CapExceeded { estimate: f64, cap: f64 },

    #[error("empty grid for variable {0}")]
    EmptyGrid(&'static str),

    #[error("no feasible configuration on the grid")]
    InfeasibleGrid,
}
