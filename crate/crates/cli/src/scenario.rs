//! Scenario documents: everything one experiment run needs, with file
//! references resolved relative to the scenario file.

use anyhow::{bail, Context, Result};
use eonplan_core::constants::ConstantsOverride;
use eonplan_core::report::PowerMode;
use eonplan_core::ros::{OrderingRule, RosConfig, RosSolution};
use eonplan_core::{
    net, CouplingModel, DiscreteSets, PhysicalConstants, Request, SolverOptions, Topology,
};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Parsed scenario file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Topology document path.
    pub topology: String,
    pub traffic: TrafficSpec,
    /// Inline constants overrides (paper units).
    #[serde(default)]
    pub constants: Option<ConstantsOverride>,
    #[serde(default = "default_coupling")]
    pub coupling: CouplingModel,
    /// Mode budget override; defaults to the topology's fiber modes.
    #[serde(default)]
    pub modes: Option<u32>,
    #[serde(default = "default_power_mode")]
    pub power_mode: PowerMode,
    #[serde(default)]
    pub ros: RosOptions,
    /// Externally supplied routing-and-ordering document.
    #[serde(default)]
    pub ros_solution: Option<String>,
    #[serde(default)]
    pub discrete: DiscreteOptions,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default)]
    pub sweep: Option<Sweep>,
}

fn default_coupling() -> CouplingModel {
    CouplingModel::Strong
}

fn default_power_mode() -> PowerMode {
    PowerMode::Adaptive
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TrafficSpec {
    /// Uniform demand split evenly over all ordered node pairs.
    Uniform { uniform: UniformTraffic },
    /// Explicit request list.
    Explicit { requests: Vec<ExplicitRequest> },
    /// Traffic document path.
    Path { path: String },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformTraffic {
    pub total_tbps: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExplicitRequest {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub rate_gbps: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosOptions {
    #[serde(default = "default_k_paths")]
    pub k_paths: usize,
    #[serde(default = "default_ordering")]
    pub ordering_rule: OrderingRule,
}

fn default_k_paths() -> usize {
    3
}

fn default_ordering() -> OrderingRule {
    OrderingRule::ByDemandDesc
}

impl Default for RosOptions {
    fn default() -> Self {
        RosOptions { k_paths: default_k_paths(), ordering_rule: default_ordering() }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteOptions {
    pub c_levels: Option<Vec<f64>>,
    pub r_rates: Option<Vec<f64>>,
    pub b_min: Option<u32>,
    pub b_max: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub penalty_k: Option<f64>,
    pub kkt_tol: Option<f64>,
    pub mu_final: Option<f64>,
    pub round_int_precision: Option<f64>,
    pub round_grid_precision: Option<f64>,
    pub p_bounds_w: Option<(f64, f64)>,
}

/// Sweep axis and values; exactly one axis per run.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum Sweep {
    /// Aggregate traffic in Tb/s (uniform traffic regenerated, explicit
    /// traffic rescaled to the target total).
    TrafficTbps(Vec<f64>),
    /// Mode budget 𝓜.
    Modes(Vec<u32>),
    /// Fiber coupling regime.
    Coupling(Vec<CouplingModel>),
}

/// A scenario with every referenced document loaded and validated.
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub dir: PathBuf,
    pub topology: Topology,
    pub base_requests: Vec<Request>,
    pub constants: PhysicalConstants,
    pub solver_opts: SolverOptions,
    pub ros_cfg: RosConfig,
    pub external_ros: Option<RosSolution>,
    pub discrete: DiscreteSets,
    pub modes: u32,
    /// (label, sha256) of every input document, scenario first.
    pub input_hashes: Vec<(String, String)>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Generates the uniform traffic matrix: the total demand split evenly
/// over all ordered node pairs, ids in topology node order.
pub fn uniform_requests(topology: &Topology, total_tbps: f64) -> Vec<Request> {
    let v = topology.nodes.len();
    let pairs = (v * (v - 1)) as f64;
    let rate = total_tbps * 1e12 / pairs;
    let width = (pairs as usize).to_string().len();
    let mut requests = Vec::with_capacity(v * (v - 1));
    let mut n = 0usize;
    for src in &topology.nodes {
        for dst in &topology.nodes {
            if src == dst {
                continue;
            }
            requests.push(Request {
                id: format!("q{n:0width$}"),
                src: src.clone(),
                dst: dst.clone(),
                rate_r: rate,
            });
            n += 1;
        }
    }
    requests
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scenario {}", path.display()))?;
    let scenario: Scenario =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let mut input_hashes = vec![(
        path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
        sha256_hex(text.as_bytes()),
    )];

    let constants = match &scenario.constants {
        Some(ovr) => PhysicalConstants::with_overrides(ovr)?,
        None => PhysicalConstants::default(),
    };

    let topo_path = dir.join(&scenario.topology);
    let topo_text = std::fs::read_to_string(&topo_path)
        .with_context(|| format!("reading topology {}", topo_path.display()))?;
    input_hashes.push((scenario.topology.clone(), sha256_hex(topo_text.as_bytes())));
    let topology = net::load_topology(&topo_text, constants.l_spn)?;

    let base_requests = match &scenario.traffic {
        TrafficSpec::Uniform { uniform } => {
            if uniform.total_tbps <= 0.0 {
                bail!("uniform traffic total must be positive");
            }
            uniform_requests(&topology, uniform.total_tbps)
        }
        TrafficSpec::Explicit { requests } => {
            let doc = serde_json::json!({
                "requests": requests.iter().map(|r| serde_json::json!({
                    "id": r.id, "src": r.src, "dst": r.dst, "rate_gbps": r.rate_gbps,
                })).collect::<Vec<_>>()
            });
            net::load_traffic(&doc.to_string(), &topology)?
        }
        TrafficSpec::Path { path: rel } => {
            let traffic_path = dir.join(rel);
            let traffic_text = std::fs::read_to_string(&traffic_path)
                .with_context(|| format!("reading traffic {}", traffic_path.display()))?;
            input_hashes.push((rel.clone(), sha256_hex(traffic_text.as_bytes())));
            net::load_traffic(&traffic_text, &topology)?
        }
    };
    if base_requests.is_empty() {
        bail!("scenario defines no requests");
    }

    let external_ros = match &scenario.ros_solution {
        Some(rel) => {
            let ros_path = dir.join(rel);
            let ros_text = std::fs::read_to_string(&ros_path)
                .with_context(|| format!("reading routing solution {}", ros_path.display()))?;
            input_hashes.push((rel.clone(), sha256_hex(ros_text.as_bytes())));
            Some(serde_json::from_str(&ros_text)?)
        }
        None => None,
    };

    let mut discrete = DiscreteSets {
        m_max: scenario.modes.unwrap_or(topology.modes_m),
        ..Default::default()
    };
    if let Some(c) = &scenario.discrete.c_levels {
        discrete.c_levels = c.clone();
    }
    if let Some(r) = &scenario.discrete.r_rates {
        discrete.r_rates = r.clone();
    }
    if let Some(b) = scenario.discrete.b_min {
        discrete.b_min = b;
    }
    if let Some(b) = scenario.discrete.b_max {
        discrete.b_max = b;
    }

    let mut solver_opts = SolverOptions::default();
    let s = &scenario.solver;
    if let Some(v) = s.kkt_tol {
        solver_opts.kkt_tol = v;
    }
    if let Some(v) = s.mu_final {
        solver_opts.mu_final = v;
    }
    if let Some(v) = s.round_int_precision {
        solver_opts.round_int_precision = v;
    }
    if let Some(v) = s.round_grid_precision {
        solver_opts.round_grid_precision = v;
    }
    if let Some(v) = s.p_bounds_w {
        solver_opts.p_bounds_w = v;
    }

    let modes = scenario.modes.unwrap_or(topology.modes_m);
    Ok(LoadedScenario {
        ros_cfg: RosConfig {
            k_paths: scenario.ros.k_paths,
            ordering_rule: scenario.ros.ordering_rule,
        },
        scenario,
        dir,
        topology,
        base_requests,
        constants,
        solver_opts,
        external_ros,
        discrete,
        modes,
        input_hashes,
    })
}
