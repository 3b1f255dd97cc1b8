//! Experiment execution: instance assembly, sweeps over one axis,
//! plot-ready output files and oracle comparison.

use crate::scenario::{LoadedScenario, Sweep, TrafficSpec};
use anyhow::{bail, Context, Result};
use eonplan_core::instance::DEFAULT_PENALTY_K;
use eonplan_core::oracle::{self, GridSpec};
use eonplan_core::report::PowerMode;
use eonplan_core::ros;
use eonplan_core::solver;
use eonplan_core::{
    CouplingModel, ProblemInstance, Request, RoutingSolution, SolveError, SolveReport,
};
use std::fmt::Write as _;
use std::time::Instant;

/// Per-run parameter overrides layered on top of the scenario (CLI
/// flags and sweep points).
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub traffic_tbps: Option<f64>,
    pub modes: Option<u32>,
    pub coupling: Option<CouplingModel>,
    pub power_mode: Option<PowerMode>,
}

fn requests_for(loaded: &LoadedScenario, traffic_tbps: Option<f64>) -> Vec<Request> {
    match traffic_tbps {
        None => loaded.base_requests.clone(),
        Some(total) => match &loaded.scenario.traffic {
            TrafficSpec::Uniform { .. } => crate::scenario::uniform_requests(&loaded.topology, total),
            _ => {
                // rescale explicit traffic to the target aggregate
                let current: f64 = loaded.base_requests.iter().map(|r| r.rate_r).sum();
                let scale = total * 1e12 / current;
                loaded
                    .base_requests
                    .iter()
                    .map(|r| Request { rate_r: r.rate_r * scale, ..r.clone() })
                    .collect()
            }
        },
    }
}

/// Assembles the problem instance for one run.
pub fn build_instance(loaded: &LoadedScenario, ovr: Overrides) -> Result<ProblemInstance> {
    let requests = requests_for(loaded, ovr.traffic_tbps);
    let routing: RoutingSolution = match &loaded.external_ros {
        Some(doc) => doc.into_routing(&loaded.topology, &requests)?,
        None => ros::solve(&loaded.topology, &requests, &loaded.ros_cfg)?,
    };
    let mut discrete = loaded.discrete.clone();
    if let Some(m) = ovr.modes {
        discrete.m_max = m;
    }
    let coupling = ovr.coupling.unwrap_or(loaded.scenario.coupling);
    let penalty_k = loaded.scenario.solver.penalty_k.unwrap_or(DEFAULT_PENALTY_K);
    Ok(ProblemInstance::new(
        loaded.constants.clone(),
        routing,
        requests,
        coupling,
        discrete,
        penalty_k,
        loaded.topology.bandwidth_b,
        loaded.topology.modes_m,
    )?)
}

/// Runs one instance under the effective power mode.
pub fn run_single(
    loaded: &LoadedScenario,
    ovr: Overrides,
) -> Result<std::result::Result<SolveReport, SolveError>> {
    let inst = build_instance(loaded, ovr)?;
    let mode = ovr.power_mode.unwrap_or(loaded.scenario.power_mode);
    Ok(solver::round_and_fix(&inst, &loaded.solver_opts, mode))
}

/// One sweep point outcome.
pub struct SweepRow {
    pub label: String,
    pub outcome: std::result::Result<SolveReport, SolveError>,
    pub wall_s: f64,
}

pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub any_infeasible: bool,
}

fn sweep_points(sweep: &Sweep) -> Vec<(String, Overrides)> {
    match sweep {
        Sweep::TrafficTbps(values) => values
            .iter()
            .map(|&v| (format!("{v}"), Overrides { traffic_tbps: Some(v), ..Default::default() }))
            .collect(),
        Sweep::Modes(values) => values
            .iter()
            .map(|&m| (format!("{m}"), Overrides { modes: Some(m), ..Default::default() }))
            .collect(),
        Sweep::Coupling(values) => values
            .iter()
            .map(|&c| {
                let label = match c {
                    CouplingModel::Strong => "strong",
                    CouplingModel::Weak => "weak",
                };
                (label.to_string(), Overrides { coupling: Some(c), ..Default::default() })
            })
            .collect(),
    }
}

/// Runs the scenario's sweep, dispatching points to a rayon pool.
/// Results are collected in axis order, so the outputs do not depend on
/// the worker count.
pub fn run_sweep(loaded: &LoadedScenario, base: Overrides, workers: usize) -> Result<SweepOutcome> {
    let Some(sweep) = &loaded.scenario.sweep else {
        bail!("scenario has no sweep axis; use the solve command");
    };
    let points = sweep_points(sweep);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")?;
    let rows: Vec<SweepRow> = pool.install(|| {
        use rayon::prelude::*;
        points
            .par_iter()
            .map(|(label, point)| {
                let merged = Overrides {
                    traffic_tbps: point.traffic_tbps.or(base.traffic_tbps),
                    modes: point.modes.or(base.modes),
                    coupling: point.coupling.or(base.coupling),
                    power_mode: base.power_mode,
                };
                let started = Instant::now();
                let outcome = match run_single(loaded, merged) {
                    Ok(res) => res,
                    Err(err) => Err(SolveError::RoundingExhausted {
                        variable: "instance assembly".into(),
                        binding: err.to_string(),
                    }),
                };
                SweepRow { label: label.clone(), outcome, wall_s: started.elapsed().as_secs_f64() }
            })
            .collect()
    });
    let any_infeasible = rows.iter().any(|r| r.outcome.is_err());
    Ok(SweepOutcome { rows, any_infeasible })
}

/// Wide sweep table. The decomposition columns sum to the total; wall
/// time is deliberately kept out (see `timings_csv`) so that reruns are
/// byte-identical.
pub fn sweep_csv(outcome: &SweepOutcome) -> String {
    let mut out = String::from(
        "sweep_value,total_power_W,bias_W,codec_W,fft_W,dsp_W,penalty_W,relaxed_objective_W,epochs,feasible\n",
    );
    for row in &outcome.rows {
        match &row.outcome {
            Ok(report) => {
                let b = &report.breakdown;
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},true",
                    row.label,
                    report.objective_power_w,
                    b.bias_w,
                    b.codec_w,
                    b.fft_w,
                    b.dsp_w,
                    report.penalty_value,
                    report.relaxed_objective,
                    report.epochs
                )
                .unwrap();
            }
            Err(_) => {
                writeln!(out, "{},,,,,,,,,false", row.label).unwrap();
            }
        }
    }
    out
}

/// Long-format plot data: one row per (sweep value, decomposition
/// series).
pub fn plotdata_csv(outcome: &SweepOutcome) -> String {
    let mut rows = Vec::new();
    for row in &outcome.rows {
        if let Ok(report) = &row.outcome {
            let b = &report.breakdown;
            rows.push((row.label.clone(), "bias".to_string(), b.bias_w));
            rows.push((row.label.clone(), "codec".to_string(), b.codec_w));
            rows.push((row.label.clone(), "fft".to_string(), b.fft_w));
            rows.push((row.label.clone(), "dsp".to_string(), b.dsp_w));
        }
    }
    tidy_csv(&rows)
}

/// Serializes tidy (sweep_value, series, watts) rows.
pub fn tidy_csv(rows: &[(String, String, f64)]) -> String {
    let mut out = String::from("sweep_value,series,watts\n");
    for (value, series, watts) in rows {
        writeln!(out, "{value},{series},{watts}").unwrap();
    }
    out
}

/// Parses tidy CSV back into rows.
pub fn parse_tidy_csv(text: &str) -> Result<Vec<(String, String, f64)>> {
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let value = parts.next().context("missing sweep_value")?;
        let series = parts.next().context("missing series")?;
        let watts: f64 = parts
            .next()
            .with_context(|| format!("missing watts on line {}", ln + 1))?
            .parse()?;
        rows.push((value.to_string(), series.to_string(), watts));
    }
    Ok(rows)
}

/// Pivots tidy rows to a wide table (one row per sweep value, one column
/// per series, series order of first appearance).
pub fn wide_from_tidy(rows: &[(String, String, f64)]) -> (Vec<String>, Vec<(String, Vec<f64>)>) {
    let mut series: Vec<String> = Vec::new();
    for (_, s, _) in rows {
        if !series.contains(s) {
            series.push(s.clone());
        }
    }
    let mut wide: Vec<(String, Vec<f64>)> = Vec::new();
    for (value, s, w) in rows {
        if wide.last().map(|(v, _)| v != value).unwrap_or(true) {
            wide.push((value.clone(), vec![f64::NAN; series.len()]));
        }
        let col = series.iter().position(|x| x == s).unwrap();
        wide.last_mut().unwrap().1[col] = *w;
    }
    (series, wide)
}

/// Flattens a wide table back to tidy rows.
pub fn tidy_from_wide(series: &[String], wide: &[(String, Vec<f64>)]) -> Vec<(String, String, f64)> {
    let mut rows = Vec::new();
    for (value, cols) in wide {
        for (s, w) in series.iter().zip(cols) {
            rows.push((value.clone(), s.clone(), *w));
        }
    }
    rows
}

/// Wall-clock per sweep point; the one output that is not reproducible
/// byte-for-byte.
pub fn timings_csv(outcome: &SweepOutcome) -> String {
    let mut out = String::from("sweep_value,solve_wall_s\n");
    for row in &outcome.rows {
        writeln!(out, "{},{}", row.label, row.wall_s).unwrap();
    }
    out
}

/// Deterministic run manifest: input hashes, seed, versions, effective
/// parameters.
pub fn manifest_text(loaded: &LoadedScenario, seed: u64, ovr: Overrides, workers: usize) -> String {
    let mut out = String::new();
    writeln!(out, "tool eonplan {}", env!("CARGO_PKG_VERSION")).unwrap();
    for (label, hash) in &loaded.input_hashes {
        writeln!(out, "input {label} sha256 {hash}").unwrap();
    }
    writeln!(out, "seed {seed}").unwrap();
    match &loaded.scenario.sweep {
        Some(Sweep::TrafficTbps(v)) => writeln!(
            out,
            "sweep traffic_tbps {}",
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        )
        .unwrap(),
        Some(Sweep::Modes(v)) => writeln!(
            out,
            "sweep modes {}",
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        )
        .unwrap(),
        Some(Sweep::Coupling(v)) => writeln!(
            out,
            "sweep coupling {}",
            v.iter()
                .map(|c| match c {
                    CouplingModel::Strong => "strong",
                    CouplingModel::Weak => "weak",
                })
                .collect::<Vec<_>>()
                .join(",")
        )
        .unwrap(),
        None => writeln!(out, "sweep none").unwrap(),
    }
    let mode = ovr.power_mode.unwrap_or(loaded.scenario.power_mode);
    writeln!(
        out,
        "power_mode {}",
        match mode {
            PowerMode::Adaptive => "adaptive",
            PowerMode::Fixed => "fixed",
        }
    )
    .unwrap();
    let coupling = ovr.coupling.unwrap_or(loaded.scenario.coupling);
    writeln!(
        out,
        "coupling {}",
        match coupling {
            CouplingModel::Strong => "strong",
            CouplingModel::Weak => "weak",
        }
    )
    .unwrap();
    writeln!(out, "modes {}", ovr.modes.unwrap_or(loaded.modes)).unwrap();
    writeln!(out, "requests {}", loaded.base_requests.len()).unwrap();
    writeln!(out, "workers {workers}").unwrap();
    out
}

/// Solver-versus-oracle gap report for a desk-scale scenario.
pub fn compare_oracle(loaded: &LoadedScenario, ovr: Overrides) -> Result<String> {
    let inst = build_instance(loaded, ovr)?;
    let grid = GridSpec::defaults(inst.constants.guard_band);
    let estimate = oracle::enumeration_size(&inst, &grid);
    if estimate > grid.cap {
        bail!(
            "enumeration size {estimate:.3e} exceeds the oracle cap {:.3e}; shrink the grids",
            grid.cap
        );
    }
    let solver_started = Instant::now();
    let report = solver::solve(&inst, &loaded.solver_opts)
        .map_err(|e| anyhow::anyhow!("solver failed: {e}"))?;
    let solver_time = solver_started.elapsed().as_secs_f64();
    let oracle_started = Instant::now();
    let oracle_result =
        oracle::brute_force_tcs(&inst, &grid).map_err(|e| anyhow::anyhow!("oracle failed: {e}"))?;
    let oracle_time = oracle_started.elapsed().as_secs_f64();
    let gap = (report.objective_power_w - oracle_result.objective_w) / oracle_result.objective_w;
    let mut out = String::from(
        "instance,solver_objective_W,oracle_objective_W,relative_gap,solver_time_s,oracle_time_s,speed_ratio\n",
    );
    writeln!(
        out,
        "{},{},{},{},{},{},{}",
        loaded.input_hashes[0].0,
        report.objective_power_w,
        oracle_result.objective_w,
        gap,
        solver_time,
        oracle_time,
        oracle_time / solver_time.max(1e-12),
    )
    .unwrap();
    Ok(out)
}
