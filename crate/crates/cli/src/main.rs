use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use eonplan_cli::runner::{self, Overrides};
use eonplan_cli::scenario::{self, LoadedScenario};
use eonplan_core::report::PowerMode;
use eonplan_core::CouplingModel;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Transponder configuration planner for few-mode-fiber elastic optical
/// networks.
#[derive(Parser)]
#[command(name = "eonplan", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Scenario document.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run seed, recorded in the manifest.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the scenario's transmit power policy.
    #[arg(long, value_parser = parse_power_mode)]
    power_mode: Option<PowerMode>,
    /// Override the scenario's coupling regime.
    #[arg(long, value_parser = parse_coupling)]
    coupling: Option<CouplingModel>,
    /// Override the mode budget.
    #[arg(long)]
    modes: Option<u32>,
    /// Worker threads for sweep points (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single scenario and write the report and per-request CSV.
    Solve(CommonArgs),
    /// Run the scenario's sweep axis and write sweep.csv, plotdata.csv,
    /// timings.csv and manifest.txt.
    Sweep(CommonArgs),
    /// Compare the solver against the brute-force grid oracle.
    Oracle(CommonArgs),
    /// Validate scenario, topology, traffic and routing documents.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn parse_power_mode(s: &str) -> Result<PowerMode, String> {
    match s {
        "adaptive" => Ok(PowerMode::Adaptive),
        "fixed" => Ok(PowerMode::Fixed),
        other => Err(format!("unknown power mode `{other}` (adaptive|fixed)")),
    }
}

fn parse_coupling(s: &str) -> Result<CouplingModel, String> {
    match s {
        "strong" => Ok(CouplingModel::Strong),
        "weak" => Ok(CouplingModel::Weak),
        other => Err(format!("unknown coupling `{other}` (strong|weak)")),
    }
}

const EXIT_PARTIAL: u8 = 2;
const EXIT_INVALID: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

fn load(args_scenario: &Path) -> Result<LoadedScenario> {
    scenario::load_scenario(args_scenario)
}

fn overrides_of(args: &CommonArgs) -> Overrides {
    Overrides {
        traffic_tbps: None,
        modes: args.modes,
        coupling: args.coupling,
        power_mode: args.power_mode,
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve(args) => {
            let loaded = load(&args.scenario)?;
            std::fs::create_dir_all(&args.out)?;
            let outcome = runner::run_single(&loaded, overrides_of(&args))?;
            match outcome {
                Ok(report) => {
                    write(&args.out.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
                    write(&args.out.join("configs.csv"), &report.to_csv(&loaded.constants))?;
                    write(
                        &args.out.join("manifest.txt"),
                        &runner::manifest_text(&loaded, args.seed, overrides_of(&args), 1),
                    )?;
                    println!(
                        "solved: {} requests, total transponder power {:.3} W ({} epochs)",
                        report.configs.len(),
                        report.objective_power_w,
                        report.epochs
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Err(err) => {
                    eprintln!("infeasible: {err}");
                    Ok(ExitCode::from(EXIT_PARTIAL))
                }
            }
        }
        Command::Sweep(args) => {
            let loaded = load(&args.scenario)?;
            std::fs::create_dir_all(&args.out)?;
            let ovr = overrides_of(&args);
            let outcome = runner::run_sweep(&loaded, ovr, args.workers)?;
            write(&args.out.join("sweep.csv"), &runner::sweep_csv(&outcome))?;
            write(&args.out.join("plotdata.csv"), &runner::plotdata_csv(&outcome))?;
            write(&args.out.join("timings.csv"), &runner::timings_csv(&outcome))?;
            write(
                &args.out.join("manifest.txt"),
                &runner::manifest_text(&loaded, args.seed, ovr, args.workers),
            )?;
            for row in &outcome.rows {
                match &row.outcome {
                    Ok(report) => println!(
                        "sweep {}: {:.3} W in {} epochs",
                        row.label, report.objective_power_w, report.epochs
                    ),
                    Err(err) => println!("sweep {}: infeasible ({err})", row.label),
                }
            }
            if outcome.any_infeasible {
                Ok(ExitCode::from(EXIT_PARTIAL))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Oracle(args) => {
            let loaded = load(&args.scenario)?;
            std::fs::create_dir_all(&args.out)?;
            let csv = runner::compare_oracle(&loaded, overrides_of(&args))?;
            write(&args.out.join("oracle_gap.csv"), &csv)?;
            print!("{csv}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { scenario } => {
            let loaded = load(&scenario)?;
            // assembling the instance runs every structural validation,
            // including ordering acyclicity and the spectrum pre-check
            let inst = runner::build_instance(&loaded, Overrides::default())?;
            eonplan_core::ConvexProgram::build(&inst)
                .context("scenario fails the pre-solve feasibility diagnostics")?;
            println!(
                "ok: {} nodes, {} links, {} requests, {} sharing pairs",
                loaded.topology.nodes.len(),
                loaded.topology.links.len(),
                inst.request_count(),
                inst.routing.sharing_pairs().len()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn write(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}
